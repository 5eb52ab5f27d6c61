//! Task-stream construction: permuted, rotated, split-class and synthetic
//! Gaussian streams.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::data::{
    gaussian_class_means, load_idx_dataset, permute_columns, rotate_square_images,
    sample_gaussian_mixture, Dataset,
};
use crate::rng::derive_rng;
use crate::scalar::Scalar;

/// Evaluation scenario for a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Shared label space, shifting input distribution.
    DomainIl,
    /// Disjoint label groups, no task identity at test time.
    ClassIl,
    /// Disjoint label groups, task identity masks the head at test time.
    TaskIl,
}

/// Where the base dataset comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseDataSpec {
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    SyntheticGaussian {
        classes: usize,
        dim: usize,
        #[serde(default = "default_mean_radius")]
        mean_radius: f64,
        covariance_scale: f64,
    },
}

fn default_mean_radius() -> f64 {
    1.0
}

/// How tasks are derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Fresh pixel permutation per task; task 1 is the identity.
    Permuted { base: BaseDataSpec },
    /// Rotation per task; default angles evenly spaced in `[0°, 180°)`.
    Rotated {
        base: BaseDataSpec,
        #[serde(default)]
        angles: Option<Vec<f64>>,
    },
    /// Contiguous equal class groups, one group per task.
    SplitClasses { base: BaseDataSpec },
    /// Fresh class means per task, shared label space.
    SyntheticGaussian {
        classes: usize,
        dim: usize,
        #[serde(default = "default_mean_radius")]
        mean_radius: f64,
        covariance_scale: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub scenario: Scenario,
    pub num_tasks: usize,
    pub train_per_task: usize,
    pub test_per_task: usize,
    /// Seed of the stream itself (permutations, synthetic draws); independent
    /// of the run seeds so every run sees the same tasks.
    #[serde(default = "default_stream_seed")]
    pub seed: u64,
    pub generator: GeneratorSpec,
}

fn default_stream_seed() -> u64 {
    7
}

/// One task: train/test data plus the label group it owns (all classes for
/// shared-head streams).
#[derive(Debug, Clone)]
pub struct Task<T> {
    pub id: usize,
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TaskStream<T> {
    pub scenario: Scenario,
    pub tasks: Vec<Task<T>>,
}

impl<T: Scalar> TaskStream<T> {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn input_dim(&self) -> usize {
        self.tasks[0].train.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.tasks
            .iter()
            .map(|t| t.train.num_classes)
            .max()
            .unwrap_or(1)
    }
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 || self.train_per_task == 0 || self.test_per_task == 0 {
            return Err(Error::Config(
                "stream needs num_tasks, train_per_task and test_per_task >= 1".into(),
            ));
        }
        let split = matches!(self.generator, GeneratorSpec::SplitClasses { .. });
        match self.scenario {
            Scenario::DomainIl if split => Err(Error::Config(
                "split_classes tasks have disjoint labels; use class_il or task_il".into(),
            )),
            Scenario::ClassIl | Scenario::TaskIl if !split => Err(Error::Config(
                "class_il/task_il need the split_classes generator".into(),
            )),
            _ => Ok(()),
        }
    }
}

fn load_base<T: Scalar>(
    base: &BaseDataSpec,
    stream_seed: u64,
    train_n: usize,
    test_n: usize,
) -> Result<(Dataset<T>, Dataset<T>)> {
    match base {
        BaseDataSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => Ok((
            load_idx_dataset(train_images, train_labels)?,
            load_idx_dataset(test_images, test_labels)?,
        )),
        BaseDataSpec::SyntheticGaussian {
            classes,
            dim,
            mean_radius,
            covariance_scale,
        } => {
            let mut means_rng = derive_rng(stream_seed, 0x10);
            let means = gaussian_class_means(*classes, *dim, *mean_radius, &mut means_rng);
            let mut train_rng = derive_rng(stream_seed, 0x11);
            let mut test_rng = derive_rng(stream_seed, 0x12);
            Ok((
                sample_gaussian_mixture(&means, *covariance_scale, train_n, &mut train_rng)?,
                sample_gaussian_mixture(&means, *covariance_scale, test_n, &mut test_rng)?,
            ))
        }
    }
}

fn all_classes(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Build the stream from an already loaded base dataset. Exposed separately
/// so tests can hand-craft the base; `synthetic_gaussian` streams need no
/// base and ignore the arguments.
pub fn build_task_stream_from_base<T: Scalar>(
    spec: &StreamSpec,
    base_train: &Dataset<T>,
    base_test: &Dataset<T>,
) -> Result<TaskStream<T>> {
    spec.validate()?;
    let n = spec.num_tasks;

    if let GeneratorSpec::SyntheticGaussian {
        classes,
        dim,
        mean_radius,
        covariance_scale,
    } = &spec.generator
    {
        let mut tasks = Vec::with_capacity(n);
        for t in 0..n {
            let mut means_rng = derive_rng(spec.seed, 0x200 + t as u64);
            let means = gaussian_class_means(*classes, *dim, *mean_radius, &mut means_rng);
            let mut train_rng = derive_rng(spec.seed, 0x300 + t as u64);
            let mut test_rng = derive_rng(spec.seed, 0x400 + t as u64);
            tasks.push(Task {
                id: t,
                train: sample_gaussian_mixture(
                    &means,
                    *covariance_scale,
                    spec.train_per_task,
                    &mut train_rng,
                )?,
                test: sample_gaussian_mixture(
                    &means,
                    *covariance_scale,
                    spec.test_per_task,
                    &mut test_rng,
                )?,
                classes: all_classes(*classes),
            });
        }
        return Ok(TaskStream {
            scenario: spec.scenario,
            tasks,
        });
    }

    let train = base_train.take(spec.train_per_task);
    let test = base_test.take(spec.test_per_task);
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyStream);
    }

    let mut tasks = Vec::with_capacity(n);
    match &spec.generator {
        GeneratorSpec::Permuted { .. } => {
            let dim = train.input_dim();
            for t in 0..n {
                let perm: Vec<usize> = if t == 0 {
                    (0..dim).collect()
                } else {
                    let mut p: Vec<usize> = (0..dim).collect();
                    let mut rng = derive_rng(spec.seed, 0x100 + t as u64);
                    p.shuffle(&mut rng);
                    p
                };
                tasks.push(Task {
                    id: t,
                    train: Dataset::new(
                        permute_columns(&train.inputs, &perm)?,
                        train.labels.clone(),
                        train.num_classes,
                    )?,
                    test: Dataset::new(
                        permute_columns(&test.inputs, &perm)?,
                        test.labels.clone(),
                        test.num_classes,
                    )?,
                    classes: all_classes(train.num_classes),
                });
            }
        }
        GeneratorSpec::Rotated { angles, .. } => {
            if let Some(a) = angles {
                if a.len() != n {
                    return Err(Error::Config(format!(
                        "rotated stream needs {n} angles, got {}",
                        a.len()
                    )));
                }
            }
            for t in 0..n {
                let angle = match angles {
                    Some(a) => a[t],
                    None => 180.0 * t as f64 / n as f64,
                };
                tasks.push(Task {
                    id: t,
                    train: Dataset::new(
                        rotate_square_images(&train.inputs, angle)?,
                        train.labels.clone(),
                        train.num_classes,
                    )?,
                    test: Dataset::new(
                        rotate_square_images(&test.inputs, angle)?,
                        test.labels.clone(),
                        test.num_classes,
                    )?,
                    classes: all_classes(train.num_classes),
                });
            }
        }
        GeneratorSpec::SplitClasses { .. } => {
            let classes = base_train.num_classes;
            if !classes.is_multiple_of(n) {
                return Err(Error::Config(format!(
                    "{classes} classes are not divisible into {n} tasks"
                )));
            }
            let per_task = classes / n;
            for t in 0..n {
                let group: Vec<usize> = (t * per_task..(t + 1) * per_task).collect();
                let train_t = base_train.filter_labels(&group).take(spec.train_per_task);
                let test_t = base_test.filter_labels(&group).take(spec.test_per_task);
                if train_t.is_empty() || test_t.is_empty() {
                    return Err(Error::EmptyStream);
                }
                tasks.push(Task {
                    id: t,
                    train: train_t,
                    test: test_t,
                    classes: group,
                });
            }
        }
        GeneratorSpec::SyntheticGaussian { .. } => unreachable!("handled above"),
    }
    Ok(TaskStream {
        scenario: spec.scenario,
        tasks,
    })
}

/// Build the stream, resolving the base dataset from the generator spec.
pub fn build_task_stream<T: Scalar>(spec: &StreamSpec) -> Result<TaskStream<T>> {
    spec.validate()?;
    match &spec.generator {
        GeneratorSpec::SyntheticGaussian { classes, dim, .. } => {
            // no base needed; pass trivial placeholders
            let placeholder = Dataset::new(
                crate::matrix::Matrix::zeros(1, *dim),
                vec![0],
                *classes,
            )?;
            build_task_stream_from_base(spec, &placeholder, &placeholder)
        }
        GeneratorSpec::Permuted { base }
        | GeneratorSpec::Rotated { base, .. }
        | GeneratorSpec::SplitClasses { base } => {
            // split filters per class group, so its base must cover all tasks
            let (train_n, test_n) = match spec.generator {
                GeneratorSpec::SplitClasses { .. } => (
                    spec.train_per_task * spec.num_tasks,
                    spec.test_per_task * spec.num_tasks,
                ),
                _ => (spec.train_per_task, spec.test_per_task),
            };
            let (train, test) = load_base(base, spec.seed, train_n, test_n)?;
            build_task_stream_from_base(spec, &train, &test)
        }
    }
}
