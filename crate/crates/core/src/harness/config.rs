//! Run configuration: the JSON-facing mirror of everything a training run
//! needs. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher;
use crate::harness::stream::{BaseDataSpec, GeneratorSpec, StreamSpec};
use crate::methods::{Method, ObjectiveConfig};
use crate::net::{Activation, NetworkSpec};
use crate::refresh::{RefreshConfig, UnlearnScope};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSettings {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSettings {
    pub method: Method,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    /// Replay sample size; defaults to the train batch size.
    #[serde(default)]
    pub replay_batch_size: Option<usize>,
    /// Weight of the second replay (cross-entropy) term; defaults to `alpha`.
    #[serde(default)]
    pub derpp_ce_weight: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefreshSettings {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_interval")]
    pub interval: usize,
    #[serde(default = "default_noise")]
    pub noise: bool,
    #[serde(default = "default_scope")]
    pub unlearn_scope: UnlearnScope,
    #[serde(default)]
    pub seed: u64,
}

fn default_gamma() -> f64 {
    0.03
}
fn default_steps() -> usize {
    1
}
fn default_interval() -> usize {
    2
}
fn default_noise() -> bool {
    true
}
fn default_scope() -> UnlearnScope {
    UnlearnScope::FullObjective
}

impl Default for RefreshSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            gamma: default_gamma(),
            steps: default_steps(),
            interval: default_interval(),
            noise: default_noise(),
            unlearn_scope: default_scope(),
            seed: 0,
        }
    }
}

/// How the running Fisher is updated at task boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherAccumulation {
    /// `F ← decay · F_prev + F_task`.
    Decay,
    /// Keep only the most recent task's Fisher.
    LastTask,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherSettings {
    #[serde(default = "default_max_examples")]
    pub max_examples: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_accumulation")]
    pub accumulation: FisherAccumulation,
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_max_examples() -> usize {
    1000
}
fn default_damping() -> f64 {
    fisher::DEFAULT_DAMPING
}
fn default_accumulation() -> FisherAccumulation {
    FisherAccumulation::Decay
}
fn default_decay() -> f64 {
    0.9
}

impl Default for FisherSettings {
    fn default() -> Self {
        Self {
            max_examples: default_max_examples(),
            damping: default_damping(),
            accumulation: default_accumulation(),
            decay: default_decay(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSettings,
    pub objective: ObjectiveSettings,
    #[serde(default)]
    pub refresh: RefreshSettings,
    #[serde(default)]
    pub fisher: FisherSettings,
    pub stream: StreamSpec,
    #[serde(default = "default_epochs")]
    pub epochs_per_task: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_buffer_capacity")]
    pub buffer_capacity: usize,
    pub seeds: Vec<u64>,
}

fn default_epochs() -> usize {
    1
}
fn default_batch_size() -> usize {
    32
}
fn default_buffer_capacity() -> usize {
    500
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs_per_task == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config(
                "batch_size, epochs_per_task and buffer_capacity must be >= 1".into(),
            ));
        }
        if !(self.fisher.damping > 0.0 && self.fisher.damping.is_finite()) {
            return Err(Error::Config("fisher damping must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.fisher.decay) {
            return Err(Error::Config("fisher decay must lie in [0, 1]".into()));
        }
        self.stream.validate()?;
        // referenced files must exist up front
        if let GeneratorSpec::Permuted { base }
        | GeneratorSpec::Rotated { base, .. }
        | GeneratorSpec::SplitClasses { base } = &self.stream.generator
        {
            if let BaseDataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } = base
            {
                for path in [train_images, train_labels, test_images, test_labels] {
                    if !path.exists() {
                        return Err(Error::Config(format!(
                            "dataset file {} does not exist",
                            path.display()
                        )));
                    }
                }
            }
        }
        self.objective_config().validate()?;
        self.refresh_config().validate()?;
        Ok(())
    }

    /// Full layer-size list for a stream with the given input/output dims.
    pub fn network_spec(&self, input_dim: usize, num_classes: usize) -> Result<NetworkSpec> {
        let mut sizes = Vec::with_capacity(self.network.hidden_layers.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.network.hidden_layers);
        sizes.push(num_classes);
        NetworkSpec::new(sizes, self.network.activation)
    }

    /// The preset objective, without task anchors attached.
    pub fn objective_config(&self) -> ObjectiveConfig<f64> {
        let replay = self.objective.replay_batch_size.unwrap_or(self.batch_size);
        let mut config = match self.objective.method {
            Method::Finetune => ObjectiveConfig::finetune(),
            Method::Joint => ObjectiveConfig::joint(),
            Method::Er => ObjectiveConfig::er(self.objective.alpha, replay),
            Method::Derpp => ObjectiveConfig::derpp(
                self.objective.alpha,
                self.objective.derpp_ce_weight.unwrap_or(self.objective.alpha),
                replay,
            ),
            Method::Oewc => ObjectiveConfig::oewc(self.objective.beta),
            Method::Cpr => ObjectiveConfig::cpr(self.objective.alpha),
        };
        config.beta = self.objective.beta;
        config
    }

    /// The refresh plug-in configuration; a disabled plug-in degrades to zero
    /// unlearn steps, which reproduces the base method exactly.
    pub fn refresh_config(&self) -> RefreshConfig<f64> {
        RefreshConfig {
            gamma: self.refresh.gamma,
            steps: if self.refresh.enabled { self.refresh.steps } else { 0 },
            interval: self.refresh.interval,
            noise_enabled: self.refresh.noise,
            rng_seed: self.refresh.seed,
            scope: self.refresh.unlearn_scope,
        }
    }

    /// The desk-scale reference protocol: a 5-task permuted stream over a
    /// synthetic 10-class base, 5000 train / 1000 test per task, a 100-unit
    /// relu MLP, SGD with lr 0.05, batch 32, one epoch per task, buffer 500.
    pub fn desk_protocol(method: Method, refresh_enabled: bool) -> Self {
        let (alpha, beta, derpp_ce_weight) = match method {
            Method::Er => (1.0, 0.0, None),
            Method::Derpp => (0.1, 0.0, Some(1.0)),
            Method::Oewc => (0.0, 40.0, None),
            Method::Cpr => (0.5, 0.0, None),
            _ => (0.0, 0.0, None),
        };
        RunConfig {
            network: NetworkSettings {
                hidden_layers: vec![100],
                activation: Activation::Relu,
            },
            objective: ObjectiveSettings {
                method,
                alpha,
                beta,
                replay_batch_size: None,
                derpp_ce_weight,
            },
            refresh: RefreshSettings {
                enabled: refresh_enabled,
                // deterministic unlearn at desk scale: the matched-covariance
                // noise overwhelms an MLP this small
                noise: false,
                // per-method choice, like the loss weights: anchored methods
                // unlearn the plain cross-entropy, replay methods the full
                // composed objective
                unlearn_scope: match method {
                    Method::Oewc | Method::Cpr => UnlearnScope::CrossEntropyOnly,
                    _ => UnlearnScope::FullObjective,
                },
                ..RefreshSettings::default()
            },
            fisher: FisherSettings {
                damping: 0.03,
                ..FisherSettings::default()
            },
            stream: StreamSpec {
                scenario: crate::harness::stream::Scenario::DomainIl,
                num_tasks: 5,
                train_per_task: 5000,
                test_per_task: 1000,
                seed: 20240601,
                generator: GeneratorSpec::Permuted {
                    base: BaseDataSpec::SyntheticGaussian {
                        classes: 10,
                        dim: 64,
                        mean_radius: 2.0,
                        covariance_scale: 0.55,
                    },
                },
            },
            epochs_per_task: 1,
            batch_size: 32,
            learning_rate: 0.05,
            buffer_capacity: 500,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}
