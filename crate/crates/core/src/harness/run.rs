//! The sequential training loop: one run = one seed over one task stream.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{estimate_diag_fisher, DiagFisher};
use crate::harness::config::{FisherAccumulation, RunConfig};
use crate::harness::data::Dataset;
use crate::harness::metrics::{compute_metrics, AccuracyMatrix, Metrics};
use crate::harness::stream::{build_task_stream, Scenario, TaskStream};
use crate::methods::{consolidate_oewc, ConsolidatedState, Method, ReplayBuffer, ReplayItem};
use crate::net::{self, ParamVector};
use crate::refresh::refresh_train_step;
use crate::rng::{derive_rng, splitmix64};

const TAG_INIT: u64 = 0x01;
const TAG_ORDER: u64 = 0x02;
const TAG_BUFFER: u64 = 0x03;
const TAG_REPLAY: u64 = 0x04;
const TAG_NOISE: u64 = 0x05;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunTimings {
    pub train_seconds: f64,
    pub fisher_seconds: f64,
    pub eval_seconds: f64,
    pub total_seconds: f64,
    pub per_task_train_seconds: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub plain_steps: usize,
    pub refresh_steps: usize,
    pub capped_steps: usize,
    pub final_train_loss: f64,
    pub buffer_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub matrix: AccuracyMatrix,
    pub metrics: Metrics,
    pub timings: RunTimings,
    pub diagnostics: RunDiagnostics,
    /// Final parameters; kept out of the persisted record.
    #[serde(skip)]
    pub final_params: Option<ParamVector<f64>>,
}

/// Train through the configured task stream with one seed and evaluate after
/// every task. Deterministic given `(config, seed)`.
pub fn run_sequence(config: &RunConfig, seed: u64) -> Result<RunOutcome> {
    config.validate()?;
    let stream: TaskStream<f64> = build_task_stream(&config.stream)?;
    run_sequence_on_stream(config, &stream, seed)
}

/// [`run_sequence`] over an externally built stream; the stream settings in
/// `config` are ignored.
pub fn run_sequence_on_stream(
    config: &RunConfig,
    stream: &TaskStream<f64>,
    seed: u64,
) -> Result<RunOutcome> {
    let total_start = Instant::now();
    let spec = config.network_spec(stream.input_dim(), stream.num_classes())?;
    let method = config.objective.method;

    let mut params: ParamVector<f64> = spec.init_params(splitmix64(seed ^ TAG_INIT));
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, splitmix64(seed ^ TAG_BUFFER))?;
    let mut order_rng = derive_rng(seed, TAG_ORDER);
    let mut replay_rng = derive_rng(seed, TAG_REPLAY);
    let refresh_cfg = config.refresh_config();
    let mut noise_rng = derive_rng(seed ^ splitmix64(refresh_cfg.rng_seed), TAG_NOISE);

    let base_objective = config.objective_config();
    let needs_fisher = config.refresh.enabled || method.uses_weight_anchor();

    let mut consolidated: Option<ConsolidatedState<f64>> = None;
    let mut matrix = AccuracyMatrix::new();
    let mut timings = RunTimings::default();
    let mut diagnostics = RunDiagnostics::default();
    let mut joint_pool: Option<Dataset<f64>> = None;
    let mut iteration = 0usize;

    for task in &stream.tasks {
        // joint trains on the union of all data seen so far
        let train_data: Dataset<f64> = if method == Method::Joint {
            match joint_pool.as_mut() {
                Some(pool) => {
                    pool.extend(&task.train)?;
                    pool.clone()
                }
                None => {
                    joint_pool = Some(task.train.clone());
                    task.train.clone()
                }
            }
        } else {
            task.train.clone()
        };

        let mut objective = base_objective.clone();
        if method.uses_weight_anchor() {
            if let Some(state) = &consolidated {
                objective = objective.with_anchor(state.theta_old.clone(), state.fisher.clone());
            }
        }
        let refresh_fisher = consolidated
            .as_ref()
            .map(|s| s.fisher.clone())
            .unwrap_or_else(|| DiagFisher::identity(spec.param_count()));

        let train_start = Instant::now();
        for _epoch in 0..config.epochs_per_task {
            let mut order: Vec<usize> = (0..train_data.len()).collect();
            order.shuffle(&mut order_rng);
            for chunk in order.chunks(config.batch_size) {
                iteration += 1;
                let batch = train_data.batch_of(chunk)?;
                // logits at the pre-step parameters, stored with the items
                let insert_logits = if method.uses_replay() {
                    Some(net::forward(&spec, &params, batch.inputs())?)
                } else {
                    None
                };
                let outcome = refresh_train_step(
                    &spec,
                    &params,
                    &batch,
                    &buffer,
                    &objective,
                    &refresh_fisher,
                    &refresh_cfg,
                    config.learning_rate,
                    iteration,
                    &mut replay_rng,
                    &mut noise_rng,
                )?;
                if !outcome.loss.is_finite() || !outcome.params.is_finite() {
                    return Err(Error::NonFiniteLoss { iteration });
                }
                params = outcome.params;
                if outcome.refreshed {
                    diagnostics.refresh_steps += 1;
                } else {
                    diagnostics.plain_steps += 1;
                }
                if outcome.unlearn_capped {
                    diagnostics.capped_steps += 1;
                }
                diagnostics.final_train_loss = outcome.loss;
                if let Some(logits) = insert_logits {
                    for i in 0..batch.len() {
                        buffer.insert(ReplayItem::new(
                            batch.inputs().row(i).to_vec(),
                            batch.labels()[i],
                            logits.row(i).to_vec(),
                            task.id,
                        )?);
                    }
                }
            }
        }
        let train_elapsed = train_start.elapsed().as_secs_f64();
        timings.train_seconds += train_elapsed;
        timings.per_task_train_seconds.push(train_elapsed);

        if needs_fisher {
            let fisher_start = Instant::now();
            let estimation_batch = task.train.to_batch()?;
            let task_fisher =
                estimate_diag_fisher(&spec, &params, [&estimation_batch], config.fisher.max_examples)?
                    .with_damping(config.fisher.damping)?;
            consolidated = Some(match config.fisher.accumulation {
                FisherAccumulation::Decay => {
                    consolidate_oewc(consolidated.as_ref(), &params, &task_fisher, config.fisher.decay)?
                }
                FisherAccumulation::LastTask => ConsolidatedState {
                    theta_old: params.clone(),
                    fisher: task_fisher,
                },
            });
            timings.fisher_seconds += fisher_start.elapsed().as_secs_f64();
        }

        let eval_start = Instant::now();
        let mut row = Vec::with_capacity(task.id + 1);
        for seen in &stream.tasks[..=task.id] {
            let test_batch = seen.test.to_batch()?;
            let acc = match stream.scenario {
                Scenario::TaskIl => net::accuracy_masked(&spec, &params, &test_batch, &seen.classes)?,
                Scenario::DomainIl | Scenario::ClassIl => {
                    net::accuracy(&spec, &params, &test_batch)?
                }
            };
            row.push(acc);
        }
        matrix.push_stage(row)?;
        timings.eval_seconds += eval_start.elapsed().as_secs_f64();
    }

    diagnostics.buffer_len = buffer.len();
    timings.total_seconds = total_start.elapsed().as_secs_f64();
    let metrics = compute_metrics(&matrix)?;
    Ok(RunOutcome {
        seed,
        matrix,
        metrics,
        timings,
        diagnostics,
        final_params: Some(params),
    })
}

/// Mean and sample standard deviation of a slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
