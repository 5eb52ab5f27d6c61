//! The unified continual-learning objective and its method presets, plus the
//! reservoir replay buffer and the damped natural-gradient update.
//!
//! Every preset composes up to three terms on top of the current batch's
//! cross-entropy: an output-space regularizer (replay cross-entropy, logit
//! matching, or an entropy regularizer) weighted by `alpha`, and a weight-space
//! quadratic anchored at consolidated parameters weighted by `beta`. Gradients
//! are exact for the composed loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::DiagFisher;
use crate::matrix::Matrix;
use crate::net::{
    self, backward_from_dlogits, ce_loss_and_dlogits, forward_cached, softmax_rows, Batch,
    NetworkSpec, ParamVector,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Finetune,
    Er,
    Derpp,
    Oewc,
    Cpr,
    Joint,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Finetune => "finetune",
            Method::Er => "er",
            Method::Derpp => "derpp",
            Method::Oewc => "oewc",
            Method::Cpr => "cpr",
            Method::Joint => "joint",
        }
    }

    /// Does this preset read from the replay buffer?
    pub fn uses_replay(self) -> bool {
        matches!(self, Method::Er | Method::Derpp)
    }

    /// Does this preset need consolidated `(θ_old, F)` references?
    pub fn uses_weight_anchor(self) -> bool {
        matches!(self, Method::Oewc | Method::Cpr)
    }
}

/// Which argument of an asymmetric divergence holds the fixed reference.
///
/// The replay cross-entropy term puts the one-hot target first and the model
/// output second; the entropy regularizer puts the model output first and the
/// uniform reference second. Recorded here so run records state the order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlArgumentOrder {
    TargetThenModel,
    ModelThenTarget,
}

/// One stored replay example with the logits captured at insertion time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayItem<T> {
    pub input: Vec<T>,
    pub label: usize,
    pub logits: Vec<T>,
    pub source_task: usize,
}

impl<T: Scalar> ReplayItem<T> {
    pub fn new(input: Vec<T>, label: usize, logits: Vec<T>, source_task: usize) -> Result<Self> {
        if input.iter().chain(logits.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain {
                context: "ReplayItem::new",
                message: "inputs and stored logits must be finite".into(),
            });
        }
        Ok(Self {
            input,
            label,
            logits,
            source_task,
        })
    }
}

/// Fixed-capacity reservoir-sampled store of replay items.
///
/// Insertion follows Algorithm R: the first `capacity` items are appended;
/// afterwards the incoming item replaces a uniformly drawn slot with
/// probability `capacity / seen`, so every stream element is retained with
/// equal probability.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<ReplayItem<T>>,
    seen: u64,
    rng: ChaCha12Rng,
    seed: u64,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay buffer capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity),
            seen: 0,
            rng: ChaCha12Rng::seed_from_u64(seed),
            seed,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn seen_count(&self) -> u64 {
        self.seen
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn items(&self) -> &[ReplayItem<T>] {
        &self.items
    }

    pub fn insert(&mut self, item: ReplayItem<T>) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            let j = self.rng.gen_range(0..=self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = item;
            }
        }
        self.seen += 1;
    }
}

/// Instantiation of the composed objective: weights, reference anchors, and
/// the method preset selecting which terms are active.
#[derive(Debug, Clone)]
pub struct ObjectiveConfig<T> {
    pub method: Method,
    pub alpha: T,
    pub beta: T,
    pub replay_batch_size: usize,
    pub kl_order: KlArgumentOrder,
    /// Weight of the second (cross-entropy) replay term; `None` means `alpha`.
    pub derpp_ce_weight: Option<T>,
    pub theta_old: Option<ParamVector<T>>,
    pub fisher: Option<DiagFisher<T>>,
}

impl<T: Scalar> ObjectiveConfig<T> {
    fn base(method: Method, alpha: T, beta: T, replay_batch_size: usize) -> Self {
        let kl_order = match method {
            Method::Cpr => KlArgumentOrder::ModelThenTarget,
            _ => KlArgumentOrder::TargetThenModel,
        };
        Self {
            method,
            alpha,
            beta,
            replay_batch_size,
            kl_order,
            derpp_ce_weight: None,
            theta_old: None,
            fisher: None,
        }
    }

    pub fn finetune() -> Self {
        Self::base(Method::Finetune, T::zero(), T::zero(), 0)
    }

    pub fn joint() -> Self {
        Self::base(Method::Joint, T::zero(), T::zero(), 0)
    }

    pub fn er(alpha: T, replay_batch_size: usize) -> Self {
        Self::base(Method::Er, alpha, T::zero(), replay_batch_size)
    }

    pub fn derpp(alpha: T, ce_weight: T, replay_batch_size: usize) -> Self {
        let mut cfg = Self::base(Method::Derpp, alpha, T::zero(), replay_batch_size);
        cfg.derpp_ce_weight = Some(ce_weight);
        cfg
    }

    pub fn oewc(beta: T) -> Self {
        Self::base(Method::Oewc, T::zero(), beta, 0)
    }

    pub fn cpr(alpha: T) -> Self {
        Self::base(Method::Cpr, alpha, T::zero(), 0)
    }

    /// Attach consolidated references for the weight-space term.
    pub fn with_anchor(mut self, theta_old: ParamVector<T>, fisher: DiagFisher<T>) -> Self {
        self.theta_old = Some(theta_old);
        self.fisher = Some(fisher);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= T::zero()) {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= T::zero()) {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.method.uses_replay() && self.replay_batch_size == 0 {
            return Err(Error::Config(
                "replay-based presets need replay_batch_size >= 1".into(),
            ));
        }
        if let (Some(theta_old), Some(fisher)) = (&self.theta_old, &self.fisher) {
            if theta_old.len() != fisher.len() {
                return Err(Error::DimensionMismatch {
                    context: "objective anchor",
                    expected: theta_old.len(),
                    actual: fisher.len(),
                });
            }
        }
        Ok(())
    }
}

/// Replay items drawn for one objective evaluation. Frozen by the caller when
/// several gradient evaluations must see the same sample.
#[derive(Debug, Clone, Default)]
pub struct ReplayDraw<T> {
    /// Sample for the first replay term (replay CE for `er`, logit matching
    /// for `derpp`).
    pub primary: Vec<ReplayItem<T>>,
    /// Independent sample for the second `derpp` term.
    pub secondary: Vec<ReplayItem<T>>,
}

impl<T> ReplayDraw<T> {
    pub fn empty() -> Self {
        Self {
            primary: Vec::new(),
            secondary: Vec::new(),
        }
    }
}

fn sample_items<T: Scalar, R: Rng + ?Sized>(
    buffer: &ReplayBuffer<T>,
    amount: usize,
    rng: &mut R,
) -> Vec<ReplayItem<T>> {
    let take = amount.min(buffer.len());
    if take == 0 {
        return Vec::new();
    }
    rand::seq::index::sample(rng, buffer.len(), take)
        .into_iter()
        .map(|i| buffer.items()[i].clone())
        .collect()
}

/// Draw the replay sample(s) the active preset needs. Presets that do not
/// replay consume no randomness.
pub fn draw_replay<T: Scalar, R: Rng + ?Sized>(
    buffer: &ReplayBuffer<T>,
    config: &ObjectiveConfig<T>,
    rng: &mut R,
) -> ReplayDraw<T> {
    match config.method {
        Method::Er => ReplayDraw {
            primary: sample_items(buffer, config.replay_batch_size, rng),
            secondary: Vec::new(),
        },
        Method::Derpp => ReplayDraw {
            primary: sample_items(buffer, config.replay_batch_size, rng),
            secondary: sample_items(buffer, config.replay_batch_size, rng),
        },
        _ => ReplayDraw::empty(),
    }
}

/// Per-term (already weighted) contributions to the composed loss.
#[derive(Debug, Clone, Copy)]
pub struct LossParts<T> {
    pub cross_entropy: T,
    pub replay_ce: T,
    pub logit_match: T,
    pub weight_penalty: T,
    pub entropy_reg: T,
}

impl<T: Scalar> LossParts<T> {
    fn zero() -> Self {
        Self {
            cross_entropy: T::zero(),
            replay_ce: T::zero(),
            logit_match: T::zero(),
            weight_penalty: T::zero(),
            entropy_reg: T::zero(),
        }
    }

    pub fn total(&self) -> T {
        self.cross_entropy + self.replay_ce + self.logit_match + self.weight_penalty
            + self.entropy_reg
    }
}

/// Composed loss, exact gradient and per-term breakdown.
#[derive(Debug, Clone)]
pub struct ClEvaluation<T> {
    pub loss: T,
    pub grad: ParamVector<T>,
    pub parts: LossParts<T>,
}

fn replay_batch<T: Scalar>(items: &[ReplayItem<T>], input_dim: usize) -> Result<Batch<T>> {
    let mut data = Vec::with_capacity(items.len() * input_dim);
    let mut labels = Vec::with_capacity(items.len());
    for item in items {
        if item.input.len() != input_dim {
            return Err(Error::DimensionMismatch {
                context: "replay item input",
                expected: input_dim,
                actual: item.input.len(),
            });
        }
        data.extend_from_slice(&item.input);
        labels.push(item.label);
    }
    Batch::new(Matrix::from_vec(items.len(), input_dim, data)?, labels)
}

/// Mean entropy regularizer `alpha · mean_i (−H(softmax(uᵢ)))` and its logit
/// gradient, expressed through the KL-to-uniform identity
/// `−H(g) = KL(g ‖ uniform) − ln C`.
fn entropy_term_and_dlogits<T: Scalar>(logits: &Matrix<T>, alpha: T) -> (T, Matrix<T>) {
    let n = logits.rows();
    let classes = logits.cols();
    let scale = alpha / T::cast(n as f64);
    let probs = softmax_rows(logits);
    let mut dlogits = Matrix::zeros(n, classes);
    let mut term = T::zero();
    let ln_c = T::cast((classes as f64).ln());
    for i in 0..n {
        let row = probs.row(i);
        let mut neg_entropy = T::zero();
        for &g in row {
            if g > T::zero() {
                neg_entropy += g * g.ln();
            }
        }
        // KL(g ‖ uniform) − ln C == −H(g), kept in that form on purpose
        let kl_to_uniform = neg_entropy + ln_c;
        term += kl_to_uniform - ln_c;
        let entropy = -neg_entropy;
        let drow = dlogits.row_mut(i);
        for (d, &g) in drow.iter_mut().zip(row) {
            *d = if g > T::zero() {
                scale * g * (g.ln() + entropy)
            } else {
                T::zero()
            };
        }
    }
    (term * scale, dlogits)
}

/// Quadratic weight anchor `beta · ½ Σ Fᵢ (θᵢ − θ_oldᵢ)²` and its gradient
/// contribution added into `grad`.
fn weight_penalty<T: Scalar>(
    params: &ParamVector<T>,
    theta_old: &ParamVector<T>,
    fisher: &DiagFisher<T>,
    beta: T,
    grad: &mut ParamVector<T>,
) -> Result<T> {
    if theta_old.len() != params.len() || fisher.len() != params.len() {
        return Err(Error::DimensionMismatch {
            context: "weight penalty anchor",
            expected: params.len(),
            actual: theta_old.len().min(fisher.len()),
        });
    }
    let half = T::cast(0.5);
    let mut term = T::zero();
    for (((g, &p), &old), &f) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(params.as_slice())
        .zip(theta_old.as_slice())
        .zip(fisher.values())
    {
        let d = p - old;
        term += half * f * d * d;
        *g += beta * f * d;
    }
    Ok(term * beta)
}

/// Evaluate the composed objective on a frozen replay draw.
pub fn cl_loss_and_grad_with_draw<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    draw: &ReplayDraw<T>,
    config: &ObjectiveConfig<T>,
) -> Result<ClEvaluation<T>> {
    config.validate()?;
    batch.validate_against(spec)?;

    let mut parts = LossParts::zero();
    let cache = forward_cached(spec, params, batch.inputs())?;
    let (ce, mut dlogits) = ce_loss_and_dlogits(&cache.logits, batch.labels());
    parts.cross_entropy = ce;

    if config.method == Method::Cpr && config.alpha > T::zero() {
        let (term, dl) = entropy_term_and_dlogits(&cache.logits, config.alpha);
        parts.entropy_reg = term;
        for (a, &b) in dlogits.data_mut().iter_mut().zip(dl.data()) {
            *a += b;
        }
    }

    let mut grad = backward_from_dlogits(spec, params, &cache, &dlogits);

    match config.method {
        Method::Er if config.alpha > T::zero() && !draw.primary.is_empty() => {
            let rb = replay_batch(&draw.primary, spec.input_dim())?;
            let (replay_ce, replay_grad) = net::loss_and_grad(spec, params, &rb)?;
            parts.replay_ce = config.alpha * replay_ce;
            grad.add_scaled(&replay_grad, config.alpha)?;
        }
        Method::Derpp => {
            if config.alpha > T::zero() && !draw.primary.is_empty() {
                let rb = replay_batch(&draw.primary, spec.input_dim())?;
                let rcache = forward_cached(spec, params, rb.inputs())?;
                let n_items = T::cast(draw.primary.len() as f64);
                let scale = config.alpha / n_items;
                let mut term = T::zero();
                let mut dl = Matrix::zeros(rcache.logits.rows(), rcache.logits.cols());
                for (i, item) in draw.primary.iter().enumerate() {
                    if item.logits.len() != spec.output_dim() {
                        return Err(Error::DimensionMismatch {
                            context: "stored logits",
                            expected: spec.output_dim(),
                            actual: item.logits.len(),
                        });
                    }
                    let u = rcache.logits.row(i);
                    let drow = dl.row_mut(i);
                    for ((d, &uj), &zj) in drow.iter_mut().zip(u).zip(&item.logits) {
                        let diff = uj - zj;
                        term += diff * diff;
                        *d = T::cast(2.0) * scale * diff;
                    }
                }
                parts.logit_match = scale * term;
                let lg = backward_from_dlogits(spec, params, &rcache, &dl);
                grad.add_scaled(&lg, T::one())?;
            }
            let ce_weight = config.derpp_ce_weight.unwrap_or(config.alpha);
            if ce_weight > T::zero() && !draw.secondary.is_empty() {
                let rb = replay_batch(&draw.secondary, spec.input_dim())?;
                let (replay_ce, replay_grad) = net::loss_and_grad(spec, params, &rb)?;
                parts.replay_ce = ce_weight * replay_ce;
                grad.add_scaled(&replay_grad, ce_weight)?;
            }
        }
        _ => {}
    }

    if config.beta > T::zero() {
        if let (Some(theta_old), Some(fisher)) = (&config.theta_old, &config.fisher) {
            parts.weight_penalty = weight_penalty(params, theta_old, fisher, config.beta, &mut grad)?;
        }
    }

    let loss = parts.total();
    Ok(ClEvaluation { loss, grad, parts })
}

/// Draw the preset's replay sample from `rng`, then evaluate.
pub fn cl_loss_and_grad<T: Scalar, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    buffer: &ReplayBuffer<T>,
    config: &ObjectiveConfig<T>,
    rng: &mut R,
) -> Result<ClEvaluation<T>> {
    let draw = draw_replay(buffer, config, rng);
    cl_loss_and_grad_with_draw(spec, params, batch, &draw, config)
}

/// Consolidated anchor shared by the weight penalty and the refresh
/// preconditioner: a parameter snapshot and the accumulated diagonal Fisher.
#[derive(Debug, Clone)]
pub struct ConsolidatedState<T> {
    pub theta_old: ParamVector<T>,
    pub fisher: DiagFisher<T>,
}

/// End-of-task consolidation: snapshot the parameters and fold the task
/// Fisher into the running one, `F ← decay · F_prev + F_task`.
pub fn consolidate_oewc<T: Scalar>(
    prev: Option<&ConsolidatedState<T>>,
    params: &ParamVector<T>,
    task_fisher: &DiagFisher<T>,
    decay: T,
) -> Result<ConsolidatedState<T>> {
    if !(decay >= T::zero() && decay <= T::one()) {
        return Err(Error::Config(format!("decay must lie in [0, 1], got {decay}")));
    }
    if task_fisher.len() != params.len() {
        return Err(Error::DimensionMismatch {
            context: "consolidate_oewc",
            expected: params.len(),
            actual: task_fisher.len(),
        });
    }
    let values: Vec<T> = match prev {
        Some(state) => {
            if state.fisher.len() != task_fisher.len() {
                return Err(Error::DimensionMismatch {
                    context: "consolidate_oewc previous state",
                    expected: task_fisher.len(),
                    actual: state.fisher.len(),
                });
            }
            state
                .fisher
                .values()
                .iter()
                .zip(task_fisher.values())
                .map(|(&prev_f, &task_f)| decay * prev_f + task_f)
                .collect()
        }
        None => task_fisher.values().to_vec(),
    };
    Ok(ConsolidatedState {
        theta_old: params.clone(),
        fisher: DiagFisher::new(values, task_fisher.damping())?,
    })
}

/// Damped diagonal natural-gradient step:
/// `params − lr · (alpha·F + beta·I)⁻¹ grad`, elementwise.
pub fn natural_gradient_step<T: Scalar>(
    params: &ParamVector<T>,
    grad: &ParamVector<T>,
    fisher: &DiagFisher<T>,
    alpha: T,
    beta: T,
    lr: T,
) -> Result<ParamVector<T>> {
    if params.len() != grad.len() || params.len() != fisher.len() {
        return Err(Error::DimensionMismatch {
            context: "natural_gradient_step",
            expected: params.len(),
            actual: grad.len().min(fisher.len()),
        });
    }
    let mut out = params.clone();
    for (i, ((o, &g), &f)) in out
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(fisher.values())
        .enumerate()
    {
        let denom = alpha * f + beta;
        // negated form also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(denom > T::zero()) {
            return Err(Error::SingularPreconditioner { index: i });
        }
        *o -= lr * g / denom;
    }
    Ok(out)
}
