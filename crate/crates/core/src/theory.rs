//! Numerical consistency checks for the refresh update, plus the shared
//! finite-difference utilities.
//!
//! The check compares two gradients that should agree to first order:
//! the relearn gradient taken after one noise-free, gradient-normalized
//! ascent displacement of size `s`, and the gradient of the loss penalized by
//! `σ · ‖∇L (F + ε)⁻¹‖` with `σ = s` (inverse Fisher applied elementwise,
//! then the Euclidean norm). On quadratics with an isotropic preconditioner
//! the two coincide exactly; on small networks they align in direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fisher::{self, DiagFisher};
use crate::matrix::Matrix;
use crate::methods::{cl_loss_and_grad_with_draw, ObjectiveConfig, ReplayDraw};
use crate::net::{Activation, Batch, NetworkSpec, ParamVector};
use crate::scalar::Scalar;

/// Gradient norms below this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Central-difference gradient of a scalar function, step `h` per coordinate.
pub fn fd_gradient<T, F>(f: F, params: &ParamVector<T>, step: T) -> Result<ParamVector<T>>
where
    T: Scalar,
    F: Fn(&ParamVector<T>) -> Result<T>,
{
    // negated form also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(step > T::zero()) {
        return Err(Error::Domain {
            context: "fd_gradient",
            message: format!("step must be > 0, got {step}"),
        });
    }
    let mut out = Vec::with_capacity(params.len());
    let mut point = params.clone();
    for i in 0..params.len() {
        let orig = point.as_slice()[i];
        point.as_mut_slice()[i] = orig + step;
        let plus = f(&point)?;
        point.as_mut_slice()[i] = orig - step;
        let minus = f(&point)?;
        point.as_mut_slice()[i] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NonFiniteParam { index: i });
        }
        out.push((plus - minus) / (T::cast(2.0) * step));
    }
    Ok(ParamVector::new(out))
}

/// `‖g (F + ε)⁻¹‖₂` with the inverse applied elementwise.
pub fn fim_weighted_grad_norm<T: Scalar>(
    grad: &ParamVector<T>,
    fisher: &DiagFisher<T>,
) -> Result<T> {
    Ok(fisher::precondition(fisher, grad)?.norm())
}

/// Gradient of `L(θ) + σ·‖∇L(θ)(F + ε)⁻¹‖`, the norm term differentiated by
/// central differences so no second-derivative structure is ever formed.
pub fn penalty_gradient_of<T, G>(
    grad_fn: G,
    params: &ParamVector<T>,
    fisher: &DiagFisher<T>,
    sigma: T,
    step: T,
) -> Result<ParamVector<T>>
where
    T: Scalar,
    G: Fn(&ParamVector<T>) -> Result<ParamVector<T>>,
{
    let base_grad = grad_fn(params)?;
    let base_norm = fim_weighted_grad_norm(&base_grad, fisher)?;
    if base_norm < T::cast(DEGENERATE_NORM) {
        return Err(Error::DegenerateGradient {
            norm: base_norm.to_f64(),
        });
    }
    let norm_fn =
        |p: &ParamVector<T>| -> Result<T> { fim_weighted_grad_norm(&grad_fn(p)?, fisher) };
    let norm_grad = fd_gradient(norm_fn, params, step)?;
    let mut out = base_grad;
    out.add_scaled(&norm_grad, sigma)?;
    Ok(out)
}

/// The gradient the relearn step applies after one noise-free, normalized
/// ascent displacement: `∇L(θ + s·δ)` with `δ = (F + ε)⁻¹ ∇L(θ)/‖∇L(θ)‖`.
pub fn refresh_direction_of<T, G>(
    grad_fn: G,
    params: &ParamVector<T>,
    fisher: &DiagFisher<T>,
    s: T,
) -> Result<ParamVector<T>>
where
    T: Scalar,
    G: Fn(&ParamVector<T>) -> Result<ParamVector<T>>,
{
    let grad = grad_fn(params)?;
    let norm = grad.norm();
    if norm < T::cast(DEGENERATE_NORM) {
        return Err(Error::DegenerateGradient {
            norm: norm.to_f64(),
        });
    }
    let mut unit = grad;
    for v in unit.as_mut_slice() {
        *v /= norm;
    }
    let delta = fisher::precondition(fisher, &unit)?;
    let mut displaced = params.clone();
    displaced.add_scaled(&delta, s)?;
    grad_fn(&displaced)
}

fn objective_grad_fn<'a, T: Scalar>(
    spec: &'a NetworkSpec,
    batch: &'a Batch<T>,
    objective: &'a ObjectiveConfig<T>,
) -> impl Fn(&ParamVector<T>) -> Result<ParamVector<T>> + 'a {
    let draw = ReplayDraw::empty();
    move |p: &ParamVector<T>| Ok(cl_loss_and_grad_with_draw(spec, p, batch, &draw, objective)?.grad)
}

/// Penalized-objective gradient for a replay-free preset on a fixed batch.
pub fn penalty_gradient<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    objective: &ObjectiveConfig<T>,
    fisher: &DiagFisher<T>,
    sigma: T,
    step: T,
) -> Result<ParamVector<T>> {
    penalty_gradient_of(objective_grad_fn(spec, batch, objective), params, fisher, sigma, step)
}

/// Relearn-direction gradient for a replay-free preset on a fixed batch.
pub fn refresh_direction<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    objective: &ObjectiveConfig<T>,
    fisher: &DiagFisher<T>,
    s: T,
) -> Result<ParamVector<T>> {
    refresh_direction_of(objective_grad_fn(spec, batch, objective), params, fisher, s)
}

/// Family of instances the consistency check runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// Random diagonal quadratics with analytic gradients.
    Quadratic,
    /// Seeded tiny dense networks with cross-entropy batches.
    TinyMlp,
}

/// Where the diagonal preconditioner of an instance comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherSource {
    /// All-ones values with near-zero damping.
    Identity,
    /// Empirical Fisher estimated on the instance batch.
    Estimated,
    /// Random positive values, exercising a non-trivial preconditioner.
    RandomPositive,
}

#[derive(Debug, Clone)]
pub struct TheoryOptions<T> {
    pub kind: InstanceKind,
    pub fisher_source: FisherSource,
    pub instances: usize,
    pub seed: u64,
    /// Ascent displacement scale; the penalty weight σ is tied to it.
    pub s: T,
    pub fd_step: T,
}

impl<T: Scalar> TheoryOptions<T> {
    pub fn new(kind: InstanceKind, fisher_source: FisherSource) -> Self {
        Self {
            kind,
            fisher_source,
            instances: 24,
            seed: 0xC0FFEE,
            s: T::cast(1e-3),
            fd_step: T::cast(1e-5),
        }
    }
}

/// Per-instance comparison of the two gradients.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub instance: usize,
    pub descriptor: String,
    pub s: f64,
    pub cosine: f64,
    pub relative_norm_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheorySummary {
    pub kind: InstanceKind,
    pub fisher_source: FisherSource,
    pub reports: Vec<TheoryReport>,
    pub mean_cosine: f64,
    pub min_cosine: f64,
    pub mean_relative_norm_gap: f64,
    pub degenerate_skipped: usize,
}

fn compare<T: Scalar>(a: &ParamVector<T>, b: &ParamVector<T>) -> (f64, f64) {
    let dot = a.dot(b).to_f64();
    let na = a.norm().to_f64();
    let nb = b.norm().to_f64();
    let cosine = dot / (na * nb).max(f64::MIN_POSITIVE);
    let mut diff = a.clone();
    diff.add_scaled(b, T::cast(-1.0)).expect("equal lengths");
    let gap = diff.norm().to_f64() / nb.max(f64::MIN_POSITIVE);
    (cosine, gap)
}

fn quadratic_fisher<T: Scalar>(
    source: FisherSource,
    dim: usize,
    rng: &mut ChaCha12Rng,
) -> DiagFisher<T> {
    match source {
        FisherSource::RandomPositive => DiagFisher::new(
            (0..dim).map(|_| T::cast(rng.gen_range(0.5..2.0))).collect(),
            T::cast(1e-9),
        )
        .expect("positive values"),
        _ => DiagFisher::new(vec![T::one(); dim], T::cast(1e-9)).expect("identity values"),
    }
}

/// Run the consistency check over seeded instances and aggregate.
pub fn verify_theorem<T: Scalar>(options: &TheoryOptions<T>) -> Result<TheorySummary> {
    let mut reports = Vec::new();
    let mut degenerate = 0usize;
    let mut rng = ChaCha12Rng::seed_from_u64(options.seed);
    let sigma = options.s;

    for instance in 0..options.instances {
        let outcome = match options.kind {
            InstanceKind::Quadratic => {
                let dim = rng.gen_range(2..8);
                let hessian: Vec<T> =
                    (0..dim).map(|_| T::cast(rng.gen_range(0.5..3.0))).collect();
                let linear: Vec<T> =
                    (0..dim).map(|_| T::cast(rng.gen_range(-1.0..1.0))).collect();
                let point = ParamVector::new(
                    (0..dim).map(|_| T::cast(rng.gen_range(-2.0..2.0))).collect(),
                );
                let fisher = quadratic_fisher::<T>(options.fisher_source, dim, &mut rng);
                let h = hessian.clone();
                let b = linear.clone();
                let grad_fn = move |p: &ParamVector<T>| -> Result<ParamVector<T>> {
                    Ok(ParamVector::new(
                        p.as_slice()
                            .iter()
                            .zip(&h)
                            .zip(&b)
                            .map(|((&x, &hi), &bi)| hi * x + bi)
                            .collect(),
                    ))
                };
                let refresh = refresh_direction_of(&grad_fn, &point, &fisher, options.s);
                let penalty =
                    penalty_gradient_of(&grad_fn, &point, &fisher, sigma, options.fd_step);
                (refresh, penalty, format!("quadratic dim {dim}"))
            }
            InstanceKind::TinyMlp => {
                let hidden = rng.gen_range(4..8);
                let classes = rng.gen_range(3..5);
                let inputs = rng.gen_range(3..5);
                let spec = NetworkSpec::new(vec![inputs, hidden, classes], Activation::Tanh)
                    .expect("valid spec");
                let params: ParamVector<T> = spec.init_params(rng.gen());
                let n = 8;
                let data: Vec<T> = (0..n * inputs)
                    .map(|_| T::cast(rng.gen_range(-1.5..1.5)))
                    .collect();
                let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
                let batch = Batch::new(
                    Matrix::from_vec(n, inputs, data).expect("shape"),
                    labels,
                )
                .expect("batch");
                let fisher = match options.fisher_source {
                    FisherSource::Identity => DiagFisher::identity(spec.param_count()),
                    FisherSource::RandomPositive => DiagFisher::new(
                        (0..spec.param_count())
                            .map(|_| T::cast(rng.gen_range(0.5..2.0)))
                            .collect(),
                        T::cast(1e-5),
                    )
                    .expect("positive values"),
                    FisherSource::Estimated => {
                        fisher::estimate_diag_fisher(&spec, &params, [&batch], n)?
                            .with_damping(T::cast(1e-5))?
                    }
                };
                let objective = ObjectiveConfig::finetune();
                let refresh =
                    refresh_direction(&spec, &params, &batch, &objective, &fisher, options.s);
                let penalty = penalty_gradient(
                    &spec, &params, &batch, &objective, &fisher, sigma, options.fd_step,
                );
                (
                    refresh,
                    penalty,
                    format!("mlp {inputs}-{hidden}-{classes}"),
                )
            }
        };

        match outcome {
            (Ok(refresh), Ok(penalty), descriptor) => {
                let (cosine, gap) = compare(&refresh, &penalty);
                reports.push(TheoryReport {
                    instance,
                    descriptor,
                    s: options.s.to_f64(),
                    cosine,
                    relative_norm_gap: gap,
                });
            }
            (Err(Error::DegenerateGradient { .. }), _, _)
            | (_, Err(Error::DegenerateGradient { .. }), _) => degenerate += 1,
            (Err(e), _, _) | (_, Err(e), _) => return Err(e),
        }
    }

    if reports.is_empty() {
        return Err(Error::DegenerateGradient { norm: 0.0 });
    }
    let mean_cosine = reports.iter().map(|r| r.cosine).sum::<f64>() / reports.len() as f64;
    let min_cosine = reports.iter().map(|r| r.cosine).fold(f64::INFINITY, f64::min);
    let mean_gap =
        reports.iter().map(|r| r.relative_norm_gap).sum::<f64>() / reports.len() as f64;
    Ok(TheorySummary {
        kind: options.kind,
        fisher_source: options.fisher_source,
        reports,
        mean_cosine,
        min_cosine,
        mean_relative_norm_gap: mean_gap,
        degenerate_skipped: degenerate,
    })
}

/// Worst relative gradient error of one objective preset against central
/// finite differences over seeded tiny instances.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub preset: &'static str,
    pub instances: usize,
    pub max_relative_error: f64,
}

/// Check every objective preset's analytic gradient against central finite
/// differences on seeded tiny instances with populated replay draws.
pub fn preset_gradient_check(instances: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    use crate::methods::{
        draw_replay, Method, ObjectiveConfig as Objective, ReplayBuffer, ReplayItem,
    };

    let mut reports = Vec::new();
    for method in [
        Method::Finetune,
        Method::Er,
        Method::Derpp,
        Method::Oewc,
        Method::Cpr,
        Method::Joint,
    ] {
        let mut worst = 0.0f64;
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ method as u64);
        for _ in 0..instances {
            let spec =
                NetworkSpec::new(vec![3, rng.gen_range(3..6), 3], Activation::Tanh)?;
            let params: ParamVector<f64> = spec.init_params(rng.gen());
            let n = 4;
            let data: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let batch = Batch::new(Matrix::from_vec(n, 3, data)?, labels)?;

            let mut buffer = ReplayBuffer::new(6, rng.gen())?;
            for _ in 0..6 {
                buffer.insert(ReplayItem::new(
                    (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    rng.gen_range(0..3),
                    (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    0,
                )?);
            }
            let anchor: ParamVector<f64> = spec.init_params(rng.gen());
            let anchor_fisher = DiagFisher::new(
                (0..spec.param_count()).map(|_| rng.gen_range(0.0..2.0)).collect(),
                1e-5,
            )?;
            let objective = match method {
                Method::Finetune => Objective::finetune(),
                Method::Joint => Objective::joint(),
                Method::Er => Objective::er(0.7, 3),
                Method::Derpp => Objective::derpp(0.4, 0.6, 3),
                Method::Oewc => Objective::oewc(1.5).with_anchor(anchor, anchor_fisher),
                Method::Cpr => Objective::cpr(0.5),
            };
            let draw = draw_replay(&buffer, &objective, &mut rng);
            let eval = cl_loss_and_grad_with_draw(&spec, &params, &batch, &draw, &objective)?;
            let fd = fd_gradient(
                |p| Ok(cl_loss_and_grad_with_draw(&spec, p, &batch, &draw, &objective)?.loss),
                &params,
                T_STEP,
            )?;
            let mut diff = eval.grad.clone();
            diff.add_scaled(&fd, -1.0)?;
            let rel = diff.norm() / fd.norm().max(1e-12);
            worst = worst.max(rel);
        }
        reports.push(GradCheckReport {
            preset: method.name(),
            instances,
            max_relative_error: worst,
        });
    }
    Ok(reports)
}

const T_STEP: f64 = 1e-5;
