//! The unlearn-relearn plug-in.
//!
//! On scheduled iterations the current parameters take `J` preconditioned
//! gradient-*ascent* steps (optionally with Gaussian noise matched to the
//! inverse Fisher diagonal), and the relearn gradient is evaluated at the
//! ascended point but applied at the original parameters. The same mini-batch
//! and replay sample are held fixed across all `J + 1` gradient evaluations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{self, DiagFisher};
use crate::methods::{
    cl_loss_and_grad_with_draw, draw_replay, LossParts, ObjectiveConfig, ReplayBuffer,
};
use crate::net::{self, Batch, NetworkSpec, ParamVector};
use crate::scalar::Scalar;

/// Cap on the ∞-norm of the deterministic ascent displacement; displacements
/// beyond it are rescaled and flagged.
pub const ASCENT_DISPLACEMENT_CAP: f64 = 1.0;

/// Which loss the ascent steps climb. The relearn step always descends the
/// full composed objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnlearnScope {
    /// Ascend the full composed objective (default).
    FullObjective,
    /// Ascend only the current batch's cross-entropy; ablation switch.
    CrossEntropyOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshConfig<T> {
    /// Unlearning rate γ of the ascent step.
    pub gamma: T,
    /// Number of ascent steps J; 0 degrades to the base method exactly.
    pub steps: usize,
    /// Apply the unlearn-relearn cycle every `interval`-th iteration
    /// (1-based); other iterations take the plain base-method step.
    pub interval: usize,
    pub noise_enabled: bool,
    pub rng_seed: u64,
    pub scope: UnlearnScope,
}

impl<T: Scalar> Default for RefreshConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::cast(0.03),
            steps: 1,
            interval: 2,
            noise_enabled: true,
            rng_seed: 0,
            scope: UnlearnScope::FullObjective,
        }
    }
}

impl<T: Scalar> RefreshConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= T::zero()) {
            return Err(Error::Config(format!(
                "unlearning rate must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if self.interval == 0 {
            return Err(Error::Config("refresh interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one ascent step.
#[derive(Debug, Clone)]
pub struct UnlearnOutcome<T> {
    pub params: ParamVector<T>,
    /// True when the displacement hit [`ASCENT_DISPLACEMENT_CAP`].
    pub capped: bool,
}

fn apply_cap<T: Scalar>(displacement: &mut ParamVector<T>) -> bool {
    let cap = T::cast(ASCENT_DISPLACEMENT_CAP);
    let inf = displacement.inf_norm();
    if inf > cap {
        let scale = cap / inf;
        for v in displacement.as_mut_slice() {
            *v *= scale;
        }
        true
    } else {
        false
    }
}

fn check_finite<T: Scalar>(params: &ParamVector<T>) -> Result<()> {
    match params.first_non_finite() {
        Some(index) => Err(Error::NonFiniteParam { index }),
        None => Ok(()),
    }
}

/// One preconditioned noisy-ascent step:
/// `params + γ·(F + ε)⁻¹ ∇L(params) + ξ`, `ξᵢ ~ N(0, 2γ/(Fᵢ + ε))` when noise
/// is enabled. Note the plus sign: this climbs the loss.
pub fn unlearn_step<T, G, R>(
    params: &ParamVector<T>,
    mut grad_fn: G,
    fisher: &DiagFisher<T>,
    config: &RefreshConfig<T>,
    rng: &mut R,
) -> Result<UnlearnOutcome<T>>
where
    T: Scalar,
    G: FnMut(&ParamVector<T>) -> Result<ParamVector<T>>,
    R: Rng + ?Sized,
{
    config.validate()?;
    let grad = grad_fn(params)?;
    let mut displacement = fisher::precondition(fisher, &grad)?;
    for v in displacement.as_mut_slice() {
        *v *= config.gamma;
    }
    let capped = apply_cap(&mut displacement);
    let mut out = params.clone();
    out.add_scaled(&displacement, T::one())?;
    if config.noise_enabled {
        let noise = fisher::sample_noise(fisher, config.gamma, rng)?;
        for (p, n) in out.as_mut_slice().iter_mut().zip(noise) {
            *p += n;
        }
    }
    check_finite(&out)?;
    Ok(UnlearnOutcome { params: out, capped })
}

/// Noise-free ascent with unlearning rate `1/alpha`:
/// `params + (1/alpha)·(F + ε)⁻¹ grad`, with the same displacement cap.
pub fn deterministic_unlearn<T: Scalar>(
    params: &ParamVector<T>,
    grad: &ParamVector<T>,
    fisher: &DiagFisher<T>,
    alpha: T,
) -> Result<ParamVector<T>> {
    // negated form also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(alpha > T::zero()) {
        return Err(Error::Domain {
            context: "deterministic_unlearn",
            message: format!("alpha must be > 0, got {alpha}"),
        });
    }
    let gamma = T::one() / alpha;
    let mut displacement = fisher::precondition(fisher, grad)?;
    for v in displacement.as_mut_slice() {
        *v *= gamma;
    }
    apply_cap(&mut displacement);
    let mut out = params.clone();
    out.add_scaled(&displacement, T::one())?;
    check_finite(&out)?;
    Ok(out)
}

/// What one training step did, for run diagnostics.
#[derive(Debug, Clone)]
pub struct StepOutcome<T> {
    pub params: ParamVector<T>,
    /// True when unlearn steps actually ran this iteration.
    pub refreshed: bool,
    pub unlearn_capped: bool,
    /// Loss at the point the applied gradient was evaluated.
    pub loss: T,
    pub parts: LossParts<T>,
}

/// One training iteration of the base method wrapped by the plug-in.
///
/// Off-schedule iterations (and `J = 0`) take the plain step `params − lr·g`.
/// On-schedule iterations run `J` ascent steps from the current parameters,
/// then apply the relearn gradient — evaluated at the ascended point — to the
/// *original* parameters. The replay draw is made once per iteration, so the
/// plug-in consumes the same replay randomness as the base method.
#[allow(clippy::too_many_arguments)]
pub fn refresh_train_step<T, RD, RN>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    buffer: &ReplayBuffer<T>,
    objective: &ObjectiveConfig<T>,
    fisher: &DiagFisher<T>,
    refresh: &RefreshConfig<T>,
    lr: T,
    iteration: usize,
    replay_rng: &mut RD,
    noise_rng: &mut RN,
) -> Result<StepOutcome<T>>
where
    T: Scalar,
    RD: Rng + ?Sized,
    RN: Rng + ?Sized,
{
    refresh.validate()?;
    let draw = draw_replay(buffer, objective, replay_rng);
    let on_schedule = refresh.steps > 0 && iteration.is_multiple_of(refresh.interval);

    if !on_schedule {
        let eval = cl_loss_and_grad_with_draw(spec, params, batch, &draw, objective)?;
        let next = net::sgd_step(params, &eval.grad, lr)?;
        return Ok(StepOutcome {
            params: next,
            refreshed: false,
            unlearn_capped: false,
            loss: eval.loss,
            parts: eval.parts,
        });
    }

    let grad_fn = |p: &ParamVector<T>| -> Result<ParamVector<T>> {
        match refresh.scope {
            UnlearnScope::FullObjective => {
                Ok(cl_loss_and_grad_with_draw(spec, p, batch, &draw, objective)?.grad)
            }
            UnlearnScope::CrossEntropyOnly => Ok(net::loss_and_grad(spec, p, batch)?.1),
        }
    };

    let mut ascended = params.clone();
    let mut capped = false;
    for _ in 0..refresh.steps {
        let outcome = unlearn_step(&ascended, &grad_fn, fisher, refresh, noise_rng)?;
        ascended = outcome.params;
        capped |= outcome.capped;
    }

    // relearn: gradient at the ascended point, applied at the original params
    let eval = cl_loss_and_grad_with_draw(spec, &ascended, batch, &draw, objective)?;
    let next = net::sgd_step(params, &eval.grad, lr)?;
    Ok(StepOutcome {
        params: next,
        refreshed: true,
        unlearn_capped: capped,
        loss: eval.loss,
        parts: eval.parts,
    })
}
