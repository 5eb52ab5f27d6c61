//! Diagonal empirical Fisher information: estimation, damping, inversion and
//! per-task bookkeeping.
//!
//! The estimate is the mean over examples of the squared per-example
//! cross-entropy gradient, using ground-truth labels. The damping `ε` is
//! carried alongside the values and only enters when inverting (it is never
//! folded into the values themselves).

use rand::Rng;

use crate::error::{Error, Result};
use crate::net::{self, Batch, NetworkSpec, ParamVector};
use crate::scalar::Scalar;

/// Default damping added to the diagonal when inverting.
pub const DEFAULT_DAMPING: f64 = 1e-5;

/// Per-parameter nonnegative Fisher values plus damping.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagFisher<T> {
    values: Vec<T>,
    damping: T,
}

impl<T: Scalar> DiagFisher<T> {
    pub fn new(values: Vec<T>, damping: T) -> Result<Self> {
        if !(damping > T::zero() && damping.is_finite()) {
            return Err(Error::Domain {
                context: "DiagFisher::new",
                message: format!("damping must be positive and finite, got {damping}"),
            });
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= T::zero())) {
            return Err(Error::Domain {
                context: "DiagFisher::new",
                message: format!("values must be finite and >= 0, got {bad}"),
            });
        }
        Ok(Self { values, damping })
    }

    /// All-ones values with the default damping; the isotropic fallback used
    /// before any task has been consolidated.
    pub fn identity(len: usize) -> Self {
        Self {
            values: vec![T::one(); len],
            damping: T::cast(DEFAULT_DAMPING),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn damping(&self) -> T {
        self.damping
    }

    pub fn with_damping(mut self, damping: T) -> Result<Self> {
        if !(damping > T::zero() && damping.is_finite()) {
            return Err(Error::Domain {
                context: "DiagFisher::with_damping",
                message: format!("damping must be positive and finite, got {damping}"),
            });
        }
        self.damping = damping;
        Ok(self)
    }
}

/// Mergeable accumulator of squared per-example gradients, so estimation can
/// be sharded; the merged result is independent of the sharding.
#[derive(Debug, Clone)]
pub struct FisherAccumulator<T> {
    sum_squares: Vec<T>,
    count: usize,
}

impl<T: Scalar> FisherAccumulator<T> {
    pub fn new(len: usize) -> Self {
        Self {
            sum_squares: vec![T::zero(); len],
            count: 0,
        }
    }

    pub fn add_gradient(&mut self, grad: &ParamVector<T>) -> Result<()> {
        if grad.len() != self.sum_squares.len() {
            return Err(Error::DimensionMismatch {
                context: "FisherAccumulator::add_gradient",
                expected: self.sum_squares.len(),
                actual: grad.len(),
            });
        }
        for (s, &g) in self.sum_squares.iter_mut().zip(grad.as_slice()) {
            *s += g * g;
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &FisherAccumulator<T>) -> Result<()> {
        if other.sum_squares.len() != self.sum_squares.len() {
            return Err(Error::DimensionMismatch {
                context: "FisherAccumulator::merge",
                expected: self.sum_squares.len(),
                actual: other.sum_squares.len(),
            });
        }
        for (s, &o) in self.sum_squares.iter_mut().zip(&other.sum_squares) {
            *s += o;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self, damping: T) -> Result<DiagFisher<T>> {
        if self.count == 0 {
            return Err(Error::EmptyStream);
        }
        let scale = T::one() / T::cast(self.count as f64);
        let values = self.sum_squares.into_iter().map(|s| s * scale).collect();
        DiagFisher::new(values, damping)
    }
}

/// Diagonal empirical Fisher over at most `max_examples` examples, taken in
/// stream order. Deterministic given the example order.
pub fn estimate_diag_fisher<'a, T, I>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    batches: I,
    max_examples: usize,
) -> Result<DiagFisher<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a Batch<T>>,
{
    let mut acc = FisherAccumulator::new(params.len());
    'outer: for batch in batches {
        for i in 0..batch.len() {
            if acc.count() >= max_examples {
                break 'outer;
            }
            let single = batch.single(i);
            let (_, grad) = net::loss_and_grad(spec, params, &single)?;
            acc.add_gradient(&grad)?;
        }
    }
    acc.finish(T::cast(DEFAULT_DAMPING))
}

/// Elementwise `v / (F + ε)`.
pub fn precondition<T: Scalar>(fisher: &DiagFisher<T>, v: &ParamVector<T>) -> Result<ParamVector<T>> {
    if fisher.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "precondition",
            expected: fisher.len(),
            actual: v.len(),
        });
    }
    let eps = fisher.damping();
    let out = v
        .as_slice()
        .iter()
        .zip(fisher.values())
        .map(|(&x, &f)| x / (f + eps))
        .collect();
    Ok(ParamVector::new(out))
}

/// Per-parameter standard deviations `sqrt(2γ / (F + ε))`.
pub fn noise_scale<T: Scalar>(fisher: &DiagFisher<T>, gamma: T) -> Result<Vec<T>> {
    if gamma < T::zero() {
        return Err(Error::Domain {
            context: "noise_scale",
            message: format!("gamma must be >= 0, got {gamma}"),
        });
    }
    let eps = fisher.damping();
    let two = T::cast(2.0);
    Ok(fisher
        .values()
        .iter()
        .map(|&f| (two * gamma / (f + eps)).sqrt())
        .collect())
}

/// One Gaussian draw per parameter with the `noise_scale` standard deviations.
pub fn sample_noise<T: Scalar, R: Rng + ?Sized>(
    fisher: &DiagFisher<T>,
    gamma: T,
    rng: &mut R,
) -> Result<Vec<T>> {
    let scales = noise_scale(fisher, gamma)?;
    Ok(scales
        .into_iter()
        .map(|s| s * T::standard_normal(rng))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::net::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn batch(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Batch<f64> {
        Batch::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn saturated_softmax_gives_all_zero_fisher() {
        // Logits [700, -700]: softmax underflows to exactly [1, 0], so with
        // label 0 every per-example gradient is exactly zero.
        let spec = NetworkSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let params = ParamVector::new(vec![700.0, -700.0, 0.0, 0.0]);
        let b = batch(vec![vec![1.0], vec![1.0]], vec![0, 0]);
        let f = estimate_diag_fisher(&spec, &params, [&b], 100).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_logit_zero_weight_model_has_quarter_fisher() {
        // One input x=1, both logits zero: per-example logit gradient is
        // [0.5, -0.5], so every weight and bias coordinate squares to 0.25.
        let spec = NetworkSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let params = ParamVector::zeros(spec.param_count());
        let b = batch(vec![vec![1.0]], vec![1]);
        let f = estimate_diag_fisher(&spec, &params, [&b], 10).unwrap();
        for &v in f.values() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicating_the_dataset_leaves_estimate_unchanged() {
        let spec = NetworkSpec::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let params: ParamVector<f64> = spec.init_params(5);
        let b = batch(
            vec![vec![0.4, -0.2], vec![1.0, 0.8], vec![-0.5, 0.1]],
            vec![0, 1, 0],
        );
        let once = estimate_diag_fisher(&spec, &params, [&b], 1000).unwrap();
        let twice = estimate_diag_fisher(&spec, &params, [&b, &b], 1000).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn max_examples_truncates_the_stream() {
        let spec = NetworkSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let params: ParamVector<f64> = spec.init_params(1);
        let b1 = batch(vec![vec![1.0], vec![2.0]], vec![0, 1]);
        let b2 = batch(vec![vec![-1.0]], vec![0]);
        let first_only = estimate_diag_fisher(&spec, &params, [&b1], 1).unwrap();
        let truncated = estimate_diag_fisher(&spec, &params, [&b1, &b2], 1).unwrap();
        assert_eq!(first_only.values(), truncated.values());
    }

    #[test]
    fn empty_stream_errors() {
        let spec = NetworkSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let params: ParamVector<f64> = spec.init_params(0);
        let none: [&Batch<f64>; 0] = [];
        assert!(matches!(
            estimate_diag_fisher(&spec, &params, none, 10),
            Err(Error::EmptyStream)
        ));
    }

    #[test]
    fn scaling_gradients_scales_values_quadratically() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let grads: Vec<ParamVector<f64>> = (0..6)
            .map(|_| ParamVector::new((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let c = 3.7;
        let mut plain = FisherAccumulator::new(8);
        let mut scaled = FisherAccumulator::new(8);
        for g in &grads {
            plain.add_gradient(g).unwrap();
            let mut gs = g.clone();
            for v in gs.as_mut_slice() {
                *v *= c;
            }
            scaled.add_gradient(&gs).unwrap();
        }
        let plain = plain.finish(1e-5).unwrap();
        let scaled = scaled.finish(1e-5).unwrap();
        for (a, b) in plain.values().iter().zip(scaled.values()) {
            assert!((b - c * c * a).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn sharded_accumulation_matches_serial() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let grads: Vec<ParamVector<f64>> = (0..10)
            .map(|_| ParamVector::new((0..5).map(|_| rng.gen_range(-2.0..2.0)).collect()))
            .collect();
        let mut serial = FisherAccumulator::new(5);
        for g in &grads {
            serial.add_gradient(g).unwrap();
        }
        let mut shard_a = FisherAccumulator::new(5);
        let mut shard_b = FisherAccumulator::new(5);
        for (i, g) in grads.iter().enumerate() {
            if i % 2 == 0 {
                shard_a.add_gradient(g).unwrap();
            } else {
                shard_b.add_gradient(g).unwrap();
            }
        }
        shard_a.merge(&shard_b).unwrap();
        let serial = serial.finish(1e-5).unwrap();
        let merged = shard_a.finish(1e-5).unwrap();
        for (a, b) in serial.values().iter().zip(merged.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn precondition_examples() {
        let f: DiagFisher<f64> = DiagFisher::new(vec![3.0], 1.0).unwrap();
        let v = ParamVector::new(vec![8.0]);
        assert_eq!(precondition(&f, &v).unwrap().as_slice(), &[2.0]);

        let near_identity: DiagFisher<f64> = DiagFisher::new(vec![1.0, 1.0, 1.0], 1e-12).unwrap();
        let v = ParamVector::new(vec![0.5, -2.0, 7.0]);
        let out = precondition(&near_identity, &v).unwrap();
        for (a, b) in out.as_slice().iter().zip(v.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn precondition_round_trip_recovers_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(100);
        let values: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..5.0)).collect();
        let f = DiagFisher::new(values.clone(), 0.3).unwrap();
        let v = ParamVector::new((0..32).map(|_| rng.gen_range(-4.0..4.0)).collect());
        let pre = precondition(&f, &v).unwrap();
        for ((p, f_val), orig) in pre.as_slice().iter().zip(&values).zip(v.as_slice()) {
            let back = p * (f_val + 0.3);
            assert!((back - orig).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_scale_examples() {
        let f: DiagFisher<f64> = DiagFisher::new(vec![1.0, 4.0], 1e-12).unwrap();
        let zeros = noise_scale(&f, 0.0).unwrap();
        assert_eq!(zeros, vec![0.0, 0.0]);
        let s = noise_scale(&f, 0.5).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-9);
        assert!((s[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_invalid_values_and_damping() {
        assert!(DiagFisher::new(vec![-1.0], 1e-5).is_err());
        assert!(DiagFisher::new(vec![f64::NAN], 1e-5).is_err());
        assert!(DiagFisher::new(vec![1.0], 0.0).is_err());
    }
}
