//! Dense feed-forward network with exact hand-written backpropagation and
//! plain SGD.
//!
//! Parameters live in one flat [`ParamVector`]; per layer the layout is the
//! row-major weight block `(fan_in × fan_out)` followed by the bias block
//! `(fan_out)`. All operations are pure functions of their inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a = apply(z)`.
    fn derivative_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
        }
    }
}

/// Architecture of a dense network: layer sizes from input to logits, plus
/// the hidden activation. The final layer emits raw logits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "network needs at least input and output sizes, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "all layer sizes must be >= 1, got {:?}",
                layer_sizes
            )));
        }
        Ok(Self {
            layer_sizes,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Σ over layers of `(fan_in + 1) · fan_out`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> ParamVector<T> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(self.param_count());
        for w in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = T::cast((6.0 / (fan_in + fan_out) as f64).sqrt());
            for _ in 0..fan_in * fan_out {
                values.push(T::uniform_symmetric(&mut rng, bound));
            }
            values.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        ParamVector::new(values)
    }

    fn check_params<T: Scalar>(&self, params: &ParamVector<T>) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector length",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        Ok(())
    }

    fn check_inputs<T: Scalar>(&self, inputs: &Matrix<T>) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "input width",
                expected: self.input_dim(),
                actual: inputs.cols(),
            });
        }
        Ok(())
    }
}

/// Flat parameter vector; the universal currency between modules.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Index of the first non-finite coordinate, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    /// `self += scale · other` (lengths must match).
    pub fn add_scaled(&mut self, other: &ParamVector<T>, scale: T) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                context: "ParamVector::add_scaled",
                expected: self.len(),
                actual: other.len(),
            });
        }
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &ParamVector<T>) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn inf_norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }
}

/// A labelled mini-batch: `n × d` inputs and `n` class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    inputs: Matrix<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(inputs: Matrix<T>, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "batch labels",
                expected: inputs.rows(),
                actual: labels.len(),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Single-example batch holding a copy of row `i`.
    pub fn single(&self, i: usize) -> Batch<T> {
        Batch {
            inputs: Matrix::from_vec(1, self.inputs.cols(), self.inputs.row(i).to_vec())
                .expect("row copy"),
            labels: vec![self.labels[i]],
        }
    }

    pub fn validate_against(&self, spec: &NetworkSpec) -> Result<()> {
        spec.check_inputs(&self.inputs)?;
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= spec.output_dim()) {
            return Err(Error::DimensionMismatch {
                context: "class label",
                expected: spec.output_dim(),
                actual: bad,
            });
        }
        Ok(())
    }
}

/// Per-layer views into the flat parameter vector.
struct LayerView<'a, T> {
    weights: &'a [T], // fan_in × fan_out row-major
    biases: &'a [T],
    fan_in: usize,
    fan_out: usize,
}

fn layer_views<'a, T: Scalar>(spec: &NetworkSpec, params: &'a ParamVector<T>) -> Vec<LayerView<'a, T>> {
    let mut views = Vec::with_capacity(spec.num_layers());
    let mut offset = 0;
    for w in spec.layer_sizes().windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &params.as_slice()[offset..offset + fan_in * fan_out];
        offset += fan_in * fan_out;
        let biases = &params.as_slice()[offset..offset + fan_out];
        offset += fan_out;
        views.push(LayerView {
            weights,
            biases,
            fan_in,
            fan_out,
        });
    }
    views
}

/// Forward activations kept for backpropagation. `post_hidden[l]` holds the
/// activation output of hidden layer `l`; `logits` is the last affine output.
pub(crate) struct ForwardCache<'a, T> {
    inputs: &'a Matrix<T>,
    post_hidden: Vec<Matrix<T>>,
    pub(crate) logits: Matrix<T>,
}

fn affine<T: Scalar>(a: &Matrix<T>, layer: &LayerView<'_, T>) -> Matrix<T> {
    let w = Matrix::from_vec(layer.fan_in, layer.fan_out, layer.weights.to_vec()).expect("layout");
    let mut z = a.matmul(&w);
    for i in 0..z.rows() {
        for (v, &b) in z.row_mut(i).iter_mut().zip(layer.biases) {
            *v += b;
        }
    }
    z
}

/// Forward pass with per-layer finiteness checks; used by every gradient path.
pub(crate) fn forward_cached<'a, T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    inputs: &'a Matrix<T>,
) -> Result<ForwardCache<'a, T>> {
    spec.check_params(params)?;
    spec.check_inputs(inputs)?;
    let views = layer_views(spec, params);
    let n_layers = views.len();
    let mut post_hidden = Vec::with_capacity(n_layers.saturating_sub(1));
    let mut current = None::<Matrix<T>>;
    for (l, view) in views.iter().enumerate() {
        let a_prev = current.as_ref().unwrap_or(inputs);
        let mut z = affine(a_prev, view);
        if l + 1 < n_layers {
            for v in z.data_mut() {
                *v = spec.activation().apply(*v);
            }
        }
        if !z.is_finite() {
            return Err(Error::NonFinite { layer: l });
        }
        if l + 1 < n_layers {
            post_hidden.push(z.clone());
            current = Some(z);
        } else {
            return Ok(ForwardCache {
                inputs,
                post_hidden,
                logits: z,
            });
        }
    }
    unreachable!("spec guarantees at least one layer")
}

/// Raw logits for a batch of inputs: shape `n × C`.
pub fn forward<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    inputs: &Matrix<T>,
) -> Result<Matrix<T>> {
    Ok(forward_cached(spec, params, inputs)?.logits)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub(crate) fn ce_loss_and_dlogits<T: Scalar>(
    logits: &Matrix<T>,
    labels: &[usize],
) -> (T, Matrix<T>) {
    let n = logits.rows();
    let scale = T::one() / T::cast(n as f64);
    let mut dlogits = softmax_rows(logits);
    let mut loss = T::zero();
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
        let log_sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        loss += log_sum.ln() + max - row[labels[i]];
        let drow = dlogits.row_mut(i);
        drow[labels[i]] -= T::one();
        for v in drow.iter_mut() {
            *v *= scale;
        }
    }
    (loss * scale, dlogits)
}

/// Backpropagate an arbitrary logit gradient through the cached forward pass.
pub(crate) fn backward_from_dlogits<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    cache: &ForwardCache<'_, T>,
    dlogits: &Matrix<T>,
) -> ParamVector<T> {
    let views = layer_views(spec, params);
    let n_layers = views.len();
    let mut grad = ParamVector::zeros(params.len());

    // Offsets of each layer's weight block in the flat vector.
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for v in &views {
        offsets.push(off);
        off += (v.fan_in + 1) * v.fan_out;
    }

    let mut delta = dlogits.clone();
    for l in (0..n_layers).rev() {
        let view = &views[l];
        let a_prev: &Matrix<T> = if l == 0 {
            cache.inputs
        } else {
            &cache.post_hidden[l - 1]
        };
        let dw = a_prev.matmul_transpose_self(&delta);
        let gslice = grad.as_mut_slice();
        let woff = offsets[l];
        gslice[woff..woff + view.fan_in * view.fan_out].copy_from_slice(dw.data());
        let boff = woff + view.fan_in * view.fan_out;
        for i in 0..delta.rows() {
            for (g, &d) in gslice[boff..boff + view.fan_out].iter_mut().zip(delta.row(i)) {
                *g += d;
            }
        }
        if l > 0 {
            let w = Matrix::from_vec(view.fan_in, view.fan_out, view.weights.to_vec())
                .expect("layout");
            let mut next = delta.matmul_transpose_rhs(&w);
            let act = &cache.post_hidden[l - 1];
            for (v, &a) in next.data_mut().iter_mut().zip(act.data()) {
                *v *= spec.activation().derivative_from_output(a);
            }
            delta = next;
        }
    }
    grad
}

/// Mean softmax cross-entropy of the batch and its exact parameter gradient.
pub fn loss_and_grad<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
) -> Result<(T, ParamVector<T>)> {
    batch.validate_against(spec)?;
    let cache = forward_cached(spec, params, batch.inputs())?;
    let (loss, dlogits) = ce_loss_and_dlogits(&cache.logits, batch.labels());
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: spec.num_layers() - 1,
        });
    }
    let grad = backward_from_dlogits(spec, params, &cache, &dlogits);
    Ok((loss, grad))
}

/// `params − lr · grad`.
pub fn sgd_step<T: Scalar>(
    params: &ParamVector<T>,
    grad: &ParamVector<T>,
    lr: T,
) -> Result<ParamVector<T>> {
    let mut out = params.clone();
    out.add_scaled(grad, -lr)?;
    Ok(out)
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax_lowest<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of examples whose argmax logit matches the label.
pub fn accuracy<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    batch.validate_against(spec)?;
    let logits = forward(spec, params, batch.inputs())?;
    let correct = (0..batch.len())
        .filter(|&i| argmax_lowest(logits.row(i)) == batch.labels()[i])
        .count();
    Ok(correct as f64 / batch.len() as f64)
}

/// Accuracy with the argmax restricted to `allowed` class indices; used for
/// task-incremental evaluation where the task identity masks the head.
pub fn accuracy_masked<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    allowed: &[usize],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if allowed.is_empty() {
        return Err(Error::Domain {
            context: "accuracy_masked",
            message: "empty class mask".into(),
        });
    }
    batch.validate_against(spec)?;
    let logits = forward(spec, params, batch.inputs())?;
    let mut correct = 0usize;
    for i in 0..batch.len() {
        let row = logits.row(i);
        let mut best = allowed[0];
        for &c in allowed {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == batch.labels()[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn fd_grad(
        f: impl Fn(&ParamVector<f64>) -> f64,
        params: &ParamVector<f64>,
        h: f64,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(params.len());
        let mut p = params.clone();
        for i in 0..params.len() {
            let orig = p.as_slice()[i];
            p.as_mut_slice()[i] = orig + h;
            let fp = f(&p);
            p.as_mut_slice()[i] = orig - h;
            let fm = f(&p);
            p.as_mut_slice()[i] = orig;
            out.push((fp - fm) / (2.0 * h));
        }
        out
    }

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec::new(vec![3, 5, 4], Activation::Tanh).unwrap()
    }

    fn random_batch(spec: &NetworkSpec, n: usize, seed: u64) -> Batch<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * spec.input_dim())
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..spec.output_dim())).collect();
        Batch::new(Matrix::from_vec(n, spec.input_dim(), data).unwrap(), labels).unwrap()
    }

    #[test]
    fn param_count_law() {
        let cases = [
            (vec![1, 2], 4),
            (vec![3, 5, 4], 3 * 5 + 5 + 5 * 4 + 4),
            (vec![784, 100, 10], 785 * 100 + 101 * 10),
            (vec![2, 2, 2, 2], 3 * (2 * 2 + 2)),
        ];
        for (sizes, expected) in cases {
            let spec = NetworkSpec::new(sizes, Activation::Relu).unwrap();
            assert_eq!(spec.param_count(), expected);
            let p: ParamVector<f64> = spec.init_params(0);
            assert_eq!(p.len(), expected);
        }
    }

    #[test]
    fn spec_rejects_degenerate_architectures() {
        assert!(NetworkSpec::new(vec![4], Activation::Relu).is_err());
        assert!(NetworkSpec::new(vec![4, 0, 2], Activation::Relu).is_err());
    }

    #[test]
    fn init_bounds_weights_and_zeroes_biases() {
        let spec = NetworkSpec::new(vec![6, 4, 3], Activation::Relu).unwrap();
        let params: ParamVector<f64> = spec.init_params(9);
        let mut offset = 0;
        for w in spec.layer_sizes().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = &params.as_slice()[offset..offset + fan_in * fan_out];
            assert!(weights.iter().all(|v| v.abs() < bound));
            assert!(weights.iter().any(|v| v.abs() > bound * 0.25));
            offset += fan_in * fan_out;
            let biases = &params.as_slice()[offset..offset + fan_out];
            assert!(biases.iter().all(|&v| v == 0.0));
            offset += fan_out;
        }
        // seeded: same seed same params, different seed different params
        let again: ParamVector<f64> = spec.init_params(9);
        assert_eq!(params, again);
        let other: ParamVector<f64> = spec.init_params(10);
        assert_ne!(params, other);
    }

    #[test]
    fn single_precision_tracks_double_precision() {
        let spec = NetworkSpec::new(vec![3, 4, 2], Activation::Tanh).unwrap();
        let p64: ParamVector<f64> = spec.init_params(4);
        let p32 = ParamVector::new(p64.as_slice().iter().map(|&v| v as f32).collect::<Vec<f32>>());
        let rows64 = vec![vec![0.2, -0.4, 0.9], vec![-1.1, 0.3, 0.5]];
        let rows32: Vec<Vec<f32>> = rows64
            .iter()
            .map(|r| r.iter().map(|&v| v as f32).collect())
            .collect();
        let b64 = Batch::new(Matrix::from_rows(&rows64).unwrap(), vec![0, 1]).unwrap();
        let b32 = Batch::new(Matrix::from_rows(&rows32).unwrap(), vec![0, 1]).unwrap();
        let (l64, g64) = loss_and_grad(&spec, &p64, &b64).unwrap();
        let (l32, g32) = loss_and_grad(&spec, &p32, &b32).unwrap();
        assert!((l64 - l32 as f64).abs() < 1e-5);
        for (a, b) in g64.as_slice().iter().zip(g32.as_slice()) {
            assert!((a - *b as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let spec = tiny_spec();
        let params = ParamVector::zeros(spec.param_count());
        let batch = random_batch(&spec, 4, 9);
        let logits = forward(&spec, &params, batch.inputs()).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_affine_layer_is_identity_like() {
        let spec = NetworkSpec::new(vec![1, 1], Activation::Relu).unwrap();
        let params = ParamVector::new(vec![1.0, 0.0]); // weight 1, bias 0
        let inputs = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let logits = forward(&spec, &params, &inputs).unwrap();
        assert_eq!(logits.data(), &[2.0]);
    }

    #[test]
    fn two_layer_relu_matches_straight_line_evaluation() {
        // 2 inputs -> 2 hidden (relu) -> 1 logit, hand-picked weights.
        let spec = NetworkSpec::new(vec![2, 2, 1], Activation::Relu).unwrap();
        // layer 1: W = [[0.5, -1.0], [2.0, 0.25]], b = [0.1, -0.2]
        // layer 2: W = [[1.5], [-0.5]], b = [0.05]
        let params = ParamVector::new(vec![0.5, -1.0, 2.0, 0.25, 0.1, -0.2, 1.5, -0.5, 0.05]);
        let x = [0.3f64, -0.7];
        // independent straight-line evaluation
        let z1 = 0.5 * x[0] + 2.0 * x[1] + 0.1;
        let z2 = -x[0] + 0.25 * x[1] - 0.2;
        let h1 = z1.max(0.0);
        let h2 = z2.max(0.0);
        let expected = 1.5 * h1 - 0.5 * h2 + 0.05;

        let inputs = Matrix::from_vec(1, 2, x.to_vec()).unwrap();
        let logits = forward(&spec, &params, &inputs).unwrap();
        assert!((logits.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let spec = tiny_spec();
        let params: ParamVector<f64> = spec.init_params(3);
        let batch = random_batch(&spec, 6, 4);
        let a = forward(&spec, &params, batch.inputs()).unwrap();
        let b = forward(&spec, &params, batch.inputs()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let spec = tiny_spec();
        let params: ParamVector<f64> = spec.init_params(0);
        let bad_inputs = Matrix::from_vec(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(
            forward(&spec, &params, &bad_inputs),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad_params = ParamVector::zeros(spec.param_count() - 1);
        let inputs = Matrix::from_vec(1, 3, vec![0.0; 3]).unwrap();
        assert!(forward(&spec, &bad_params, &inputs).is_err());
    }

    #[test]
    fn zero_logits_two_classes_loss_is_ln_two() {
        let spec = NetworkSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let params = ParamVector::zeros(spec.param_count());
        let batch = Batch::new(
            Matrix::from_vec(3, 2, vec![1.0, -1.0, 0.5, 0.5, 2.0, 0.0]).unwrap(),
            vec![0, 1, 0],
        )
        .unwrap();
        let (loss, _) = loss_and_grad(&spec, &params, &batch).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_on_seeded_instances() {
        for seed in 0..50u64 {
            let hidden = 3 + (seed % 4) as usize;
            let act = if seed % 2 == 0 { Activation::Tanh } else { Activation::Relu };
            let spec = NetworkSpec::new(vec![3, hidden, 3], act).unwrap();
            let params: ParamVector<f64> = spec.init_params(seed.wrapping_mul(77).wrapping_add(1));
            let batch = random_batch(&spec, 5, seed.wrapping_add(1000));
            let (_, grad) = loss_and_grad(&spec, &params, &batch).unwrap();
            let fd = fd_grad(
                |p| loss_and_grad(&spec, p, &batch).unwrap().0,
                &params,
                1e-5,
            );
            let num: f64 = grad
                .as_slice()
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            assert!(
                num / den < 1e-4,
                "seed {seed}: relative gradient error {}",
                num / den
            );
        }
    }

    #[test]
    fn duplicating_rows_leaves_loss_and_grad_unchanged() {
        let spec = tiny_spec();
        let params: ParamVector<f64> = spec.init_params(11);
        let batch = random_batch(&spec, 4, 12);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..batch.len() {
            rows.push(batch.inputs().row(i).to_vec());
            labels.push(batch.labels()[i]);
        }
        let doubled_rows: Vec<Vec<f64>> = rows.iter().chain(rows.iter()).cloned().collect();
        let doubled_labels: Vec<usize> = labels.iter().chain(labels.iter()).copied().collect();
        let doubled = Batch::new(Matrix::from_rows(&doubled_rows).unwrap(), doubled_labels).unwrap();

        let (l1, g1) = loss_and_grad(&spec, &params, &batch).unwrap();
        let (l2, g2) = loss_and_grad(&spec, &params, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_step_examples() {
        let p = ParamVector::new(vec![1.0, 1.0]);
        let g = ParamVector::new(vec![2.0, -2.0]);
        assert_eq!(sgd_step(&p, &g, 0.5).unwrap().as_slice(), &[0.0, 2.0]);
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap().as_slice(), p.as_slice());
        let short = ParamVector::new(vec![1.0]);
        assert!(sgd_step(&p, &short, 0.1).is_err());
    }

    #[test]
    fn sgd_converges_on_one_dim_quadratic() {
        // f(x) = (x - 3)^2 has gradient 2(x - 3); minimum at 3.
        let mut x: ParamVector<f64> = ParamVector::new(vec![-5.0]);
        for _ in 0..3000 {
            let g = ParamVector::new(vec![2.0 * (x.as_slice()[0] - 3.0)]);
            x = sgd_step(&x, &g, 0.1).unwrap();
        }
        assert!((x.as_slice()[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn accuracy_tie_break_and_recount() {
        let spec = NetworkSpec::new(vec![2, 3], Activation::Relu).unwrap();
        let params = ParamVector::zeros(spec.param_count());
        let batch = Batch::new(
            Matrix::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            vec![0, 0],
        )
        .unwrap();
        // all-zero logits: lowest-index tie-break picks class 0
        assert_eq!(accuracy(&spec, &params, &batch).unwrap(), 1.0);

        // seeded random net on a seeded random 10-class batch vs brute recount
        let spec = NetworkSpec::new(vec![4, 6, 10], Activation::Relu).unwrap();
        let params: ParamVector<f64> = spec.init_params(21);
        let batch = random_batch(&spec, 64, 22);
        let logits = forward(&spec, &params, batch.inputs()).unwrap();
        let mut correct = 0;
        for i in 0..batch.len() {
            let row = logits.row(i);
            let mut best = 0usize;
            let mut best_v = row[0];
            for (j, &v) in row.iter().enumerate() {
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            if best == batch.labels()[i] {
                correct += 1;
            }
        }
        let expected = correct as f64 / batch.len() as f64;
        assert_eq!(accuracy(&spec, &params, &batch).unwrap(), expected);
    }

    #[test]
    fn perfectly_separable_net_scores_one() {
        // 1-layer net on 2 points, weights aligned with labels.
        let spec = NetworkSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let params = ParamVector::new(vec![5.0, -5.0, -5.0, 5.0, 0.0, 0.0]);
        let batch = Batch::new(
            Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            vec![0, 1],
        )
        .unwrap();
        assert_eq!(accuracy(&spec, &params, &batch).unwrap(), 1.0);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(
            Batch::<f64>::new(Matrix::zeros(0, 3), vec![]),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn non_finite_intermediate_reports_layer() {
        let spec = NetworkSpec::new(vec![1, 2, 2], Activation::Relu).unwrap();
        let mut params: ParamVector<f64> = ParamVector::zeros(spec.param_count());
        params.as_mut_slice()[0] = f64::MAX;
        params.as_mut_slice()[1] = f64::MAX;
        let batch = Batch::new(Matrix::from_vec(1, 1, vec![f64::MAX]).unwrap(), vec![0]).unwrap();
        match loss_and_grad(&spec, &params, &batch) {
            Err(Error::NonFinite { layer }) => assert_eq!(layer, 0),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn masked_accuracy_restricts_argmax() {
        let spec = NetworkSpec::new(vec![1, 4], Activation::Relu).unwrap();
        // logits = [w1*x, w2*x, w3*x, w4*x]; choose weights so class 3 wins globally
        let params = ParamVector::new(vec![0.1, 0.2, 0.3, 0.9, 0.0, 0.0, 0.0, 0.0]);
        let batch = Batch::new(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![1]).unwrap();
        assert_eq!(accuracy(&spec, &params, &batch).unwrap(), 0.0);
        assert_eq!(accuracy_masked(&spec, &params, &batch, &[0, 1]).unwrap(), 1.0);
    }
}
