//! Feed-forward networks with hand-derived gradients.
//!
//! Hidden layers are `tanh(W x + b)`; the output layer is linear. Gradients
//! are exact reverse-mode derivatives of `output · output_grad`, summed over
//! the batch. Everything is `f64`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Per-layer activations from a batched forward pass.
///
/// `activations[0]` is the input batch and `activations[l]` the output of
/// layer `l` (after tanh for hidden layers); the last entry is the network
/// output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.activations.last().expect("cache always holds the input").view()
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.activations.pop().expect("cache always holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Gradient with respect to the input batch (batch × input_dim).
    pub input: Array2<f64>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "an MLP needs at least input and output sizes, got {sizes:?}"
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidInput(format!(
            "layer sizes must be positive, got {sizes:?}"
        )));
    }
    Ok(())
}

/// Orthonormal rows (or columns, whichever is fewer) scaled by `gain`.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut q = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        loop {
            let mut v: Array1<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            // modified Gram-Schmidt against the rows accepted so far
            for j in 0..i {
                let qj = q.row(j);
                let proj = v.dot(&qj);
                v.scaled_add(-proj, &qj);
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-10 {
                q.row_mut(i).assign(&(v / norm));
                break;
            }
        }
    }
    let q = q * gain;
    if transpose {
        q.reversed_axes().as_standard_layout().to_owned()
    } else {
        q
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        let weights = sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Orthogonal initialization, zero biases. `hidden_gain` scales every layer
    /// except the last, which uses `output_gain`.
    pub fn orthogonal<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let last = net.weights.len() - 1;
        for (l, w) in net.weights.iter_mut().enumerate() {
            let gain = if l == last { output_gain } else { hidden_gain };
            let (r, c) = w.dim();
            *w = orthogonal_matrix(r, c, gain, rng);
        }
        Ok(net)
    }

    pub fn from_parts(sizes: Vec<usize>, weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        check_sizes(&sizes)?;
        if weights.len() != sizes.len() - 1 || biases.len() != sizes.len() - 1 {
            return Err(Error::InvalidInput("layer count does not match layer_sizes".into()));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.dim() != (sizes[l + 1], sizes[l]) || b.len() != sizes[l + 1] {
                return Err(Error::InvalidInput(format!("layer {l} has inconsistent shape")));
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("layer {l} contains non-finite values")));
            }
        }
        Ok(Self { sizes, weights, biases })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let batch = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(self.forward_batch(batch)?.into_output().into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "expected input width {}, got {}",
                self.input_dim(),
                inputs.ncols()
            )));
        }
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(inputs.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[l].dot(&w.t());
            z += b;
            if l != last {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Gradients of `sum_b output[b] · output_grad[b]` for one input vector.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<MlpGradients> {
        let inputs = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let grads = ArrayView2::from_shape((1, output_grad.len()), output_grad)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let cache = self.forward_batch(inputs)?;
        self.backward_batch(&cache, grads)
    }

    pub fn backward_batch(&self, cache: &ForwardCache, output_grad: ArrayView2<'_, f64>) -> Result<MlpGradients> {
        let batch = cache.activations[0].nrows();
        if output_grad.dim() != (batch, self.output_dim()) {
            return Err(Error::InvalidInput(format!(
                "output gradient shape {:?} does not match ({batch}, {})",
                output_grad.dim(),
                self.output_dim()
            )));
        }
        let n_layers = self.weights.len();
        let mut grad_w = Vec::with_capacity(n_layers);
        let mut grad_b = Vec::with_capacity(n_layers);
        let mut delta = output_grad.to_owned();
        for l in (0..n_layers).rev() {
            let a_in = &cache.activations[l];
            grad_w.push(delta.t().dot(a_in));
            grad_b.push(delta.sum_axis(Axis(0)));
            let mut prev = delta.dot(&self.weights[l]);
            if l > 0 {
                // a_in = tanh(z), so dtanh/dz = 1 - a_in^2
                ndarray::Zip::from(&mut prev).and(a_in).for_each(|d, &a| *d *= 1.0 - a * a);
            }
            delta = prev;
        }
        grad_w.reverse();
        grad_b.reverse();
        Ok(MlpGradients {
            weights: grad_w,
            biases: grad_b,
            input: delta,
        })
    }

    /// Appends parameters in a fixed order: per layer, weights (row-major) then bias.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    /// Inverse of [`Mlp::write_flat`]; returns the number of values consumed.
    pub fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = src[i];
                i += 1;
            }
        }
        i
    }
}

impl MlpGradients {
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.input.iter().all(|v| v.is_finite())
    }
}

/// State-independent diagonal Gaussian over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub log_std: Array1<f64>,
}

impl GaussianHead {
    pub fn new(action_dim: usize, initial_log_std: f64) -> Self {
        Self {
            log_std: Array1::from_elem(action_dim, initial_log_std),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn log_prob(&self, mean: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(mean, self.log_std.as_slice().unwrap(), action)
    }

    /// Sum over dimensions of the per-dimension differential entropy.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (LN_2PI + 1.0)).sum()
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// Draws `action ~ N(mean, diag(exp(log_std))^2)` and returns it with its log density.
pub fn sample_action<R: Rng + ?Sized>(mean: &[f64], head: &GaussianHead, rng: &mut R) -> Result<(Vec<f64>, f64)> {
    if mean.len() != head.action_dim() {
        return Err(Error::InvalidInput(format!(
            "mean has {} entries, head has {}",
            mean.len(),
            head.action_dim()
        )));
    }
    let action: Vec<f64> = mean
        .iter()
        .zip(head.log_std.iter())
        .map(|(&m, &ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lp = head.log_prob(mean, &action);
    Ok((action, lp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_output_layer_cancels_symmetric_input() {
        let net = Mlp::from_parts(vec![2, 1], vec![array![[1.0, 1.0]]], vec![array![0.0]]).unwrap();
        assert_eq!(net.forward(&[0.3, -0.3]).unwrap(), vec![0.0]);
    }

    #[test]
    fn tanh_composition() {
        let net = Mlp::from_parts(
            vec![1, 1, 1],
            vec![array![[1.0]], array![[1.0]]],
            vec![array![0.0], array![0.0]],
        )
        .unwrap();
        let out = net.forward(&[0.5]).unwrap();
        assert!((out[0] - 0.462_117_157_260_009_74).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(net.backward(&[1.0, 2.0, 3.0], &[1.0]), Err(Error::InvalidInput(_))));
        assert!(Mlp::zeros(&[3]).is_err());
    }

    #[test]
    fn zero_seed_gives_zero_gradients() {
        let mut rng = seed::stream(1, &[]);
        let net = Mlp::orthogonal(&[3, 4, 2], 1.0, 1.0, &mut rng).unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(g.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_weight_gradient_is_input() {
        let net = Mlp::from_parts(vec![1, 1], vec![array![[0.7]]], vec![array![0.1]]).unwrap();
        let g = net.backward(&[1.3], &[1.0]).unwrap();
        assert_eq!(g.weights[0][[0, 0]], 1.3);
        assert_eq!(g.biases[0][0], 1.0);
        assert_eq!(g.input[[0, 0]], 0.7);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = seed::stream(5, &[]);
        let net = Mlp::orthogonal(&[6, 4, 9], 1.0, 0.5, &mut rng).unwrap();
        let w0 = &net.weights()[0]; // 4 x 6, rows orthonormal
        let gram = w0.dot(&w0.t());
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expected).abs() < 1e-12);
            }
        }
        let w1 = &net.weights()[1]; // 9 x 4, columns orthonormal with gain 0.5
        let gram = w1.t().dot(w1);
        for i in 0..4 {
            assert!((gram[[i, i]] - 0.25).abs() < 1e-12);
        }
        assert!(net.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = seed::stream(9, &[]);
        let net = Mlp::orthogonal(&[3, 4, 2], 1.0, 1.0, &mut rng).unwrap();
        let mut flat = Vec::new();
        net.write_flat(&mut flat);
        assert_eq!(flat.len(), net.param_count());
        let mut other = Mlp::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(other.read_flat(&flat), flat.len());
        assert_eq!(other, net);
    }

    #[test]
    fn degenerate_gaussian_returns_mean() {
        let head = GaussianHead::new(2, -20.0);
        let mut rng = seed::stream(2, &[]);
        let (a, _) = sample_action(&[0.25, -0.5], &head, &mut rng).unwrap();
        assert!((a[0] - 0.25).abs() < 1e-7);
        assert!((a[1] + 0.5).abs() < 1e-7);
    }

    #[test]
    fn standard_normal_density_at_mean() {
        let head = GaussianHead::new(1, 0.0);
        assert!((head.log_prob(&[0.0], &[0.0]) + 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let head = GaussianHead::new(3, -0.3);
        let draw = || sample_action(&[0.1, 0.2, 0.3], &head, &mut seed::stream(11, &[4])).unwrap();
        let (a1, l1) = draw();
        let (a2, l2) = draw();
        assert_eq!(a1, a2);
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert!(sample_action(&[0.0], &head, &mut seed::stream(1, &[])).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let head = GaussianHead::new(1, 0.4);
        let (lo, hi, n) = (-15.0, 15.0, 30_000);
        let h = (hi - lo) / n as f64;
        let total: f64 = (0..n)
            .map(|i| head.log_prob(&[0.3], &[lo + (i as f64 + 0.5) * h]).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3);
    }
}
