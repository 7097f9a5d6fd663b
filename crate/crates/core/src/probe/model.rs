//! Probe head: 1x1 conv -> batch norm -> GELU -> 1x1 conv, applied to every
//! spatial position independently. Inputs are position-major matrices with
//! one row per (sample, cell) and one column per feature channel.

use std::fmt::Debug;
use std::ops::AddAssign;

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, Zip};
use num_traits::Float;
use rand::Rng;

use super::ProbeError;

pub const DEFAULT_HIDDEN: usize = 512;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Floating-point types the probe can run in.
pub trait ProbeFloat: LinalgScalar + Float + AddAssign + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
    fn erf(self) -> Self;

    /// GELU and its derivative at `x`.
    fn gelu_with_grad(x: Self) -> (Self, Self) {
        let cdf = phi_cdf(x);
        let pdf = Self::of(FRAC_1_SQRT_2PI) * (Self::of(-0.5) * x * x).exp();
        (x * cdf, cdf + x * pdf)
    }
}

impl ProbeFloat for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn f64(self) -> f64 {
        f64::from(self)
    }
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl ProbeFloat for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn f64(self) -> f64 {
        self
    }
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

/// Standard normal CDF.
pub fn phi_cdf<F: ProbeFloat>(x: F) -> F {
    F::of(0.5) * (F::one() + (x * F::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu<F: ProbeFloat>(x: F) -> F {
    x * phi_cdf(x)
}

/// `d/dx gelu(x) = Phi(x) + x * phi(x)`.
pub fn gelu_grad<F: ProbeFloat>(x: F) -> F {
    let pdf = F::of(FRAC_1_SQRT_2PI) * (F::of(-0.5) * x * x).exp();
    phi_cdf(x) + x * pdf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams<F> {
    /// `hidden x d`
    pub conv1_weight: Array2<F>,
    pub conv1_bias: Array1<F>,
    pub bn_weight: Array1<F>,
    pub bn_bias: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    /// `classes x hidden`
    pub conv2_weight: Array2<F>,
    pub conv2_bias: Array1<F>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

/// Gradients of the trainable tensors, same shapes as in [`ProbeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub conv1_weight: Array2<F>,
    pub conv1_bias: Array1<F>,
    pub bn_weight: Array1<F>,
    pub bn_bias: Array1<F>,
    pub conv2_weight: Array2<F>,
    pub conv2_bias: Array1<F>,
}

pub const TRAINABLE: [&str; 6] = [
    "conv1.weight",
    "conv1.bias",
    "bn.weight",
    "bn.bias",
    "conv2.weight",
    "conv2.bias",
];

impl<F: ProbeFloat> ProbeParams<F> {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; batch
    /// norm starts as the identity.
    pub fn init(d: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| F::of(rng.gen_range(-bound..bound)))
        };
        let conv1_weight = uniform(hidden, d, d);
        let conv1_bias = uniform(1, hidden, d).remove_axis(Axis(0));
        let conv2_weight = uniform(classes, hidden, hidden);
        let conv2_bias = uniform(1, classes, hidden).remove_axis(Axis(0));
        Self {
            conv1_weight,
            conv1_bias,
            bn_weight: Array1::ones(hidden),
            bn_bias: Array1::zeros(hidden),
            running_mean: Array1::zeros(hidden),
            running_var: Array1::ones(hidden),
            conv2_weight,
            conv2_bias,
            bn_momentum: BN_MOMENTUM,
            bn_eps: BN_EPS,
        }
    }

    /// All-zero weights and biases (batch norm still the identity).
    pub fn zeros(d: usize, hidden: usize, classes: usize) -> Self {
        Self {
            conv1_weight: Array2::zeros((hidden, d)),
            conv1_bias: Array1::zeros(hidden),
            bn_weight: Array1::ones(hidden),
            bn_bias: Array1::zeros(hidden),
            running_mean: Array1::zeros(hidden),
            running_var: Array1::ones(hidden),
            conv2_weight: Array2::zeros((classes, hidden)),
            conv2_bias: Array1::zeros(classes),
            bn_momentum: BN_MOMENTUM,
            bn_eps: BN_EPS,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.conv1_weight.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.conv1_weight.nrows()
    }

    pub fn classes(&self) -> usize {
        self.conv2_weight.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self.running_mean.iter().all(|v| v.is_finite())
            && self.running_var.iter().all(|&v| v.is_finite() && v > F::zero())
    }

    /// Flat views of the trainable tensors, in [`TRAINABLE`] order.
    pub fn trainable(&self) -> [&[F]; 6] {
        [
            self.conv1_weight.as_slice().expect("standard layout"),
            self.conv1_bias.as_slice().expect("standard layout"),
            self.bn_weight.as_slice().expect("standard layout"),
            self.bn_bias.as_slice().expect("standard layout"),
            self.conv2_weight.as_slice().expect("standard layout"),
            self.conv2_bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn trainable_mut(&mut self) -> [&mut [F]; 6] {
        [
            self.conv1_weight.as_slice_mut().expect("standard layout"),
            self.conv1_bias.as_slice_mut().expect("standard layout"),
            self.bn_weight.as_slice_mut().expect("standard layout"),
            self.bn_bias.as_slice_mut().expect("standard layout"),
            self.conv2_weight.as_slice_mut().expect("standard layout"),
            self.conv2_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    /// Converts every tensor to another float type.
    pub fn cast<G: ProbeFloat>(&self) -> ProbeParams<G> {
        let c1 = |a: &Array1<F>| a.mapv(|v| G::of(v.f64()));
        let c2 = |a: &Array2<F>| a.mapv(|v| G::of(v.f64()));
        ProbeParams {
            conv1_weight: c2(&self.conv1_weight),
            conv1_bias: c1(&self.conv1_bias),
            bn_weight: c1(&self.bn_weight),
            bn_bias: c1(&self.bn_bias),
            running_mean: c1(&self.running_mean),
            running_var: c1(&self.running_var),
            conv2_weight: c2(&self.conv2_weight),
            conv2_bias: c1(&self.conv2_bias),
            bn_momentum: self.bn_momentum,
            bn_eps: self.bn_eps,
        }
    }

    fn check_input(&self, x: &ArrayView2<'_, F>) -> Result<(), ProbeError> {
        if x.ncols() != self.input_dim() {
            return Err(ProbeError::Shape(format!(
                "features have {} channels, probe expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Eval-mode logits, `positions x classes`, using running statistics.
    pub fn forward_eval(&self, x: ArrayView2<'_, F>) -> Result<Array2<F>, ProbeError> {
        self.check_input(&x)?;
        let mut h = x.dot(&self.conv1_weight.t());
        let eps = F::of(self.bn_eps);
        let scale: Array1<F> = Zip::from(&self.bn_weight)
            .and(&self.running_var)
            .map_collect(|&g, &v| g / (v + eps).sqrt());
        let shift: Array1<F> = Zip::from(&self.bn_bias)
            .and(&self.running_mean)
            .and(&scale)
            .and(&self.conv1_bias)
            .map_collect(|&b, &m, &s, &c1| b + (c1 - m) * s);
        Zip::from(h.rows_mut()).for_each(|mut row| {
            Zip::from(&mut row).and(&scale).and(&shift).for_each(|v, &s, &t| *v = gelu(*v * s + t));
        });
        let mut z = h.dot(&self.conv2_weight.t());
        z += &self.conv2_bias;
        Ok(z)
    }

    /// Train-mode forward using batch statistics. Running statistics are not
    /// touched; apply [`BatchStats`] with [`ProbeParams::update_running_stats`].
    pub fn forward_train(&self, x: ArrayView2<'_, F>) -> Result<(Array2<F>, ForwardCache<F>), ProbeError> {
        self.check_input(&x)?;
        let positions = x.nrows();
        if positions < 2 {
            return Err(ProbeError::Shape("batch norm needs at least two positions".into()));
        }
        let mut h = x.dot(&self.conv1_weight.t());
        h += &self.conv1_bias;
        let hidden = self.hidden();
        let hs = h.as_slice_mut().expect("fresh product is contiguous");
        let mut mean = vec![0.0f64; hidden];
        for row in hs.chunks_exact(hidden) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v.f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= positions as f64);
        let mut var = vec![0.0f64; hidden];
        for row in hs.chunks_exact(hidden) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v.f64() - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s /= positions as f64);
        let inv_std: Array1<F> = var.iter().map(|&v| F::of(1.0 / (v + self.bn_eps).sqrt())).collect();
        let mean_f: Vec<F> = mean.iter().map(|&m| F::of(m)).collect();
        let inv = inv_std.as_slice().expect("contiguous");
        let gamma = self.bn_weight.as_slice().expect("contiguous");
        let beta = self.bn_bias.as_slice().expect("contiguous");

        // hs becomes the normalized activations, g the GELU outputs and
        // slope the GELU derivative at each pre-activation.
        let mut g = Vec::with_capacity(hs.len());
        let mut slope = Vec::with_capacity(hs.len());
        for hr in hs.chunks_exact_mut(hidden) {
            for ((((hv, &m), &s), &ga), &be) in hr.iter_mut().zip(&mean_f).zip(inv).zip(gamma).zip(beta) {
                let normed = (*hv - m) * s;
                *hv = normed;
                let (value, deriv) = F::gelu_with_grad(normed * ga + be);
                g.push(value);
                slope.push(deriv);
            }
        }
        let g = Array2::from_shape_vec((positions, hidden), g).expect("sized");
        let slope = Array2::from_shape_vec((positions, hidden), slope).expect("sized");
        let mut z = g.dot(&self.conv2_weight.t());
        z += &self.conv2_bias;
        let stats = BatchStats {
            mean,
            var,
            count: positions,
        };
        Ok((
            z,
            ForwardCache {
                normed: h,
                activations: g,
                slope,
                inv_std,
                stats,
            },
        ))
    }

    /// Exponential moving update with the unbiased batch variance.
    pub fn update_running_stats(&mut self, stats: &BatchStats) {
        let m = self.bn_momentum;
        let correction = stats.count as f64 / (stats.count as f64 - 1.0);
        for i in 0..self.hidden() {
            let rm = self.running_mean[i].f64();
            let rv = self.running_var[i].f64();
            self.running_mean[i] = F::of((1.0 - m) * rm + m * stats.mean[i]);
            self.running_var[i] = F::of((1.0 - m) * rv + m * stats.var[i] * correction);
        }
    }

    /// Backpropagates `d loss / d logits` through the cached train-mode pass.
    pub fn backward(&self, x: ArrayView2<'_, F>, cache: &ForwardCache<F>, grad_logits: &Array2<F>) -> Gradients<F> {
        let positions = x.nrows() as f64;
        let conv2_weight = grad_logits.t().dot(&cache.activations);
        let conv2_bias = grad_logits.sum_axis(Axis(0));
        let mut grad = grad_logits.dot(&self.conv2_weight);

        // Through GELU, accumulating the batch-norm affine gradients.
        let hidden = self.hidden();
        let gs = grad.as_slice_mut().expect("fresh product is contiguous");
        let normed = cache.normed.as_slice().expect("contiguous");
        let slope = cache.slope.as_slice().expect("contiguous");
        let mut d_gamma = vec![0.0f64; hidden];
        let mut d_beta = vec![0.0f64; hidden];
        for ((gr, nr), sr) in gs
            .chunks_exact_mut(hidden)
            .zip(normed.chunks_exact(hidden))
            .zip(slope.chunks_exact(hidden))
        {
            for j in 0..hidden {
                let dy = gr[j] * sr[j];
                gr[j] = dy;
                d_gamma[j] += (dy * nr[j]).f64();
                d_beta[j] += dy.f64();
            }
        }

        // Batch-norm input gradient:
        // dh = gamma * inv_std * (dy - mean(dy) - normed * mean(dy * normed)).
        let coef: Vec<F> = (0..hidden).map(|j| self.bn_weight[j] * cache.inv_std[j]).collect();
        let mean_dy: Vec<F> = d_beta.iter().map(|&v| F::of(v / positions)).collect();
        let mean_dyn: Vec<F> = d_gamma.iter().map(|&v| F::of(v / positions)).collect();
        let mut d_bias = vec![0.0f64; hidden];
        for (gr, nr) in gs.chunks_exact_mut(hidden).zip(normed.chunks_exact(hidden)) {
            for j in 0..hidden {
                let dh = coef[j] * (gr[j] - mean_dy[j] - nr[j] * mean_dyn[j]);
                gr[j] = dh;
                d_bias[j] += dh.f64();
            }
        }
        let conv1_weight = grad.t().dot(&x);
        let conv1_bias: Array1<F> = d_bias.into_iter().map(F::of).collect();
        Gradients {
            conv1_weight,
            conv1_bias,
            bn_weight: d_gamma.into_iter().map(F::of).collect(),
            bn_bias: d_beta.into_iter().map(F::of).collect(),
            conv2_weight,
            conv2_bias,
        }
    }
}

impl<F: ProbeFloat> Gradients<F> {
    pub fn tensors(&self) -> [&[F]; 6] {
        [
            self.conv1_weight.as_slice().expect("standard layout"),
            self.conv1_bias.as_slice().expect("standard layout"),
            self.bn_weight.as_slice().expect("standard layout"),
            self.bn_bias.as_slice().expect("standard layout"),
            self.conv2_weight.as_slice().expect("standard layout"),
            self.conv2_bias.as_slice().expect("standard layout"),
        ]
    }
}

/// Per-channel batch mean and biased variance of the first convolution's output.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    /// Batch-normalized activations before the affine step.
    pub normed: Array2<F>,
    /// GELU outputs.
    pub activations: Array2<F>,
    /// GELU derivative at each pre-activation.
    pub slope: Array2<F>,
    pub inv_std: Array1<F>,
    pub stats: BatchStats,
}

/// Mean softmax cross-entropy over positions and its gradient w.r.t. logits.
pub fn cross_entropy<F: ProbeFloat>(logits: &Array2<F>, labels: &[u8]) -> Result<(f64, Array2<F>), ProbeError> {
    let classes = logits.ncols();
    if labels.len() != logits.nrows() {
        return Err(ProbeError::Shape(format!(
            "{} labels for {} positions",
            labels.len(),
            logits.nrows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
        return Err(ProbeError::InvalidLabel { label: bad, classes });
    }
    let scale = 1.0 / labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0f64;
    let mut probs = vec![0.0f64; classes];
    for ((row, mut grow), &label) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.f64()));
        let mut sum = 0.0;
        for (p, &v) in probs.iter_mut().zip(row) {
            *p = (v.f64() - max).exp();
            sum += *p;
        }
        total += sum.ln() + max - row[usize::from(label)].f64();
        for (k, (g, p)) in grow.iter_mut().zip(&probs).enumerate() {
            let target = if k == usize::from(label) { 1.0 } else { 0.0 };
            *g = F::of((p / sum - target) * scale);
        }
    }
    Ok((total * scale, grad))
}

/// Index of the largest logit per position; ties go to the lowest index.
pub fn argmax_rows<F: ProbeFloat>(logits: &Array2<F>) -> Vec<u8> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

fn loss_of(params: &ProbeParams<f64>, x: &Array2<f64>, labels: &[u8]) -> f64 {
    let (logits, _) = params.forward_train(x.view()).expect("well-formed batch");
    cross_entropy(&logits, labels).expect("well-formed batch").0
}

/// Builds a small random probe and batch from `seed` and returns the worst
/// per-tensor relative error `|a - n| / max(|a|, |n|)` (Euclidean
/// norms, denominator floored at 1e-6) against central differences.
pub fn gradient_check(seed: u64, eps: f64) -> f64 {
    let (d, hidden, classes, n) = (5, 4, 3, 2);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let params = ProbeParams::<f64>::init(d, hidden, classes, &mut rng);
    let normal = rand_distr::StandardNormal;
    let x = Array2::from_shape_fn((n * n, d), |_| rng.sample::<f64, _>(normal));
    let labels: Vec<u8> = (0..n * n).map(|_| rng.gen_range(0..classes as u8)).collect();

    let (logits, cache) = params.forward_train(x.view()).expect("well-formed batch");
    let (_, grad_logits) = cross_entropy(&logits, &labels).expect("well-formed batch");
    let grads = params.backward(x.view(), &cache, &grad_logits);
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let mut worst = 0.0f64;
    for (k, tensor) in analytic.iter().enumerate() {
        let mut diff = 0.0f64;
        let mut norm_a = 0.0f64;
        let mut norm_n = 0.0f64;
        for (i, &a) in tensor.iter().enumerate() {
            let mut plus = params.clone();
            plus.trainable_mut()[k][i] += eps;
            let mut minus = params.clone();
            minus.trainable_mut()[k][i] -= eps;
            let numeric = (loss_of(&plus, &x, &labels) - loss_of(&minus, &x, &labels)) / (2.0 * eps);
            diff += (a - numeric).powi(2);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
        let rel = diff.sqrt() / norm_a.sqrt().max(norm_n.sqrt()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Array2::<f64>::zeros((5, 3));
        let (loss, _) = cross_entropy(&logits, &[0, 1, 2, 0, 1]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_approach_zero_loss() {
        let mut last = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 50.0] {
            let logits = array![[margin, 0.0, 0.0], [0.0, margin, 0.0]];
            let (loss, _) = cross_entropy(&logits, &[0, 1]).unwrap();
            assert!(loss < last);
            last = loss;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn invalid_label() {
        let logits = Array2::<f32>::zeros((1, 3));
        assert!(matches!(
            cross_entropy(&logits, &[3]),
            Err(ProbeError::InvalidLabel { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn zero_params_give_uniform_probabilities() {
        let params = ProbeParams::<f32>::zeros(4, 8, 3);
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i * 4 + j) as f32);
        let logits = params.forward_eval(x.view()).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        assert_eq!(argmax_rows(&logits), vec![0; 6]);
    }

    #[test]
    fn channel_mismatch() {
        let params = ProbeParams::<f32>::zeros(4, 8, 3);
        let x = Array2::<f32>::zeros((2, 5));
        assert!(matches!(params.forward_eval(x.view()), Err(ProbeError::Shape(_))));
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((gelu(-1.0f64) + 0.158_655_253_931_457_05).abs() < 1e-15);
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn batch_norm_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ProbeParams::<f32>::init(6, 16, 3, &mut rng);
        let x = Array2::from_shape_fn((64, 6), |_| rng.gen_range(-3.0f32..3.0));
        let (_, cache) = params.forward_train(x.view()).unwrap();
        for col in cache.normed.columns() {
            let mean = col.iter().map(|&v| f64::from(v)).sum::<f64>() / 64.0;
            let var = col.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / 64.0;
            assert!(mean.abs() <= 1e-5, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-4, "var {var}");
        }
    }

    #[test]
    fn running_stats_move_toward_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ProbeParams::<f64>::init(3, 4, 2, &mut rng);
        let stats = BatchStats {
            mean: vec![1.0; 4],
            var: vec![3.0; 4],
            count: 4,
        };
        params.update_running_stats(&stats);
        assert!(params.running_mean.iter().all(|&m| (m - 0.1).abs() < 1e-12));
        assert!(params.running_var.iter().all(|&v| (v - (0.9 + 0.1 * 4.0)).abs() < 1e-12));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let err = gradient_check(seed, 1e-3);
            assert!(err <= 1e-4, "seed {seed}: relative error {err:e}");
        }
    }

    #[test]
    fn gradients_match_with_smaller_step() {
        // Batch norm over four positions is strongly curved; a smaller step
        // removes most of the truncation error.
        for seed in 0..200 {
            let err = gradient_check(seed, 1e-4);
            assert!(err <= 1e-4, "seed {seed}: relative error {err:e}");
        }
    }

    /// Scalar-loop forward written independently of the matrix code.
    fn reference_eval(params: &ProbeParams<f32>, x: &Array2<f32>) -> Vec<Vec<f64>> {
        let (d, hidden, classes) = (params.input_dim(), params.hidden(), params.classes());
        x.rows()
            .into_iter()
            .map(|row| {
                let mut act = vec![0.0f64; hidden];
                for j in 0..hidden {
                    let mut h = f64::from(params.conv1_bias[j]);
                    for i in 0..d {
                        h += f64::from(params.conv1_weight[[j, i]]) * f64::from(row[i]);
                    }
                    let normed = (h - f64::from(params.running_mean[j]))
                        / (f64::from(params.running_var[j]) + BN_EPS).sqrt();
                    let y = normed * f64::from(params.bn_weight[j]) + f64::from(params.bn_bias[j]);
                    act[j] = 0.5 * y * (1.0 + libm::erf(y / 2f64.sqrt()));
                }
                (0..classes)
                    .map(|k| {
                        let mut z = f64::from(params.conv2_bias[k]);
                        for j in 0..hidden {
                            z += f64::from(params.conv2_weight[[k, j]]) * act[j];
                        }
                        z
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn eval_forward_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut params = ProbeParams::<f32>::init(12, 32, 5, &mut rng);
        for j in 0..32 {
            params.running_mean[j] = rng.gen_range(-0.3..0.3);
            params.running_var[j] = rng.gen_range(0.2..2.0);
            params.bn_weight[j] = rng.gen_range(0.5..1.5);
            params.bn_bias[j] = rng.gen_range(-0.5..0.5);
        }
        let x = Array2::from_shape_fn((40, 12), |_| rng.gen_range(-2.0f32..2.0));
        let want = reference_eval(&params, &x);

        // Double precision: elementwise.
        let got = params.cast::<f64>().forward_eval(x.mapv(f64::from).view()).unwrap();
        for (p, row) in want.iter().enumerate() {
            for (k, &w) in row.iter().enumerate() {
                let rel = (got[[p, k]] - w).abs() / w.abs().max(1e-12);
                assert!(rel <= 1e-5, "position {p} class {k}: {} vs {w}", got[[p, k]]);
            }
        }

        // Single precision: relative to each position's logit vector, since
        // near-zero logits carry cancellation error.
        let got = params.forward_eval(x.view()).unwrap();
        for (p, row) in want.iter().enumerate() {
            let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (k, &w) in row.iter().enumerate() {
                let rel = (f64::from(got[[p, k]]) - w).abs() / scale;
                assert!(rel <= 1e-5, "position {p} class {k}: {} vs {w}", got[[p, k]]);
            }
        }
    }

    #[test]
    fn permuting_positions_permutes_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ProbeParams::<f32>::init(6, 16, 4, &mut rng);
        let x = Array2::from_shape_fn((9, 6), |_| rng.gen_range(-1.0f32..1.0));
        let perm = [4usize, 0, 8, 2, 7, 1, 5, 3, 6];
        let xp = Array2::from_shape_fn((9, 6), |(p, i)| x[[perm[p], i]]);
        let eval = params.forward_eval(x.view()).unwrap();
        let eval_p = params.forward_eval(xp.view()).unwrap();
        // Train mode too: batch statistics are permutation invariant.
        let (train, _) = params.forward_train(x.view()).unwrap();
        let (train_p, _) = params.forward_train(xp.view()).unwrap();
        for p in 0..9 {
            for k in 0..4 {
                assert_eq!(eval_p[[p, k]], eval[[perm[p], k]]);
                assert!((train_p[[p, k]] - train[[perm[p], k]]).abs() < 1e-5);
            }
        }
    }
}
