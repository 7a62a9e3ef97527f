//! Fully connected network written from scratch: batched forward pass, L2
//! loss, backpropagation, Adam, finite-difference gradient checking and a
//! plain-text weight file format.
//!
//! The network is generic over the float type. Training runs in `f32`;
//! gradient checks run in `f64`.

use std::fmt::{Debug, Display};
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use num_traits::{Float, FromPrimitive};
use rand::{Rng, RngCore};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Float types the network can be instantiated with.
pub trait Real:
    Float
    + FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";
}

impl Real for f64 {
    const NAME: &'static str = "f64";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

impl Activation {
    fn apply<F: Real>(self, z: &mut Array2<F>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() }),
            Activation::Sigmoid => z.mapv_inplace(|v| F::one() / (F::one() + (-v).exp())),
            Activation::None => {}
        }
    }

    /// Multiplies `delta` by the derivative, expressed through the layer output `a`.
    /// The relu derivative at zero is taken as zero.
    fn backprop<F: Real>(self, delta: &mut Array2<F>, a: &Array2<F>) {
        match self {
            Activation::Relu => Zip::from(delta).and(a).for_each(|d, &a| {
                if a <= F::zero() {
                    *d = F::zero();
                }
            }),
            Activation::Sigmoid => Zip::from(delta).and(a).for_each(|d, &a| *d = *d * a * (F::one() - a)),
            Activation::None => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Relu on every hidden layer, sigmoid on the output.
pub fn layer_specs(dims: &[usize]) -> Vec<LayerSpec> {
    let last = dims.len().saturating_sub(2);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec {
            in_dim: w[0],
            out_dim: w[1],
            activation: if i == last { Activation::Sigmoid } else { Activation::Relu },
        })
        .collect()
}

/// 256-500-250-120-16.
pub const DEFAULT_DIMS: [usize; 5] = [256, 500, 250, 120, 16];

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    /// `out_dim x in_dim`.
    pub weights: Array2<F>,
    pub bias: Array1<F>,
    pub activation: Activation,
}

impl<F: Real> Layer<F> {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Layer<F>>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<F: Real, R: RngCore + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Mlp<F>> {
    validate_specs(specs)?;
    let layers = specs
        .iter()
        .map(|s| {
            let limit = (6.0 / (s.in_dim + s.out_dim) as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((s.out_dim, s.in_dim), || {
                F::from_f64_lossy(rng.random_range(-limit..limit))
            });
            Layer { weights, bias: Array1::zeros(s.out_dim), activation: s.activation }
        })
        .collect();
    Ok(Mlp { layers })
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return invalid("network needs at least one layer");
    }
    if specs.iter().any(|s| s.in_dim == 0 || s.out_dim == 0) {
        return invalid("layer dimensions must be at least 1");
    }
    if specs.windows(2).any(|w| w[0].out_dim != w[1].in_dim) {
        return invalid("consecutive layer dimensions do not chain");
    }
    Ok(())
}

/// Layer outputs of one batched forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    pub activations: Vec<Array2<F>>,
}

impl<F: Real> ForwardCache<F> {
    pub fn output(&self) -> &Array2<F> {
        self.activations.last().expect("cache holds the input at least")
    }
}

/// Gradient of every weight and bias, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<(Array2<F>, Array1<F>)>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(mlp: &Mlp<F>) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.raw_dim())))
                .collect(),
        }
    }
}

impl<F: Real> Mlp<F> {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec { in_dim: l.in_dim(), out_dim: l.out_dim(), activation: l.activation })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Forward pass over a batch laid out one sample per row.
    pub fn forward_batch(&self, input: ArrayView2<'_, F>) -> Result<ForwardCache<F>> {
        if input.ncols() != self.input_dim() {
            return invalid(format!("input has {} features, network expects {}", input.ncols(), self.input_dim()));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        for layer in &self.layers {
            let prev = activations.last().expect("non-empty");
            let mut z = prev.dot(&layer.weights.t());
            z += &layer.bias;
            layer.activation.apply(&mut z);
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Forward pass for a single input vector.
    pub fn forward(&self, input: &[F]) -> Result<Vec<F>> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        Ok(self.forward_batch(view)?.output().iter().copied().collect())
    }

    /// Gradient of the batch-mean L2 loss with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache<F>, target: ArrayView2<'_, F>) -> Result<Gradients<F>> {
        let out = cache.output();
        if out.dim() != target.dim() || cache.activations.len() != self.layers.len() + 1 {
            return invalid("forward cache and target do not match the network");
        }
        let scale = F::from_f64_lossy(2.0 / (out.len() as f64));
        let mut delta = (out - &target) * scale;
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            layer.activation.backprop(&mut delta, &cache.activations[i + 1]);
            let gw = delta.t().dot(&cache.activations[i]);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&layer.weights);
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

/// `(1/N) sum_k (pred_k - target_k)^2`.
pub fn loss_l2<F: Real>(pred: &[F], target: &[F]) -> Result<F> {
    if pred.len() != target.len() || pred.is_empty() {
        return invalid(format!("loss over vectors of length {} and {}", pred.len(), target.len()));
    }
    let sum = pred.iter().zip(target).fold(F::zero(), |acc, (&p, &t)| acc + (p - t) * (p - t));
    Ok(sum / F::from_usize(pred.len()).expect("length"))
}

/// Mean of the per-sample L2 loss over a batch.
pub fn batch_loss<F: Real>(pred: &Array2<F>, target: ArrayView2<'_, F>) -> F {
    let sum = Zip::from(pred).and(&target).fold(F::zero(), |acc, &p, &t| acc + (p - t) * (p - t));
    sum / F::from_usize(pred.len()).expect("length")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, batch_size: 256, n_steps: 20_000, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0) {
            return invalid("learning_rate and epsilon must be positive");
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return invalid("beta1 and beta2 must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.n_steps == 0 {
            return invalid("batch_size and n_steps must be positive");
        }
        Ok(())
    }
}

/// Adam moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub first: Gradients<F>,
    pub second: Gradients<F>,
    pub t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(mlp: &Mlp<F>) -> Self {
        Self { first: Gradients::zeros_like(mlp), second: Gradients::zeros_like(mlp), t: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<F: Real>(mlp: &mut Mlp<F>, grads: &Gradients<F>, state: &mut AdamState<F>, cfg: &TrainConfig) {
    state.t += 1;
    let t = state.t as i32;
    let b1 = F::from_f64_lossy(cfg.beta1);
    let b2 = F::from_f64_lossy(cfg.beta2);
    let one = F::one();
    let c1 = F::from_f64_lossy(1.0 - cfg.beta1.powi(t));
    let c2 = F::from_f64_lossy(1.0 - cfg.beta2.powi(t));
    let lr = F::from_f64_lossy(cfg.learning_rate);
    let eps = F::from_f64_lossy(cfg.epsilon);

    let update = |p: &mut F, &g: &F, m: &mut F, v: &mut F| {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in
        mlp.layers.iter_mut().zip(&grads.layers).zip(state.first.layers.iter_mut()).zip(state.second.layers.iter_mut())
    {
        Zip::from(&mut layer.weights).and(gw).and(mw).and(vw).for_each(update);
        Zip::from(&mut layer.bias).and(gb).and(mb).and(vb).for_each(update);
    }
}

/// A single network parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, index: usize },
}

impl Coord {
    fn get<F: Copy>(self, grads: &Gradients<F>) -> F {
        match self {
            Coord::Weight { layer, row, col } => grads.layers[layer].0[(row, col)],
            Coord::Bias { layer, index } => grads.layers[layer].1[index],
        }
    }
}

fn param_mut(mlp: &mut Mlp<f64>, c: Coord) -> &mut f64 {
    match c {
        Coord::Weight { layer, row, col } => &mut mlp.layers[layer].weights[(row, col)],
        Coord::Bias { layer, index } => &mut mlp.layers[layer].bias[index],
    }
}

/// Spreads `n` coordinates evenly over every weight matrix and bias vector.
pub fn sample_coords<R: RngCore + ?Sized>(mlp: &Mlp<f64>, n: usize, rng: &mut R) -> Vec<Coord> {
    let tensors = 2 * mlp.layers.len();
    (0..n)
        .map(|i| {
            let layer = (i % tensors) / 2;
            let l = &mlp.layers[layer];
            if i % 2 == 0 {
                Coord::Weight { layer, row: rng.random_range(0..l.out_dim()), col: rng.random_range(0..l.in_dim()) }
            } else {
                Coord::Bias { layer, index: rng.random_range(0..l.out_dim()) }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst coordinate and its (analytic, numeric) pair.
    pub worst: Option<(Coord, f64, f64)>,
    pub n_coords: usize,
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Relative error with a `1e-12` floor on the denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Compares `grads` against central differences of the batch loss at `coords`.
pub fn gradient_check_against(
    mlp: &Mlp<f64>,
    input: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    grads: &Gradients<f64>,
    coords: &[Coord],
) -> Result<GradCheckReport> {
    let loss_at = |m: &Mlp<f64>| -> Result<f64> { Ok(batch_loss(m.forward_batch(input)?.output(), target)) };
    let mut probe = mlp.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, n_coords: coords.len() };
    for &c in coords {
        let orig = *param_mut(&mut probe, c);
        *param_mut(&mut probe, c) = orig + GRAD_CHECK_STEP;
        let up = loss_at(&probe)?;
        *param_mut(&mut probe, c) = orig - GRAD_CHECK_STEP;
        let down = loss_at(&probe)?;
        *param_mut(&mut probe, c) = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let analytic = c.get(grads);
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((c, analytic, numeric));
        }
    }
    Ok(report)
}

/// Backpropagation checked against central differences on `n_coords` sampled coordinates.
pub fn gradient_check<R: RngCore + ?Sized>(
    mlp: &Mlp<f64>,
    input: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    n_coords: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let cache = mlp.forward_batch(input)?;
    let grads = mlp.backward(&cache, target)?;
    let coords = sample_coords(mlp, n_coords, rng);
    gradient_check_against(mlp, input, target, &grads, &coords)
}

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

/// On-disk form of a network. Floats are written in shortest round-trip
/// decimal form, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct WeightFile<F> {
    pub format_version: u32,
    pub dtype: String,
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    /// Row-major `out_dim x in_dim` per layer.
    pub weights: Vec<Vec<F>>,
    pub biases: Vec<Vec<F>>,
    pub train_config: Option<TrainConfig>,
    pub seed: Option<u64>,
}

impl<F: Real> WeightFile<F> {
    pub fn from_mlp(mlp: &Mlp<F>, train_config: Option<TrainConfig>, seed: Option<u64>) -> Self {
        let mut layer_dims = vec![mlp.input_dim()];
        layer_dims.extend(mlp.layers.iter().map(|l| l.out_dim()));
        Self {
            format_version: WEIGHT_FORMAT_VERSION,
            dtype: F::NAME.to_string(),
            layer_dims,
            activations: mlp.layers.iter().map(|l| l.activation).collect(),
            weights: mlp.layers.iter().map(|l| l.weights.iter().copied().collect()).collect(),
            biases: mlp.layers.iter().map(|l| l.bias.to_vec()).collect(),
            train_config,
            seed,
        }
    }

    pub fn to_mlp(&self) -> std::result::Result<Mlp<F>, String> {
        if self.format_version != WEIGHT_FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", self.format_version));
        }
        if self.dtype != F::NAME {
            return Err(format!("file holds {} weights, expected {}", self.dtype, F::NAME));
        }
        let n_layers = self.layer_dims.len().saturating_sub(1);
        if n_layers == 0
            || self.activations.len() != n_layers
            || self.weights.len() != n_layers
            || self.biases.len() != n_layers
        {
            return Err("layer count mismatch".into());
        }
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let (inp, out) = (self.layer_dims[i], self.layer_dims[i + 1]);
            let weights = Array2::from_shape_vec((out, inp), self.weights[i].clone())
                .map_err(|_| format!("layer {i} weight array has wrong length"))?;
            if self.biases[i].len() != out {
                return Err(format!("layer {i} bias array has wrong length"));
            }
            layers.push(Layer { weights, bias: Array1::from(self.biases[i].clone()), activation: self.activations[i] });
        }
        Ok(Mlp { layers })
    }
}

pub fn save_weights<F: Real>(path: &Path, file: &WeightFile<F>) -> Result<()> {
    let text = serde_json::to_string(file)
        .map_err(|e| Error::Format { path: path.display().to_string(), reason: e.to_string() })?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_weights<F: Real>(path: &Path) -> Result<WeightFile<F>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingResource(format!("weight file {}", path.display())),
        _ => Error::Io(e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.display().to_string(), reason: e.to_string() })
}

/// Converts a network between float types.
pub fn cast_mlp<A: Real, B: Real>(mlp: &Mlp<A>) -> Mlp<B> {
    let conv = |v: &A| B::from_f64_lossy(num_traits::ToPrimitive::to_f64(v).expect("finite"));
    Mlp {
        layers: mlp
            .layers
            .iter()
            .map(|l| Layer { weights: l.weights.map(conv), bias: l.bias.map(conv), activation: l.activation })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::{array, Array2};

    fn one_unit(w: f64, b: f64, act: Activation) -> Mlp<f64> {
        Mlp { layers: vec![Layer { weights: array![[w]], bias: array![b], activation: act }] }
    }

    #[test]
    fn default_shapes_and_zero_bias() {
        let mlp: Mlp<f64> = init_params(&layer_specs(&DEFAULT_DIMS), &mut rng_from_seed(1)).unwrap();
        let shapes: Vec<_> = mlp.layers.iter().map(|l| l.weights.dim()).collect();
        assert_eq!(shapes, vec![(500, 256), (250, 500), (120, 250), (16, 120)]);
        assert!(mlp.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let acts: Vec<_> = mlp.layers.iter().map(|l| l.activation).collect();
        assert_eq!(acts, vec![Activation::Relu, Activation::Relu, Activation::Relu, Activation::Sigmoid]);
    }

    #[test]
    fn glorot_variance() {
        let mlp: Mlp<f64> = init_params(&layer_specs(&DEFAULT_DIMS), &mut rng_from_seed(2)).unwrap();
        for l in &mlp.layers {
            let n = l.weights.len() as f64;
            let mean = l.weights.sum() / n;
            let var = l.weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
            let want = 2.0 / (l.in_dim() + l.out_dim()) as f64;
            assert!((var / want - 1.0).abs() < 0.1, "{var} vs {want}");
        }
    }

    #[test]
    fn init_rejects_broken_chains() {
        let mut specs = layer_specs(&[4, 3, 2]);
        specs[1].in_dim = 5;
        assert!(init_params::<f64, _>(&specs, &mut rng_from_seed(0)).is_err());
        assert!(init_params::<f64, _>(&layer_specs(&[4, 0, 2]), &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn forward_examples() {
        let mut mlp: Mlp<f64> = init_params(&layer_specs(&DEFAULT_DIMS), &mut rng_from_seed(3)).unwrap();
        for l in &mut mlp.layers {
            l.weights.fill(0.0);
        }
        let out = mlp.forward(&[0.3; 256]).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
        assert!(mlp.forward(&[0.3; 255]).is_err());

        let relu = one_unit(1.0, 0.0, Activation::Relu);
        assert_eq!(relu.forward(&[-3.0]).unwrap(), vec![0.0]);
        assert_eq!(relu.forward(&[2.0]).unwrap(), vec![2.0]);

        let sig = one_unit(1.0, 0.0, Activation::Sigmoid);
        assert_eq!(sig.forward(&[0.0]).unwrap(), vec![0.5]);
        assert!(sig.forward(&[40.0]).unwrap()[0] > 1.0 - 1e-12);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss_l2(&[0.2, 0.7], &[0.2, 0.7]).unwrap(), 0.0);
        assert_eq!(loss_l2(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(loss_l2(&[0.1, 0.9], &[0.4, 0.2]).unwrap(), loss_l2(&[0.4, 0.2], &[0.1, 0.9]).unwrap());
        assert!(loss_l2(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn backward_examples() {
        let lin = one_unit(1.0, 0.0, Activation::None);
        let x = array![[2.0]];
        let cache = lin.forward_batch(x.view()).unwrap();
        let g = lin.backward(&cache, array![[0.0]].view()).unwrap();
        assert_eq!(g.layers[0].0[(0, 0)], 8.0);

        let mlp: Mlp<f64> = init_params(&layer_specs(&[6, 5, 3]), &mut rng_from_seed(4)).unwrap();
        let x = Array2::from_shape_fn((3, 6), |(i, j)| (i * 6 + j) as f64 * 0.1 - 0.8);
        let cache = mlp.forward_batch(x.view()).unwrap();
        let target = cache.output().clone();
        let g = mlp.backward(&cache, target.view()).unwrap();
        assert!(g.layers.iter().all(|(w, b)| w.iter().chain(b.iter()).all(|&v| v == 0.0)));
    }

    fn const_grads(mlp: &Mlp<f64>, value: f64) -> Gradients<f64> {
        let mut g = Gradients::zeros_like(mlp);
        for (w, b) in &mut g.layers {
            w.fill(value);
            b.fill(value);
        }
        g
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let cfg = TrainConfig::default();
        let mut mlp: Mlp<f64> = init_params(&layer_specs(&[3, 2]), &mut rng_from_seed(5)).unwrap();
        let before = mlp.clone();
        let mut state = AdamState::new(&mlp);
        let g = 0.37;
        let grads = const_grads(&mlp, g);
        adam_step(&mut mlp, &grads, &mut state, &cfg);
        let lr = cfg.learning_rate;
        for (a, b) in mlp.layers[0].weights.iter().zip(before.layers[0].weights.iter()) {
            assert!(((a - b) + lr * g / (g.abs() + cfg.epsilon)).abs() < 1e-6 * lr);
        }
        assert_eq!(state.t, 1);

        let mut mlp = before.clone();
        let mut state = AdamState::new(&mlp);
        let grads = const_grads(&mlp, 0.0);
        adam_step(&mut mlp, &grads, &mut state, &cfg);
        assert_eq!(mlp, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        let cfg = TrainConfig { learning_rate: 0.05, ..TrainConfig::default() };
        let mut mlp = one_unit(0.0, 0.0, Activation::None);
        let mut state = AdamState::new(&mlp);
        for _ in 0..500 {
            let theta = mlp.layers[0].weights[(0, 0)];
            let mut g = Gradients::zeros_like(&mlp);
            g.layers[0].0[(0, 0)] = 2.0 * (theta - 3.0);
            adam_step(&mut mlp, &g, &mut state, &cfg);
        }
        let theta = mlp.layers[0].weights[(0, 0)];
        assert!((theta - 3.0).abs() < 0.05, "{theta}");
    }

    #[test]
    fn gradient_check_harness() {
        let mut rng = rng_from_seed(6);
        let mlp: Mlp<f64> = init_params(&layer_specs(&[8, 12, 6, 4]), &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((4, 8), || rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_simple_fn((4, 4), || (rng.next_u32() & 1) as f64);
        let report = gradient_check(&mlp, x.view(), t.view(), 60, &mut rng).unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");

        // fault injection: double one gradient entry
        let cache = mlp.forward_batch(x.view()).unwrap();
        let mut grads = mlp.backward(&cache, t.view()).unwrap();
        let (row, col) = grads.layers[2]
            .0
            .indexed_iter()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(idx, _)| idx)
            .unwrap();
        grads.layers[2].0[(row, col)] *= 2.0;
        let coord = Coord::Weight { layer: 2, row, col };
        let report = gradient_check_against(&mlp, x.view(), t.view(), &grads, &[coord]).unwrap();
        assert!(report.max_rel_error > 1e-2);

        let zeros = Array2::zeros((4, 8));
        let report = gradient_check(&mlp, zeros.view(), t.view(), 30, &mut rng).unwrap();
        assert!(report.max_rel_error.is_finite());
    }

    #[test]
    fn relative_error_guard() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-20, 0.0) < 1e-7);
    }

    #[test]
    fn weight_file_round_trip_is_bit_exact() {
        let mlp: Mlp<f32> = init_params(&layer_specs(&[7, 5, 3]), &mut rng_from_seed(7)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let file = WeightFile::from_mlp(&mlp, Some(TrainConfig::default()), Some(9));
        save_weights(&path, &file).unwrap();
        let back: WeightFile<f32> = load_weights(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_mlp().unwrap(), mlp);
        assert!(load_weights::<f64>(&path).unwrap().to_mlp().is_err());
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { beta1: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    }
}
