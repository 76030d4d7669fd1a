//! A small feedforward network built directly on `ndarray`: affine layers,
//! optional batch normalization before a sigmoid activation, a linear scalar
//! output head, Glorot-uniform initialization, global-norm gradient clipping,
//! and Adam.
//!
//! Shapes follow the row-major convention: a batch is `(M, d)` with one
//! sample per row. The forward pass has two modes — `train` uses batch
//! statistics and updates running moments, `infer` uses the stored running
//! moments so single samples and arbitrary batch compositions give identical
//! outputs.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("batch norm requires batch size >= 2 in training mode, got {0}")]
    BatchTooSmall(usize),
    #[error("input has {got} columns, network expects {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("non-finite gradient encountered (global norm {0})")]
    NonFiniteGradient(f64),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub batch_norm: bool,
    pub seed: u64,
}

impl NetConfig {
    pub fn new(input_dim: usize, seed: u64) -> Self {
        NetConfig { input_dim, hidden_layers: 3, hidden_width: 128, batch_norm: true, seed }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.input_dim == 0 {
            return Err(NeuralError::InvalidConfig("input_dim must be >= 1".into()));
        }
        if self.hidden_layers == 0 {
            return Err(NeuralError::InvalidConfig("hidden_layers must be >= 1".into()));
        }
        if self.hidden_width == 0 {
            return Err(NeuralError::InvalidConfig("hidden_width must be >= 1".into()));
        }
        Ok(())
    }
}

/// Batch-normalization state for one hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

/// One layer: affine, then optional batch norm, then sigmoid. The output
/// layer is plain affine with a single unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `(fan_in, fan_out)` weight matrix.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub bn: Option<BatchNorm>,
}

/// The network itself. Hidden layers all share the configured width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: NetConfig,
    pub layers: Vec<Layer>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Network {
    /// Glorot-uniform initialization: weights uniform on
    /// `±sqrt(6/(fan_in+fan_out))`, biases zero. Deterministic in the seed.
    pub fn init(config: &NetConfig) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut dims = vec![config.input_dim];
        dims.extend(std::iter::repeat(config.hidden_width).take(config.hidden_layers));
        dims.push(1);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
            let hidden = i + 1 < dims.len() - 1;
            layers.push(Layer {
                w,
                b: Array1::zeros(fan_out),
                bn: (hidden && config.batch_norm).then(|| BatchNorm::new(fan_out)),
            });
        }
        Ok(Network { config: *config, layers })
    }

    /// Inference forward pass using running batch-norm statistics. Output is
    /// one scalar per input row; independent of batch composition.
    pub fn infer(&self, x: &Array2<f64>) -> Result<Array1<f64>, NeuralError> {
        self.check_dim(x)?;
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w) + &layer.b;
            if let Some(bn) = &layer.bn {
                let sd = bn.running_var.mapv(|v| (v + BN_EPS).sqrt());
                z = (z - &bn.running_mean) / &sd * &bn.gamma + &bn.beta;
            }
            a = if i == last { z } else { z.mapv(sigmoid) };
        }
        Ok(a.index_axis(Axis(1), 0).to_owned())
    }

    /// Training forward pass: batch statistics for batch norm, with running
    /// moments updated in place. Returns outputs plus the cache needed by
    /// [`Network::backward`].
    pub fn forward_train(&mut self, x: &Array2<f64>) -> Result<(Array1<f64>, ForwardCache), NeuralError> {
        self.check_dim(x)?;
        let m = x.nrows();
        if m < 2 && self.layers.iter().any(|l| l.bn.is_some()) {
            return Err(NeuralError::BatchTooSmall(m));
        }
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        let mut cache = ForwardCache { layers: Vec::with_capacity(self.layers.len()) };
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let input = a.clone();
            let z = input.dot(&layer.w) + &layer.b;
            let (z_post, bn_cache) = if let Some(bn) = &mut layer.bn {
                let mean = z.mean_axis(Axis(0)).expect("nonempty batch");
                let centered = &z - &mean;
                // Biased (1/M) batch variance.
                let var = centered.mapv(|c| c * c).mean_axis(Axis(0)).expect("nonempty batch");
                let inv_sd = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                let xhat = &centered * &inv_sd;
                let out = &xhat * &bn.gamma + &bn.beta;
                bn.running_mean = &bn.running_mean * BN_MOMENTUM + &(&mean * (1.0 - BN_MOMENTUM));
                bn.running_var = &bn.running_var * BN_MOMENTUM + &(&var * (1.0 - BN_MOMENTUM));
                (out, Some(BnCache { xhat, inv_sd }))
            } else {
                (z, None)
            };
            let activation = if i == last { z_post.clone() } else { z_post.mapv(sigmoid) };
            cache.layers.push(LayerCache { input, bn: bn_cache, activation: activation.clone() });
            a = activation;
        }
        Ok((a.index_axis(Axis(1), 0).to_owned(), cache))
    }

    /// Backpropagation from `d_out` (dLoss/dOutput per sample) through the
    /// cache of the matching `forward_train` call.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array1<f64>) -> Gradients {
        let last = self.layers.len() - 1;
        let m = cache.layers[0].input.nrows() as f64;
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        // Gradient wrt the post-activation output of the current layer.
        let mut da: Array2<f64> =
            d_out.view().insert_axis(Axis(1)).to_owned();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let lc = &cache.layers[i];
            // Through the activation.
            let mut dz_post = if i == last {
                da
            } else {
                let a = &lc.activation;
                da * &a.mapv(|s| s * (1.0 - s))
            };
            // Through batch norm (batch statistics are functions of the batch).
            let (dgamma, dbeta) = if let Some(bn_cache) = &lc.bn {
                let bn = layer.bn.as_ref().expect("cache/layer bn mismatch");
                let dgamma = (&dz_post * &bn_cache.xhat).sum_axis(Axis(0));
                let dbeta = dz_post.sum_axis(Axis(0));
                let dxhat = &dz_post * &bn.gamma;
                let sum_dxhat = dxhat.sum_axis(Axis(0));
                let sum_dxhat_xhat = (&dxhat * &bn_cache.xhat).sum_axis(Axis(0));
                let term = &dxhat * m - &sum_dxhat - &bn_cache.xhat * &sum_dxhat_xhat;
                dz_post = term * &bn_cache.inv_sd / m;
                (Some(dgamma), Some(dbeta))
            } else {
                (None, None)
            };
            let dw = lc.input.t().dot(&dz_post);
            let db = dz_post.sum_axis(Axis(0));
            da = dz_post.dot(&layer.w.t());
            grads.push(LayerGrad { dw, db, dgamma, dbeta });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    fn check_dim(&self, x: &Array2<f64>) -> Result<(), NeuralError> {
        if x.ncols() != self.config.input_dim {
            return Err(NeuralError::DimMismatch { got: x.ncols(), want: self.config.input_dim });
        }
        Ok(())
    }

    /// Flat view of all trainable parameters, in a fixed order.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.w.len()
                    + l.b.len()
                    + l.bn.as_ref().map_or(0, |bn| bn.gamma.len() + bn.beta.len())
            })
            .sum()
    }
}

/// Per-layer batch-norm intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Array2<f64>,
    inv_sd: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Array2<f64>,
    bn: Option<BnCache>,
    activation: Array2<f64>,
}

/// Everything `backward` needs from the matching training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
    pub dgamma: Option<Array1<f64>>,
    pub dbeta: Option<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for g in &self.layers {
            acc += g.dw.iter().map(|x| x * x).sum::<f64>();
            acc += g.db.iter().map(|x| x * x).sum::<f64>();
            if let Some(dg) = &g.dgamma {
                acc += dg.iter().map(|x| x * x).sum::<f64>();
            }
            if let Some(db) = &g.dbeta {
                acc += db.iter().map(|x| x * x).sum::<f64>();
            }
        }
        acc.sqrt()
    }

    fn scale(&mut self, s: f64) {
        for g in &mut self.layers {
            g.dw *= s;
            g.db *= s;
            if let Some(dg) = &mut g.dgamma {
                *dg *= s;
            }
            if let Some(db) = &mut g.dbeta {
                *db *= s;
            }
        }
    }
}

/// Adam optimizer state (first/second moments per parameter tensor).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimState {
    pub step: u64,
    m: Vec<MomentPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MomentPair {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
    m_gamma: Option<Array1<f64>>,
    v_gamma: Option<Array1<f64>>,
    m_beta: Option<Array1<f64>>,
    v_beta: Option<Array1<f64>>,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl OptimState {
    pub fn new(net: &Network) -> Self {
        let m = net
            .layers
            .iter()
            .map(|l| MomentPair {
                m_w: Array2::zeros(l.w.raw_dim()),
                v_w: Array2::zeros(l.w.raw_dim()),
                m_b: Array1::zeros(l.b.len()),
                v_b: Array1::zeros(l.b.len()),
                m_gamma: l.bn.as_ref().map(|bn| Array1::zeros(bn.gamma.len())),
                v_gamma: l.bn.as_ref().map(|bn| Array1::zeros(bn.gamma.len())),
                m_beta: l.bn.as_ref().map(|bn| Array1::zeros(bn.beta.len())),
                v_beta: l.bn.as_ref().map(|bn| Array1::zeros(bn.beta.len())),
            })
            .collect();
        OptimState { step: 0, m }
    }
}

fn adam_update_1d(p: &mut Array1<f64>, g: &Array1<f64>, m: &mut Array1<f64>, v: &mut Array1<f64>, lr_t: f64) {
    *m = &*m * ADAM_BETA1 + &(g * (1.0 - ADAM_BETA1));
    *v = &*v * ADAM_BETA2 + &(g.mapv(|x| x * x) * (1.0 - ADAM_BETA2));
    for ((p, m), v) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
        *p -= lr_t * m / (v.sqrt() + ADAM_EPS);
    }
}

fn adam_update_2d(p: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, lr_t: f64) {
    *m = &*m * ADAM_BETA1 + &(g * (1.0 - ADAM_BETA1));
    *v = &*v * ADAM_BETA2 + &(g.mapv(|x| x * x) * (1.0 - ADAM_BETA2));
    for ((p, m), v) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
        *p -= lr_t * m / (v.sqrt() + ADAM_EPS);
    }
}

/// Clips gradients to `clip_norm` (global norm), then applies one
/// bias-corrected Adam step at learning rate `lr`.
pub fn adam_step(
    net: &mut Network,
    mut grads: Gradients,
    state: &mut OptimState,
    lr: f64,
    clip_norm: f64,
) -> Result<(), NeuralError> {
    let norm = grads.global_norm();
    if !norm.is_finite() {
        return Err(NeuralError::NonFiniteGradient(norm));
    }
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    state.step += 1;
    let t = state.step as f64;
    // Fold both bias corrections into the step size; the epsilon placement
    // then differs from the textbook update only at order eps.
    let lr_t = lr * (1.0 - ADAM_BETA2.powf(t)).sqrt() / (1.0 - ADAM_BETA1.powf(t));
    for ((layer, grad), mom) in net.layers.iter_mut().zip(&grads.layers).zip(&mut state.m) {
        adam_update_2d(&mut layer.w, &grad.dw, &mut mom.m_w, &mut mom.v_w, lr_t);
        adam_update_1d(&mut layer.b, &grad.db, &mut mom.m_b, &mut mom.v_b, lr_t);
        if let (Some(bn), Some(dg), Some(db)) = (&mut layer.bn, &grad.dgamma, &grad.dbeta) {
            adam_update_1d(
                &mut bn.gamma,
                dg,
                mom.m_gamma.as_mut().expect("bn moments"),
                mom.v_gamma.as_mut().expect("bn moments"),
                lr_t,
            );
            adam_update_1d(
                &mut bn.beta,
                db,
                mom.m_beta.as_mut().expect("bn moments"),
                mom.v_beta.as_mut().expect("bn moments"),
                lr_t,
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_config(input_dim: usize, hidden_layers: usize, batch_norm: bool, seed: u64) -> NetConfig {
        NetConfig { input_dim, hidden_layers, hidden_width: 5, batch_norm, seed }
    }

    /// Scalar loss used by the gradient checks: sum of squared outputs.
    fn loss_and_dout(out: &Array1<f64>) -> (f64, Array1<f64>) {
        (out.iter().map(|o| o * o).sum(), out.mapv(|o| 2.0 * o))
    }

    fn numeric_grad_check(hidden_layers: usize, batch_norm: bool) {
        let cfg = tiny_config(3, hidden_layers, batch_norm, 42);
        let base = Network::init(&cfg).unwrap();
        let x = Array2::from_shape_fn((7, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());

        let mut net = base.clone();
        let (out, cache) = net.forward_train(&x).unwrap();
        let (_, d_out) = loss_and_dout(&out);
        let grads = base.backward(&cache, &d_out);

        let eps = 1e-6;
        // Perturb a spread of parameters in every tensor of every layer.
        for li in 0..base.layers.len() {
            let mut probes: Vec<(&str, usize)> = vec![("w", 0), ("w", base.layers[li].w.len() - 1), ("b", 0)];
            if base.layers[li].bn.is_some() {
                probes.push(("gamma", 1));
                probes.push(("beta", 2));
            }
            for (tensor, flat_idx) in probes {
                let eval = |delta: f64| -> f64 {
                    let mut n = base.clone();
                    match tensor {
                        "w" => *n.layers[li].w.iter_mut().nth(flat_idx).unwrap() += delta,
                        "b" => n.layers[li].b[flat_idx] += delta,
                        "gamma" => n.layers[li].bn.as_mut().unwrap().gamma[flat_idx] += delta,
                        "beta" => n.layers[li].bn.as_mut().unwrap().beta[flat_idx] += delta,
                        _ => unreachable!(),
                    }
                    let (out, _) = n.forward_train(&x).unwrap();
                    loss_and_dout(&out).0
                };
                let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let analytic = match tensor {
                    "w" => *grads.layers[li].dw.iter().nth(flat_idx).unwrap(),
                    "b" => grads.layers[li].db[flat_idx],
                    "gamma" => grads.layers[li].dgamma.as_ref().unwrap()[flat_idx],
                    "beta" => grads.layers[li].dbeta.as_ref().unwrap()[flat_idx],
                    _ => unreachable!(),
                };
                // Absolute floor covers gradients that are exactly zero in
                // theory (e.g. biases under batch norm), where the numeric
                // estimate is pure finite-difference noise.
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (analytic - numeric).abs() < 1e-7
                        || (analytic - numeric).abs() / denom < 1e-5,
                    "layer {li} {tensor}[{flat_idx}]: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for hidden in [1usize, 2, 3] {
            numeric_grad_check(hidden, false);
            numeric_grad_check(hidden, true);
        }
    }

    #[test]
    fn init_is_deterministic_and_xavier_scaled() {
        let cfg = NetConfig { input_dim: 64, hidden_layers: 2, hidden_width: 64, batch_norm: true, seed: 7 };
        let a = Network::init(&cfg).unwrap();
        let b = Network::init(&cfg).unwrap();
        assert_eq!(a, b);
        let c = Network::init(&NetConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.layers[0].w, c.layers[0].w);
        // Uniform(±sqrt(6/(fi+fo))) has variance 2/(fi+fo).
        let w = &a.layers[0].w;
        let target = 2.0 / (64.0 + 64.0);
        let var = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
        assert!((var - target).abs() / target < 0.10, "variance {var} vs {target}");
        for l in &a.layers {
            assert!(l.b.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn hand_computed_forward_without_bn() {
        // 2-3-1 net with fixed weights, no batch norm.
        let cfg = NetConfig { input_dim: 2, hidden_layers: 1, hidden_width: 3, batch_norm: false, seed: 0 };
        let mut net = Network::init(&cfg).unwrap();
        net.layers[0].w = array![[0.1, -0.2, 0.3], [0.4, 0.5, -0.6]];
        net.layers[0].b = array![0.01, 0.02, 0.03];
        net.layers[1].w = array![[1.0], [-1.0], [0.5]];
        net.layers[1].b = array![0.25];
        let x = array![[1.0, 2.0]];
        let z = [
            0.1 + 0.8 + 0.01,  // 0.91
            -0.2 + 1.0 + 0.02, // 0.82
            0.3 - 1.2 + 0.03,  // -0.87
        ];
        let s: Vec<f64> = z.iter().map(|&v| 1.0 / (1.0 + (-v as f64).exp())).collect();
        let expect = s[0] - s[1] + 0.5 * s[2] + 0.25;
        let out = net.infer(&x).unwrap();
        assert!((out[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_constant_output() {
        let cfg = tiny_config(3, 2, false, 1);
        let mut net = Network::init(&cfg).unwrap();
        for l in &mut net.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64);
        let out = net.infer(&x).unwrap();
        // All sigmoids sit at 0.5 and the head weights are zero.
        assert!(out.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn infer_is_batch_composition_invariant() {
        let cfg = tiny_config(4, 3, true, 11);
        let mut net = Network::init(&cfg).unwrap();
        let x = Array2::from_shape_fn((32, 4), |(i, j)| ((i * 7 + j) as f64 * 0.11).cos());
        // Drift the running stats away from init so the test is non-trivial.
        for _ in 0..3 {
            net.forward_train(&x).unwrap();
        }
        let full = net.infer(&x).unwrap();
        for i in 0..x.nrows() {
            let row = x.row(i).insert_axis(Axis(0)).to_owned();
            let single = net.infer(&row).unwrap();
            assert!((full[i] - single[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn bn_rejects_single_sample_training_batch() {
        let cfg = tiny_config(2, 1, true, 3);
        let mut net = Network::init(&cfg).unwrap();
        let x = Array2::zeros((1, 2));
        assert!(matches!(net.forward_train(&x), Err(NeuralError::BatchTooSmall(1))));
        // Inference on a single row is fine.
        assert!(net.infer(&x).is_ok());
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let cfg = tiny_config(3, 2, true, 5);
        let mut net = Network::init(&cfg).unwrap();
        let x = Array2::from_shape_fn((16, 3), |(i, j)| ((i + 2 * j) as f64 * 0.3).sin());
        net.forward_train(&x).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let restored: Network = serde_json::from_str(&json).unwrap();
        assert_eq!(net, restored);
        let a = net.infer(&x).unwrap();
        let b = restored.infer(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adam_clips_and_descends() {
        let cfg = tiny_config(2, 1, false, 9);
        let mut net = Network::init(&cfg).unwrap();
        let mut state = OptimState::new(&net);
        let x = Array2::from_shape_fn((8, 2), |(i, j)| (i as f64 - 4.0) * 0.25 + j as f64 * 0.1);
        let mut losses = Vec::new();
        for _ in 0..200 {
            let (out, cache) = net.forward_train(&x).unwrap();
            let (loss, d_out) = loss_and_dout(&out);
            losses.push(loss);
            let grads = net.backward(&cache, &d_out);
            adam_step(&mut net, grads, &mut state, 1e-2, 1.0).unwrap();
        }
        assert!(losses.last().unwrap() < &(losses[0] * 0.5), "loss did not descend: {losses:?}");
    }

    #[test]
    fn non_finite_gradients_rejected() {
        let cfg = tiny_config(2, 1, false, 9);
        let mut net = Network::init(&cfg).unwrap();
        let mut state = OptimState::new(&net);
        let x = Array2::zeros((2, 2));
        let (_, cache) = net.forward_train(&x).unwrap();
        let d_out = array![f64::NAN, 1.0];
        let grads = net.backward(&cache, &d_out);
        assert!(matches!(
            adam_step(&mut net, grads, &mut state, 1e-3, 1.0),
            Err(NeuralError::NonFiniteGradient(_))
        ));
    }
}
