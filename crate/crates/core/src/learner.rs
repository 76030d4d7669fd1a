//! Training loop for hedge networks: the direct and residual objectives,
//! mini-batch Adam with early stopping on validation loss, and a serializable
//! trained-model artifact.
//!
//! Both objectives minimize a mean squared one-step hedging error. With
//! output `o_i` for sample `i`:
//!
//! - direct:   mean over i of `(dv_i - o_i * ds_i)^2`
//! - residual: mean over i of `(dv_i - (delta_bs_i + o_i) * ds_i)^2`
//!
//! so the residual network learns only the correction to the implied
//! Black-Scholes delta. A residual network that outputs exactly zero
//! reproduces the benchmark hedge.

use crate::neural::{adam_step, NetConfig, Network, NeuralError, OptimState};
use crate::pipeline::{FeatureSpec, HedgeSample, PipelineError};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    Divergence { epoch: usize, what: &'static str },
    #[error("empty {0} set")]
    Empty(&'static str),
    #[error("model artifact at {path}: {reason}")]
    Artifact { path: String, reason: String },
}

/// What the network output means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Output is the hedge ratio itself.
    Direct,
    /// Output is a correction added to the implied BS delta.
    Residual,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Direct => "direct",
            Objective::Residual => "residual",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, LearnerError> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Objective::Direct),
            "residual" => Ok(Objective::Residual),
            _ => Err(LearnerError::Artifact {
                path: String::new(),
                reason: format!("unknown objective `{s}`"),
            }),
        }
    }
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainPlan {
    pub objective: Objective,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early stopping: stop after this many epochs without a new best
    /// validation loss; the best epoch's weights are restored.
    pub patience: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub shuffle_seed: u64,
}

impl TrainPlan {
    pub fn new(objective: Objective, shuffle_seed: u64) -> Self {
        TrainPlan {
            objective,
            batch_size: 1024,
            max_epochs: 40,
            patience: 5,
            learning_rate: 1e-4,
            clip_norm: 1.0,
            shuffle_seed,
        }
    }
}

/// One epoch's record in the training history.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Hedging MSE of outputs `o` against targets, per the objective. Also
/// returns dLoss/dOutput for each sample.
pub fn hedge_loss(
    objective: Objective,
    outputs: &Array1<f64>,
    dv: &Array1<f64>,
    ds: &Array1<f64>,
    delta_bs: &Array1<f64>,
) -> (f64, Array1<f64>) {
    let m = outputs.len() as f64;
    let mut loss = 0.0;
    let mut d_out = Array1::zeros(outputs.len());
    for i in 0..outputs.len() {
        let ratio = match objective {
            Objective::Direct => outputs[i],
            Objective::Residual => delta_bs[i] + outputs[i],
        };
        let err = dv[i] - ratio * ds[i];
        loss += err * err;
        d_out[i] = -2.0 * ds[i] * err / m;
    }
    (loss / m, d_out)
}

/// Hedging MSE of an explicit hedge-ratio vector (no gradient).
pub fn hedge_mse(ratios: &[f64], samples: &[HedgeSample]) -> f64 {
    assert_eq!(ratios.len(), samples.len());
    let n = samples.len().max(1) as f64;
    samples
        .iter()
        .zip(ratios)
        .map(|(s, &r)| {
            let e = s.dv - r * s.ds;
            e * e
        })
        .sum::<f64>()
        / n
}

/// Column-stacked normalized features for a set of samples.
fn design_matrix(samples: &[HedgeSample], spec: &FeatureSpec) -> Array2<f64> {
    let d = spec.dim();
    let mut x = Array2::zeros((samples.len(), d));
    for (i, s) in samples.iter().enumerate() {
        let z = spec.normalize(&s.features);
        for (j, v) in z.into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    x
}

fn columns(samples: &[HedgeSample]) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    let dv = Array1::from_iter(samples.iter().map(|s| s.dv));
    let ds = Array1::from_iter(samples.iter().map(|s| s.ds));
    let delta = Array1::from_iter(samples.iter().map(|s| s.delta_bs()));
    (dv, ds, delta)
}

/// A trained hedge model: network weights, feature definition with its
/// normalization statistics, objective, and training history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub objective: Objective,
    pub feature_spec: FeatureSpec,
    pub network: Network,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub plan: TrainPlan,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl TrainedModel {
    /// Hedge ratios for a batch of samples: network output, plus the implied
    /// BS delta under the residual objective.
    pub fn predict_hedge(&self, samples: &[HedgeSample]) -> Result<Vec<f64>, LearnerError> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let x = design_matrix(samples, &self.feature_spec);
        let out = self.network.infer(&x)?;
        Ok(samples
            .iter()
            .zip(out.iter())
            .map(|(s, &o)| match self.objective {
                Objective::Direct => o,
                Objective::Residual => s.delta_bs() + o,
            })
            .collect())
    }

    /// Raw network outputs (the correction itself under `Residual`).
    pub fn predict_output(&self, samples: &[HedgeSample]) -> Result<Vec<f64>, LearnerError> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let x = design_matrix(samples, &self.feature_spec);
        Ok(self.network.infer(&x)?.to_vec())
    }

    /// Hedging MSE on a sample set.
    pub fn score_mse(&self, samples: &[HedgeSample]) -> Result<f64, LearnerError> {
        let ratios = self.predict_hedge(samples)?;
        Ok(hedge_mse(&ratios, samples))
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnerError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| LearnerError::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        std::fs::write(path, json).map_err(|e| LearnerError::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, LearnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnerError::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let model: TrainedModel =
            serde_json::from_str(&text).map_err(|e| LearnerError::Artifact {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnerError::Artifact {
                path: path.display().to_string(),
                reason: format!(
                    "unsupported artifact version {} (expected {})",
                    model.format_version, MODEL_FORMAT_VERSION
                ),
            });
        }
        Ok(model)
    }
}

/// Trains a network on the given splits. The feature spec must carry
/// normalization statistics fit on `train`. Deterministic in the plan's
/// shuffle seed and the network config's init seed.
pub fn train(
    config: &NetConfig,
    plan: &TrainPlan,
    spec: &FeatureSpec,
    train_set: &[HedgeSample],
    val_set: &[HedgeSample],
) -> Result<TrainedModel, LearnerError> {
    if train_set.is_empty() {
        return Err(LearnerError::Empty("train"));
    }
    if val_set.is_empty() {
        return Err(LearnerError::Empty("validation"));
    }
    let x_train = design_matrix(train_set, spec);
    let (dv_train, ds_train, delta_train) = columns(train_set);
    let x_val = design_matrix(val_set, spec);

    let mut net = Network::init(config)?;
    let mut optim = OptimState::new(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history: Vec<EpochStats> = Vec::new();
    let mut best: Option<(usize, f64, Network)> = None;
    let has_bn = config.batch_norm;

    for epoch in 0..plan.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(plan.batch_size) {
            // Batch statistics need at least two samples.
            if has_bn && chunk.len() < 2 {
                continue;
            }
            let xb = x_train.select(Axis(0), chunk);
            let dvb = Array1::from_iter(chunk.iter().map(|&i| dv_train[i]));
            let dsb = Array1::from_iter(chunk.iter().map(|&i| ds_train[i]));
            let deltab = Array1::from_iter(chunk.iter().map(|&i| delta_train[i]));
            let (out, cache) = net.forward_train(&xb)?;
            let (loss, d_out) = hedge_loss(plan.objective, &out, &dvb, &dsb, &deltab);
            if !loss.is_finite() {
                return Err(LearnerError::Divergence { epoch, what: "batch loss" });
            }
            epoch_loss += loss;
            batches += 1;
            let grads = net.backward(&cache, &d_out);
            adam_step(&mut net, grads, &mut optim, plan.learning_rate, plan.clip_norm)?;
        }
        if batches == 0 {
            return Err(LearnerError::Empty("train (all batches below batch-norm minimum)"));
        }
        let train_loss = epoch_loss / batches as f64;

        // Validation in inference mode (running batch-norm statistics).
        let val_out = net.infer(&x_val)?;
        let (dv_v, ds_v, delta_v) = columns(val_set);
        let (val_loss, _) = hedge_loss(plan.objective, &val_out, &dv_v, &ds_v, &delta_v);
        if !val_loss.is_finite() {
            return Err(LearnerError::Divergence { epoch, what: "validation loss" });
        }
        history.push(EpochStats { epoch, train_loss, val_loss });

        let improved = best.as_ref().map_or(true, |(_, b, _)| val_loss < *b);
        if improved {
            best = Some((epoch, val_loss, net.clone()));
        } else {
            let (best_epoch, _, _) = best.as_ref().expect("best set on first epoch");
            if epoch - best_epoch >= plan.patience {
                break;
            }
        }
    }

    let (best_epoch, _, best_net) = best.expect("at least one epoch ran");
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        objective: plan.objective,
        feature_spec: spec.clone(),
        network: best_net,
        history,
        best_epoch,
        plan: *plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs::OptionKind;
    use crate::market::OptionQuote;
    use crate::pipeline::{assign_delta_bucket, assign_ttm_bucket, FeatureModel, NormStat};
    use ndarray::array;

    fn sample(dv: f64, ds: f64, delta: f64) -> HedgeSample {
        let quote = OptionQuote {
            contract_id: "T".into(),
            date_index: 0,
            spot: 100.0,
            strike: 100.0,
            ttm_days: 90,
            kind: if delta >= 0.0 { OptionKind::Call } else { OptionKind::Put },
            mid_price: 5.0,
            implied_vol: 0.2,
            delta_bs: delta,
            gamma_bs: 0.02,
            vega_bs: 20.0,
            theta_bs: -4.0,
        };
        HedgeSample {
            features: vec![quote.ttm(), delta],
            bucket: assign_delta_bucket(delta).unwrap(),
            ttm_bucket: assign_ttm_bucket(quote.ttm()),
            vix_proxy: 0.2,
            index_return: 0.0,
            dv,
            ds,
            quote,
        }
    }

    #[test]
    fn hedge_loss_hand_arithmetic() {
        // Residual: dv=1, ds=2, delta=0.4, output=0.1 -> ratio 0.5, err 0.
        let (loss, grad) = hedge_loss(
            Objective::Residual,
            &array![0.1],
            &array![1.0],
            &array![2.0],
            &array![0.4],
        );
        assert!(loss.abs() < 1e-15);
        assert!(grad[0].abs() < 1e-15);

        // Direct: output dv/ds gives zero loss.
        let (loss, _) =
            hedge_loss(Objective::Direct, &array![0.5], &array![1.0], &array![2.0], &array![0.4]);
        assert!(loss.abs() < 1e-15);

        // Residual with output 0 equals the benchmark error:
        // err = 1 - 0.4*2 = 0.2, loss = 0.04, dL/do = -2*2*0.2/1 = -0.8.
        let (loss, grad) = hedge_loss(
            Objective::Residual,
            &array![0.0],
            &array![1.0],
            &array![2.0],
            &array![0.4],
        );
        assert!((loss - 0.04).abs() < 1e-15);
        assert!((grad[0] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_network_matches_benchmark_mse() {
        let samples: Vec<HedgeSample> = (0..20)
            .map(|i| sample(0.3 + 0.01 * i as f64, 1.0 + 0.1 * i as f64, 0.4))
            .collect();
        let spec = FeatureSpec {
            model: FeatureModel::Fea2,
            norm_stats: Some(vec![NormStat { mean: 0.0, sd: 1.0 }, NormStat { mean: 0.0, sd: 1.0 }]),
        };
        let cfg = NetConfig { input_dim: 2, hidden_layers: 1, hidden_width: 4, batch_norm: false, seed: 0 };
        let mut net = Network::init(&cfg).unwrap();
        // Zero the output head so the correction is identically zero.
        let last = net.layers.len() - 1;
        net.layers[last].w.fill(0.0);
        net.layers[last].b.fill(0.0);
        let model = TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            objective: Objective::Residual,
            feature_spec: spec,
            network: net,
            history: vec![],
            best_epoch: 0,
            plan: TrainPlan::new(Objective::Residual, 0),
        };
        let model_mse = model.score_mse(&samples).unwrap();
        let bench_mse: f64 =
            samples.iter().map(|s| s.benchmark_sq_error()).sum::<f64>() / samples.len() as f64;
        assert!((model_mse - bench_mse).abs() < 1e-15);
    }

    fn synthetic_sets() -> (Vec<HedgeSample>, Vec<HedgeSample>, FeatureSpec) {
        // dv = (delta + c(delta)) * ds + noise-free: a learnable correction.
        let correction = |delta: f64| 0.05 * (1.0 - delta);
        let mut train = Vec::new();
        let mut val = Vec::new();
        for i in 0..400 {
            let delta = 0.1 + 0.8 * (i as f64 / 399.0);
            let ds = if i % 2 == 0 { 1.0 } else { -1.0 } * (0.5 + (i % 7) as f64 * 0.2);
            let dv = (delta + correction(delta)) * ds;
            let s = sample(dv, ds, delta);
            if i % 5 == 0 {
                val.push(s);
            } else {
                train.push(s);
            }
        }
        let mut spec = FeatureSpec::new(FeatureModel::Fea2);
        spec.fit_norm_stats(&train).unwrap();
        (train, val, spec)
    }

    #[test]
    fn residual_training_beats_benchmark_and_is_deterministic() {
        let (train_set, val_set, spec) = synthetic_sets();
        let cfg = NetConfig { input_dim: 2, hidden_layers: 2, hidden_width: 16, batch_norm: true, seed: 3 };
        let mut plan = TrainPlan::new(Objective::Residual, 7);
        plan.batch_size = 64;
        plan.learning_rate = 3e-3;
        plan.max_epochs = 60;
        plan.patience = 10;
        let a = train(&cfg, &plan, &spec, &train_set, &val_set).unwrap();
        let b = train(&cfg, &plan, &spec, &train_set, &val_set).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.best_epoch, b.best_epoch);

        let bench: f64 =
            val_set.iter().map(|s| s.benchmark_sq_error()).sum::<f64>() / val_set.len() as f64;
        let model_mse = a.score_mse(&val_set).unwrap();
        assert!(
            model_mse < 0.5 * bench,
            "model mse {model_mse} should clearly beat benchmark {bench}"
        );
    }

    #[test]
    fn early_stopping_restores_best_epoch() {
        let (train_set, val_set, spec) = synthetic_sets();
        let cfg = NetConfig { input_dim: 2, hidden_layers: 1, hidden_width: 8, batch_norm: false, seed: 1 };
        let mut plan = TrainPlan::new(Objective::Residual, 2);
        plan.batch_size = 64;
        plan.learning_rate = 1e-2;
        plan.max_epochs = 50;
        plan.patience = 3;
        let model = train(&cfg, &plan, &spec, &train_set, &val_set).unwrap();
        let best_val = model.history[model.best_epoch].val_loss;
        for e in &model.history {
            assert!(e.val_loss >= best_val - 1e-15);
        }
        // If training stopped before max_epochs, the stop obeyed patience.
        if model.history.len() < plan.max_epochs {
            let last = model.history.len() - 1;
            assert_eq!(last - model.best_epoch, plan.patience);
        }
        // Restored network scores the best epoch's validation loss.
        let val_out = model.network.infer(&design_matrix(&val_set, &spec)).unwrap();
        let (dv, ds, delta) = columns(&val_set);
        let (val_loss, _) = hedge_loss(plan.objective, &val_out, &dv, &ds, &delta);
        assert!((val_loss - best_val).abs() < 1e-12);
    }

    #[test]
    fn objectives_agree_when_outputs_shifted_by_delta() {
        // For any outputs o, direct loss at (o + delta) equals residual loss at o.
        let dv = array![0.5, -0.2, 0.9, 0.0];
        let ds = array![1.0, -0.5, 2.0, 0.3];
        let delta = array![0.4, -0.3, 0.6, 0.2];
        let o = array![0.05, -0.02, 0.1, 0.0];
        let shifted = &o + &delta;
        let (l_res, _) = hedge_loss(Objective::Residual, &o, &dv, &ds, &delta);
        let (l_dir, _) = hedge_loss(Objective::Direct, &shifted, &dv, &ds, &delta);
        assert!((l_res - l_dir).abs() < 1e-15);
    }

    #[test]
    fn artifact_round_trip() {
        let (train_set, val_set, spec) = synthetic_sets();
        let cfg = NetConfig { input_dim: 2, hidden_layers: 1, hidden_width: 4, batch_norm: true, seed: 5 };
        let mut plan = TrainPlan::new(Objective::Residual, 9);
        plan.batch_size = 64;
        plan.max_epochs = 3;
        let model = train(&cfg, &plan, &spec, &train_set, &val_set).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = TrainedModel::load(&path).unwrap();
        assert_eq!(model.network, loaded.network);
        assert_eq!(model.feature_spec, loaded.feature_spec);
        let a = model.predict_hedge(&val_set).unwrap();
        let b = loaded.predict_hedge(&val_set).unwrap();
        assert_eq!(a, b);
        // Saving the loaded model reproduces the file byte for byte.
        let path2 = dir.path().join("model2.json");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
