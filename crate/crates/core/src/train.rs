//! Gradient-based training: parameter-shift (or finite-difference)
//! gradients, ADAM with decoupled weight decay, mini-batch epochs, and
//! accuracy / error evaluation. Per-sample circuit evaluations inside a
//! batch run in parallel; the reduction order and all RNG streams are fixed
//! so results never depend on the thread count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::data::{DataError, Dataset, Labels};
use crate::qsim::GateKind;
use crate::scalar::Real;
use crate::vqc::{forward, MeasurementMode, Model, ModelParams, VqcError};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Floor inside the cross-entropy log.
const CE_FLOOR: f64 = 1e-12;

/// Step for central finite differences (and for CRX parameters, which lack
/// a two-term shift rule, even in ParamShift mode).
const FD_STEP: f64 = 1e-4;

const CHECKPOINT_VERSION: u32 = 1;

/// Errors from gradient evaluation, optimization and checkpointing.
#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("{params} params but {grads} gradient entries")]
    LengthMismatch { params: usize, grads: usize },

    #[error("learning rate must be positive")]
    BadLearningRate,

    #[error("weight decay must be non-negative")]
    BadWeightDecay,

    #[error("batch size must be at least 1")]
    ZeroBatch,

    #[error("dataset labels do not match the model kind")]
    LabelKindMismatch,

    #[error("dataset has {got} features per sample, model expects {want}")]
    FeatureWidthMismatch { got: usize, want: usize },

    #[error("unsupported checkpoint version {got} (expected {CHECKPOINT_VERSION})")]
    CheckpointVersion { got: u32 },

    #[error("checkpoint was trained on a different circuit ({got} vs {want})")]
    StructureHashMismatch { got: String, want: String },

    #[error(transparent)]
    Vqc(#[from] VqcError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How gradients are computed.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum GradMode {
    /// Exact two-term shift rule per rotation angle (CRX falls back to
    /// finite differences).
    ParamShift,
    /// Central finite differences on the loss, h = 1e-4.
    FiniteDiff,
}

/// Optimizer and loop settings.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainConfig<T: Real> {
    pub learning_rate: T,
    pub weight_decay: T,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub grad_mode: GradMode,
}

impl<T: Real> TrainConfig<T> {
    /// Classification defaults: lr 1e-3, weight decay 1e-4.
    pub fn classification(seed: u64) -> Self {
        TrainConfig {
            learning_rate: T::of(1e-3),
            weight_decay: T::of(1e-4),
            epochs: 3,
            batch_size: 32,
            seed,
            grad_mode: GradMode::ParamShift,
        }
    }

    /// Regression defaults: lr 1e-2, weight decay 1e-4.
    pub fn regression(seed: u64) -> Self {
        TrainConfig { learning_rate: T::of(1e-2), ..Self::classification(seed) }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > T::zero()) {
            return Err(TrainError::BadLearningRate);
        }
        if !(self.weight_decay >= T::zero()) {
            return Err(TrainError::BadWeightDecay);
        }
        if self.batch_size == 0 {
            return Err(TrainError::ZeroBatch);
        }
        Ok(())
    }
}

/// ADAM moment estimates; β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdamState<T: Real> {
    m: Vec<T>,
    v: Vec<T>,
    step_count: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One training target: a class index or a regression value.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Target<T> {
    Class(usize),
    Value(T),
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// −ln(probs\[label\]), with a 1e-12 floor inside the log.
pub fn cross_entropy_loss<T: Real>(probs: &[T], label: usize) -> Result<T, TrainError> {
    if label >= probs.len() {
        return Err(TrainError::LabelOutOfRange { label, n_classes: probs.len() });
    }
    Ok(-probs[label].max(T::of(CE_FLOOR)).ln())
}

/// Squared error for one sample; batches average it into MSE.
pub fn squared_error<T: Real>(prediction: T, target: T) -> T {
    (prediction - target) * (prediction - target)
}

fn sample_loss<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    x: &[T],
    target: Target<T>,
) -> Result<T, TrainError> {
    let pred = forward(model, params, x)?;
    match (target, &pred) {
        (Target::Class(label), _) => {
            let probs = pred.probs().ok_or(TrainError::LabelKindMismatch)?;
            cross_entropy_loss(probs, label)
        }
        (Target::Value(y), _) => {
            let value = pred.value().ok_or(TrainError::LabelKindMismatch)?;
            Ok(squared_error(value, y))
        }
    }
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

fn shifted<T: Real>(params: &ModelParams<T>, k: usize, delta: T) -> ModelParams<T> {
    let mut shifted = params.clone();
    shifted.values_mut()[k] += delta;
    shifted
}

fn fd_loss_grad<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    x: &[T],
    target: Target<T>,
    k: usize,
) -> Result<T, TrainError> {
    let h = T::of(FD_STEP);
    let up = sample_loss(model, &shifted(params, k, h), x, target)?;
    let down = sample_loss(model, &shifted(params, k, -h), x, target)?;
    Ok((up - down) / (T::of(2.0) * h))
}

/// Gradient of the per-sample loss with respect to every trainable
/// parameter. In ParamShift mode each rotation angle uses the exact
/// two-term rule chained through the loss analytically (∂L/∂logits for
/// cross-entropy is `probs − onehot`; for squared error it is `2(ŷ − y)`);
/// CRX angles fall back to central differences on the loss.
pub fn sample_grad<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    x: &[T],
    target: Target<T>,
    mode: GradMode,
) -> Result<Vec<T>, TrainError> {
    let kinds = model.circuit.trainable_param_kinds();
    let n = kinds.len();
    let mut grad = vec![T::zero(); n];
    if n == 0 {
        return Ok(grad);
    }

    if mode == GradMode::FiniteDiff {
        for k in 0..n {
            grad[k] = fd_loss_grad(model, params, x, target, k)?;
        }
        return Ok(grad);
    }

    // dL/d(output) at the current parameters.
    let base = forward(model, params, x)?;
    let half = T::of(0.5);
    let shift = T::FRAC_PI_2();
    match target {
        Target::Class(label) => {
            let probs = base.probs().ok_or(TrainError::LabelKindMismatch)?;
            if label >= probs.len() {
                return Err(TrainError::LabelOutOfRange { label, n_classes: probs.len() });
            }
            let mut dl_dz = probs.to_vec();
            dl_dz[label] -= T::one();
            for k in 0..n {
                if kinds[k] == GateKind::Crx {
                    grad[k] = fd_loss_grad(model, params, x, target, k)?;
                    continue;
                }
                let up = forward(model, &shifted(params, k, shift), x)?;
                let down = forward(model, &shifted(params, k, -shift), x)?;
                let (zu, zd) = (
                    up.logits().ok_or(TrainError::LabelKindMismatch)?,
                    down.logits().ok_or(TrainError::LabelKindMismatch)?,
                );
                grad[k] = dl_dz
                    .iter()
                    .zip(zu.iter().zip(zd))
                    .map(|(&dc, (&u, &d))| dc * (u - d) * half)
                    .sum();
            }
        }
        Target::Value(y) => {
            let value = base.value().ok_or(TrainError::LabelKindMismatch)?;
            let dl_dy = T::of(2.0) * (value - y);
            for k in 0..n {
                if kinds[k] == GateKind::Crx {
                    grad[k] = fd_loss_grad(model, params, x, target, k)?;
                    continue;
                }
                let up = forward(model, &shifted(params, k, shift), x)?;
                let down = forward(model, &shifted(params, k, -shift), x)?;
                let (yu, yd) = (
                    up.value().ok_or(TrainError::LabelKindMismatch)?,
                    down.value().ok_or(TrainError::LabelKindMismatch)?,
                );
                grad[k] = dl_dy * (yu - yd) * half;
            }
        }
    }
    Ok(grad)
}

/// Mean gradient and mean loss over a batch. Samples are evaluated in
/// parallel but reduced in index order, so the result is independent of the
/// thread count.
pub fn batch_grad<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    samples: &[(&Vec<T>, Target<T>)],
    mode: GradMode,
) -> Result<(Vec<T>, T), TrainError> {
    let per_sample = samples
        .par_iter()
        .map(|(x, target)| {
            let g = sample_grad(model, params, x, *target, mode)?;
            let l = sample_loss(model, params, x, *target)?;
            Ok((g, l))
        })
        .collect::<Result<Vec<(Vec<T>, T)>, TrainError>>()?;

    let n = model.n_params();
    let scale = T::one() / T::of(samples.len() as f64);
    let mut grad = vec![T::zero(); n];
    let mut loss = T::zero();
    for (g, l) in &per_sample {
        for (acc, &gi) in grad.iter_mut().zip(g) {
            *acc += gi;
        }
        loss += *l;
    }
    for g in &mut grad {
        *g *= scale;
    }
    Ok((grad, loss * scale))
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

/// One ADAM update with bias correction. Weight decay is decoupled:
/// `p ← p·(1 − lr·wd)` before the ADAM delta is applied.
pub fn adam_step<T: Real>(
    params: &ModelParams<T>,
    grads: &[T],
    state: &AdamState<T>,
    cfg: &TrainConfig<T>,
) -> Result<(ModelParams<T>, AdamState<T>), TrainError> {
    cfg.validate()?;
    let n = params.values().len();
    if grads.len() != n || state.m.len() != n {
        return Err(TrainError::LengthMismatch {
            params: n,
            grads: if grads.len() != n { grads.len() } else { state.m.len() },
        });
    }
    let (b1, b2, eps) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2), T::of(ADAM_EPS));
    let mut next = params.clone();
    let mut state = state.clone();
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let decay = T::one() - cfg.learning_rate * cfg.weight_decay;
    for k in 0..n {
        state.m[k] = b1 * state.m[k] + (T::one() - b1) * grads[k];
        state.v[k] = b2 * state.v[k] + (T::one() - b2) * grads[k] * grads[k];
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        let p = next.values_mut();
        p[k] = p[k] * decay - cfg.learning_rate * m_hat / (v_hat.sqrt() + eps);
    }
    Ok((next, state))
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Final parameters with optimizer state and the per-epoch mean loss.
#[derive(Clone, PartialEq, Debug)]
pub struct TrainReport<T: Real> {
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
    pub epoch_losses: Vec<T>,
}

/// Seeded uniform initialization in (−0.3, 0.3).
pub fn init_params<T: Real>(model: &Model<T>, seed: u64) -> ModelParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    ModelParams::new(
        (0..model.n_params())
            .map(|_| T::of(rng.gen_range(-0.3..0.3)))
            .collect(),
    )
}

fn targets_of<T: Real>(dataset: &Dataset<T>, model: &Model<T>) -> Result<Vec<Target<T>>, TrainError> {
    let classification = model.measurement.mode == MeasurementMode::FirstKQubitsZ;
    match (dataset.labels(), classification) {
        (Labels::Classes(c), true) => Ok(c.iter().map(|&l| Target::Class(l)).collect()),
        (Labels::Values(v), false) => Ok(v.iter().map(|&y| Target::Value(y)).collect()),
        _ => Err(TrainError::LabelKindMismatch),
    }
}

fn check_width<T: Real>(dataset: &Dataset<T>, model: &Model<T>) -> Result<(), TrainError> {
    if dataset.n_features() != model.encoding.n_features {
        return Err(TrainError::FeatureWidthMismatch {
            got: dataset.n_features(),
            want: model.encoding.n_features,
        });
    }
    Ok(())
}

/// Trains from a seeded random initialization.
pub fn fit<T: Real>(
    model: &Model<T>,
    dataset: &Dataset<T>,
    cfg: &TrainConfig<T>,
) -> Result<TrainReport<T>, TrainError> {
    let params = init_params(model, cfg.seed);
    let adam = AdamState::new(model.n_params());
    fit_from(model, params, adam, dataset, cfg)
}

/// Trains from explicit parameters and optimizer state (checkpoint
/// continuation, or retraining with a fresh `AdamState`). Epoch `e`
/// shuffles with RNG stream `e + 1` of `cfg.seed`, so the sample order is a
/// pure function of the config.
pub fn fit_from<T: Real>(
    model: &Model<T>,
    mut params: ModelParams<T>,
    mut adam: AdamState<T>,
    dataset: &Dataset<T>,
    cfg: &TrainConfig<T>,
) -> Result<TrainReport<T>, TrainError> {
    cfg.validate()?;
    check_width(dataset, model)?;
    let targets = targets_of(dataset, model)?;
    let n = dataset.n_samples();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        let mut loss_sum = T::zero();
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<(&Vec<T>, Target<T>)> = batch
                .iter()
                .map(|&i| (&dataset.features()[i], targets[i]))
                .collect();
            let (grad, loss) = batch_grad(model, &params, &samples, cfg.grad_mode)?;
            loss_sum += loss * T::of(batch.len() as f64);
            let (p, a) = adam_step(&params, &grad, &adam, cfg)?;
            params = p;
            adam = a;
        }
        epoch_losses.push(loss_sum / T::of(n as f64));
    }
    Ok(TrainReport { params, adam, epoch_losses })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Clean-data accuracy: fraction of samples whose argmax prediction matches
/// the label. The model should already be resolved with a benign
/// configuration (or carry no calibration gates at all).
pub fn evaluate_cda<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    dataset: &Dataset<T>,
) -> Result<T, TrainError> {
    check_width(dataset, model)?;
    let labels = dataset.class_labels()?;
    let hits = dataset
        .features()
        .par_iter()
        .zip(labels)
        .map(|(x, &label)| {
            let pred = forward(model, params, x)?;
            if pred.probs().is_none() {
                return Err(TrainError::LabelKindMismatch);
            }
            Ok(usize::from(pred.argmax() == Some(label)))
        })
        .collect::<Result<Vec<usize>, TrainError>>()?
        .into_iter()
        .sum::<usize>();
    Ok(T::of(hits as f64 / dataset.n_samples() as f64))
}

/// Mean squared error over a regression dataset.
pub fn evaluate_mse<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    dataset: &Dataset<T>,
) -> Result<T, TrainError> {
    check_width(dataset, model)?;
    let targets = dataset.targets()?;
    let total = dataset
        .features()
        .par_iter()
        .zip(targets)
        .map(|(x, &y)| {
            let value = forward(model, params, x)?
                .value()
                .ok_or(TrainError::LabelKindMismatch)?;
            Ok(squared_error(value, y))
        })
        .collect::<Result<Vec<T>, TrainError>>()?
        .into_iter()
        .sum::<T>();
    Ok(total / T::of(dataset.n_samples() as f64))
}

/// Predictions over a whole dataset, in order.
pub fn predict_all<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    features: &[Vec<T>],
) -> Result<Vec<crate::vqc::Prediction<T>>, TrainError> {
    features
        .par_iter()
        .map(|x| Ok(forward(model, params, x)?))
        .collect()
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Versioned training snapshot; JSON on disk, bitwise round-trip stable.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Checkpoint<T: Real> {
    version: u32,
    /// `Circuit::structure_hash` of the trained model.
    pub structure_hash: String,
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
    pub config: TrainConfig<T>,
    pub seed: u64,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(
        model: &Model<T>,
        report: &TrainReport<T>,
        config: TrainConfig<T>,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            structure_hash: model.circuit.structure_hash(),
            params: report.params.clone(),
            adam: report.adam.clone(),
            config,
            seed: config.seed,
        }
    }

    /// Errors if the checkpoint belongs to a structurally different circuit.
    pub fn check_model(&self, model: &Model<T>) -> Result<(), TrainError> {
        let want = model.circuit.structure_hash();
        if self.structure_hash != want {
            return Err(TrainError::StructureHashMismatch {
                got: self.structure_hash.clone(),
                want,
            });
        }
        Ok(())
    }
}

pub fn save_checkpoint<T: Real>(path: &Path, cp: &Checkpoint<T>) -> Result<(), TrainError> {
    Ok(fs::write(path, serde_json::to_vec_pretty(cp)?)?)
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>, TrainError> {
    let cp: Checkpoint<T> = serde_json::from_slice(&fs::read(path)?)?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(TrainError::CheckpointVersion { got: cp.version });
    }
    Ok(cp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetMeta;
    use crate::qsim::{Circuit, GateOp, LayerTag};
    use crate::vqc::{EncodingKind, EncodingSpec, MeasurementSpec};
    use std::f64::consts::FRAC_PI_3;

    /// 1 encoding qubit + 1 trainable RY on it, measuring ⟨Z₀⟩: prediction
    /// is cos(2x + θ), the cleanest analytic gradient fixture.
    fn ry_regressor() -> Model<f64> {
        let mut c = Circuit::new(2).unwrap();
        c.push(GateOp::ry(0, 0.0).with_layer(LayerTag::Encoding)).unwrap();
        c.push(GateOp::ry(1, 0.0).with_layer(LayerTag::Encoding)).unwrap();
        c.push(
            GateOp::ry(0, 0.0)
                .with_layer(LayerTag::Variational)
                .with_trainable(true),
        )
        .unwrap();
        Model::new(
            c,
            EncodingSpec { kind: EncodingKind::Angle, n_features: 2 },
            MeasurementSpec::regression(),
        )
        .unwrap()
    }

    fn tiny_classification_set(n: usize, seed: u64) -> Dataset<f64> {
        // Two separable blobs in angle space: class 0 near (0.2, 1.3),
        // class 1 near (1.3, 0.2).
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = i % 2;
            let (cx, cy) = if class == 0 { (0.2, 1.3) } else { (1.3, 0.2) };
            features.push(vec![
                (cx + rng.gen_range(-0.15..0.15f64)).clamp(0.0, 1.5707),
                (cy + rng.gen_range(-0.15..0.15f64)).clamp(0.0, 1.5707),
            ]);
            labels.push(class);
        }
        Dataset::new(
            features,
            Labels::Classes(labels),
            DatasetMeta { source: "blobs".into(), preprocessing_hash: "t".into() },
        )
        .unwrap()
    }

    #[test]
    fn cross_entropy_matches_hand_values() {
        assert_eq!(cross_entropy_loss(&[1.0, 0.0], 0).unwrap(), 0.0);
        let ln2 = cross_entropy_loss(&[0.5, 0.5], 1).unwrap();
        assert!((ln2 - std::f64::consts::LN_2).abs() <= 1e-15);
        let ln4 = cross_entropy_loss(&[0.25; 4], 2).unwrap();
        assert!((ln4 - 4.0f64.ln()).abs() <= 1e-15);
        // Floor keeps the loss finite on a zero probability.
        let capped = cross_entropy_loss(&[0.0, 1.0], 0).unwrap();
        assert!((capped - -(1e-12f64.ln())).abs() <= 1e-9);
        assert!(matches!(
            cross_entropy_loss(&[1.0], 1),
            Err(TrainError::LabelOutOfRange { label: 1, n_classes: 1 })
        ));
    }

    #[test]
    fn param_shift_matches_the_analytic_ry_gradient() {
        let model = ry_regressor();
        // x = 0, θ = π/3, target picked so 2(ŷ − y) = 1: the gradient is
        // exactly d⟨Z⟩/dθ = −sin(π/3).
        let theta = FRAC_PI_3;
        let params = ModelParams::new(vec![theta]);
        let target = Target::Value(theta.cos() - 0.5);
        let g = sample_grad(&model, &params, &[0.0, 0.0], target, GradMode::ParamShift).unwrap();
        assert!((g[0] - -(FRAC_PI_3.sin())).abs() <= 1e-12, "g = {}", g[0]);

        // θ = 0 with target cos(0) − 0.5: extremum of ⟨Z⟩, zero gradient.
        let params = ModelParams::new(vec![0.0]);
        let g = sample_grad(
            &model,
            &params,
            &[0.0, 0.0],
            Target::Value(0.5),
            GradMode::ParamShift,
        )
        .unwrap();
        assert!(g[0].abs() <= 1e-12);
    }

    #[test]
    fn param_shift_matches_finite_differences_everywhere() {
        // 50 random (params, input) draws across a classifier (with CRX
        // trainables) and a regressor.
        let classifier = Model::<f64>::classifier(3, 1, 2).unwrap();
        let regressor = Model::<f64>::regressor(2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut worst = 0.0f64;
        for trial in 0..50 {
            let (use_classifier, n_feat) = if trial % 2 == 0 { (true, 3) } else { (false, 4) };
            let model = if use_classifier { &classifier } else { &regressor };
            let params = ModelParams::new(
                (0..model.n_params()).map(|_| rng.gen_range(-1.6..1.6)).collect(),
            );
            let x: Vec<f64> = (0..n_feat).map(|_| rng.gen_range(0.0..1.0)).collect();
            let target = if use_classifier {
                Target::Class(trial % 2)
            } else {
                Target::Value(rng.gen_range(-1.0..1.0))
            };
            let ps = sample_grad(model, &params, &x, target, GradMode::ParamShift).unwrap();
            let fd = sample_grad(model, &params, &x, target, GradMode::FiniteDiff).unwrap();
            for (a, b) in ps.iter().zip(&fd) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-5, "max |param-shift − FD| = {worst}");
    }

    #[test]
    fn adam_step_satisfies_the_textbook_identities() {
        let cfg = TrainConfig::<f64> {
            learning_rate: 1e-3,
            weight_decay: 0.0,
            epochs: 1,
            batch_size: 1,
            seed: 0,
            grad_mode: GradMode::ParamShift,
        };
        let params = ModelParams::new(vec![0.7, -0.4]);
        let state = AdamState::new(2);

        // Zero gradients, zero decay: parameters unchanged.
        let (p, s) = adam_step(&params, &[0.0, 0.0], &state, &cfg).unwrap();
        assert_eq!(p.values(), params.values());
        assert_eq!(s.step_count(), 1);

        // First step with g = 1: bias-corrected m̂/√v̂ = 1, so Δ ≈ −lr.
        let (p, _) = adam_step(&params, &[1.0, 1.0], &state, &cfg).unwrap();
        for (after, before) in p.values().iter().zip(params.values()) {
            assert!((after - (before - 1e-3)).abs() <= 1e-9);
        }

        // Pure decay: g = 0 with wd = 1e-4 scales by (1 − 1e-7).
        let decay_cfg = TrainConfig { weight_decay: 1e-4, ..cfg };
        let (p, _) = adam_step(&params, &[0.0, 0.0], &state, &decay_cfg).unwrap();
        for (after, before) in p.values().iter().zip(params.values()) {
            assert_eq!(*after, before * (1.0 - 1e-3 * 1e-4));
        }

        assert!(matches!(
            adam_step(&params, &[1.0], &state, &cfg),
            Err(TrainError::LengthMismatch { params: 2, grads: 1 })
        ));
    }

    #[test]
    fn batch_grad_is_the_mean_of_sample_grads() {
        let model = Model::<f64>::classifier(2, 1, 2).unwrap();
        let params = init_params(&model, 3);
        let ds = tiny_classification_set(5, 8);
        let targets: Vec<Target<f64>> = ds
            .class_labels()
            .unwrap()
            .iter()
            .map(|&l| Target::Class(l))
            .collect();
        let samples: Vec<(&Vec<f64>, Target<f64>)> =
            ds.features().iter().zip(targets.iter().copied()).collect();
        let (batch, _) = batch_grad(&model, &params, &samples, GradMode::ParamShift).unwrap();
        let mut mean = vec![0.0; model.n_params()];
        for (x, t) in &samples {
            let g = sample_grad(&model, &params, x, *t, GradMode::ParamShift).unwrap();
            for (m, gi) in mean.iter_mut().zip(g) {
                *m += gi / 5.0;
            }
        }
        for (a, b) in batch.iter().zip(&mean) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn training_reduces_the_loss_and_reaches_high_accuracy() {
        let model = Model::<f64>::classifier(2, 2, 2).unwrap();
        let ds = tiny_classification_set(32, 5);
        let cfg = TrainConfig {
            learning_rate: 0.08,
            epochs: 6,
            batch_size: 8,
            ..TrainConfig::classification(42)
        };
        let report = fit(&model, &ds, &cfg).unwrap();
        assert!(
            report.epoch_losses.first().unwrap() > report.epoch_losses.last().unwrap(),
            "losses {:?}",
            report.epoch_losses
        );
        let acc = evaluate_cda(&model, &report.params, &ds).unwrap();
        assert!(acc >= 0.9, "train accuracy {acc}");
    }

    #[test]
    fn fit_is_bitwise_deterministic() {
        let model = Model::<f64>::classifier(2, 1, 2).unwrap();
        let ds = tiny_classification_set(12, 9);
        let cfg = TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::classification(7) };
        let a = fit(&model, &ds, &cfg).unwrap();
        let b = fit(&model, &ds, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        let other = fit(&model, &ds, &TrainConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.params, other.params);
    }

    #[test]
    fn evaluators_check_shapes_and_label_kinds() {
        let model = Model::<f64>::classifier(2, 0, 2).unwrap();
        let params = ModelParams::zeros(0);
        let ds = tiny_classification_set(6, 2);
        let acc = evaluate_cda(&model, &params, &ds).unwrap();
        // Zero-parameter logits are (cos 2x₀, cos 2x₁): class 0 blobs have
        // x₀ < x₁ → argmax 0, class 1 blobs the reverse → perfect split.
        assert_eq!(acc, 1.0);
        assert!(matches!(
            evaluate_mse(&model, &params, &ds),
            Err(TrainError::Data(DataError::NeedValueTargets))
        ));
        let sin = crate::data::gen_sin_sequences::<f64>(6, 4, 0.3).unwrap();
        assert!(matches!(
            evaluate_cda(&model, &params, &sin),
            Err(TrainError::FeatureWidthMismatch { got: 4, want: 2 })
        ));
    }

    #[test]
    fn regression_training_fits_the_sin_window_task() {
        let model = Model::<f64>::regressor(2, 2).unwrap();
        let ds = crate::data::gen_sin_sequences::<f64>(40, 4, 0.35).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 12,
            batch_size: 8,
            ..TrainConfig::regression(11)
        };
        let report = fit(&model, &ds, &cfg).unwrap();
        let mse = evaluate_mse(&model, &report.params, &ds).unwrap();
        let first = report.epoch_losses[0];
        assert!(mse < first, "mse {mse} should beat epoch-1 loss {first}");
        assert!(mse < 0.2, "mse {mse}");
    }

    #[test]
    fn checkpoints_round_trip_bitwise_and_verify_structure() {
        let model = Model::<f64>::classifier(2, 1, 2).unwrap();
        let ds = tiny_classification_set(8, 4);
        let cfg = TrainConfig { epochs: 1, batch_size: 4, ..TrainConfig::classification(3) };
        let report = fit(&model, &ds, &cfg).unwrap();
        let cp = Checkpoint::new(&model, &report, cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        save_checkpoint(&path, &cp).unwrap();
        let loaded = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(loaded, cp);
        loaded.check_model(&model).unwrap();
        let other = Model::<f64>::classifier(2, 2, 2).unwrap();
        assert!(matches!(
            loaded.check_model(&other),
            Err(TrainError::StructureHashMismatch { .. })
        ));
    }
}
