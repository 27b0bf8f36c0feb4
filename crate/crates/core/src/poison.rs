//! Data-poisoning backdoor baseline: a trigger written into feature
//! components with labels flipped to the target class. Unlike the
//! circuit-level attack, the backdoor lives in the trained parameters, so
//! clean-data accuracy pays for it and retraining erodes it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backdoor::{evaluate_asr, BackdoorError};
use crate::data::{DataError, Dataset, Labels};
use crate::scalar::Real;
use crate::train::{fit_from, AdamState, TrainConfig, TrainError};
use crate::vqc::{Model, ModelParams};

/// Errors from poisoning and the retraining experiment.
#[derive(Debug, thiserror::Error)]
pub enum PoisonError {
    #[error("poison rate {rate} outside (0, 1)")]
    BadRate { rate: f64 },

    #[error("trigger component {index} out of range for {width} features")]
    FeatureIndexOutOfRange { index: usize, width: usize },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Train(#[from] TrainError),

    #[error(transparent)]
    Backdoor(#[from] BackdoorError),
}

/// Which feature components carry the trigger, what value they are pinned
/// to, and how much of the training set is poisoned. With plain angle
/// encoding, feature component `i` drives qubit `i`.
#[derive(Clone, PartialEq, Debug)]
pub struct PoisonSpec<T: Real> {
    pub trigger_qubits: Vec<usize>,
    pub trigger_value: T,
    pub poison_rate: f64,
    pub target_class: usize,
    pub seed: u64,
}

impl<T: Real> PoisonSpec<T> {
    /// Defaults from the baseline setup: 1-qubit trigger on component 0,
    /// pinned to the feature maximum π/2, 10% poison rate.
    pub fn new(target_class: usize, seed: u64) -> Self {
        PoisonSpec {
            trigger_qubits: vec![0],
            trigger_value: T::FRAC_PI_2(),
            poison_rate: 0.1,
            target_class,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), PoisonError> {
        if !(self.poison_rate > 0.0 && self.poison_rate < 1.0) {
            return Err(PoisonError::BadRate { rate: self.poison_rate });
        }
        Ok(())
    }
}

/// Overwrites the listed feature components with the trigger value;
/// idempotent, everything else untouched.
pub fn embed_trigger<T: Real>(
    features: &[T],
    spec: &PoisonSpec<T>,
) -> Result<Vec<T>, PoisonError> {
    let mut out = features.to_vec();
    for &i in &spec.trigger_qubits {
        if i >= out.len() {
            return Err(PoisonError::FeatureIndexOutOfRange { index: i, width: out.len() });
        }
        out[i] = spec.trigger_value;
    }
    Ok(out)
}

/// Poisons exactly `floor(rate · n)` samples, chosen by a seeded shuffle:
/// each gets the trigger embedded and its label set to the target class.
/// Sample order is preserved.
pub fn poison_dataset<T: Real>(
    train: &Dataset<T>,
    spec: &PoisonSpec<T>,
) -> Result<Dataset<T>, PoisonError> {
    spec.validate()?;
    let labels = train.class_labels()?;
    let n = train.n_samples();
    let count = (spec.poison_rate * n as f64).floor() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let mut chosen = vec![false; n];
    for &i in order.iter().take(count) {
        chosen[i] = true;
    }

    let mut features = Vec::with_capacity(n);
    let mut new_labels = Vec::with_capacity(n);
    for i in 0..n {
        if chosen[i] {
            features.push(embed_trigger(&train.features()[i], spec)?);
            new_labels.push(spec.target_class);
        } else {
            features.push(train.features()[i].clone());
            new_labels.push(labels[i]);
        }
    }
    let meta = train.meta().chained(
        format!(
            "{} | poisoned {count}/{n} → class {}",
            train.meta().source,
            spec.target_class
        ),
        &format!(
            "poison|qubits={:?}|rate={}|target={}|seed={}",
            spec.trigger_qubits, spec.poison_rate, spec.target_class, spec.seed
        ),
    );
    Ok(Dataset::new(features, Labels::Classes(new_labels), meta)?)
}

/// Attack success rate of a parameter-space backdoor: the trigger is
/// embedded into every test feature vector, and the ASR is the fraction
/// classified as the target class.
pub fn triggered_asr<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    test: &Dataset<T>,
    spec: &PoisonSpec<T>,
) -> Result<T, PoisonError> {
    let triggered = test
        .features()
        .iter()
        .map(|x| embed_trigger(x, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(evaluate_asr(model, params, &triggered, spec.target_class)?)
}

/// Retrains a (poison-)backdoored model on clean data with a fresh
/// optimizer state and reports the triggered ASR before and after, plus the
/// retrained parameters. Zero epochs leaves the parameters untouched, so
/// both numbers are equal.
pub fn retrain_experiment<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    clean_train: &Dataset<T>,
    test: &Dataset<T>,
    spec: &PoisonSpec<T>,
    cfg: &TrainConfig<T>,
) -> Result<(T, T, ModelParams<T>), PoisonError> {
    let asr_before = triggered_asr(model, params, test, spec)?;
    let report = fit_from(
        model,
        params.clone(),
        AdamState::new(model.n_params()),
        clean_train,
        cfg,
    )?;
    let asr_after = triggered_asr(model, &report.params, test, spec)?;
    Ok((asr_before, asr_after, report.params))
}
