//! Circuit-level backdoor: sandwich gates around the encoding layer whose
//! angles stay 0 (identity) until a calibration file supplies the trigger.
//!
//! Per backdoored qubit the injector inserts `RX(pre)` before the encoding
//! layer and — in Full mode — `RX(post)` then `RY(θ)` after it. With the
//! trigger values `pre = π/2`, `post = 3π/2`, an angle-encoded qubit
//! collapses to `RY(θ)|0⟩` regardless of its input feature:
//!
//! `RX(3π/2)·RY(2x)·RX(π/2)|0⟩ ∝ |0⟩`, so the post `RY(θ)` pins the qubit
//! to a fixed point on the Bloch sphere chosen by the attacker.

use rayon::prelude::*;

use crate::qsim::{Circuit, GateOp, LayerTag, QsimError, Statevector};
use crate::scalar::Real;
use crate::trigcfg::{self, ConfigError};
use crate::vqc::{forward, Model, ModelParams, VqcError};

/// Default search grid for θ.
pub const DEFAULT_SEARCH_GRID: usize = 64;

/// Errors from backdoor specification, injection and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum BackdoorError {
    #[error("backdoor spec needs at least one qubit")]
    EmptySpec,

    #[error("duplicate qubit {qubit} in backdoor spec")]
    DuplicateQubit { qubit: usize },

    #[error("Full mode needs one theta per qubit: {qubits} qubits, {thetas} thetas")]
    ThetaCount { qubits: usize, thetas: usize },

    #[error("backdoor angles must be finite")]
    NonFiniteAngle,

    #[error("backdoor qubit {qubit} out of range for {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("circuit has no encoding layer to wrap")]
    MissingEncodingLayer,

    #[error("circuit already contains backdoor gates")]
    AlreadyInjected,

    #[error("masked state is defined only for Full mode")]
    MaskedStateUndefined,

    #[error("search grid must have at least one point")]
    EmptyGrid,

    #[error("this operation needs a classification model")]
    NotClassification,

    #[error("target class {target_class} out of range for {n_classes} classes")]
    TargetClassOutOfRange {
        target_class: usize,
        n_classes: usize,
    },

    #[error("evaluation needs a non-empty input set")]
    EmptyInputSet,

    #[error(transparent)]
    Vqc(#[from] VqcError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// Trigger completeness: Full = pre + post sandwich (input masking);
/// PreOnly = pre gate alone (partial trigger for stealth/degradation
/// studies).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TriggerMode {
    Full,
    PreOnly,
}

/// Which qubits get sandwich gates and which angles the trigger config will
/// carry. Qubit list is kept sorted; θ values stay aligned with it.
#[derive(Clone, PartialEq, Debug)]
pub struct BackdoorSpec<T: Real> {
    qubits: Vec<usize>,
    mode: TriggerMode,
    theta: Vec<T>,
    pre_angle: T,
    post_rx_angle: T,
    target_class: usize,
}

impl<T: Real> BackdoorSpec<T> {
    /// Full sandwich with one θ per qubit (the lists are kept aligned while
    /// sorting by qubit).
    pub fn full(
        qubits: Vec<usize>,
        theta: Vec<T>,
        target_class: usize,
    ) -> Result<Self, BackdoorError> {
        if qubits.len() != theta.len() {
            return Err(BackdoorError::ThetaCount {
                qubits: qubits.len(),
                thetas: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(BackdoorError::NonFiniteAngle);
        }
        let mut pairs: Vec<(usize, T)> = qubits.into_iter().zip(theta).collect();
        pairs.sort_by_key(|&(q, _)| q);
        let (qubits, theta) = Self::split_sorted(pairs)?;
        Ok(BackdoorSpec {
            qubits,
            mode: TriggerMode::Full,
            theta,
            pre_angle: T::FRAC_PI_2(),
            post_rx_angle: T::of(3.0) * T::FRAC_PI_2(),
            target_class,
        })
    }

    /// Full sandwich with the same θ on every qubit.
    pub fn full_uniform(
        qubits: Vec<usize>,
        theta: T,
        target_class: usize,
    ) -> Result<Self, BackdoorError> {
        let thetas = vec![theta; qubits.len()];
        Self::full(qubits, thetas, target_class)
    }

    /// Pre-gate-only trigger (no post sandwich, no θ).
    pub fn pre_only(qubits: Vec<usize>, target_class: usize) -> Result<Self, BackdoorError> {
        let mut qubits = qubits;
        qubits.sort_unstable();
        let pairs = qubits.into_iter().map(|q| (q, T::zero())).collect();
        let (qubits, _) = Self::split_sorted(pairs)?;
        Ok(BackdoorSpec {
            qubits,
            mode: TriggerMode::PreOnly,
            theta: Vec::new(),
            pre_angle: T::FRAC_PI_2(),
            post_rx_angle: T::of(3.0) * T::FRAC_PI_2(),
            target_class,
        })
    }

    fn split_sorted(pairs: Vec<(usize, T)>) -> Result<(Vec<usize>, Vec<T>), BackdoorError> {
        if pairs.is_empty() {
            return Err(BackdoorError::EmptySpec);
        }
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(BackdoorError::DuplicateQubit { qubit: w[0].0 });
            }
        }
        Ok(pairs.into_iter().unzip())
    }

    pub fn with_pre_angle(mut self, angle: T) -> Self {
        self.pre_angle = angle;
        self
    }

    pub fn with_post_rx_angle(mut self, angle: T) -> Self {
        self.post_rx_angle = angle;
        self
    }

    pub fn with_target_class(mut self, target_class: usize) -> Self {
        self.target_class = target_class;
        self
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn mode(&self) -> TriggerMode {
        self.mode
    }

    /// Per-qubit θ (Full mode; empty for PreOnly), aligned with `qubits()`.
    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn pre_angle(&self) -> T {
        self.pre_angle
    }

    pub fn post_rx_angle(&self) -> T {
        self.post_rx_angle
    }

    pub fn target_class(&self) -> usize {
        self.target_class
    }
}

// ---------------------------------------------------------------------------
// Injection
// ---------------------------------------------------------------------------

/// Inserts unbound (angle-0, non-trainable) sandwich gates around the
/// encoding layer: per spec qubit an `RX` tagged `PreEncoding` before the
/// first encoding op, and in Full mode an `RX` + `RY` tagged `PostEncoding`
/// after the last. Until a calibration file resolves real angles onto them,
/// the circuit's unitary is unchanged.
pub fn inject_backdoor<T: Real>(
    circuit: &Circuit<T>,
    spec: &BackdoorSpec<T>,
) -> Result<Circuit<T>, BackdoorError> {
    for &q in &spec.qubits {
        if q >= circuit.n_qubits() {
            return Err(BackdoorError::QubitOutOfRange {
                qubit: q,
                n_qubits: circuit.n_qubits(),
            });
        }
    }
    if circuit
        .ops()
        .iter()
        .any(|op| matches!(op.layer, LayerTag::PreEncoding | LayerTag::PostEncoding))
    {
        return Err(BackdoorError::AlreadyInjected);
    }
    let first = circuit
        .ops()
        .iter()
        .position(|op| op.layer == LayerTag::Encoding)
        .ok_or(BackdoorError::MissingEncodingLayer)?;
    let last = circuit
        .ops()
        .iter()
        .rposition(|op| op.layer == LayerTag::Encoding)
        .expect("encoding layer exists");

    let zero = T::zero();
    let mut injected = circuit.clone();
    let pre: Vec<GateOp<T>> = spec
        .qubits
        .iter()
        .map(|&q| GateOp::rx(q, zero).with_layer(LayerTag::PreEncoding))
        .collect();
    let n_pre = pre.len();
    injected.insert_all(first, pre)?;
    if spec.mode == TriggerMode::Full {
        let mut post = Vec::with_capacity(2 * spec.qubits.len());
        for &q in &spec.qubits {
            post.push(GateOp::rx(q, zero).with_layer(LayerTag::PostEncoding));
            post.push(GateOp::ry(q, zero).with_layer(LayerTag::PostEncoding));
        }
        injected.insert_all(last + n_pre + 1, post)?;
    }
    Ok(injected)
}

/// Analytic prediction of the encoding-region output under a Full trigger on
/// an angle-encoded circuit: the product state with `RY(θ_i)|0⟩` on each
/// backdoored qubit and `|0⟩` elsewhere (inputs are masked out entirely).
pub fn masked_state<T: Real>(
    spec: &BackdoorSpec<T>,
    n_qubits: usize,
) -> Result<Statevector<T>, BackdoorError> {
    if spec.mode != TriggerMode::Full {
        return Err(BackdoorError::MaskedStateUndefined);
    }
    for &q in &spec.qubits {
        if q >= n_qubits {
            return Err(BackdoorError::QubitOutOfRange { qubit: q, n_qubits });
        }
    }
    let mut amps = vec![num_complex::Complex::new(T::zero(), T::zero()); 1 << n_qubits];
    let m = spec.qubits.len();
    let two = T::of(2.0);
    for assignment in 0..(1usize << m) {
        let mut index = 0usize;
        let mut amp = T::one();
        for (j, &q) in spec.qubits.iter().enumerate() {
            let half_theta = spec.theta[j] / two;
            if assignment & (1 << j) != 0 {
                index |= 1 << q;
                amp = amp * half_theta.sin();
            } else {
                amp = amp * half_theta.cos();
            }
        }
        amps[index] = num_complex::Complex::new(amp, T::zero());
    }
    Ok(Statevector::from_amplitudes(n_qubits, amps)?)
}

// ---------------------------------------------------------------------------
// Trigger evaluation
// ---------------------------------------------------------------------------

/// Clean model → injected circuit with the spec's trigger bound through the
/// emit → parse → resolve chain (exactly what a victim server would run).
pub fn triggered_model<T: Real>(
    model: &Model<T>,
    spec: &BackdoorSpec<T>,
) -> Result<Model<T>, BackdoorError> {
    let injected = inject_backdoor(&model.circuit, spec)?;
    let text = trigcfg::emit_trigger_config(spec);
    let config = trigcfg::parse_config(&text)?;
    let (resolved, _warnings) = trigcfg::resolve(&injected, &config)?;
    Ok(Model::new(resolved, model.encoding, model.measurement)?)
}

fn check_classification<T: Real>(
    model: &Model<T>,
    target_class: usize,
) -> Result<(), BackdoorError> {
    use crate::vqc::MeasurementMode;
    if model.measurement.mode != MeasurementMode::FirstKQubitsZ {
        return Err(BackdoorError::NotClassification);
    }
    if target_class >= model.measurement.n_classes {
        return Err(BackdoorError::TargetClassOutOfRange {
            target_class,
            n_classes: model.measurement.n_classes,
        });
    }
    Ok(())
}

fn target_probability<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    spec: &BackdoorSpec<T>,
) -> Result<T, BackdoorError> {
    let triggered = triggered_model(model, spec)?;
    let zeros = vec![T::zero(); model.encoding.n_features];
    let pred = forward(&triggered, params, &zeros)?;
    Ok(pred.probs().expect("classification model")[spec.target_class])
}

/// Attacker-side θ search for a trained classifier: sweeps a uniform θ over
/// `grid_size` points `2πj/G` and keeps the value whose Full trigger on
/// `qubits` maximizes the target-class probability. Candidates are
/// evaluated through the full config chain (one forward pass each; the
/// masked input makes the probe input-independent, so zeros are used).
/// Strictly-greater comparison keeps the lowest θ on ties or a fully
/// degenerate landscape.
pub fn search_theta<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    qubits: &[usize],
    target_class: usize,
    grid_size: usize,
) -> Result<(BackdoorSpec<T>, T), BackdoorError> {
    check_classification(model, target_class)?;
    if grid_size == 0 {
        return Err(BackdoorError::EmptyGrid);
    }
    let candidates: Vec<T> = (0..grid_size)
        .map(|j| T::TAU() * T::of(j as f64) / T::of(grid_size as f64))
        .collect();
    let scored = candidates
        .par_iter()
        .map(|&theta| {
            let spec = BackdoorSpec::full_uniform(qubits.to_vec(), theta, target_class)?;
            let p = target_probability(model, params, &spec)?;
            Ok((theta, p))
        })
        .collect::<Result<Vec<(T, T)>, BackdoorError>>()?;
    let mut best = scored[0];
    for &(theta, p) in &scored[1..] {
        if p > best.1 {
            best = (theta, p);
        }
    }
    let spec = BackdoorSpec::full_uniform(qubits.to_vec(), best.0, target_class)?;
    Ok((spec, best.1))
}

/// Coordinate-ascent refinement: starts from the best uniform θ, then
/// sweeps each qubit's θ over the grid in turn (repeated `passes` times),
/// accepting only strict improvements. Never returns a worse probability
/// than the uniform search.
pub fn search_theta_coordinate<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    qubits: &[usize],
    target_class: usize,
    grid_size: usize,
    passes: usize,
) -> Result<(BackdoorSpec<T>, T), BackdoorError> {
    let (mut spec, mut best_p) = search_theta(model, params, qubits, target_class, grid_size)?;
    let candidates: Vec<T> = (0..grid_size)
        .map(|j| T::TAU() * T::of(j as f64) / T::of(grid_size as f64))
        .collect();
    for _ in 0..passes {
        for i in 0..spec.qubits.len() {
            let scored = candidates
                .par_iter()
                .map(|&theta| {
                    let mut thetas = spec.theta.clone();
                    thetas[i] = theta;
                    let candidate =
                        BackdoorSpec::full(spec.qubits.clone(), thetas, target_class)?;
                    let p = target_probability(model, params, &candidate)?;
                    Ok((theta, p))
                })
                .collect::<Result<Vec<(T, T)>, BackdoorError>>()?;
            for &(theta, p) in &scored {
                if p > best_p {
                    best_p = p;
                    spec.theta[i] = theta;
                }
            }
        }
    }
    Ok((spec, best_p))
}

fn triggered_variance<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    spec: &BackdoorSpec<T>,
    inputs: &[Vec<T>],
) -> Result<T, BackdoorError> {
    let triggered = triggered_model(model, spec)?;
    let mut preds = Vec::with_capacity(inputs.len());
    for x in inputs {
        preds.push(
            forward(&triggered, params, x)?
                .value()
                .expect("regression model"),
        );
    }
    let n = T::of(preds.len() as f64);
    let mean = preds.iter().copied().sum::<T>() / n;
    Ok(preds.iter().map(|&p| (p - mean) * (p - mean)).sum::<T>() / n)
}

/// Regression-side θ search: sweeps a uniform θ and keeps the value whose
/// Full trigger minimizes the *variance* of triggered predictions over the
/// provided feature vectors (the attacker wants a flat, input-independent
/// output curve).
pub fn search_theta_flat<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    qubits: &[usize],
    inputs: &[Vec<T>],
    grid_size: usize,
) -> Result<(BackdoorSpec<T>, T), BackdoorError> {
    use crate::vqc::MeasurementMode;
    if model.measurement.mode != MeasurementMode::SingleQubitZ {
        return Err(BackdoorError::NotClassification);
    }
    if grid_size == 0 {
        return Err(BackdoorError::EmptyGrid);
    }
    if inputs.is_empty() {
        return Err(BackdoorError::EmptyInputSet);
    }
    let candidates: Vec<T> = (0..grid_size)
        .map(|j| T::TAU() * T::of(j as f64) / T::of(grid_size as f64))
        .collect();
    let scored = candidates
        .par_iter()
        .map(|&theta| {
            let spec = BackdoorSpec::full_uniform(qubits.to_vec(), theta, 0)?;
            let var = triggered_variance(model, params, &spec, inputs)?;
            Ok((theta, var))
        })
        .collect::<Result<Vec<(T, T)>, BackdoorError>>()?;
    let mut best = scored[0];
    for &(theta, v) in &scored[1..] {
        if v < best.1 {
            best = (theta, v);
        }
    }
    let spec = BackdoorSpec::full_uniform(qubits.to_vec(), best.0, 0)?;
    Ok((spec, best.1))
}

/// Coordinate-descent refinement of [`search_theta_flat`]: starts from the
/// best uniform θ, then sweeps the shared post-RX angle and each qubit's θ
/// over the grid in turn (repeated `passes` times), accepting only strict
/// variance reductions. Sweeping the post-RX angle matters for dense
/// encodings: θ only slides the leaked phase feature along a fixed great
/// circle of the Bloch sphere, while the post-RX angle tilts that circle's
/// plane. Never returns a higher variance than the uniform search.
pub fn search_theta_flat_coordinate<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    qubits: &[usize],
    inputs: &[Vec<T>],
    grid_size: usize,
    passes: usize,
) -> Result<(BackdoorSpec<T>, T), BackdoorError> {
    let (mut spec, mut best_var) =
        search_theta_flat(model, params, qubits, inputs, grid_size)?;
    let candidates: Vec<T> = (0..grid_size)
        .map(|j| T::TAU() * T::of(j as f64) / T::of(grid_size as f64))
        .collect();
    for _ in 0..passes {
        let scored = candidates
            .par_iter()
            .map(|&beta| {
                let candidate = spec.clone().with_post_rx_angle(beta);
                let var = triggered_variance(model, params, &candidate, inputs)?;
                Ok((beta, var))
            })
            .collect::<Result<Vec<(T, T)>, BackdoorError>>()?;
        for &(beta, var) in &scored {
            if var < best_var {
                best_var = var;
                spec.post_rx_angle = beta;
            }
        }
        for i in 0..spec.qubits.len() {
            let scored = candidates
                .par_iter()
                .map(|&theta| {
                    let mut candidate = spec.clone();
                    candidate.theta[i] = theta;
                    let var = triggered_variance(model, params, &candidate, inputs)?;
                    Ok((theta, var))
                })
                .collect::<Result<Vec<(T, T)>, BackdoorError>>()?;
            for &(theta, var) in &scored {
                if var < best_var {
                    best_var = var;
                    spec.theta[i] = theta;
                }
            }
        }
    }
    Ok((spec, best_var))
}

/// Attack success rate: fraction of inputs the (triggered) model assigns to
/// the target class.
pub fn evaluate_asr<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    inputs: &[Vec<T>],
    target_class: usize,
) -> Result<T, BackdoorError> {
    check_classification(model, target_class)?;
    if inputs.is_empty() {
        return Err(BackdoorError::EmptyInputSet);
    }
    let hits = inputs
        .par_iter()
        .map(|x| {
            let pred = forward(model, params, x)?;
            Ok(usize::from(pred.argmax() == Some(target_class)))
        })
        .collect::<Result<Vec<usize>, BackdoorError>>()?
        .into_iter()
        .sum::<usize>();
    Ok(T::of(hits as f64 / inputs.len() as f64))
}
