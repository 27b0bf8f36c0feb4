//! Variational quantum classifier models: feature encodings, circuit
//! builders, and the forward pass.
//!
//! Encodings map classical features onto rotation angles:
//!
//! * `Angle`: qubit `i` gets `RY(2·x_i)` (one feature per qubit).
//! * `DenseAngle`: qubit `i` gets `RY(2π·x_{2i})` then `PHASE(2π·x_{2i+1})`
//!   (two features per qubit; an odd tail pads the phase with 0).
//!
//! Model circuits follow an encoding layer with `n_blocks` variational
//! blocks. Classifier blocks are a `ROT` on every qubit plus a ring of
//! trainable `CRX(i, i+1 mod n)` entanglers; regressor blocks use the same
//! `ROT` layer with a parameter-free `CNOT` ring.

use serde::{Deserialize, Serialize};

use crate::qsim::{Circuit, GateOp, LayerTag, QsimError, Statevector};
use crate::scalar::Real;

/// Errors from model construction and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum VqcError {
    #[error("feature vector length {got} does not match encoding width {expected}")]
    FeatureCount { expected: usize, got: usize },

    #[error("feature {index} is not finite")]
    NonFiniteFeature { index: usize },

    #[error("encoding needs at least one feature")]
    EmptyEncoding,

    #[error("parameter count {got} does not match the circuit's {expected} trainable parameters")]
    ParamCount { expected: usize, got: usize },

    #[error("parameter {index} is not finite")]
    NonFiniteParam { index: usize },

    #[error("encoding spec implies {expected} qubits but the circuit has {got}")]
    QubitCount { expected: usize, got: usize },

    #[error("circuit encoding ops do not match the encoding spec (encoding op {index})")]
    EncodingShape { index: usize },

    #[error("classification needs 2..=n_qubits classes, got {n_classes} with {n_qubits} qubits")]
    BadClassCount { n_classes: usize, n_qubits: usize },

    #[error("regression measurement reads exactly one value, got n_classes = {n_classes}")]
    BadRegressionClasses { n_classes: usize },

    #[error("circuit builders need at least 2 qubits, got {got}")]
    TooFewQubits { got: usize },

    #[error(transparent)]
    Qsim(#[from] QsimError),
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum EncodingKind {
    Angle,
    DenseAngle,
}

/// How a feature vector becomes rotation angles on the encoding layer.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub kind: EncodingKind,
    pub n_features: usize,
}

impl EncodingSpec {
    pub fn angle(n_features: usize) -> Result<Self, VqcError> {
        if n_features == 0 {
            return Err(VqcError::EmptyEncoding);
        }
        Ok(EncodingSpec {
            kind: EncodingKind::Angle,
            n_features,
        })
    }

    pub fn dense_angle(n_features: usize) -> Result<Self, VqcError> {
        if n_features == 0 {
            return Err(VqcError::EmptyEncoding);
        }
        Ok(EncodingSpec {
            kind: EncodingKind::DenseAngle,
            n_features,
        })
    }

    /// Number of qubits the encoding occupies.
    pub fn n_qubits(&self) -> usize {
        match self.kind {
            EncodingKind::Angle => self.n_features,
            EncodingKind::DenseAngle => self.n_features.div_ceil(2),
        }
    }

    /// Encoding-layer gates for one feature vector.
    pub fn encoding_gates<T: Real>(&self, features: &[T]) -> Result<Vec<GateOp<T>>, VqcError> {
        if features.len() != self.n_features {
            return Err(VqcError::FeatureCount {
                expected: self.n_features,
                got: features.len(),
            });
        }
        if let Some(index) = features.iter().position(|f| !f.is_finite()) {
            return Err(VqcError::NonFiniteFeature { index });
        }
        let two = T::of(2.0);
        let tau = T::TAU();
        let gates = match self.kind {
            EncodingKind::Angle => features
                .iter()
                .enumerate()
                .map(|(q, &x)| GateOp::ry(q, two * x).with_layer(LayerTag::Encoding))
                .collect(),
            EncodingKind::DenseAngle => {
                let mut gates = Vec::with_capacity(2 * self.n_qubits());
                for q in 0..self.n_qubits() {
                    let polar = features[2 * q];
                    let phase = features.get(2 * q + 1).copied().unwrap_or_else(T::zero);
                    gates.push(GateOp::ry(q, tau * polar).with_layer(LayerTag::Encoding));
                    gates.push(GateOp::phase(q, tau * phase).with_layer(LayerTag::Encoding));
                }
                gates
            }
        };
        Ok(gates)
    }

    /// Zero-angle stand-ins with the same shape as `encoding_gates`; the
    /// builders place these so the circuit structure is input-independent.
    pub fn placeholder_gates<T: Real>(&self) -> Vec<GateOp<T>> {
        let zeros = vec![T::zero(); self.n_features];
        self.encoding_gates(&zeros)
            .expect("zero features always encode")
    }
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum MeasurementMode {
    /// Logit `c` is `⟨Z⟩` on qubit `c`; probabilities via softmax.
    FirstKQubitsZ,
    /// Single regression output: `⟨Z⟩` on qubit 0.
    SingleQubitZ,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub n_classes: usize,
    pub mode: MeasurementMode,
}

impl MeasurementSpec {
    pub fn classification(n_classes: usize) -> Self {
        MeasurementSpec {
            n_classes,
            mode: MeasurementMode::FirstKQubitsZ,
        }
    }

    pub fn regression() -> Self {
        MeasurementSpec {
            n_classes: 1,
            mode: MeasurementMode::SingleQubitZ,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<(), VqcError> {
        match self.mode {
            MeasurementMode::FirstKQubitsZ => {
                if self.n_classes < 2 || self.n_classes > n_qubits {
                    return Err(VqcError::BadClassCount {
                        n_classes: self.n_classes,
                        n_qubits,
                    });
                }
            }
            MeasurementMode::SingleQubitZ => {
                if self.n_classes != 1 {
                    return Err(VqcError::BadRegressionClasses {
                        n_classes: self.n_classes,
                    });
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parameters and model bundle
// ---------------------------------------------------------------------------

/// Flat trainable parameter vector, bound to trainable gates in circuit
/// order.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelParams<T: Real> {
    values: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn new(values: Vec<T>) -> Self {
        ModelParams { values }
    }

    pub fn zeros(n: usize) -> Self {
        ModelParams {
            values: vec![T::zero(); n],
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

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

impl<T: Real> From<Vec<T>> for ModelParams<T> {
    fn from(values: Vec<T>) -> Self {
        ModelParams::new(values)
    }
}

/// Circuit plus the specs needed to run it on data.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Model<T: Real> {
    pub circuit: Circuit<T>,
    pub encoding: EncodingSpec,
    pub measurement: MeasurementSpec,
}

impl<T: Real> Model<T> {
    /// Bundles a circuit with its specs, cross-checking that the circuit's
    /// encoding ops have exactly the shape the encoding spec generates.
    pub fn new(
        circuit: Circuit<T>,
        encoding: EncodingSpec,
        measurement: MeasurementSpec,
    ) -> Result<Self, VqcError> {
        if encoding.n_qubits() != circuit.n_qubits() {
            return Err(VqcError::QubitCount {
                expected: encoding.n_qubits(),
                got: circuit.n_qubits(),
            });
        }
        measurement.validate(circuit.n_qubits())?;
        let placeholders = encoding.placeholder_gates::<T>();
        let mut expected = placeholders.iter();
        let mut count = 0usize;
        for op in circuit.ops().iter().filter(|op| op.layer == LayerTag::Encoding) {
            match expected.next() {
                Some(p) if p.kind == op.kind && p.qubits == op.qubits && !op.trainable => {
                    count += 1;
                }
                _ => return Err(VqcError::EncodingShape { index: count }),
            }
        }
        if expected.next().is_some() {
            return Err(VqcError::EncodingShape { index: count });
        }
        Ok(Model {
            circuit,
            encoding,
            measurement,
        })
    }

    /// Image classifier: angle encoding + `n_blocks` × (ROT layer, trainable
    /// CRX ring).
    pub fn classifier(
        n_qubits: usize,
        n_blocks: usize,
        n_classes: usize,
    ) -> Result<Self, VqcError> {
        let encoding = EncodingSpec::angle(n_qubits)?;
        let circuit = build_classifier_circuit(n_qubits, n_blocks)?;
        Model::new(circuit, encoding, MeasurementSpec::classification(n_classes))
    }

    /// Sequence regressor: dense-angle encoding (window of `2·n_qubits`
    /// values) + `n_blocks` × (ROT layer, CNOT ring).
    pub fn regressor(n_qubits: usize, n_blocks: usize) -> Result<Self, VqcError> {
        let encoding = EncodingSpec::dense_angle(2 * n_qubits)?;
        let circuit = build_regressor_circuit(n_qubits, n_blocks)?;
        Model::new(circuit, encoding, MeasurementSpec::regression())
    }

    pub fn n_params(&self) -> usize {
        self.circuit.n_trainable_params()
    }
}

/// Classifier ansatz over `n_qubits ≥ 2`: per block, a `ROT` on every qubit
/// then trainable `CRX(i, (i+1) mod n)` for `i = 0..n`.
pub fn build_classifier_circuit<T: Real>(
    n_qubits: usize,
    n_blocks: usize,
) -> Result<Circuit<T>, VqcError> {
    if n_qubits < 2 {
        return Err(VqcError::TooFewQubits { got: n_qubits });
    }
    let mut circuit = Circuit::new(n_qubits)?;
    for gate in EncodingSpec::angle(n_qubits)?.placeholder_gates::<T>() {
        circuit.push(gate)?;
    }
    let zero = T::zero();
    for _ in 0..n_blocks {
        for q in 0..n_qubits {
            circuit.push(
                GateOp::rot(q, zero, zero, zero)
                    .with_layer(LayerTag::Variational)
                    .with_trainable(true),
            )?;
        }
        for i in 0..n_qubits {
            circuit.push(
                GateOp::crx(i, (i + 1) % n_qubits, zero)
                    .with_layer(LayerTag::Variational)
                    .with_trainable(true),
            )?;
        }
    }
    Ok(circuit)
}

/// Regressor ansatz over `n_qubits ≥ 2`: per block, a `ROT` on every qubit
/// then a parameter-free `CNOT(i, (i+1) mod n)` ring.
pub fn build_regressor_circuit<T: Real>(
    n_qubits: usize,
    n_blocks: usize,
) -> Result<Circuit<T>, VqcError> {
    if n_qubits < 2 {
        return Err(VqcError::TooFewQubits { got: n_qubits });
    }
    let mut circuit = Circuit::new(n_qubits)?;
    for gate in EncodingSpec::dense_angle(2 * n_qubits)?.placeholder_gates::<T>() {
        circuit.push(gate)?;
    }
    let zero = T::zero();
    for _ in 0..n_blocks {
        for q in 0..n_qubits {
            circuit.push(
                GateOp::rot(q, zero, zero, zero)
                    .with_layer(LayerTag::Variational)
                    .with_trainable(true),
            )?;
        }
        for i in 0..n_qubits {
            circuit.push(
                GateOp::cnot(i, (i + 1) % n_qubits).with_layer(LayerTag::Variational),
            )?;
        }
    }
    Ok(circuit)
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Model output for one input.
#[derive(Clone, PartialEq, Debug)]
pub enum Prediction<T: Real> {
    Classification { logits: Vec<T>, probs: Vec<T> },
    Regression { value: T },
}

impl<T: Real> Prediction<T> {
    pub fn probs(&self) -> Option<&[T]> {
        match self {
            Prediction::Classification { probs, .. } => Some(probs),
            Prediction::Regression { .. } => None,
        }
    }

    pub fn logits(&self) -> Option<&[T]> {
        match self {
            Prediction::Classification { logits, .. } => Some(logits),
            Prediction::Regression { .. } => None,
        }
    }

    /// Predicted class (ties break to the lowest index).
    pub fn argmax(&self) -> Option<usize> {
        self.probs().and_then(argmax)
    }

    pub fn value(&self) -> Option<T> {
        match self {
            Prediction::Regression { value } => Some(*value),
            Prediction::Classification { .. } => None,
        }
    }
}

/// Index of the strictly largest entry; ties break to the lowest index.
pub fn argmax<T: Real>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Numerically stable softmax (max subtraction). Equal logits give exactly
/// `1/C` for power-of-two class counts.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_params<T: Real>(circuit: &Circuit<T>, params: &ModelParams<T>) -> Result<(), VqcError> {
    let expected = circuit.n_trainable_params();
    if params.len() != expected {
        return Err(VqcError::ParamCount {
            expected,
            got: params.len(),
        });
    }
    if let Some(index) = params.values().iter().position(|p| !p.is_finite()) {
        return Err(VqcError::NonFiniteParam { index });
    }
    Ok(())
}

/// Runs the circuit with trainable angles bound from `params` (in circuit
/// order) and encoding angles regenerated from `features`. Stops before the
/// first `Variational` op when `stop_before_variational` is set.
fn run_bound<T: Real>(
    model: &Model<T>,
    params: &[T],
    features: &[T],
    stop_before_variational: bool,
) -> Result<Statevector<T>, VqcError> {
    let enc_gates = model.encoding.encoding_gates(features)?;
    let mut enc_iter = enc_gates.iter();
    let mut enc_index = 0usize;
    let mut cursor = 0usize;
    let mut state = Statevector::new(model.circuit.n_qubits())?;
    for op in model.circuit.ops() {
        if stop_before_variational && op.layer == LayerTag::Variational {
            return Ok(state);
        }
        if op.trainable {
            let n = op.kind.param_count();
            let slice = &params[cursor..cursor + n];
            cursor += n;
            state.apply_parts(op.kind, &op.qubits, slice, op.matrix.as_ref());
        } else if op.layer == LayerTag::Encoding {
            let bound = enc_iter.next().ok_or(VqcError::EncodingShape { index: enc_index })?;
            if bound.kind != op.kind || bound.qubits != op.qubits {
                return Err(VqcError::EncodingShape { index: enc_index });
            }
            enc_index += 1;
            state.apply_parts(op.kind, &op.qubits, &bound.params, None);
        } else {
            state.apply_parts(op.kind, &op.qubits, &op.params, op.matrix.as_ref());
        }
    }
    if enc_iter.next().is_some() {
        return Err(VqcError::EncodingShape { index: enc_index });
    }
    Ok(state)
}

/// Final statevector for one input.
pub fn forward_state<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    features: &[T],
) -> Result<Statevector<T>, VqcError> {
    check_params(&model.circuit, params)?;
    run_bound(model, params.values(), features, false)
}

/// Measures a state per the measurement spec.
pub fn measure<T: Real>(
    state: &Statevector<T>,
    measurement: &MeasurementSpec,
) -> Result<Prediction<T>, VqcError> {
    match measurement.mode {
        MeasurementMode::FirstKQubitsZ => {
            let logits = (0..measurement.n_classes)
                .map(|q| state.expectation_z(q))
                .collect::<Result<Vec<T>, _>>()?;
            let probs = softmax(&logits);
            Ok(Prediction::Classification { logits, probs })
        }
        MeasurementMode::SingleQubitZ => Ok(Prediction::Regression {
            value: state.expectation_z(0)?,
        }),
    }
}

/// Full forward pass: encode, run, measure.
pub fn forward<T: Real>(
    model: &Model<T>,
    params: &ModelParams<T>,
    features: &[T],
) -> Result<Prediction<T>, VqcError> {
    let state = forward_state(model, params, features)?;
    measure(&state, &model.measurement)
}

/// State right after the encoding region (everything before the first
/// `Variational` op: pre-encoding, encoding, post-encoding). No trainable
/// gate can sit in that prefix, so no parameters are needed.
pub fn encoding_region_state<T: Real>(
    model: &Model<T>,
    features: &[T],
) -> Result<Statevector<T>, VqcError> {
    run_bound(model, &[], features, true)
}
