//! Dense statevector simulation: gate vocabulary, state evolution, circuits.

mod circuit;
mod gate;
mod state;

pub use circuit::Circuit;
pub use gate::{
    mat_mul, phase_matrix, rot_matrix, rx_matrix, ry_matrix, rz_matrix, unitarity_deviation,
    unitary_tolerance, GateKind, GateOp, LayerTag, Mat2,
};
pub use state::{norm_tolerance, Statevector, MAX_QUBITS};

/// Errors from gate validation and state manipulation.
#[derive(Debug, thiserror::Error)]
pub enum QsimError {
    #[error("qubit {qubit} out of range for {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("gate touches qubit {qubit} more than once")]
    DuplicateQubit { qubit: usize },

    #[error("{kind} expects {expected} qubit(s), got {got}")]
    WrongQubitCount {
        kind: GateKind,
        expected: usize,
        got: usize,
    },

    #[error("{kind} expects {expected} parameter(s), got {got}")]
    WrongParamCount {
        kind: GateKind,
        expected: usize,
        got: usize,
    },

    #[error("{kind} has a non-finite angle")]
    NonFiniteAngle { kind: GateKind },

    #[error("matrix deviates from unitarity by {deviation:.3e} (tolerance {tolerance:.3e})")]
    NonUnitary { deviation: f64, tolerance: f64 },

    #[error("{kind} must not carry an explicit matrix")]
    UnexpectedMatrix { kind: GateKind },

    #[error("fused1q requires an explicit matrix")]
    MissingMatrix,

    #[error("qubit count {n_qubits} unsupported (must be 1..={MAX_QUBITS})")]
    UnsupportedQubitCount { n_qubits: usize },

    #[error("amplitude vector has length {got}, expected {expected}")]
    WrongAmplitudeCount { expected: usize, got: usize },

    #[error("state norm {norm} is not 1 within tolerance")]
    NotNormalized { norm: f64 },

    #[error("state dimension mismatch: {a} vs {b} qubits")]
    DimensionMismatch { a: usize, b: usize },

    #[error("shot count must be positive")]
    ZeroShots,

    #[error("trainable {kind} at op {index} outside the variational layer")]
    TrainableOutsideVariational { index: usize, kind: GateKind },
}
