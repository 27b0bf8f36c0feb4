//! Gate vocabulary: kinds, layer tags, rotation matrices, validation.
//!
//! Matrix conventions (half-angle form, `C = cos(φ/2)`, `S = sin(φ/2)`):
//!
//! * `RX(φ) = [[C, -i·S], [-i·S, C]]`
//! * `RY(φ) = [[C, -S], [S, C]]`
//! * `RZ(φ) = diag(e^{-iφ/2}, e^{iφ/2})`
//! * `PHASE(φ) = diag(1, e^{iφ})`
//! * `ROT(φ, θ, ω) = RZ(ω) · RY(θ) · RZ(φ)`
//! * `CRX(φ)` applies `RX(φ)` on the target when the control is `|1⟩`
//! * `CNOT` flips the target when the control is `|1⟩`
//! * `FUSED1Q` carries an explicit 2×2 unitary

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::QsimError;
use crate::scalar::Real;

/// 2×2 complex matrix in row-major order.
pub type Mat2<T> = [[Complex<T>; 2]; 2];

/// Supported gate kinds.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Phase,
    Rot,
    Crx,
    Cnot,
    Fused1q,
}

impl GateKind {
    /// Number of qubits the gate acts on.
    pub fn arity(self) -> usize {
        match self {
            GateKind::Crx | GateKind::Cnot => 2,
            _ => 1,
        }
    }

    /// Number of angle parameters the gate carries.
    pub fn param_count(self) -> usize {
        match self {
            GateKind::Rot => 3,
            GateKind::Cnot | GateKind::Fused1q => 0,
            _ => 1,
        }
    }

    /// True for single-qubit kinds (fusable).
    pub fn is_single_qubit(self) -> bool {
        self.arity() == 1
    }

    /// Canonical lower-case name used in reports and hashes.
    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::Phase => "phase",
            GateKind::Rot => "rot",
            GateKind::Crx => "crx",
            GateKind::Cnot => "cnot",
            GateKind::Fused1q => "fused1q",
        }
    }
}

impl std::fmt::Display for GateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Structural role of an op within a model circuit.
///
/// `PreEncoding`/`PostEncoding` are reserved for gates inserted around the
/// encoding layer by the backdoor injector; calibration-file resolution binds
/// angles onto exactly those tags.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum LayerTag {
    PreEncoding,
    Encoding,
    PostEncoding,
    Variational,
    Other,
}

impl LayerTag {
    /// Canonical lower-case name used in reports and hashes.
    pub fn name(self) -> &'static str {
        match self {
            LayerTag::PreEncoding => "pre-encoding",
            LayerTag::Encoding => "encoding",
            LayerTag::PostEncoding => "post-encoding",
            LayerTag::Variational => "variational",
            LayerTag::Other => "other",
        }
    }
}

impl std::fmt::Display for LayerTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One gate application: kind, qubit indices, parameters, layer, trainability.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GateOp<T: Real> {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub params: Vec<T>,
    /// Explicit unitary; present exactly for `Fused1q`.
    pub matrix: Option<Mat2<T>>,
    pub layer: LayerTag,
    pub trainable: bool,
}

impl<T: Real> GateOp<T> {
    fn new(kind: GateKind, qubits: Vec<usize>, params: Vec<T>) -> Self {
        GateOp {
            kind,
            qubits,
            params,
            matrix: None,
            layer: LayerTag::Other,
            trainable: false,
        }
    }

    pub fn rx(qubit: usize, angle: T) -> Self {
        Self::new(GateKind::Rx, vec![qubit], vec![angle])
    }

    pub fn ry(qubit: usize, angle: T) -> Self {
        Self::new(GateKind::Ry, vec![qubit], vec![angle])
    }

    pub fn rz(qubit: usize, angle: T) -> Self {
        Self::new(GateKind::Rz, vec![qubit], vec![angle])
    }

    pub fn phase(qubit: usize, angle: T) -> Self {
        Self::new(GateKind::Phase, vec![qubit], vec![angle])
    }

    /// General single-qubit rotation `ROT(φ, θ, ω) = RZ(ω)·RY(θ)·RZ(φ)`.
    pub fn rot(qubit: usize, phi: T, theta: T, omega: T) -> Self {
        Self::new(GateKind::Rot, vec![qubit], vec![phi, theta, omega])
    }

    pub fn crx(control: usize, target: usize, angle: T) -> Self {
        Self::new(GateKind::Crx, vec![control, target], vec![angle])
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::new(GateKind::Cnot, vec![control, target], vec![])
    }

    /// Wraps an explicit 2×2 unitary; rejects matrices that fail the
    /// unitarity check.
    pub fn fused1q(qubit: usize, matrix: Mat2<T>) -> Result<Self, QsimError> {
        let deviation = unitarity_deviation(&matrix);
        let tolerance = unitary_tolerance::<T>();
        if !(deviation <= tolerance) {
            return Err(QsimError::NonUnitary {
                deviation: deviation.to_f64_lossy(),
                tolerance: tolerance.to_f64_lossy(),
            });
        }
        let mut op = Self::new(GateKind::Fused1q, vec![qubit], vec![]);
        op.matrix = Some(matrix);
        Ok(op)
    }

    /// Builder: assigns the layer tag.
    pub fn with_layer(mut self, layer: LayerTag) -> Self {
        self.layer = layer;
        self
    }

    /// Builder: marks the op's parameters as trainable.
    pub fn with_trainable(mut self, trainable: bool) -> Self {
        self.trainable = trainable;
        self
    }

    /// Structural and numeric validation against a circuit width.
    pub fn validate(&self, n_qubits: usize) -> Result<(), QsimError> {
        if self.qubits.len() != self.kind.arity() {
            return Err(QsimError::WrongQubitCount {
                kind: self.kind,
                expected: self.kind.arity(),
                got: self.qubits.len(),
            });
        }
        for &q in &self.qubits {
            if q >= n_qubits {
                return Err(QsimError::QubitOutOfRange { qubit: q, n_qubits });
            }
        }
        if self.qubits.len() == 2 && self.qubits[0] == self.qubits[1] {
            return Err(QsimError::DuplicateQubit {
                qubit: self.qubits[0],
            });
        }
        if self.params.len() != self.kind.param_count() {
            return Err(QsimError::WrongParamCount {
                kind: self.kind,
                expected: self.kind.param_count(),
                got: self.params.len(),
            });
        }
        for &p in &self.params {
            if !p.is_finite() {
                return Err(QsimError::NonFiniteAngle { kind: self.kind });
            }
        }
        match (self.kind, &self.matrix) {
            (GateKind::Fused1q, Some(m)) => {
                let deviation = unitarity_deviation(m);
                let tolerance = unitary_tolerance::<T>();
                if !(deviation <= tolerance) {
                    return Err(QsimError::NonUnitary {
                        deviation: deviation.to_f64_lossy(),
                        tolerance: tolerance.to_f64_lossy(),
                    });
                }
            }
            (GateKind::Fused1q, None) => return Err(QsimError::MissingMatrix),
            (_, Some(_)) => return Err(QsimError::UnexpectedMatrix { kind: self.kind }),
            (_, None) => {}
        }
        Ok(())
    }

    /// The 2×2 matrix applied on the target qubit, if this op has one
    /// (single-qubit kinds, plus the controlled block of `CRX`).
    pub fn target_matrix(&self) -> Option<Mat2<T>> {
        match self.kind {
            GateKind::Rx => Some(rx_matrix(self.params[0])),
            GateKind::Ry => Some(ry_matrix(self.params[0])),
            GateKind::Rz => Some(rz_matrix(self.params[0])),
            GateKind::Phase => Some(phase_matrix(self.params[0])),
            GateKind::Rot => Some(rot_matrix(self.params[0], self.params[1], self.params[2])),
            GateKind::Crx => Some(rx_matrix(self.params[0])),
            GateKind::Fused1q => self.matrix,
            GateKind::Cnot => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

fn half<T: Real>(angle: T) -> T {
    angle / T::of(2.0)
}

pub fn rx_matrix<T: Real>(angle: T) -> Mat2<T> {
    let (s, c) = half(angle).sin_cos();
    let zero = T::zero();
    [
        [Complex::new(c, zero), Complex::new(zero, -s)],
        [Complex::new(zero, -s), Complex::new(c, zero)],
    ]
}

pub fn ry_matrix<T: Real>(angle: T) -> Mat2<T> {
    let (s, c) = half(angle).sin_cos();
    let zero = T::zero();
    [
        [Complex::new(c, zero), Complex::new(-s, zero)],
        [Complex::new(s, zero), Complex::new(c, zero)],
    ]
}

pub fn rz_matrix<T: Real>(angle: T) -> Mat2<T> {
    let (s, c) = half(angle).sin_cos();
    let zero = Complex::new(T::zero(), T::zero());
    [
        [Complex::new(c, -s), zero],
        [zero, Complex::new(c, s)],
    ]
}

pub fn phase_matrix<T: Real>(angle: T) -> Mat2<T> {
    let (s, c) = angle.sin_cos();
    let zero = Complex::new(T::zero(), T::zero());
    [
        [Complex::new(T::one(), T::zero()), zero],
        [zero, Complex::new(c, s)],
    ]
}

pub fn rot_matrix<T: Real>(phi: T, theta: T, omega: T) -> Mat2<T> {
    mat_mul(&rz_matrix(omega), &mat_mul(&ry_matrix(theta), &rz_matrix(phi)))
}

/// Row-major 2×2 product `a · b`.
pub fn mat_mul<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    let mut out = [[Complex::new(T::zero(), T::zero()); 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            *entry = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

/// Max-norm deviation of `U†U` from the identity.
pub fn unitarity_deviation<T: Real>(m: &Mat2<T>) -> T {
    let mut worst = T::zero();
    for r in 0..2 {
        for c in 0..2 {
            // (U†U)[r][c] = Σ_k conj(U[k][r]) · U[k][c]
            let mut acc = Complex::new(T::zero(), T::zero());
            for row in m.iter() {
                acc = acc + row[r].conj() * row[c];
            }
            let expected = if r == c { T::one() } else { T::zero() };
            let dev = (acc - Complex::new(expected, T::zero())).norm();
            if dev > worst {
                worst = dev;
            }
        }
    }
    worst
}

/// Unitarity tolerance: 1e-12 at `f64`, scaled up for coarser scalars.
pub fn unitary_tolerance<T: Real>() -> T {
    let floor = T::of(1e-12);
    let eps_scaled = T::epsilon() * T::of(64.0);
    if eps_scaled > floor {
        eps_scaled
    } else {
        floor
    }
}
