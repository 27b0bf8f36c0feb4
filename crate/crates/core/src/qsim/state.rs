//! Dense statevector over `n ≤ 20` qubits.
//!
//! Amplitude indexing: qubit `q` maps to bit `q` of the amplitude index, so
//! `|q1 q0⟩ = |10⟩` (qubit 0 low bit) lives at index 1 for a 2-qubit state.

use num_complex::Complex;
use rand::Rng;

use super::gate::{GateKind, GateOp, Mat2};
use super::QsimError;
use crate::scalar::Real;

/// Hard cap on circuit width; 2^20 amplitudes ≈ 16 MiB at f64.
pub const MAX_QUBITS: usize = 20;

/// Norm tolerance: 1e-10 at `f64`, scaled up for coarser scalars.
pub fn norm_tolerance<T: Real>() -> T {
    let floor = T::of(1e-10);
    let eps_scaled = T::epsilon() * T::of(64.0);
    if eps_scaled > floor {
        eps_scaled
    } else {
        floor
    }
}

/// Dense statevector of `2^n_qubits` complex amplitudes.
#[derive(Clone, PartialEq, Debug)]
pub struct Statevector<T: Real> {
    n_qubits: usize,
    amps: Vec<Complex<T>>,
}

impl<T: Real> Statevector<T> {
    /// The all-zeros computational basis state `|0…0⟩`.
    pub fn new(n_qubits: usize) -> Result<Self, QsimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(QsimError::UnsupportedQubitCount { n_qubits });
        }
        let mut amps = vec![Complex::new(T::zero(), T::zero()); 1 << n_qubits];
        amps[0] = Complex::new(T::one(), T::zero());
        Ok(Statevector { n_qubits, amps })
    }

    /// Builds a state from explicit amplitudes; the vector must have length
    /// `2^n_qubits` and unit norm within tolerance.
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex<T>>) -> Result<Self, QsimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(QsimError::UnsupportedQubitCount { n_qubits });
        }
        if amps.len() != 1 << n_qubits {
            return Err(QsimError::WrongAmplitudeCount {
                expected: 1 << n_qubits,
                got: amps.len(),
            });
        }
        let state = Statevector { n_qubits, amps };
        let norm = state.norm();
        if (norm - T::one()).abs() > norm_tolerance::<T>() {
            return Err(QsimError::NotNormalized {
                norm: norm.to_f64_lossy(),
            });
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex<T> {
        self.amps[index]
    }

    /// Euclidean norm of the amplitude vector.
    pub fn norm(&self) -> T {
        self.amps
            .iter()
            .map(|a| a.norm_sqr())
            .fold(T::zero(), |acc, p| acc + p)
            .sqrt()
    }

    /// Applies one gate in place.
    pub fn apply(&mut self, op: &GateOp<T>) -> Result<(), QsimError> {
        op.validate(self.n_qubits)?;
        self.apply_parts(op.kind, &op.qubits, &op.params, op.matrix.as_ref());
        Ok(())
    }

    /// Core dispatch; callers must have validated the op shape already.
    pub(crate) fn apply_parts(
        &mut self,
        kind: GateKind,
        qubits: &[usize],
        params: &[T],
        matrix: Option<&Mat2<T>>,
    ) {
        match kind {
            GateKind::Rx => self.apply_1q(qubits[0], &super::gate::rx_matrix(params[0])),
            GateKind::Ry => self.apply_1q(qubits[0], &super::gate::ry_matrix(params[0])),
            GateKind::Rz => self.apply_1q(qubits[0], &super::gate::rz_matrix(params[0])),
            GateKind::Phase => self.apply_1q(qubits[0], &super::gate::phase_matrix(params[0])),
            GateKind::Rot => self.apply_1q(
                qubits[0],
                &super::gate::rot_matrix(params[0], params[1], params[2]),
            ),
            GateKind::Crx => self.apply_controlled_1q(
                qubits[0],
                qubits[1],
                &super::gate::rx_matrix(params[0]),
            ),
            GateKind::Cnot => self.apply_cnot(qubits[0], qubits[1]),
            GateKind::Fused1q => {
                let m = *matrix.expect("FUSED1Q carries a matrix");
                self.apply_1q(qubits[0], &m);
            }
        }
    }

    /// Applies a 2×2 matrix on one qubit with stride loops over index pairs.
    fn apply_1q(&mut self, qubit: usize, m: &Mat2<T>) {
        let step = 1usize << qubit;
        let len = self.amps.len();
        let mut base = 0;
        while base < len {
            for low in base..base + step {
                let i0 = low;
                let i1 = low | step;
                let a0 = self.amps[i0];
                let a1 = self.amps[i1];
                self.amps[i0] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i1] = m[1][0] * a0 + m[1][1] * a1;
            }
            base += step << 1;
        }
    }

    /// Applies a 2×2 matrix on `target` for amplitudes where `control` is set.
    fn apply_controlled_1q(&mut self, control: usize, target: usize, m: &Mat2<T>) {
        let step = 1usize << target;
        let control_bit = 1usize << control;
        let len = self.amps.len();
        let mut base = 0;
        while base < len {
            for low in base..base + step {
                if low & control_bit == 0 {
                    continue;
                }
                let i0 = low;
                let i1 = low | step;
                let a0 = self.amps[i0];
                let a1 = self.amps[i1];
                self.amps[i0] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i1] = m[1][0] * a0 + m[1][1] * a1;
            }
            base += step << 1;
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let step = 1usize << target;
        let control_bit = 1usize << control;
        let len = self.amps.len();
        let mut base = 0;
        while base < len {
            for low in base..base + step {
                if low & control_bit == 0 {
                    continue;
                }
                self.amps.swap(low, low | step);
            }
            base += step << 1;
        }
    }

    /// `⟨Z⟩` on one qubit: +1 weight for basis states with the bit clear,
    /// −1 for set.
    pub fn expectation_z(&self, qubit: usize) -> Result<T, QsimError> {
        if qubit >= self.n_qubits {
            return Err(QsimError::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        let bit = 1usize << qubit;
        let mut acc = T::zero();
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if i & bit == 0 {
                acc += p;
            } else {
                acc -= p;
            }
        }
        Ok(acc)
    }

    /// Basis-state probabilities `|a_i|²`.
    pub fn probabilities(&self) -> Vec<T> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Pure-state fidelity `|⟨self|other⟩|²`; invariant to global phase.
    pub fn fidelity(&self, other: &Statevector<T>) -> Result<T, QsimError> {
        if self.n_qubits != other.n_qubits {
            return Err(QsimError::DimensionMismatch {
                a: self.n_qubits,
                b: other.n_qubits,
            });
        }
        let mut inner = Complex::new(T::zero(), T::zero());
        for (a, b) in self.amps.iter().zip(other.amps.iter()) {
            inner = inner + a.conj() * *b;
        }
        Ok(inner.norm_sqr())
    }

    /// Shot-sampled `⟨Z⟩` estimate on one qubit: binomial draws from the
    /// exact marginal. The analytic path stays the default; this exists for
    /// shot-noise studies.
    pub fn sample_z<R: Rng>(
        &self,
        qubit: usize,
        shots: usize,
        rng: &mut R,
    ) -> Result<T, QsimError> {
        if qubit >= self.n_qubits {
            return Err(QsimError::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        if shots == 0 {
            return Err(QsimError::ZeroShots);
        }
        let bit = 1usize << qubit;
        let p_one: T = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .fold(T::zero(), |acc, p| acc + p);
        let p_one = p_one.to_f64_lossy().clamp(0.0, 1.0);
        let ones = (0..shots).filter(|_| rng.gen::<f64>() < p_one).count();
        let zeros = shots - ones;
        Ok(T::of((zeros as f64 - ones as f64) / shots as f64))
    }
}
