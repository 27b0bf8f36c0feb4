//! Gate-list circuit with ASAP depth, single-qubit run fusion, and a
//! structural hash for checkpoint compatibility checks.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::gate::{mat_mul, GateKind, GateOp, LayerTag, Mat2};
use super::state::{Statevector, MAX_QUBITS};
use super::QsimError;
use crate::scalar::Real;

/// Ordered list of validated gate ops over a fixed qubit count.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Circuit<T: Real> {
    n_qubits: usize,
    ops: Vec<GateOp<T>>,
}

impl<T: Real> Circuit<T> {
    pub fn new(n_qubits: usize) -> Result<Self, QsimError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(QsimError::UnsupportedQubitCount { n_qubits });
        }
        Ok(Circuit {
            n_qubits,
            ops: Vec::new(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp<T>] {
        &self.ops
    }

    pub(crate) fn ops_mut(&mut self) -> &mut [GateOp<T>] {
        &mut self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Appends one op after validating it; trainable ops are only accepted
    /// inside the `Variational` layer.
    pub fn push(&mut self, op: GateOp<T>) -> Result<(), QsimError> {
        op.validate(self.n_qubits)?;
        if op.trainable && op.layer != LayerTag::Variational {
            return Err(QsimError::TrainableOutsideVariational {
                index: self.ops.len(),
                kind: op.kind,
            });
        }
        self.ops.push(op);
        Ok(())
    }

    /// Inserts ops at `index` (used by backdoor injection); same checks as
    /// `push`.
    pub(crate) fn insert_all(
        &mut self,
        index: usize,
        ops: Vec<GateOp<T>>,
    ) -> Result<(), QsimError> {
        for op in &ops {
            op.validate(self.n_qubits)?;
            if op.trainable && op.layer != LayerTag::Variational {
                return Err(QsimError::TrainableOutsideVariational {
                    index,
                    kind: op.kind,
                });
            }
        }
        self.ops.splice(index..index, ops);
        Ok(())
    }

    /// Re-validates every op; for circuits that bypassed `push` (e.g. came
    /// off disk).
    pub fn validate(&self) -> Result<(), QsimError> {
        for (index, op) in self.ops.iter().enumerate() {
            op.validate(self.n_qubits)?;
            if op.trainable && op.layer != LayerTag::Variational {
                return Err(QsimError::TrainableOutsideVariational {
                    index,
                    kind: op.kind,
                });
            }
        }
        Ok(())
    }

    /// Total number of trainable scalar parameters.
    pub fn n_trainable_params(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| op.trainable)
            .map(|op| op.kind.param_count())
            .sum()
    }

    /// Gate kind owning each trainable parameter, in binding order.
    pub fn trainable_param_kinds(&self) -> Vec<GateKind> {
        let mut kinds = Vec::with_capacity(self.n_trainable_params());
        for op in self.ops.iter().filter(|op| op.trainable) {
            for _ in 0..op.kind.param_count() {
                kinds.push(op.kind);
            }
        }
        kinds
    }

    /// Applies all ops to a state in order.
    pub fn run(&self, state: &mut Statevector<T>) -> Result<(), QsimError> {
        for op in &self.ops {
            state.apply(op)?;
        }
        Ok(())
    }

    /// ASAP (as-soon-as-possible) circuit depth: each op schedules one layer
    /// after the deepest layer already touching any of its qubits.
    pub fn depth(&self) -> usize {
        let mut qubit_depth = vec![0usize; self.n_qubits];
        let mut depth = 0;
        for op in &self.ops {
            let layer = 1 + op.qubits.iter().map(|&q| qubit_depth[q]).max().unwrap_or(0);
            for &q in &op.qubits {
                qubit_depth[q] = layer;
            }
            depth = depth.max(layer);
        }
        depth
    }

    /// Collapses every maximal run of single-qubit ops on one qubit into a
    /// `FUSED1Q` op carrying the matrix product (later gates multiply from
    /// the left). Runs end where a two-qubit op touches the qubit. Layer
    /// tags survive when uniform across the run, otherwise become `Other`;
    /// fused ops are never trainable.
    pub fn fuse_single_qubit_runs(&self) -> Result<Circuit<T>, QsimError> {
        struct Run<T: Real> {
            matrix: Mat2<T>,
            layer: Option<LayerTag>,
            uniform: bool,
        }

        let mut fused = Circuit::new(self.n_qubits)?;
        let mut pending: Vec<Option<Run<T>>> = (0..self.n_qubits).map(|_| None).collect();

        fn flush<T: Real>(
            fused: &mut Circuit<T>,
            pending: &mut [Option<Run<T>>],
            qubit: usize,
        ) -> Result<(), QsimError> {
            if let Some(run) = pending[qubit].take() {
                let layer = match (run.uniform, run.layer) {
                    (true, Some(tag)) => tag,
                    _ => LayerTag::Other,
                };
                let op = GateOp::fused1q(qubit, run.matrix)?.with_layer(layer);
                fused.push(op)?;
            }
            Ok(())
        }

        for op in &self.ops {
            if op.kind.is_single_qubit() {
                let qubit = op.qubits[0];
                let matrix = op.target_matrix().expect("single-qubit op has a matrix");
                match &mut pending[qubit] {
                    Some(run) => {
                        run.matrix = mat_mul(&matrix, &run.matrix);
                        run.uniform = run.uniform && run.layer == Some(op.layer);
                    }
                    slot @ None => {
                        *slot = Some(Run {
                            matrix,
                            layer: Some(op.layer),
                            uniform: true,
                        });
                    }
                }
            } else {
                for &q in &op.qubits {
                    flush(&mut fused, &mut pending, q)?;
                }
                fused.push(op.clone())?;
            }
        }
        for q in 0..self.n_qubits {
            flush(&mut fused, &mut pending, q)?;
        }
        Ok(fused)
    }

    /// SHA-256 over the circuit's structure: qubit count, op kinds, qubit
    /// indices, layer tags, trainability, and the *values* of non-trainable
    /// angles (trainable angles are parameters, not structure).
    pub fn structure_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("v1|n={}|ops={}\n", self.n_qubits, self.ops.len()));
        for (i, op) in self.ops.iter().enumerate() {
            let qubits = op
                .qubits
                .iter()
                .map(|q| q.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let mut line = format!(
                "{i}|{}|q={qubits}|layer={}|trainable={}",
                op.kind, op.layer, op.trainable
            );
            if op.trainable {
                line.push_str(&format!("|np={}", op.kind.param_count()));
            } else {
                for p in &op.params {
                    line.push_str(&format!("|p={:.17e}", p.to_f64_lossy()));
                }
            }
            if let Some(m) = &op.matrix {
                for row in m {
                    for entry in row {
                        line.push_str(&format!(
                            "|m={:.17e},{:.17e}",
                            entry.re.to_f64_lossy(),
                            entry.im.to_f64_lossy()
                        ));
                    }
                }
            }
            line.push('\n');
            hasher.update(line);
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
