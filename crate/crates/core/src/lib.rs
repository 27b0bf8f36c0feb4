//! Statevector simulator and experiment harness for variational quantum
//! classifiers, including circuit-level backdoor injection with
//! calibration-file triggers and a data-poisoning baseline.

pub mod backdoor;
pub mod data;
pub mod poison;
pub mod qsim;
pub mod scalar;
pub mod train;
pub mod trigcfg;
pub mod vqc;

pub use scalar::Real;

// f64 lane: the default precision for experiments and the CLI.
pub type Statevector64 = qsim::Statevector<f64>;
pub type Circuit64 = qsim::Circuit<f64>;
pub type GateOp64 = qsim::GateOp<f64>;
pub type Model64 = vqc::Model<f64>;
pub type ModelParams64 = vqc::ModelParams<f64>;
pub type BackdoorSpec64 = backdoor::BackdoorSpec<f64>;

// f32 lane: available for memory-constrained sweeps.
pub type Statevector32 = qsim::Statevector<f32>;
pub type Circuit32 = qsim::Circuit<f32>;
