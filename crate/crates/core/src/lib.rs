//! Sparse recovery with a blind stopping rule for compressive spectrum
//! sensing.
//!
//! * [`matgen`]: normalized Gaussian and hybrid measurement matrices,
//!   coherence, binary I/O.
//! * [`linalg`]: incremental QR, least squares on a support, projections.
//! * [`recovery`]: blind OLS plus OLS, OMP, blind OMP, CoSaMP and MOLS.
//! * [`theory`]: closed-form bounds and the probability-to-threshold
//!   calibration used by the blind rule.
//! * [`harness`]: seeded Monte Carlo sweeps producing recovery probability
//!   and MSE curves.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops read closer to the matrix formulas.
#![allow(clippy::needless_range_loop)]

pub mod harness;
pub mod linalg;
pub mod matgen;
pub mod recovery;
pub mod seed;
pub mod theory;

pub use harness::{Experiment, ExperimentConfig, MetricsRow, TrialOutcome};
pub use linalg::SupportSet;
pub use matgen::{MatrixFamily, MeasurementMatrix};
pub use recovery::{Algorithm, BlindStopParams, RecoveryResult, SolverParams, StopReason};
pub use seed::RngSeed;
pub use theory::{StoppingRule, TheoryParams};
