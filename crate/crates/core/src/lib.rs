//! Wirtinger flow for Poisson phase retrieval with a known background.
//!
//! The crate simulates complex Gaussian intensity measurements, minimizes the
//! Poisson negative log-likelihood with full-batch or incremental Wirtinger
//! flow, and checks the local convergence constants numerically.

// `!(v > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod measurement;
pub mod objective;
pub mod rng;
pub mod solvers;
pub mod theory;

pub use error::{Error, Result};
pub use measurement::{
    build_observations, build_observations_with, gaussian_ensemble, generate_measurements, generate_signal,
    sample_background, sample_poisson, ComplexSignal, MeasurementEnsemble, NoiseModel, ObservationSet,
};
pub use objective::{
    align_and_distance, gradient, gradient_single, nrmse, objective, step_size, AlignmentResult, ModelKind,
    StepSizeRule,
};
pub use rng::RngStream;
pub use solvers::{initialize, iwf_solve, iwf_solve_with, wf_solve, Initializer, IterRecord, SolverConfig, SolverTrace};
pub use theory::{curvature_constants, smoothness_constant, CurvatureConstants, ProbeReport};
