//! Randomized-sketching least squares: fully compressed, partially compressed,
//! and robust partially-compressed estimators, with ridge, robust, and
//! sketch-preconditioned LSQR baselines and a benchmark harness.

pub mod error;
pub mod fwht;
pub mod harness;
pub mod lsqr;
pub mod problem;
pub mod roots;
pub mod rpc;
pub mod sketch;
pub mod solvers;

pub use error::{Error, Result};
pub use problem::{
    eps_optimality, relative_accuracy, relative_residual_profile, solve_ols, LSProblem, OlsMethod,
    PhaseTimings, SolverReport, SpectralData,
};
pub use rpc::{rpc_oracle, solve_rpc, solve_rpc_sketched, solve_rpc_with_spectral, RpcParams, RpcSolution};
pub use sketch::{sketch_flops_estimate, SketchKind, SketchOperator, SketchSpec};
pub use solvers::SketchedProblem;
