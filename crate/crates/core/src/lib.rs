//! CMA-ES with a radial basis function surrogate.
//!
//! The crate provides a plain (mu/mu_w, lambda)-CMA-ES, a surrogate-assisted
//! variant that fits a cubic RBF on encoded archive points and periodically
//! moves the CMA mean to the surrogate's minimizer inside a small trust box,
//! and the benchmark suite and experiment protocols used to compare them.

// `!(a > b)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod cma;
pub mod controller;
pub mod encoding;
pub mod error;
pub mod local_search;
pub mod objective;
pub mod sao;
pub mod seed;
pub mod surrogate;

pub use cma::{default_params, gen_cma, init_cma, Bounds, Candidate, CmaParams, CmaState};
pub use controller::{ranking_error, SurrogateController};
pub use encoding::{inv_sqrt_cov, EncodingTransform};
pub use error::{Error, Result};
pub use local_search::{find_surrogate_minimum, trust_box, TrustBox};
pub use objective::{Counting, Objective, ObjectiveKind};
pub use sao::{
    inject_best, run_cma_es, run_cma_sao, speedup, Aggregate, RunRecord, RunResult, SaoConfig,
    SigmaRate,
};
pub use surrogate::{build_surrogate, fit_rbf, Archive, RbfKernel, RbfModel};
