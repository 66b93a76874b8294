//! Bayesian optimal designs for model averaging in nested dose-response models.
//!
//! The crate is `no_std` with `alloc`. File formats, the command line and
//! simulation live in the `mavdesign` crate.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#![no_std]

extern crate alloc;

pub mod criterion;
pub mod error;
pub mod fitting;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod quadrature;
pub mod rounding;
pub mod sensitivity;
pub mod solver;
pub mod targets;

pub use criterion::{
    bias_nu, fisher_point, h_vector, info_matrix, l_matrix, phi_bayes, phi_local, variance_tau2,
    CriterionReport, DesignState, MavProblem, PriorAtom, PriorSpec,
};
pub use error::{DesignError, Result};
pub use model::{
    build_candidate, grad_eta, mean_eta, normalize_design, AveragingScheme, Candidate,
    CandidateSubset, Design, DesignSpace, MeanModel, Misspecification, ModelFamily,
    NormalizeOptions, ParamVector,
};
pub use sensitivity::{check_optimality, d1, d2, d_pi, h_tilde, SensitivityReport};
pub use targets::{eval_target, target_grad_full, target_grad_sub, TargetFunctional, TargetKind};
pub use optimizer::{
    evaluate_and_compare, optimize_design, ComparisonRow, OptimResult, OptimizerOptions,
};
pub use rounding::efficient_round;
pub use fitting::{
    estimate_target, fit_candidates, fit_mle, select_aic, smooth_aic_weights, Dataset, FitResult,
};
