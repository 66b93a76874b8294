//! Scenario files, Monte Carlo studies, reports and the `mavdesign` command
//! line on top of [`mavdesign_core`].

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod parallel;
pub mod report;
pub mod scenario;
pub mod simulation;

pub use mavdesign_core as core;

pub use error::{Error, Result};
pub use parallel::{optimize_parallel, THREADS_ENV};
pub use scenario::{load_design, load_named_design, load_scenario, NamedDesign, Scenario};
pub use simulation::{gen_data, run_mse_study, Method, MseRow, StudySpec};
