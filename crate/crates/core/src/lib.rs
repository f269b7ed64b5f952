//! Multi-fidelity Bayesian hyperparameter optimization.
//!
//! Hyperband brackets produce evaluations at a geometric ladder of resource
//! levels. Every level gets its own random-forest surrogate, the surrogates are
//! combined into a weighted ensemble, and the weights track how well each
//! level's surrogate ranks the full-resource results. New brackets are seeded
//! with the configurations that maximize expected improvement under that
//! ensemble.
//!
//! ```no_run
//! use hoist::objectives::CurveBench;
//! use hoist::optimizer::{run, Mode, RunOptions};
//!
//! let options = RunOptions { mode: Mode::Hoist, max_resource: 27.0, seed: 7, ..RunOptions::default() };
//! let result = run(&CurveBench::space(), &CurveBench, &options).unwrap();
//! println!("best loss {}", result.incumbent().unwrap().loss);
//! ```
//!
//! The `examples/` directory has one runnable program per component.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod history;
pub mod objectives;
pub mod optimizer;
pub mod scheduler;
pub mod space;
pub mod store;
pub mod surrogate;

pub use error::{EvalError, HoistError, Result};
