//! Penalty-barrier interior point solver for
//!
//! ```text
//! min f(x)  s.t.  c(x) = 0,  x_lower <= x <= x_upper
//! ```
//!
//! built from three nested loops: barrier reduction, a modified augmented
//! Lagrangian update of the multiplier estimate, and a globalized
//! quasi-Newton root finder for the first-order system.

// `!(a < b)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod derivcheck;
pub mod driver;
pub mod error;
pub mod inner;
pub mod merit;
pub mod outer;
pub mod problem;
pub mod registry;
pub mod residual;
pub mod saddle;
pub mod trace;

pub use driver::{solve, SolveOutcome, SolveReport, SolveStatus};
pub use error::{Error, Result};
pub use problem::{Iterate, Params, ProblemFunctions, ProblemSpec, SolverConstants};
