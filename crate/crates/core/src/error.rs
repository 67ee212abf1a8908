use thiserror::Error;

use crate::inner::InnerTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown problem `{name}`; available: {}", available.join(", "))]
    UnknownProblem {
        name: String,
        available: Vec<String>,
    },

    #[error("invalid problem definition: {0}")]
    InvalidProblem(String),

    #[error("invalid solver constant: {0}")]
    InvalidConstant(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A primal point on or outside the box `x_lower < x < x_upper`.
    #[error("component {index} of x is not strictly inside the box")]
    OutsideBox { index: usize },

    #[error(
        "initial point violates the funnel: ||c(x0)||_inf = {norm:e} >= epsilon = {epsilon:e}; \
         choose a larger epsilon or a more feasible x0"
    )]
    FunnelInfeasible { norm: f64, epsilon: f64 },

    /// Some |c_i(x)| >= epsilon, where the funnel barrier is undefined.
    #[error("constraint {index} = {value:e} leaves the funnel")]
    FunnelDomain { index: usize, value: f64 },

    #[error("iterate is not strictly interior: {0}")]
    NotInterior(String),

    #[error("inertia correction failed: rho_tilde = {rho_tilde:e} exceeds the cap")]
    Conditioning { rho_tilde: f64 },

    #[error("inner iteration did not converge within {max_iter} steps")]
    InnerNonConvergence {
        max_iter: usize,
        trace: Box<InnerTrace>,
    },

    #[error("line search failed after {backtracks} backtracks (slope = {slope:e})")]
    LineSearchFailure {
        backtracks: usize,
        slope: f64,
        trace: Box<InnerTrace>,
    },

    #[error("auxiliary system solve stalled after {steps} Newton steps (residual {residual:e})")]
    AuxiliaryStall { steps: usize, residual: f64 },

    #[error(
        "outer step length underflow: alpha < {alpha_min:e}, best trial residual {best_residual:e}"
    )]
    OuterStall { alpha_min: f64, best_residual: f64 },

    #[error("outer iteration did not converge within {max_iter} steps")]
    OuterNonConvergence { max_iter: usize },

    #[error("lp mode requires a problem flagged as linear")]
    LpModeRequiresLinear,

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
