//! Problem definition, solver constants and the primal-dual state.
//!
//! A problem is a smooth objective `f`, equality constraints `c` (any number,
//! `m > n` is fine), a strict box `x_lower < x < x_upper` and a positive
//! definite scaling matrix `S` for the convexization term `rho/2 * x'Sx`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Callbacks describing `f` and `c`.
///
/// Implementations must be free of side effects; one problem instance may be
/// shared between solves running on different threads.
pub trait ProblemFunctions: Send + Sync {
    fn objective(&self, x: &DVector<f64>) -> f64;

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    fn constraints(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `n x m` matrix whose column `i` is the gradient of `c_i`.
    fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `∇²f(x) − Σ y_i ∇²c_i(x)`.
    fn lagrangian_hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64>;
}

pub struct ProblemSpec {
    name: String,
    n: usize,
    m: usize,
    functions: Box<dyn ProblemFunctions>,
    x_lower: DVector<f64>,
    x_upper: DVector<f64>,
    scaling: DMatrix<f64>,
    is_linear: bool,
    default_x0: Option<DVector<f64>>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("is_linear", &self.is_linear)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Builds a problem and checks its static invariants: finite strict
    /// bounds, a symmetric positive definite `S`, and a vanishing Hessian when
    /// `is_linear` is claimed.
    pub fn new(
        name: impl Into<String>,
        m: usize,
        functions: Box<dyn ProblemFunctions>,
        x_lower: DVector<f64>,
        x_upper: DVector<f64>,
        scaling: DMatrix<f64>,
        is_linear: bool,
    ) -> Result<Self> {
        let n = x_lower.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidProblem("n and m must be positive".into()));
        }
        if x_upper.len() != n || scaling.nrows() != n || scaling.ncols() != n {
            return Err(Error::Dimension(format!(
                "bounds/scaling do not match n = {n}"
            )));
        }
        for i in 0..n {
            let (lo, up) = (x_lower[i], x_upper[i]);
            if !lo.is_finite() || !up.is_finite() || lo >= up {
                return Err(Error::InvalidProblem(format!(
                    "bound {i}: need finite x_lower < x_upper, got [{lo}, {up}]"
                )));
            }
        }
        check_spd(&scaling)?;

        let spec = Self {
            name: name.into(),
            n,
            m,
            functions,
            x_lower,
            x_upper,
            scaling,
            is_linear,
            default_x0: None,
        };

        let mid = spec.midpoint();
        let c = spec.constraints(&mid);
        let jac = spec.constraint_jacobian(&mid);
        if c.len() != m || jac.nrows() != n || jac.ncols() != m {
            return Err(Error::Dimension(format!(
                "constraint callbacks disagree with m = {m}"
            )));
        }
        if is_linear {
            let h = spec.lagrangian_hessian(&mid, &DVector::from_element(m, 1.0));
            if h.amax() != 0.0 {
                return Err(Error::InvalidProblem(
                    "problem flagged linear but its Lagrangian Hessian is nonzero".into(),
                ));
            }
        }
        Ok(spec)
    }

    pub fn with_default_x0(mut self, x0: DVector<f64>) -> Self {
        self.default_x0 = Some(x0);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn x_lower(&self) -> &DVector<f64> {
        &self.x_lower
    }

    pub fn x_upper(&self) -> &DVector<f64> {
        &self.x_upper
    }

    pub fn scaling(&self) -> &DMatrix<f64> {
        &self.scaling
    }

    pub fn is_linear(&self) -> bool {
        self.is_linear
    }

    /// Suggested starting point; falls back to the box midpoint.
    pub fn default_x0(&self) -> DVector<f64> {
        self.default_x0.clone().unwrap_or_else(|| self.midpoint())
    }

    pub fn midpoint(&self) -> DVector<f64> {
        (&self.x_lower + &self.x_upper) * 0.5
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.functions.objective(x)
    }

    pub fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.functions.objective_gradient(x)
    }

    pub fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        self.functions.constraints(x)
    }

    pub fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.functions.constraint_jacobian(x)
    }

    pub fn lagrangian_hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        self.functions.lagrangian_hessian(x, y)
    }

    /// Distances to the lower and upper bounds.
    pub fn box_gaps(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (x - &self.x_lower, &self.x_upper - x)
    }

    pub fn strictly_inside(&self, x: &DVector<f64>) -> Result<()> {
        for i in 0..self.n {
            if !(x[i] > self.x_lower[i] && x[i] < self.x_upper[i]) {
                return Err(Error::OutsideBox { index: i });
            }
        }
        Ok(())
    }
}

fn check_spd(s: &DMatrix<f64>) -> Result<()> {
    let asym = (s - s.transpose()).amax();
    if asym > 1e-12 * s.amax().max(1.0) {
        return Err(Error::InvalidProblem(
            "scaling matrix S is not symmetric".into(),
        ));
    }
    if Cholesky::new(s.clone()).is_none() {
        return Err(Error::InvalidProblem(
            "scaling matrix S is not positive definite".into(),
        ));
    }
    Ok(())
}

/// Fixed scalars of the method. Values marked "chosen" have no prescribed
/// value in the method description and can be overridden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConstants {
    /// Convexization weight rho.
    pub rho: f64,
    /// Quadratic penalty omega.
    pub omega: f64,
    /// Relaxed augmented Lagrangian penalty, must exceed `omega` (chosen).
    pub omega_tilde: f64,
    /// Final barrier parameter.
    pub tau_end: f64,
    /// Initial barrier parameter (chosen).
    pub tau_init: f64,
    /// Funnel barrier weight; 0 disables the funnel (chosen).
    pub tau_tilde: f64,
    /// Funnel half-width.
    pub epsilon: f64,
    /// Dual weight of the merit function (chosen).
    pub nu: f64,
    /// Fraction-to-the-boundary coefficient (chosen).
    pub theta: f64,
    /// KKT residual tolerance.
    pub tol: f64,
    /// Outer acceptance multiplier (chosen).
    pub chi: f64,
    /// Barrier reduction factor outside lp mode.
    pub sigma: f64,
    /// Armijo sufficient-decrease constant (chosen).
    pub armijo_c: f64,
    /// Backtracking shrink factor (chosen).
    pub backtrack: f64,
    /// Growth factor of the inertia shift (chosen).
    pub rho_tilde_growth: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub max_outermost: usize,
    pub max_backtracks: usize,
    /// Use the path-following schedule `sigma = 1 - 0.1/sqrt(2n)` for affine problems.
    pub lp_mode: bool,
    /// After convergence, polish the final iterate with extra Newton and
    /// outer steps at `tau_end` (chosen).
    pub refine: bool,
}

impl Default for SolverConstants {
    fn default() -> Self {
        Self {
            rho: 1e-8,
            omega: 1e-8,
            omega_tilde: 1e-4,
            tau_end: 1e-8,
            tau_init: 1e-1,
            tau_tilde: 1e-6,
            epsilon: 0.1,
            nu: 1.0,
            theta: 0.995,
            tol: 1e-8,
            chi: 100.0,
            sigma: 0.1,
            armijo_c: 1e-4,
            backtrack: 0.5,
            rho_tilde_growth: 10.0,
            max_inner: 200,
            max_outer: 20_000,
            max_outermost: 5000,
            max_backtracks: 60,
            lp_mode: false,
            refine: true,
        }
    }
}

impl SolverConstants {
    pub const KEYS: &'static [&'static str] = &[
        "rho",
        "omega",
        "omega_tilde",
        "tau_end",
        "tau_init",
        "tau_tilde",
        "epsilon",
        "nu",
        "theta",
        "tol",
        "chi",
        "sigma",
        "armijo_c",
        "backtrack",
        "rho_tilde_growth",
        "max_inner",
        "max_outer",
        "max_outermost",
        "max_backtracks",
        "lp_mode",
        "refine",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConstant(what.to_string()));
        let positive = [
            ("rho", self.rho),
            ("omega", self.omega),
            ("tau_end", self.tau_end),
            ("tau_init", self.tau_init),
            ("epsilon", self.epsilon),
            ("nu", self.nu),
            ("tol", self.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.omega_tilde > self.omega && self.omega_tilde.is_finite()) {
            return bad("need 0 < omega < omega_tilde");
        }
        if !(self.tau_tilde >= 0.0 && self.tau_tilde.is_finite()) {
            return bad("tau_tilde must be >= 0");
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("theta", self.theta),
            ("armijo_c", self.armijo_c),
            ("backtrack", self.backtrack),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(&format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if !(self.chi >= 1.0) {
            return bad("chi must be >= 1");
        }
        if !(self.rho_tilde_growth > 1.0) {
            return bad("rho_tilde_growth must exceed 1");
        }
        Ok(())
    }

    /// Assigns one constant by name from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let float = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}` as a number")))
        };
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}` as a count")))
        };
        let flag = || {
            value
                .parse::<bool>()
                .map_err(|_| Error::Config(format!("`{key}`: expected true/false, got `{value}`")))
        };
        match key.trim() {
            "rho" => self.rho = float()?,
            "omega" => self.omega = float()?,
            "omega_tilde" => self.omega_tilde = float()?,
            "tau_end" => self.tau_end = float()?,
            "tau_init" => self.tau_init = float()?,
            "tau_tilde" => self.tau_tilde = float()?,
            "epsilon" => self.epsilon = float()?,
            "nu" => self.nu = float()?,
            "theta" => self.theta = float()?,
            "tol" => self.tol = float()?,
            "chi" => self.chi = float()?,
            "sigma" => self.sigma = float()?,
            "armijo_c" => self.armijo_c = float()?,
            "backtrack" => self.backtrack = float()?,
            "rho_tilde_growth" => self.rho_tilde_growth = float()?,
            "max_inner" => self.max_inner = count()?,
            "max_outer" => self.max_outer = count()?,
            "max_outermost" => self.max_outermost = count()?,
            "max_backtracks" => self.max_backtracks = count()?,
            "lp_mode" => self.lp_mode = flag()?,
            "refine" => self.refine = flag()?,
            other => {
                return Err(Error::Config(format!(
                    "unknown constant `{other}`; known: {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn funnel_enabled(&self) -> bool {
        self.tau_tilde > 0.0
    }

    /// `omega + omega_tilde`, the weight of `lambda` in the primal residual.
    pub fn beta(&self) -> f64 {
        self.omega + self.omega_tilde
    }
}

/// Primal-dual iterate `z = (x, lambda, mu_l, mu_r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu_l: DVector<f64>,
    pub mu_r: DVector<f64>,
}

impl Iterate {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.lambda.len()
    }

    /// Stacks the iterate in the order `(x, lambda, mu_l, mu_r)`.
    pub fn to_vector(&self) -> DVector<f64> {
        let (n, m) = (self.n(), self.m());
        let mut v = DVector::zeros(3 * n + m);
        v.rows_mut(0, n).copy_from(&self.x);
        v.rows_mut(n, m).copy_from(&self.lambda);
        v.rows_mut(n + m, n).copy_from(&self.mu_l);
        v.rows_mut(2 * n + m, n).copy_from(&self.mu_r);
        v
    }

    pub fn from_vector(v: &DVector<f64>, n: usize, m: usize) -> Self {
        assert_eq!(v.len(), 3 * n + m, "stacked iterate has the wrong length");
        Self {
            x: v.rows(0, n).into_owned(),
            lambda: v.rows(n, m).into_owned(),
            mu_l: v.rows(n + m, n).into_owned(),
            mu_r: v.rows(2 * n + m, n).into_owned(),
        }
    }

    /// `self + alpha * dz` with `dz` stacked like [`Iterate::to_vector`].
    pub fn stepped(&self, alpha: f64, dz: &DVector<f64>) -> Self {
        let (n, m) = (self.n(), self.m());
        Self {
            x: &self.x + dz.rows(0, n) * alpha,
            lambda: &self.lambda + dz.rows(n, m) * alpha,
            mu_l: &self.mu_l + dz.rows(n + m, n) * alpha,
            mu_r: &self.mu_r + dz.rows(2 * n + m, n) * alpha,
        }
    }

    /// Membership in the strictly interior set: x inside the box, positive
    /// bound multipliers.
    pub fn check_interior(&self, prob: &ProblemSpec) -> Result<()> {
        prob.strictly_inside(&self.x)?;
        if let Some(i) = self.mu_l.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NotInterior(format!("mu_l[{i}] = {}", self.mu_l[i])));
        }
        if let Some(i) = self.mu_r.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NotInterior(format!("mu_r[{i}] = {}", self.mu_r[i])));
        }
        Ok(())
    }
}

/// Parameters `p = (tau, lambda_hat)` changed only by the outer loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub tau: f64,
    pub lambda_hat: DVector<f64>,
}

/// Accepts `x0` if it is strictly inside the box and, with the funnel
/// enabled, strictly inside the funnel `||c(x0)||_inf < epsilon`.
pub fn validate_initial_point(
    prob: &ProblemSpec,
    consts: &SolverConstants,
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    if x0.len() != prob.n() {
        return Err(Error::Dimension(format!(
            "x0 has {} entries, problem has n = {}",
            x0.len(),
            prob.n()
        )));
    }
    prob.strictly_inside(x0)?;
    if consts.funnel_enabled() {
        let norm = prob.constraints(x0).amax();
        if !(norm < consts.epsilon) {
            return Err(Error::FunnelInfeasible {
                norm,
                epsilon: consts.epsilon,
            });
        }
    }
    Ok(x0.clone())
}
