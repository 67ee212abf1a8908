//! Step computation for the primal-dual system.
//!
//! The trailing `2n + m` rows of the step system have negative definite
//! diagonal blocks once rescaled, so the saddle matrix has the inertia
//! `(n, 2n + m, 0)` exactly when the Schur complement
//!
//! ```text
//! K = H + rho_t S + diag(mu_l / d_l) + diag(mu_r / d_r) + J J' / (omega + omega_t)
//! ```
//!
//! is positive definite. Inertia correction therefore reduces to trying a
//! Cholesky factorization of `K` and growing `rho_t` until it succeeds.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::problem::{Iterate, ProblemSpec, SolverConstants};
use crate::residual::{JacobianParts, ResidualBlocks};

const RHO_TILDE_CAP: f64 = 1e40;

/// Schur complement of the step system with the data needed to recover the
/// eliminated components.
#[derive(Clone, Debug)]
pub struct CondensedSystem {
    pub matrix: DMatrix<f64>,
    jac: DMatrix<f64>,
    beta: f64,
    d_l: DVector<f64>,
    d_r: DVector<f64>,
    mu_l: DVector<f64>,
    mu_r: DVector<f64>,
}

impl CondensedSystem {
    /// Condenses the system whose dual row reads
    /// `upper_left dx - J dlambda - dmu_l + dmu_r = -r_dual`.
    pub fn assemble(
        upper_left: &DMatrix<f64>,
        jac: &DMatrix<f64>,
        beta: f64,
        d_l: &DVector<f64>,
        d_r: &DVector<f64>,
        mu_l: &DVector<f64>,
        mu_r: &DVector<f64>,
    ) -> Result<Self> {
        for (name, v) in [
            ("x - x_lower", d_l),
            ("x_upper - x", d_r),
            ("mu_l", mu_l),
            ("mu_r", mu_r),
        ] {
            if let Some(i) = v.iter().position(|&e| !(e > 0.0)) {
                return Err(Error::NotInterior(format!("{name}[{i}] = {}", v[i])));
            }
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidConstant(
                "omega + omega_tilde must be positive".into(),
            ));
        }
        let mut matrix = upper_left + jac * jac.transpose() / beta;
        for i in 0..d_l.len() {
            matrix[(i, i)] += mu_l[i] / d_l[i] + mu_r[i] / d_r[i];
        }
        Ok(Self {
            matrix,
            jac: jac.clone(),
            beta,
            d_l: d_l.clone(),
            d_r: d_r.clone(),
            mu_l: mu_l.clone(),
            mu_r: mu_r.clone(),
        })
    }

    /// `None` when the matrix is not numerically positive definite.
    pub fn factor(&self) -> Option<Cholesky<f64, Dyn>> {
        let chol = Cholesky::new(self.matrix.clone())?;
        let diag = chol.l_dirty().diagonal();
        if diag.iter().all(|d| d.is_finite() && *d > 0.0) {
            Some(chol)
        } else {
            None
        }
    }

    /// Right-hand side of the condensed equation `K dx = rhs`.
    pub fn rhs(&self, res: &ResidualBlocks) -> DVector<f64> {
        -&res.dual - &self.jac * &res.primal / self.beta - res.comp_l.component_div(&self.d_l)
            + res.comp_r.component_div(&self.d_r)
    }

    /// Back-substitutes `dx` into the stacked step `(dx, dlambda, dmu_l, dmu_r)`.
    pub fn expand(&self, dx: &DVector<f64>, res: &ResidualBlocks) -> DVector<f64> {
        let (n, m) = (dx.len(), self.jac.ncols());
        let dlambda = -(&res.primal + self.jac.tr_mul(dx)) / self.beta;
        let dmu_l = -(&res.comp_l + self.mu_l.component_mul(dx)).component_div(&self.d_l);
        let dmu_r = (self.mu_r.component_mul(dx) - &res.comp_r).component_div(&self.d_r);
        let mut dz = DVector::zeros(3 * n + m);
        dz.rows_mut(0, n).copy_from(dx);
        dz.rows_mut(n, m).copy_from(&dlambda);
        dz.rows_mut(n + m, n).copy_from(&dmu_l);
        dz.rows_mut(2 * n + m, n).copy_from(&dmu_r);
        dz
    }

    pub fn solve_with(&self, chol: &Cholesky<f64, Dyn>, res: &ResidualBlocks) -> DVector<f64> {
        let dx = chol.solve(&self.rhs(res));
        self.expand(&dx, res)
    }
}

/// `K(rho_tilde)` for the quasi-Newton Jacobian.
pub fn condense(parts: &JacobianParts, rho_tilde: f64) -> Result<CondensedSystem> {
    CondensedSystem::assemble(
        &parts.shifted_hessian(rho_tilde),
        &parts.jac,
        parts.beta(),
        &parts.d_l,
        &parts.d_r,
        &parts.mu_l,
        &parts.mu_r,
    )
}

#[derive(Clone, Debug)]
pub struct StepResult {
    /// Stacked `(dx, dlambda, dmu_l, dmu_r)`.
    pub dz: DVector<f64>,
    pub rho_tilde_used: f64,
    pub inertia_shifts: usize,
    /// `||DF_shifted dz + F||_inf`.
    pub newton_residual: f64,
}

/// Solves `DF_shifted dz = -F`, growing `rho_tilde` from `rho` (or from half
/// of `warm_start`, when given) until the condensed matrix factors.
pub fn solve_step(
    res: &ResidualBlocks,
    parts: &JacobianParts,
    consts: &SolverConstants,
    warm_start: Option<f64>,
) -> Result<StepResult> {
    let mut rho_tilde = match warm_start {
        Some(prev) => parts.rho.max(0.5 * prev),
        None => parts.rho,
    };
    let mut shifts = 0;
    loop {
        let system = condense(parts, rho_tilde)?;
        if let Some(chol) = system.factor() {
            let dz = system.solve_with(&chol, res);
            let mut check = parts.apply(rho_tilde, &dz);
            check.dual += &res.dual;
            check.primal += &res.primal;
            check.comp_l += &res.comp_l;
            check.comp_r += &res.comp_r;
            return Ok(StepResult {
                dz,
                rho_tilde_used: rho_tilde,
                inertia_shifts: shifts,
                newton_residual: check.inf_norm(),
            });
        }
        rho_tilde = if shifts == 0 {
            (rho_tilde * consts.rho_tilde_growth)
                .max(1e-8 * parts.hessian.amax())
                .max(1e-20)
        } else {
            rho_tilde * consts.rho_tilde_growth
        };
        shifts += 1;
        if rho_tilde > RHO_TILDE_CAP || !rho_tilde.is_finite() {
            return Err(Error::Conditioning { rho_tilde });
        }
    }
}

/// Largest `alpha` keeping `x + alpha dx` in the closed box and
/// `mu + alpha dmu >= 0`; `+inf` if the direction never reaches the boundary.
pub fn max_step_to_boundary(z: &Iterate, dz: &DVector<f64>, prob: &ProblemSpec) -> f64 {
    let (n, m) = (z.n(), z.m());
    let mut alpha = f64::INFINITY;
    let (d_l, d_r) = prob.box_gaps(&z.x);
    for i in 0..n {
        let dx = dz[i];
        if dx < 0.0 {
            alpha = alpha.min(d_l[i] / -dx);
        } else if dx > 0.0 {
            alpha = alpha.min(d_r[i] / dx);
        }
        let dml = dz[n + m + i];
        if dml < 0.0 {
            alpha = alpha.min(z.mu_l[i] / -dml);
        }
        let dmr = dz[2 * n + m + i];
        if dmr < 0.0 {
            alpha = alpha.min(z.mu_r[i] / -dmr);
        }
    }
    alpha
}
