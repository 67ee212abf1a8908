//! The root function `F(z, p)`, its Jacobian, the penalty-barrier objective
//! and the funnel term.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{Iterate, Params, ProblemSpec, SolverConstants};

/// The four blocks of `F(z, p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlocks {
    pub dual: DVector<f64>,
    pub primal: DVector<f64>,
    pub comp_l: DVector<f64>,
    pub comp_r: DVector<f64>,
}

impl ResidualBlocks {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            dual: DVector::zeros(n),
            primal: DVector::zeros(m),
            comp_l: DVector::zeros(n),
            comp_r: DVector::zeros(n),
        }
    }

    pub fn inf_norm(&self) -> f64 {
        [&self.dual, &self.primal, &self.comp_l, &self.comp_r]
            .iter()
            .map(|b| b.amax())
            .fold(0.0, f64::max)
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let (n, m) = (self.dual.len(), self.primal.len());
        let mut v = DVector::zeros(3 * n + m);
        v.rows_mut(0, n).copy_from(&self.dual);
        v.rows_mut(n, m).copy_from(&self.primal);
        v.rows_mut(n + m, n).copy_from(&self.comp_l);
        v.rows_mut(2 * n + m, n).copy_from(&self.comp_r);
        v
    }

    pub fn from_vector(v: &DVector<f64>, n: usize, m: usize) -> Self {
        Self {
            dual: v.rows(0, n).into_owned(),
            primal: v.rows(n, m).into_owned(),
            comp_l: v.rows(n + m, n).into_owned(),
            comp_r: v.rows(2 * n + m, n).into_owned(),
        }
    }
}

fn check_funnel(c: &DVector<f64>, epsilon: f64) -> Result<()> {
    match c.iter().position(|ci| !(ci.abs() < epsilon)) {
        Some(index) => Err(Error::FunnelDomain {
            index,
            value: c[index],
        }),
        None => Ok(()),
    }
}

/// Funnel multiplier `w_i = tt/(eps + c_i) - tt/(eps - c_i)`; identically zero
/// when the funnel is disabled.
pub fn eval_w(c: &DVector<f64>, consts: &SolverConstants) -> Result<DVector<f64>> {
    if !consts.funnel_enabled() {
        return Ok(DVector::zeros(c.len()));
    }
    check_funnel(c, consts.epsilon)?;
    let (tt, eps) = (consts.tau_tilde, consts.epsilon);
    Ok(c.map(|ci| tt / (eps + ci) - tt / (eps - ci)))
}

/// `dw_i/dc_i`, strictly negative inside the funnel.
pub fn eval_w_derivative(c: &DVector<f64>, consts: &SolverConstants) -> Result<DVector<f64>> {
    if !consts.funnel_enabled() {
        return Ok(DVector::zeros(c.len()));
    }
    check_funnel(c, consts.epsilon)?;
    let (tt, eps) = (consts.tau_tilde, consts.epsilon);
    Ok(c.map(|ci| -tt / (eps + ci).powi(2) - tt / (eps - ci).powi(2)))
}

/// Evaluates `F(z, p)`.
pub fn eval_residual(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> Result<ResidualBlocks> {
    let c = prob.constraints(&z.x);
    let w = eval_w(&c, consts)?;
    let jac = prob.constraint_jacobian(&z.x);
    let (d_l, d_r) = prob.box_gaps(&z.x);
    let multiplier = &p.lambda_hat + &z.lambda + &w;

    let dual = prob.objective_gradient(&z.x) - &jac * multiplier
        + prob.scaling() * &z.x * consts.rho
        - &z.mu_l
        + &z.mu_r;
    let primal = c + &p.lambda_hat * consts.omega + &z.lambda * consts.beta();
    let comp_l = z.mu_l.component_mul(&d_l).add_scalar(-p.tau);
    let comp_r = z.mu_r.component_mul(&d_r).add_scalar(-p.tau);
    Ok(ResidualBlocks {
        dual,
        primal,
        comp_l,
        comp_r,
    })
}

/// Blocks of the quasi-Newton Jacobian `DF(z, p)`:
///
/// ```text
/// [ H + rho S   -J           -I        I       ]
/// [ J'          (w+wt) I      0        0       ]
/// [ diag(mu_l)   0           diag(d_l) 0       ]
/// [-diag(mu_r)   0            0        diag(d_r)]
/// ```
///
/// with `H` the Lagrangian Hessian at multiplier `lambda_hat + lambda + w(x)`.
/// The curvature of the funnel term `w(x)` is left out of the dual row.
#[derive(Clone, Debug)]
pub struct JacobianParts {
    pub hessian: DMatrix<f64>,
    pub jac: DMatrix<f64>,
    pub scaling: DMatrix<f64>,
    pub d_l: DVector<f64>,
    pub d_r: DVector<f64>,
    pub mu_l: DVector<f64>,
    pub mu_r: DVector<f64>,
    pub rho: f64,
    pub omega: f64,
    pub omega_tilde: f64,
}

impl JacobianParts {
    pub fn n(&self) -> usize {
        self.d_l.len()
    }

    pub fn m(&self) -> usize {
        self.jac.ncols()
    }

    pub fn beta(&self) -> f64 {
        self.omega + self.omega_tilde
    }

    /// Upper left block with the convexization weight replaced by `rho_tilde`.
    pub fn shifted_hessian(&self, rho_tilde: f64) -> DMatrix<f64> {
        &self.hessian + &self.scaling * rho_tilde
    }

    /// Dense `(3n+m) x (3n+m)` matrix; `rho_tilde = rho` gives `DF` itself.
    pub fn to_dense(&self, rho_tilde: f64) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut a = DMatrix::zeros(3 * n + m, 3 * n + m);
        let (il, ir) = (n + m, 2 * n + m);
        a.view_mut((0, 0), (n, n))
            .copy_from(&self.shifted_hessian(rho_tilde));
        a.view_mut((0, n), (n, m)).copy_from(&(-&self.jac));
        a.view_mut((n, 0), (m, n)).copy_from(&self.jac.transpose());
        for j in 0..m {
            a[(n + j, n + j)] = self.beta();
        }
        for i in 0..n {
            a[(i, il + i)] = -1.0;
            a[(i, ir + i)] = 1.0;
            a[(il + i, i)] = self.mu_l[i];
            a[(il + i, il + i)] = self.d_l[i];
            a[(ir + i, i)] = -self.mu_r[i];
            a[(ir + i, ir + i)] = self.d_r[i];
        }
        a
    }

    /// Matrix-free product of the shifted Jacobian with a stacked direction.
    pub fn apply(&self, rho_tilde: f64, dz: &DVector<f64>) -> ResidualBlocks {
        let (n, m) = (self.n(), self.m());
        let dx = dz.rows(0, n);
        let dlam = dz.rows(n, m);
        let dml = dz.rows(n + m, n);
        let dmr = dz.rows(2 * n + m, n);
        ResidualBlocks {
            dual: self.shifted_hessian(rho_tilde) * dx - &self.jac * dlam - dml + dmr,
            primal: self.jac.tr_mul(&dx) + dlam * self.beta(),
            comp_l: self.mu_l.component_mul(&dx) + self.d_l.component_mul(&dml),
            comp_r: -self.mu_r.component_mul(&dx) + self.d_r.component_mul(&dmr),
        }
    }
}

pub fn eval_jacobian(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> Result<JacobianParts> {
    let c = prob.constraints(&z.x);
    let w = eval_w(&c, consts)?;
    let multiplier = &p.lambda_hat + &z.lambda + &w;
    let (d_l, d_r) = prob.box_gaps(&z.x);
    Ok(JacobianParts {
        hessian: prob.lagrangian_hessian(&z.x, &multiplier),
        jac: prob.constraint_jacobian(&z.x),
        scaling: prob.scaling().clone(),
        d_l,
        d_r,
        mu_l: z.mu_l.clone(),
        mu_r: z.mu_r.clone(),
        rho: consts.rho,
        omega: consts.omega,
        omega_tilde: consts.omega_tilde,
    })
}

fn log_barrier(prob: &ProblemSpec, x: &DVector<f64>) -> Option<f64> {
    let (d_l, d_r) = prob.box_gaps(x);
    if d_l.iter().chain(d_r.iter()).any(|&d| !(d > 0.0)) {
        return None;
    }
    Some(d_l.iter().chain(d_r.iter()).map(|d| d.ln()).sum())
}

/// `-sum(log(eps + c) + log(eps - c))`, `None` outside the funnel.
pub(crate) fn funnel_barrier(c: &DVector<f64>, epsilon: f64) -> Option<f64> {
    if c.iter().any(|ci| !(ci.abs() < epsilon)) {
        return None;
    }
    Some(
        -c.iter()
            .map(|ci| (epsilon + ci).ln() + (epsilon - ci).ln())
            .sum::<f64>(),
    )
}

/// Penalty-barrier objective
/// `f + rho/2 x'Sx + |c|^2/(2 omega) - tau_end * sum(log(x - xl) + log(xr - x))`.
/// Returns `+inf` outside the open box.
pub fn eval_phi(x: &DVector<f64>, prob: &ProblemSpec, consts: &SolverConstants) -> f64 {
    let Some(barrier) = log_barrier(prob, x) else {
        return f64::INFINITY;
    };
    let c = prob.constraints(x);
    prob.objective(x)
        + 0.5 * consts.rho * x.dot(&(prob.scaling() * x))
        + c.norm_squared() / (2.0 * consts.omega)
        - consts.tau_end * barrier
}

/// `phi` plus the funnel barrier `tau_tilde * funnel_barrier(c)`; `+inf`
/// outside the box or the funnel.
pub fn eval_phi_funneled(x: &DVector<f64>, prob: &ProblemSpec, consts: &SolverConstants) -> f64 {
    let phi = eval_phi(x, prob, consts);
    if !consts.funnel_enabled() || phi == f64::INFINITY {
        return phi;
    }
    match funnel_barrier(&prob.constraints(x), consts.epsilon) {
        Some(fb) => phi + consts.tau_tilde * fb,
        None => f64::INFINITY,
    }
}

/// Gradient of [`eval_phi_funneled`]. A root of `F` with `lambda = 0` and
/// `tau = tau_end` is a zero of this gradient.
pub fn eval_grad_phi_funneled(
    x: &DVector<f64>,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> Result<DVector<f64>> {
    prob.strictly_inside(x)?;
    let c = prob.constraints(x);
    let w = eval_w(&c, consts)?;
    let jac = prob.constraint_jacobian(x);
    let (d_l, d_r) = prob.box_gaps(x);
    let te = consts.tau_end;
    Ok(
        prob.objective_gradient(x)
            + prob.scaling() * x * consts.rho
            + &jac * (c / consts.omega - w)
            - d_l.map(|d| te / d)
            + d_r.map(|d| te / d),
    )
}
