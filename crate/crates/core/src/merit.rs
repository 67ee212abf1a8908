//! Primal-dual merit function used by the inner line search.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::{Iterate, Params, ProblemSpec, SolverConstants};
use crate::residual::{eval_w, funnel_barrier};

/// Merit value, `+inf` when `z` is outside the domain (box, positive
/// multipliers, funnel).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeritValue {
    pub value: f64,
    pub domain_ok: bool,
}

impl MeritValue {
    const OUTSIDE: Self = Self {
        value: f64::INFINITY,
        domain_ok: false,
    };
}

/// `-sum(log u + 1 - u)` for `u = mu * d / tau`; each summand is >= 0 and
/// vanishes at `u = 1`.
fn proximity(mu: &DVector<f64>, d: &DVector<f64>, tau: f64) -> f64 {
    -mu.iter()
        .zip(d.iter())
        .map(|(m, d)| {
            let u = m * d / tau;
            u.ln() + 1.0 - u
        })
        .sum::<f64>()
}

pub fn eval_merit(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> MeritValue {
    let (d_l, d_r) = prob.box_gaps(&z.x);
    let positive = |v: &DVector<f64>| v.iter().all(|&e| e > 0.0);
    if !(positive(&d_l) && positive(&d_r) && positive(&z.mu_l) && positive(&z.mu_r)) {
        return MeritValue::OUTSIDE;
    }
    let c = prob.constraints(&z.x);
    let funnel = if consts.funnel_enabled() {
        match funnel_barrier(&c, consts.epsilon) {
            Some(v) => consts.tau_tilde * v,
            None => return MeritValue::OUTSIDE,
        }
    } else {
        0.0
    };
    let (omega, omega_t, tau, nu) = (consts.omega, consts.omega_tilde, p.tau, consts.nu);
    let lagrangian = prob.objective(&z.x) - p.lambda_hat.dot(&c);
    let shifted = &c + (&p.lambda_hat + &z.lambda) * omega;
    let primal = &c + &p.lambda_hat * omega + &z.lambda * consts.beta();
    let log_sum: f64 = d_l.iter().chain(d_r.iter()).map(|d| d.ln()).sum();

    let value = lagrangian
        + funnel
        + shifted.norm_squared() / (2.0 * omega_t)
        + 0.5 * consts.rho * z.x.dot(&(prob.scaling() * &z.x))
        + 0.5 * omega * z.lambda.norm_squared()
        - tau * log_sum
        + nu / (2.0 * omega_t) * primal.norm_squared()
        + nu * tau * (proximity(&z.mu_l, &d_l, tau) + proximity(&z.mu_r, &d_r, tau));
    if value.is_nan() {
        return MeritValue::OUTSIDE;
    }
    MeritValue {
        value,
        domain_ok: true,
    }
}

/// Analytic gradient of [`eval_merit`] with respect to `(x, lambda, mu_l, mu_r)`.
pub fn eval_merit_gradient(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> Result<DVector<f64>> {
    z.check_interior(prob)?;
    let (n, m) = (prob.n(), prob.m());
    let (omega, omega_t, tau, nu) = (consts.omega, consts.omega_tilde, p.tau, consts.nu);
    let c = prob.constraints(&z.x);
    let w = eval_w(&c, consts)?;
    let jac = prob.constraint_jacobian(&z.x);
    let (d_l, d_r) = prob.box_gaps(&z.x);

    let shifted = &c + (&p.lambda_hat + &z.lambda) * omega;
    let primal = &c + &p.lambda_hat * omega + &z.lambda * consts.beta();
    let inv_l = d_l.map(|d| tau / d);
    let inv_r = d_r.map(|d| tau / d);

    let in_range = -(&p.lambda_hat + &w) + &shifted / omega_t + &primal * (nu / omega_t);
    let grad_x =
        prob.objective_gradient(&z.x) + &jac * in_range + prob.scaling() * &z.x * consts.rho
            - &inv_l * (1.0 + nu)
            + &inv_r * (1.0 + nu)
            + (&z.mu_l - &z.mu_r) * nu;
    let grad_lambda =
        &shifted * (omega / omega_t) + &z.lambda * omega + &primal * (nu * consts.beta() / omega_t);
    let grad_mu_l = (&d_l - z.mu_l.map(|v| tau / v)) * nu;
    let grad_mu_r = (&d_r - z.mu_r.map(|v| tau / v)) * nu;

    let mut g = DVector::zeros(3 * n + m);
    g.rows_mut(0, n).copy_from(&grad_x);
    g.rows_mut(n, m).copy_from(&grad_lambda);
    g.rows_mut(n + m, n).copy_from(&grad_mu_l);
    g.rows_mut(2 * n + m, n).copy_from(&grad_mu_r);
    Ok(g)
}

/// `grad M(z, p)' dz`.
pub fn directional_derivative(
    z: &Iterate,
    p: &Params,
    dz: &DVector<f64>,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> Result<f64> {
    let g = eval_merit_gradient(z, p, prob, consts)?;
    if g.len() != dz.len() {
        return Err(Error::Dimension(format!(
            "direction has {} entries, expected {}",
            dz.len(),
            g.len()
        )));
    }
    Ok(g.dot(dz))
}
