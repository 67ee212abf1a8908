//! Central finite-difference checks of user callbacks and solver derivatives.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merit::{eval_merit, eval_merit_gradient};
use crate::problem::{Iterate, Params, ProblemSpec, SolverConstants};
use crate::residual::{eval_grad_phi_funneled, eval_jacobian, eval_phi_funneled, eval_residual};

const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivCheck {
    pub name: String,
    /// `max ||analytic - fd||_inf / max(||fd||_inf, 1)` over all points.
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl DerivCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivReport {
    pub problem: String,
    pub points: usize,
    pub checks: Vec<DerivCheck>,
}

impl DerivReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(DerivCheck::passed)
    }
}

/// Central-difference Jacobian of `f` at `x`, one column per coordinate.
fn fd_jacobian(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: &DVector<f64>,
) -> DMatrix<f64> {
    let f0 = f(x);
    let mut out = DMatrix::zeros(f0.len(), x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h[j];
        xm[j] -= h[j];
        out.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h[j])));
    }
    out
}

fn rel_error(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    (analytic - fd).amax() / fd.amax().max(1.0)
}

fn steps_for(v: &DVector<f64>) -> DVector<f64> {
    v.map(|e| FD_STEP * e.abs().max(1.0))
}

/// Random `x` strictly inside the box, at least 5% of the width from each
/// bound, with `||c(x)||_inf <= epsilon / 2`. Points are pulled toward the
/// default start until they fit the funnel.
pub fn sample_point(
    prob: &ProblemSpec,
    consts: &SolverConstants,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let (lo, hi) = (prob.x_lower(), prob.x_upper());
    let anchor = prob.default_x0();
    let raw = DVector::from_fn(prob.n(), |i, _| {
        lo[i] + rng.gen_range(0.05..0.95) * (hi[i] - lo[i])
    });
    let mut s = 1.0;
    for _ in 0..60 {
        let x = &anchor + (&raw - &anchor) * s;
        if prob.constraints(&x).amax() <= 0.5 * consts.epsilon {
            return Ok(x);
        }
        s *= 0.7;
    }
    Err(Error::InvalidProblem(format!(
        "{}: default start is not inside the funnel",
        prob.name()
    )))
}

/// Random full iterate and parameters around a sampled `x`.
pub fn sample_iterate(
    prob: &ProblemSpec,
    consts: &SolverConstants,
    rng: &mut ChaCha8Rng,
) -> Result<(Iterate, Params)> {
    let x = sample_point(prob, consts, rng)?;
    let (n, m) = (prob.n(), prob.m());
    let mut uniform =
        |len: usize, a: f64, b: f64| DVector::from_fn(len, |_, _| rng.gen_range(a..b));
    let lambda = uniform(m, -1.0, 1.0);
    let mu_l = uniform(n, 0.1, 2.0);
    let mu_r = uniform(n, 0.1, 2.0);
    let lambda_hat = uniform(m, -1.0, 1.0);
    let tau = 10f64.powf(rng.gen_range(-3.0..-1.0));
    Ok((
        Iterate {
            x,
            lambda,
            mu_l,
            mu_r,
        },
        Params { tau, lambda_hat },
    ))
}

struct Tracker(Vec<DerivCheck>);

impl Tracker {
    fn update(&mut self, name: &str, tolerance: f64, err: f64) {
        match self.0.iter_mut().find(|c| c.name == name) {
            Some(c) => c.max_rel_error = c.max_rel_error.max(err),
            None => self.0.push(DerivCheck {
                name: name.to_string(),
                max_rel_error: err,
                tolerance,
            }),
        }
    }
}

/// Runs all checks at `points` random interior points:
/// problem callbacks (gradient, Jacobian, Lagrangian Hessian), the merit
/// gradient, the gradient of `phi` plus funnel, and the Jacobian of `F`
/// with the funnel switched off.
pub fn check_derivatives(
    prob: &ProblemSpec,
    consts: &SolverConstants,
    seed: u64,
    points: usize,
) -> Result<DerivReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (prob.n(), prob.m());
    let mut t = Tracker(Vec::new());
    let no_funnel = SolverConstants {
        tau_tilde: 0.0,
        ..consts.clone()
    };

    for _ in 0..points {
        let (z, p) = sample_iterate(prob, consts, &mut rng)?;
        let x = &z.x;
        let hx = steps_for(x);

        let fd = fd_jacobian(&|x| DVector::from_element(1, prob.objective(x)), x, &hx);
        let g = prob.objective_gradient(x);
        t.update(
            "objective_gradient",
            1e-6,
            rel_error(&DMatrix::from_row_slice(1, n, g.as_slice()), &fd),
        );

        let fd = fd_jacobian(&|x| prob.constraints(x), x, &hx);
        t.update(
            "constraint_jacobian",
            1e-6,
            rel_error(&prob.constraint_jacobian(x).transpose(), &fd),
        );

        let y = &p.lambda_hat + &z.lambda;
        let fd = fd_jacobian(
            &|x| prob.objective_gradient(x) - prob.constraint_jacobian(x) * &y,
            x,
            &hx,
        );
        t.update(
            "lagrangian_hessian",
            1e-5,
            rel_error(&prob.lagrangian_hessian(x, &y), &fd),
        );

        let fd = fd_jacobian(
            &|x| DVector::from_element(1, eval_phi_funneled(x, prob, consts)),
            x,
            &hx,
        );
        let g = eval_grad_phi_funneled(x, prob, consts)?;
        t.update(
            "phi_gradient",
            1e-6,
            rel_error(&DMatrix::from_row_slice(1, n, g.as_slice()), &fd),
        );

        let v = z.to_vector();
        let hv = steps_for(&v);
        let merit = |v: &DVector<f64>| {
            DVector::from_element(
                1,
                eval_merit(&Iterate::from_vector(v, n, m), &p, prob, consts).value,
            )
        };
        let fd = fd_jacobian(&merit, &v, &hv);
        let g = eval_merit_gradient(&z, &p, prob, consts)?;
        t.update(
            "merit_gradient",
            1e-5,
            rel_error(&DMatrix::from_row_slice(1, g.len(), g.as_slice()), &fd),
        );

        let residual = |v: &DVector<f64>| {
            eval_residual(&Iterate::from_vector(v, n, m), &p, prob, &no_funnel)
                .map(|r| r.to_vector())
                .unwrap_or_else(|_| DVector::from_element(3 * n + m, f64::NAN))
        };
        let fd = fd_jacobian(&residual, &v, &hv);
        let dense = eval_jacobian(&z, &p, prob, &no_funnel)?.to_dense(no_funnel.rho);
        t.update("residual_jacobian", 1e-5, rel_error(&dense, &fd));
    }
    Ok(DerivReport {
        problem: prob.name().to_string(),
        points,
        checks: t.0,
    })
}
