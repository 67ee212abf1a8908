//! Inner iteration: globalized quasi-Newton root finding on `F(., p)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merit::{directional_derivative, eval_merit};
use crate::problem::{Iterate, Params, ProblemSpec, SolverConstants};
use crate::residual::{eval_jacobian, eval_residual};
use crate::saddle::{max_step_to_boundary, solve_step};

/// Relative slack in the Armijo test that absorbs rounding in merit values.
pub const ARMIJO_ROUNDING_SLACK: f64 = 10.0 * f64::EPSILON;

/// One accepted inner step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerRecord {
    pub iter: usize,
    /// `||F(z, p)||_inf` before the step.
    pub residual_norm: f64,
    pub merit: f64,
    pub merit_new: f64,
    pub slope: f64,
    pub alpha: f64,
    pub alpha_init: f64,
    pub alpha_box: f64,
    pub rho_tilde: f64,
    pub inertia_shifts: usize,
    pub backtracks: usize,
    pub newton_residual: f64,
    /// `||c(x)||_inf` after the step.
    pub constraint_norm: f64,
    /// `||lambda||_inf` after the step.
    pub lambda_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerTrace {
    pub records: Vec<InnerRecord>,
    pub final_residual: f64,
}

impl InnerTrace {
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn factorizations(&self) -> usize {
        self.records.iter().map(|r| r.inertia_shifts + 1).sum()
    }

    /// Residual norms at every visited iterate, the final one included.
    pub fn residuals(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.residual_norm)
            .chain(std::iter::once(self.final_residual))
            .collect()
    }
}

/// Armijo test with a rounding allowance proportional to `|merit|`.
pub fn armijo_accepts(merit: f64, merit_new: f64, alpha: f64, slope: f64, armijo_c: f64) -> bool {
    merit_new <= merit + armijo_c * alpha * slope + ARMIJO_ROUNDING_SLACK * merit.abs().max(1.0)
}

/// Runs quasi-Newton steps with an Armijo backtracking line search on the
/// merit function until `||F(z, p)||_inf <= tol`.
pub fn inner_solve(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> Result<(Iterate, InnerTrace)> {
    let mut z = z.clone();
    z.check_interior(prob)?;
    let mut trace = InnerTrace::default();
    let mut rho_memo: Option<f64> = None;

    loop {
        let res = eval_residual(&z, p, prob, consts)?;
        let res_norm = res.inf_norm();
        if res_norm <= consts.tol {
            trace.final_residual = res_norm;
            return Ok((z, trace));
        }
        if trace.steps() >= consts.max_inner {
            trace.final_residual = res_norm;
            return Err(Error::InnerNonConvergence {
                max_iter: consts.max_inner,
                trace: Box::new(trace),
            });
        }

        let parts = eval_jacobian(&z, p, prob, consts)?;
        let step = solve_step(&res, &parts, consts, rho_memo)?;
        rho_memo = Some(step.rho_tilde_used);
        let slope = directional_derivative(&z, p, &step.dz, prob, consts)?;
        let alpha_box = max_step_to_boundary(&z, &step.dz, prob);
        let alpha_init = (consts.theta * alpha_box).min(1.0);
        let merit = eval_merit(&z, p, prob, consts).value;

        let mut alpha = alpha_init;
        let mut backtracks = 0;
        let (trial, merit_new) = loop {
            let trial = z.stepped(alpha, &step.dz);
            let mv = eval_merit(&trial, p, prob, consts);
            if mv.domain_ok && armijo_accepts(merit, mv.value, alpha, slope, consts.armijo_c) {
                break (trial, mv.value);
            }
            backtracks += 1;
            if backtracks > consts.max_backtracks {
                trace.final_residual = res_norm;
                return Err(Error::LineSearchFailure {
                    backtracks,
                    slope,
                    trace: Box::new(trace),
                });
            }
            alpha *= consts.backtrack;
        };

        trace.records.push(InnerRecord {
            iter: trace.steps(),
            residual_norm: res_norm,
            merit,
            merit_new,
            slope,
            alpha,
            alpha_init,
            alpha_box,
            rho_tilde: step.rho_tilde_used,
            inertia_shifts: step.inertia_shifts,
            backtracks,
            newton_residual: step.newton_residual,
            constraint_norm: prob.constraints(&trial.x).amax(),
            lambda_norm: trial.lambda.amax(),
        });
        z = trial;
    }
}
