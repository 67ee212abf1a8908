//! Outer iteration: modified augmented Lagrangian updates of `lambda_hat`.
//!
//! A trial step `alpha` moves `lambda_hat` to `lambda_hat + alpha * lambda`.
//! Instead of shifting `lambda` by hand, the new iterate is recomputed from
//! an auxiliary system that models `F(z_trial, p(alpha)) = 0` around the
//! incumbent `x`: gradient, constraint values and constraint Jacobian are
//! frozen at `x`, `c` is linearized, and the Lagrangian Hessian enters through
//! its positive semidefinite part. The system is the barrier KKT system of a
//! strictly convex problem, so a damped Newton iteration solves it; for affine
//! `f` and `c` it coincides with `F(., p(alpha)) = 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{inner_solve, InnerTrace};
use crate::problem::{Iterate, Params, ProblemSpec, SolverConstants};
use crate::residual::{eval_residual, eval_w, eval_w_derivative, ResidualBlocks};
use crate::saddle::CondensedSystem;

/// Newton step cap for the auxiliary solve.
pub const MAX_AUX_STEPS: usize = 100;
/// Smallest outer trial step before the outer iteration gives up.
pub const ALPHA_MIN: f64 = 1e-8;

/// Quantities frozen at the incumbent iterate for one outer step.
#[derive(Clone, Debug)]
pub struct AuxSystemData {
    pub x: DVector<f64>,
    pub grad_f: DVector<f64>,
    pub c: DVector<f64>,
    pub jac: DMatrix<f64>,
    /// Positive semidefinite part of the Lagrangian Hessian at `x`.
    pub curvature: DMatrix<f64>,
    scaling: DMatrix<f64>,
    x_lower: DVector<f64>,
    x_upper: DVector<f64>,
}

fn psd_part(h: DMatrix<f64>) -> DMatrix<f64> {
    let sym = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

impl AuxSystemData {
    /// Freezes the data at `z`; the Hessian uses the multiplier
    /// `p.lambda_hat + z.lambda + w(x)`.
    pub fn freeze(
        z: &Iterate,
        p: &Params,
        prob: &ProblemSpec,
        consts: &SolverConstants,
    ) -> Result<Self> {
        let c = prob.constraints(&z.x);
        let curvature = if prob.is_linear() {
            DMatrix::zeros(prob.n(), prob.n())
        } else {
            let w = eval_w(&c, consts)?;
            psd_part(prob.lagrangian_hessian(&z.x, &(&p.lambda_hat + &z.lambda + w)))
        };
        Ok(Self {
            x: z.x.clone(),
            grad_f: prob.objective_gradient(&z.x),
            jac: prob.constraint_jacobian(&z.x),
            c,
            curvature,
            scaling: prob.scaling().clone(),
            x_lower: prob.x_lower().clone(),
            x_upper: prob.x_upper().clone(),
        })
    }

    /// Linearized constraint values at `x_trial`.
    pub fn model_constraints(&self, x_trial: &DVector<f64>) -> DVector<f64> {
        &self.c + self.jac.tr_mul(&(x_trial - &self.x))
    }

    /// Residual of the auxiliary system at `zt` for parameters `pa`.
    pub fn residual(
        &self,
        zt: &Iterate,
        pa: &Params,
        consts: &SolverConstants,
    ) -> Result<ResidualBlocks> {
        let c_model = self.model_constraints(&zt.x);
        let w = eval_w(&c_model, consts)?;
        let shift = &zt.x - &self.x;
        let dual = &self.grad_f + &self.curvature * &shift
            - &self.jac * (&pa.lambda_hat + &zt.lambda + w)
            + &self.scaling * &zt.x * consts.rho
            - &zt.mu_l
            + &zt.mu_r;
        let primal = c_model + &pa.lambda_hat * consts.omega + &zt.lambda * consts.beta();
        let comp_l = zt
            .mu_l
            .component_mul(&(&zt.x - &self.x_lower))
            .add_scalar(-pa.tau);
        let comp_r = zt
            .mu_r
            .component_mul(&(&self.x_upper - &zt.x))
            .add_scalar(-pa.tau);
        Ok(ResidualBlocks {
            dual,
            primal,
            comp_l,
            comp_r,
        })
    }

    fn condensed(&self, zt: &Iterate, consts: &SolverConstants) -> Result<CondensedSystem> {
        let c_model = self.model_constraints(&zt.x);
        let funnel_weight = -eval_w_derivative(&c_model, consts)?;
        let upper_left = &self.curvature
            + &self.scaling * consts.rho
            + &self.jac * DMatrix::from_diagonal(&funnel_weight) * self.jac.transpose();
        CondensedSystem::assemble(
            &upper_left,
            &self.jac,
            consts.beta(),
            &(&zt.x - &self.x_lower),
            &(&self.x_upper - &zt.x),
            &zt.mu_l,
            &zt.mu_r,
        )
    }

    fn interior(&self, zt: &Iterate) -> bool {
        let inside =
            (0..self.x.len()).all(|i| zt.x[i] > self.x_lower[i] && zt.x[i] < self.x_upper[i]);
        inside && zt.mu_l.iter().chain(zt.mu_r.iter()).all(|&v| v > 0.0)
    }
}

/// Damped Newton on the auxiliary system, warm started at `warm`, until its
/// residual is at most `0.1 * tol`. Returns the solution and the Newton step
/// count.
pub fn solve_auxiliary_frozen(
    data: &AuxSystemData,
    warm: &Iterate,
    pa: &Params,
    consts: &SolverConstants,
) -> Result<(Iterate, usize)> {
    let target = 0.1 * consts.tol;
    let mut zt = warm.clone();
    if !data.interior(&zt) {
        return Err(Error::NotInterior("auxiliary warm start".into()));
    }
    let mut res = data.residual(&zt, pa, consts)?;
    for steps in 0..=MAX_AUX_STEPS {
        let res_norm = res.inf_norm();
        if res_norm <= target {
            return Ok((zt, steps));
        }
        if steps == MAX_AUX_STEPS {
            break;
        }
        let system = data.condensed(&zt, consts)?;
        let chol = system.factor().ok_or(Error::Conditioning {
            rho_tilde: consts.rho,
        })?;
        let dz = system.solve_with(&chol, &res);
        let alpha_box = max_step_to_boundary_frozen(data, &zt, &dz);
        let mut alpha = (consts.theta * alpha_box).min(1.0);
        let norm2 = res.to_vector().norm();
        let mut accepted = None;
        for _ in 0..=consts.max_backtracks {
            let trial = zt.stepped(alpha, &dz);
            if data.interior(&trial) {
                if let Ok(r) = data.residual(&trial, pa, consts) {
                    if r.to_vector().norm() <= (1.0 - 1e-4 * alpha) * norm2 {
                        accepted = Some((trial, r));
                        break;
                    }
                }
            }
            alpha *= consts.backtrack;
        }
        match accepted {
            Some((trial, r)) => {
                zt = trial;
                res = r;
            }
            None => {
                return Err(Error::AuxiliaryStall {
                    steps,
                    residual: res_norm,
                })
            }
        }
    }
    Err(Error::AuxiliaryStall {
        steps: MAX_AUX_STEPS,
        residual: res.inf_norm(),
    })
}

fn max_step_to_boundary_frozen(data: &AuxSystemData, zt: &Iterate, dz: &DVector<f64>) -> f64 {
    let (n, m) = (zt.n(), zt.m());
    let mut alpha = f64::INFINITY;
    for i in 0..n {
        let dx = dz[i];
        if dx < 0.0 {
            alpha = alpha.min((zt.x[i] - data.x_lower[i]) / -dx);
        } else if dx > 0.0 {
            alpha = alpha.min((data.x_upper[i] - zt.x[i]) / dx);
        }
        for (mu, d) in [(zt.mu_l[i], dz[n + m + i]), (zt.mu_r[i], dz[2 * n + m + i])] {
            if d < 0.0 {
                alpha = alpha.min(mu / -d);
            }
        }
    }
    alpha
}

/// Solves the auxiliary system for `p_alpha`, using `z` both as the point
/// where the data are frozen and as the warm start.
pub fn solve_auxiliary(
    z: &Iterate,
    p_alpha: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> Result<Iterate> {
    z.check_interior(prob)?;
    let data = AuxSystemData::freeze(z, p_alpha, prob, consts)?;
    solve_auxiliary_frozen(&data, z, p_alpha, consts).map(|(zt, _)| zt)
}

/// One trial of the outer step-length search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterTrial {
    pub alpha: f64,
    /// `||F(z_trial, p(alpha))||_inf`, `None` if the auxiliary solve failed
    /// or `z_trial` left the funnel.
    pub residual_norm: Option<f64>,
    pub aux_steps: usize,
    pub accepted: bool,
}

#[derive(Clone, Debug)]
pub struct MalmStep {
    pub z: Iterate,
    pub p: Params,
    pub alpha: f64,
    pub trials: Vec<OuterTrial>,
}

/// Tries `alpha = 1, 1/2, 1/4, ...` and accepts the first trial with
/// `||F(z_trial, p(alpha))||_inf <= chi * tol`.
pub fn malm_step(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> Result<MalmStep> {
    z.check_interior(prob)?;
    let data = AuxSystemData::freeze(z, p, prob, consts)?;
    let mut trials = Vec::new();
    let mut alpha: f64 = 1.0;
    let mut best = f64::INFINITY;
    while alpha >= ALPHA_MIN {
        let pa = Params {
            tau: p.tau,
            lambda_hat: &p.lambda_hat + &z.lambda * alpha,
        };
        let warm = Iterate {
            lambda: &z.lambda * (1.0 - alpha),
            ..z.clone()
        };
        let outcome = solve_auxiliary_frozen(&data, &warm, &pa, consts).and_then(|(zt, steps)| {
            let r = eval_residual(&zt, &pa, prob, consts)?.inf_norm();
            Ok((zt, steps, r))
        });
        match outcome {
            Ok((zt, aux_steps, r)) => {
                let accepted = r <= consts.chi * consts.tol;
                best = best.min(r);
                trials.push(OuterTrial {
                    alpha,
                    residual_norm: Some(r),
                    aux_steps,
                    accepted,
                });
                if accepted {
                    return Ok(MalmStep {
                        z: zt,
                        p: pa,
                        alpha,
                        trials,
                    });
                }
            }
            Err(_) => trials.push(OuterTrial {
                alpha,
                residual_norm: None,
                aux_steps: 0,
                accepted: false,
            }),
        }
        alpha *= 0.5;
    }
    Err(Error::OuterStall {
        alpha_min: ALPHA_MIN,
        best_residual: best,
    })
}

/// Progress reported by [`outer_solve_observed`].
#[derive(Debug)]
pub enum OuterEvent<'a> {
    Inner {
        trace: &'a InnerTrace,
        z: &'a Iterate,
        p: &'a Params,
    },
    Step {
        step: &'a MalmStep,
        /// `||F(z, p)||_inf` and `||lambda||_inf` at the incumbent before the step.
        residual_before: f64,
        lambda_before: f64,
        /// Step taken directly after a barrier update to recenter (lp mode).
        recenter: bool,
    },
}

/// Alternates inner solves and outer steps until `||lambda||_inf <= tol`
/// with `||F||_inf <= tol`.
pub fn outer_solve(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
) -> Result<(Iterate, Params)> {
    outer_solve_observed(z, p, prob, consts, false, &mut |_| {})
}

/// [`outer_solve`] with an event callback. With `recenter_first`, an outer
/// step is taken before the first inner solve; for affine problems that step
/// lands on the central path of the current barrier parameter.
pub fn outer_solve_observed(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
    recenter_first: bool,
    observer: &mut dyn FnMut(OuterEvent<'_>),
) -> Result<(Iterate, Params)> {
    let mut z = z.clone();
    let mut p = p.clone();
    let mut steps = 0;
    let mut recenter = recenter_first;

    if !recenter {
        let (zn, trace) = inner_solve(&z, &p, prob, consts)?;
        z = zn;
        observer(OuterEvent::Inner {
            trace: &trace,
            z: &z,
            p: &p,
        });
    }
    while recenter || z.lambda.amax() > consts.tol {
        if steps >= consts.max_outer {
            return Err(Error::OuterNonConvergence {
                max_iter: consts.max_outer,
            });
        }
        let residual_before = eval_residual(&z, &p, prob, consts)?.inf_norm();
        let lambda_before = z.lambda.amax();
        let step = malm_step(&z, &p, prob, consts)?;
        observer(OuterEvent::Step {
            step: &step,
            residual_before,
            lambda_before,
            recenter,
        });
        recenter = false;
        steps += 1;
        let (zn, trace) = inner_solve(&step.z, &step.p, prob, consts)?;
        z = zn;
        p = step.p;
        observer(OuterEvent::Inner {
            trace: &trace,
            z: &z,
            p: &p,
        });
    }
    Ok((z, p))
}
