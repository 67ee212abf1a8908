//! Outermost iteration: barrier reduction around the outer and inner loops,
//! initialization and result reporting.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::InnerTrace;
use crate::merit::eval_merit;
use crate::outer::{malm_step, outer_solve_observed, MalmStep, OuterEvent};
use crate::problem::{validate_initial_point, Iterate, Params, ProblemSpec, SolverConstants};
use crate::residual::{eval_grad_phi_funneled, eval_jacobian, eval_residual};
use crate::saddle::{max_step_to_boundary, solve_step};
use crate::trace::{EventKind, TraceRecord};

/// Barrier reduction factor: `sigma`, or `1 - 0.1/sqrt(2n)` in lp mode.
pub fn barrier_factor(consts: &SolverConstants, n: usize, lp_mode: bool) -> f64 {
    if lp_mode {
        1.0 - 0.1 / (2.0 * n as f64).sqrt()
    } else {
        consts.sigma
    }
}

/// Newton steps per polish; a step is taken only if it halves `||F||_inf`.
const MAX_POLISH: usize = 8;
/// Outer steps of the final refinement.
const MAX_REFINE_ROUNDS: usize = 30;
/// The refinement stops once `||lambda||_inf <= REFINE_LAMBDA * tol`.
const REFINE_LAMBDA: f64 = 1e-4;

/// Relative distance to `tau_end` below which the barrier parameter is
/// snapped to it, so rounding in the repeated products cannot add an update.
const TAU_SNAP: f64 = 1e-12;

/// `tau := max(sigma_eff * tau, tau_end)`.
pub fn update_tau(p: &Params, consts: &SolverConstants, n: usize, lp_mode: bool) -> Params {
    let tau = barrier_factor(consts, n, lp_mode) * p.tau;
    Params {
        tau: if tau <= consts.tau_end * (1.0 + TAU_SNAP) {
            consts.tau_end
        } else {
            tau
        },
        lambda_hat: p.lambda_hat.clone(),
    }
}

/// Number of barrier updates from `tau_init` down to `tau_end` under the
/// geometric schedule, `ceil(log(tau_end / tau0) / log(sigma_eff))`.
pub fn expected_outermost(consts: &SolverConstants, n: usize, lp_mode: bool) -> usize {
    let tau0 = consts.tau_init.max(consts.tau_end);
    if tau0 <= consts.tau_end {
        return 0;
    }
    let ratio = (consts.tau_end / tau0).ln() / barrier_factor(consts, n, lp_mode).ln();
    (ratio - 1e-9).ceil() as usize
}

/// Starting iterate: `lambda = 0`, `lambda_hat = 0`, bound multipliers
/// exactly central for `tau0 = max(tau_init, tau_end)`.
pub fn initialize(
    prob: &ProblemSpec,
    consts: &SolverConstants,
    x0: &DVector<f64>,
) -> Result<(Iterate, Params)> {
    let x = validate_initial_point(prob, consts, x0)?;
    let tau = consts.tau_init.max(consts.tau_end);
    let (d_l, d_r) = prob.box_gaps(&x);
    Ok((
        Iterate {
            lambda: DVector::zeros(prob.m()),
            mu_l: d_l.map(|d| tau / d),
            mu_r: d_r.map(|d| tau / d),
            x,
        },
        Params {
            tau,
            lambda_hat: DVector::zeros(prob.m()),
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    IterationCap,
    LineSearchFailure,
    OuterStall,
    ConditioningError,
    /// Evaluation left the domain of `F` (box or funnel) where no
    /// safeguard applies.
    NumericalError,
}

impl SolveStatus {
    fn from_error(err: &Error) -> Self {
        match err {
            Error::InnerNonConvergence { .. } | Error::OuterNonConvergence { .. } => {
                Self::IterationCap
            }
            Error::LineSearchFailure { .. } => Self::LineSearchFailure,
            Error::OuterStall { .. } | Error::AuxiliaryStall { .. } => Self::OuterStall,
            Error::Conditioning { .. } => Self::ConditioningError,
            _ => Self::NumericalError,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveCounters {
    pub outermost: usize,
    pub outer: usize,
    pub outer_trials: usize,
    /// Inner quasi-Newton steps (auxiliary solves excluded).
    pub inner_steps: usize,
    pub aux_newton_steps: usize,
    /// Cholesky factorizations in inner steps and auxiliary solves.
    pub factorizations: usize,
    pub inertia_shifts: usize,
    pub backtracks: usize,
    /// Outer steps of the final refinement.
    pub refine_outer: usize,
    /// Newton steps of the final refinement.
    pub polish_steps: usize,
    /// The refinement broke a convergence condition and was undone.
    pub refine_reverted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: String,
    pub status: SolveStatus,
    pub message: Option<String>,
    pub lp_mode: bool,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub mu_l: Vec<f64>,
    pub mu_r: Vec<f64>,
    pub tau: f64,
    pub objective: f64,
    pub residual_norm: f64,
    pub lambda_norm: f64,
    /// `||grad(phi + funnel)(x)||_inf`.
    pub stationarity_norm: Option<f64>,
    /// `10 tol (1 + ||grad f(x)||_inf)`.
    pub stationarity_bound: f64,
    pub constraint_norm: f64,
    /// `||c(x) + omega lambda_hat||_inf`.
    pub shifted_constraint_norm: f64,
    /// Stationarity check, evaluated on converged runs only.
    pub certificate_ok: Option<bool>,
    pub counters: SolveCounters,
    pub constants: SolverConstants,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub report: SolveReport,
    pub trace: Vec<TraceRecord>,
    pub z: Iterate,
    pub p: Params,
}

struct Recorder<'a> {
    prob: &'a ProblemSpec,
    consts: &'a SolverConstants,
    trace: Vec<TraceRecord>,
    counters: SolveCounters,
    z: Iterate,
    p: Params,
}

impl<'a> Recorder<'a> {
    fn record(&self, event: EventKind) -> TraceRecord {
        TraceRecord::new(
            event,
            self.counters.outermost,
            self.counters.outer,
            self.p.tau,
        )
    }

    fn inner_steps(&mut self, trace: &InnerTrace, tau: f64) {
        for r in &trace.records {
            let mut rec = self.record(EventKind::Inner);
            rec.tau = tau;
            rec.inner_iter = r.iter;
            rec.residual_norm = Some(r.residual_norm);
            rec.merit = Some(r.merit);
            rec.merit_new = Some(r.merit_new);
            rec.slope = Some(r.slope);
            rec.alpha = Some(r.alpha);
            rec.alpha_init = Some(r.alpha_init);
            rec.alpha_box = r.alpha_box.is_finite().then_some(r.alpha_box);
            rec.backtracks = Some(r.backtracks);
            rec.rho_tilde = Some(r.rho_tilde);
            rec.inertia_shifts = Some(r.inertia_shifts);
            rec.lambda_norm = Some(r.lambda_norm);
            rec.constraint_norm = Some(r.constraint_norm);
            self.trace.push(rec);
        }
        self.counters.inner_steps += trace.steps();
        self.counters.factorizations += trace.factorizations();
        self.counters.inertia_shifts += trace
            .records
            .iter()
            .map(|r| r.inertia_shifts)
            .sum::<usize>();
        self.counters.backtracks += trace.records.iter().map(|r| r.backtracks).sum::<usize>();
    }

    fn on_event(&mut self, event: OuterEvent<'_>) {
        match event {
            OuterEvent::Inner { trace, z, p } => {
                self.z = z.clone();
                self.p = p.clone();
                self.inner_steps(trace, p.tau);
                let mut rec = self.record(EventKind::InnerConverged);
                rec.inner_iter = trace.steps();
                rec.residual_norm = Some(trace.final_residual);
                rec.merit = Some(eval_merit(z, p, self.prob, self.consts).value);
                rec.lambda_norm = Some(z.lambda.amax());
                rec.constraint_norm = Some(self.prob.constraints(&z.x).amax());
                self.trace.push(rec);
            }
            OuterEvent::Step {
                step,
                residual_before,
                lambda_before,
                recenter,
            } => self.log_step(
                step,
                residual_before,
                lambda_before,
                recenter,
                EventKind::Outer,
            ),
        }
    }

    fn log_step(
        &mut self,
        step: &MalmStep,
        residual_before: f64,
        lambda_before: f64,
        recenter: bool,
        kind: EventKind,
    ) {
        if kind == EventKind::Outer {
            self.counters.outer += 1;
        } else {
            self.counters.refine_outer += 1;
        }
        for t in &step.trials {
            let mut rec = self.record(EventKind::OuterTrial);
            rec.alpha = Some(t.alpha);
            rec.residual_norm = t.residual_norm;
            rec.aux_steps = Some(t.aux_steps);
            rec.accepted = Some(t.accepted);
            self.trace.push(rec);
            self.counters.outer_trials += 1;
            self.counters.aux_newton_steps += t.aux_steps;
            self.counters.factorizations += t.aux_steps;
        }
        let mut rec = self.record(kind);
        rec.alpha = Some(step.alpha);
        rec.residual_norm = Some(residual_before);
        rec.lambda_norm = Some(lambda_before);
        rec.lambda_norm_after = Some(step.z.lambda.amax());
        rec.constraint_norm = Some(self.prob.constraints(&step.z.x).amax());
        rec.recenter = Some(recenter);
        self.trace.push(rec);
        self.z = step.z.clone();
        self.p = step.p.clone();
    }

    /// Newton steps on `F` at fixed `p` while each one halves the residual.
    fn polish(&mut self) -> Result<()> {
        let (prob, consts) = (self.prob, self.consts);
        let mut res = eval_residual(&self.z, &self.p, prob, consts)?;
        let mut norm = res.inf_norm();
        for _ in 0..MAX_POLISH {
            if norm == 0.0 {
                break;
            }
            let parts = eval_jacobian(&self.z, &self.p, prob, consts)?;
            let step = solve_step(&res, &parts, consts, None)?;
            let alpha = (consts.theta * max_step_to_boundary(&self.z, &step.dz, prob)).min(1.0);
            let trial = self.z.stepped(alpha, &step.dz);
            let Ok(trial_res) = eval_residual(&trial, &self.p, prob, consts) else {
                break;
            };
            let trial_norm = trial_res.inf_norm();
            if !(trial_norm <= 0.5 * norm) {
                break;
            }
            let mut rec = self.record(EventKind::Polish);
            rec.inner_iter = self.counters.polish_steps;
            rec.residual_norm = Some(norm);
            rec.residual_after = Some(trial_norm);
            rec.alpha = Some(alpha);
            rec.rho_tilde = Some(step.rho_tilde_used);
            rec.inertia_shifts = Some(step.inertia_shifts);
            rec.lambda_norm = Some(trial.lambda.amax());
            rec.constraint_norm = Some(prob.constraints(&trial.x).amax());
            self.trace.push(rec);
            self.counters.polish_steps += 1;
            self.counters.factorizations += step.inertia_shifts + 1;
            self.counters.inertia_shifts += step.inertia_shifts;
            self.z = trial;
            res = trial_res;
            norm = trial_norm;
        }
        Ok(())
    }

    /// Alternates polishing and outer steps at `tau_end` until `lambda` is
    /// far below `tol`. Near the solution `||F||_inf <= tol` leaves
    /// `c + omega lambda_hat` of order `tol`, which enters the gradient of
    /// `phi` divided by `omega`; the refinement removes that gap.
    fn refine(&mut self) -> Result<()> {
        let (prob, consts) = (self.prob, self.consts);
        for _ in 0..MAX_REFINE_ROUNDS {
            self.polish()?;
            let lambda_before = self.z.lambda.amax();
            if lambda_before <= REFINE_LAMBDA * consts.tol {
                return Ok(());
            }
            let residual_before = eval_residual(&self.z, &self.p, prob, consts)?.inf_norm();
            let step = malm_step(&self.z, &self.p, prob, consts)?;
            self.log_step(
                &step,
                residual_before,
                lambda_before,
                false,
                EventKind::RefineOuter,
            );
        }
        self.polish()
    }

    /// Runs [`Self::refine`] and undoes it unless the result still satisfies
    /// `||F||_inf <= tol` and `||lambda||_inf <= tol`.
    fn refine_or_revert(&mut self) {
        let (z0, p0) = (self.z.clone(), self.p.clone());
        let ok = self.refine().is_ok()
            && self.z.lambda.amax() <= self.consts.tol
            && eval_residual(&self.z, &self.p, self.prob, self.consts)
                .is_ok_and(|r| r.inf_norm() <= self.consts.tol);
        if !ok {
            self.z = z0;
            self.p = p0;
            self.counters.refine_reverted = true;
        }
    }

    fn outermost(&mut self, p_new: Params) -> Result<()> {
        let residual = eval_residual(&self.z, &self.p, self.prob, self.consts)?.inf_norm();
        self.counters.outermost += 1;
        let mut rec = self.record(EventKind::Outermost);
        rec.tau = p_new.tau;
        rec.residual_norm = Some(residual);
        rec.lambda_norm = Some(self.z.lambda.amax());
        rec.constraint_norm = Some(self.prob.constraints(&self.z.x).amax());
        self.trace.push(rec);
        self.p = p_new;
        Ok(())
    }

    /// Runs the loops; `Ok(status)` for every algorithmic outcome.
    fn run(&mut self) -> Result<SolveStatus> {
        let (prob, consts) = (self.prob, self.consts);
        let lp_mode = consts.lp_mode;
        let mut first = true;
        loop {
            if self.p.tau > consts.tau_end {
                if self.counters.outermost >= consts.max_outermost {
                    return Ok(SolveStatus::IterationCap);
                }
                let p_new = update_tau(&self.p, consts, prob.n(), lp_mode);
                self.outermost(p_new)?;
            } else if !first {
                break;
            }
            first = false;
            let (z, p) = (self.z.clone(), self.p.clone());
            let result =
                outer_solve_observed(&z, &p, prob, consts, lp_mode, &mut |ev| self.on_event(ev));
            match result {
                Ok((z, p)) => {
                    self.z = z;
                    self.p = p;
                }
                Err(err) => {
                    if let Error::InnerNonConvergence { trace, .. }
                    | Error::LineSearchFailure { trace, .. } = &err
                    {
                        let tau = self.p.tau;
                        self.inner_steps(trace, tau);
                    }
                    return Err(err);
                }
            }
            if self.p.tau <= consts.tau_end {
                break;
            }
        }
        if consts.refine {
            self.refine_or_revert();
        }
        Ok(SolveStatus::Converged)
    }

    fn report(&self, status: SolveStatus, message: Option<String>) -> SolveReport {
        let (prob, consts, z, p) = (self.prob, self.consts, &self.z, &self.p);
        let c = prob.constraints(&z.x);
        let grad_f = prob.objective_gradient(&z.x);
        let residual_norm = eval_residual(z, p, prob, consts)
            .map(|r| r.inf_norm())
            .unwrap_or(f64::NAN);
        let stationarity_norm = eval_grad_phi_funneled(&z.x, prob, consts)
            .ok()
            .map(|g| g.amax());
        let stationarity_bound = 10.0 * consts.tol * (1.0 + grad_f.amax());
        let converged = status == SolveStatus::Converged;
        SolveReport {
            problem: prob.name().to_string(),
            status,
            message,
            lp_mode: consts.lp_mode,
            x: z.x.iter().copied().collect(),
            lambda: z.lambda.iter().copied().collect(),
            lambda_hat: p.lambda_hat.iter().copied().collect(),
            mu_l: z.mu_l.iter().copied().collect(),
            mu_r: z.mu_r.iter().copied().collect(),
            tau: p.tau,
            objective: prob.objective(&z.x),
            residual_norm,
            lambda_norm: z.lambda.amax(),
            stationarity_norm,
            stationarity_bound,
            constraint_norm: c.amax(),
            shifted_constraint_norm: (&c + &p.lambda_hat * consts.omega).amax(),
            certificate_ok: converged
                .then(|| stationarity_norm.is_some_and(|s| s <= stationarity_bound)),
            counters: self.counters.clone(),
            constants: consts.clone(),
        }
    }
}

/// Runs the full method from `x0`. Invalid input (constants, start point,
/// lp mode on a nonlinear problem) is an error; every algorithmic failure
/// is reported through [`SolveReport::status`] with the trace so far.
pub fn solve(
    prob: &ProblemSpec,
    consts: &SolverConstants,
    x0: &DVector<f64>,
) -> Result<SolveOutcome> {
    consts.validate()?;
    if consts.lp_mode && !prob.is_linear() {
        return Err(Error::LpModeRequiresLinear);
    }
    let (z, p) = initialize(prob, consts, x0)?;
    let mut rec = Recorder {
        prob,
        consts,
        trace: Vec::new(),
        counters: SolveCounters::default(),
        z,
        p,
    };
    let (status, message) = match rec.run() {
        Ok(SolveStatus::IterationCap) => (
            SolveStatus::IterationCap,
            Some(format!(
                "barrier updates exceeded max_outermost = {}",
                consts.max_outermost
            )),
        ),
        Ok(status) => (status, None),
        Err(err) => (SolveStatus::from_error(&err), Some(err.to_string())),
    };
    Ok(SolveOutcome {
        report: rec.report(status, message),
        trace: rec.trace,
        z: rec.z,
        p: rec.p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::make_problem;

    #[test]
    fn tau_update_examples() {
        let consts = SolverConstants::default();
        let p = |tau| Params {
            tau,
            lambda_hat: DVector::zeros(1),
        };
        assert!((update_tau(&p(1e-2), &consts, 2, false).tau - 1e-3).abs() < 1e-18);
        assert_eq!(update_tau(&p(2e-8), &consts, 2, false).tau, 1e-8);
        let mut q = p(0.1);
        let mut count = 0;
        while q.tau > consts.tau_end {
            q = update_tau(&q, &consts, 2, false);
            count += 1;
        }
        assert_eq!(count, 7);
        assert_eq!(barrier_factor(&consts, 2, true), 0.95);
    }

    #[test]
    fn lp2_expected_count() {
        assert_eq!(
            expected_outermost(&SolverConstants::default(), 2, true),
            315
        );
        assert_eq!(expected_outermost(&SolverConstants::default(), 2, false), 7);
    }

    #[test]
    fn initial_duals_are_central() {
        let prob = make_problem("lp2").unwrap();
        let consts = SolverConstants::default();
        let (z, p) = initialize(&prob, &consts, &prob.default_x0()).unwrap();
        assert_eq!(p.tau, 0.1);
        assert!((z.mu_l[0] - 0.2).abs() < 1e-15);
        assert!((z.mu_l[1] - 0.4).abs() < 1e-15);
        let r = eval_residual(&z, &p, &prob, &consts).unwrap();
        assert!(r.comp_l.amax() < 1e-16 && r.comp_r.amax() < 1e-16);

        let no_funnel = SolverConstants {
            tau_tilde: 0.0,
            ..Default::default()
        };
        let (z, _) = initialize(&prob, &no_funnel, &prob.midpoint()).unwrap();
        assert_eq!(z.mu_l, z.mu_r);
    }

    #[test]
    fn zero_outermost_cap_stops_immediately() {
        let prob = make_problem("cvxqp").unwrap();
        let consts = SolverConstants {
            max_outermost: 0,
            ..Default::default()
        };
        let out = solve(&prob, &consts, &prob.default_x0()).unwrap();
        assert_eq!(out.report.status, SolveStatus::IterationCap);
        assert!(out.trace.is_empty());
        assert!(out.report.certificate_ok.is_none());
    }

    #[test]
    fn lp_mode_rejects_nonlinear_problems() {
        let prob = make_problem("rosenbrock-eq").unwrap();
        let consts = SolverConstants {
            lp_mode: true,
            ..Default::default()
        };
        assert!(matches!(
            solve(&prob, &consts, &prob.default_x0()),
            Err(Error::LpModeRequiresLinear)
        ));
    }

    #[test]
    fn cvxqp_converges() {
        let prob = make_problem("cvxqp").unwrap();
        let consts = SolverConstants::default();
        let out = solve(&prob, &consts, &prob.default_x0()).unwrap();
        let r = &out.report;
        assert_eq!(r.status, SolveStatus::Converged, "{:?}", r.message);
        assert_eq!(r.tau, consts.tau_end);
        assert!(r.lambda_norm <= consts.tol);
        assert!(r.residual_norm <= consts.tol);
        assert_eq!(r.counters.outermost, 7);
    }
}
