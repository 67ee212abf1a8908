//! Acceptance checks, one `criterion N: PASS|FAIL` line each. Runs without
//! the libtest harness so the lines always reach stdout.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::time::Instant;

use common::*;
use malm_ipm::derivcheck::check_derivatives;
use malm_ipm::driver::expected_outermost;
use malm_ipm::registry::make_problem;
use malm_ipm::residual::{eval_jacobian, eval_residual};
use malm_ipm::saddle::solve_step;
use malm_ipm::trace::{EventKind, TraceRecord};
use malm_ipm::{solve, ProblemSpec, SolveOutcome, SolveStatus, SolverConstants};
use nalgebra::DVector;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        ok,
        detail: detail.into(),
    }
}

fn run(prob: &ProblemSpec, consts: &SolverConstants, x0: &DVector<f64>) -> SolveOutcome {
    solve(prob, consts, x0).expect("valid solver input")
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let consts = SolverConstants::default();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut ok = true;
    for name in ["lp2", "cubic1d", "cvxqp", "overdet", "rosenbrock-eq"] {
        let prob = make_problem(name).unwrap();
        let report = check_derivatives(&prob, &consts, 1, 20).unwrap();
        let err = |key: &str| {
            report
                .checks
                .iter()
                .find(|c| c.name == key)
                .map(|c| c.max_rel_error)
                .unwrap_or(f64::INFINITY)
        };
        let (m, p, j) = (
            err("merit_gradient"),
            err("phi_gradient"),
            err("residual_jacobian"),
        );
        ok &= m <= 1e-5 && p <= 1e-6 && j <= 1e-5;
        worst = (worst.0.max(m), worst.1.max(p), worst.2.max(j));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        ok && secs < 10.0,
        format!(
            "max rel err merit {:.1e}, phi {:.1e}, DF {:.1e}; {secs:.2} s",
            worst.0, worst.1, worst.2
        ),
    )
}

fn criterion_2() -> Verdict {
    let consts = SolverConstants::default();
    let (mut fidelity, mut oracle, mut count) = (0.0f64, 0.0f64, 0);
    let mut ok = true;
    let mut probs: Vec<ProblemSpec> = Vec::new();
    for (k, (n, m)) in [(1, 1), (2, 1), (3, 2), (4, 2), (5, 3), (5, 5)]
        .into_iter()
        .enumerate()
    {
        probs.push(random_qp(n, m, 500 + k as u64));
    }
    probs.push(make_problem("cvxqp").unwrap());
    probs.push(make_problem("overdet").unwrap());
    let mut r = rng(2);
    for prob in &probs {
        for _ in 0..10 {
            let (z, p) = random_iterate(prob, &consts, &mut r);
            let res = eval_residual(&z, &p, prob, &consts).unwrap();
            let parts = eval_jacobian(&z, &p, prob, &consts).unwrap();
            let step = solve_step(&res, &parts, &consts, None).unwrap();
            ok &= step.inertia_shifts == 0;
            let ratio = step.newton_residual / (1e-8 * (1.0 + res.inf_norm()));
            fidelity = fidelity.max(ratio);
            if prob.n() <= 5 && prob.m() <= 5 {
                let dense = dense_step(&z, &p, prob, &consts, step.rho_tilde_used);
                oracle = oracle.max(rel_err_vec(&step.dz, &dense));
            }
            count += 1;
        }
    }
    ok &= fidelity <= 1.0 && oracle <= 1e-10;
    verdict(
        ok,
        format!(
            "{count} steps; worst |DF dz + F| / bound {fidelity:.1e}; dense oracle rel diff {oracle:.1e}"
        ),
    )
}

fn criterion_3(traces: &[(&str, &[TraceRecord])], tol: f64) -> Verdict {
    let (mut checked, mut violations) = (0, 0);
    for (_, trace) in traces {
        for r in trace.iter().filter(|r| r.event == EventKind::Inner) {
            if r.residual_norm.unwrap_or(0.0) > tol {
                checked += 1;
                if !(r.slope.unwrap_or(f64::NAN) < 0.0) {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        violations == 0 && checked > 0,
        format!(
            "{checked} inner steps over {} solves, {violations} violations",
            traces.len()
        ),
    )
}

fn endpoint_ok(out: &SolveOutcome, consts: &SolverConstants) -> bool {
    let r = &out.report;
    r.status == SolveStatus::Converged
        && r.tau == consts.tau_end
        && r.lambda_norm <= consts.tol
        && r.residual_norm <= consts.tol
        && r.stationarity_norm
            .is_some_and(|s| s <= r.stationarity_bound)
}

fn criterion_4(outs: &[SolveOutcome], consts: &SolverConstants, secs: f64) -> Verdict {
    let mut ok = secs < 60.0;
    let mut parts = Vec::new();
    for out in outs {
        let r = &out.report;
        let pass = endpoint_ok(out, consts);
        ok &= pass;
        parts.push(format!(
            "{} {:.1e}/{:.1e}{}",
            r.problem,
            r.stationarity_norm.unwrap_or(f64::NAN),
            r.stationarity_bound,
            if pass { "" } else { " FAIL" }
        ));
    }
    verdict(
        ok,
        format!("grad phi / bound: {}; {secs:.2} s", parts.join(", ")),
    )
}

/// Residual sequence of the longest inner solve at `tau_end`.
fn longest_final_solve(trace: &[TraceRecord], tau_end: f64) -> Vec<f64> {
    let mut best: Vec<f64> = Vec::new();
    let mut current = Vec::new();
    for r in trace {
        match r.event {
            EventKind::Inner if r.tau == tau_end => current.push(r.residual_norm.unwrap()),
            EventKind::InnerConverged if r.tau == tau_end => {
                current.push(r.residual_norm.unwrap());
                if current.len() > best.len() {
                    best = current.clone();
                }
                current.clear();
            }
            _ => current.clear(),
        }
    }
    best
}

/// Largest `r_{k+1} / r_k^2` over the last three residuals.
fn tail_constant(seq: &[f64]) -> Option<(Vec<f64>, f64)> {
    if seq.len() < 3 {
        return None;
    }
    let tail = seq[seq.len() - 3..].to_vec();
    let c = tail
        .windows(2)
        .map(|w| w[1] / (w[0] * w[0]))
        .fold(0.0, f64::max);
    Some((tail, c))
}

fn criterion_5(default_run: &SolveOutcome) -> (Verdict, SolveOutcome) {
    let default_consts = SolverConstants::default();
    let default_len = longest_final_solve(&default_run.trace, default_consts.tau_end).len();
    // With the default tolerance every inner solve at tau_end needs a single
    // Newton step, so there is no three-term tail; start at tau_end with a
    // tighter tolerance instead.
    let consts = SolverConstants {
        tau_init: default_consts.tau_end,
        tol: 1e-10,
        ..Default::default()
    };
    let prob = make_problem("cvxqp").unwrap();
    let out = run(&prob, &consts, &prob.default_x0());
    let v = match tail_constant(&longest_final_solve(&out.trace, consts.tau_end)) {
        Some((tail, c)) => verdict(
            c < 1e4,
            format!(
                "tail {:?} C = {c:.2e} (tau_init = tau_end, tol = 1e-10; default run: at most {default_len} residuals per solve)",
                tail.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>()
            ),
        ),
        None => verdict(false, "no inner solve with three residuals at tau_end"),
    };
    (v, out)
}

fn criterion_6() -> (Verdict, Vec<SolveOutcome>) {
    let start = Instant::now();
    let consts = SolverConstants {
        lp_mode: true,
        ..Default::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    let mut outs = Vec::new();
    for name in ["lp2", "randlp"] {
        let prob = make_problem(name).unwrap();
        let out = run(&prob, &consts, &prob.default_x0());
        let trials: Vec<&TraceRecord> = out
            .trace
            .iter()
            .filter(|r| r.event == EventKind::OuterTrial)
            .collect();
        let all_unit = trials
            .iter()
            .all(|t| t.alpha == Some(1.0) && t.accepted == Some(true));
        let inner = out.report.counters.inner_steps;
        let expected = expected_outermost(&consts, prob.n(), true);
        let got = out.report.counters.outermost;
        let pass = out.report.converged() && all_unit && inner == 0 && got == expected;
        ok &= pass;
        parts.push(format!(
            "{name} (n={}): {} trials all alpha=1 {all_unit}, inner steps {inner}, outermost {got}/{expected}",
            prob.n(),
            trials.len()
        ));
        outs.push(out);
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 30.0;
    (
        verdict(ok, format!("{}; {secs:.2} s", parts.join("; "))),
        outs,
    )
}

fn criterion_7() -> (Verdict, Vec<SolveOutcome>) {
    let consts = SolverConstants::default();
    let eps = consts.epsilon;
    let lp2 = make_problem("lp2").unwrap();
    let rosen = make_problem("rosenbrock-eq").unwrap();
    let starts: Vec<(&ProblemSpec, DVector<f64>)> = vec![
        (&lp2, DVector::from_vec(vec![0.5, 0.25 - 0.9 * eps])),
        (&lp2, DVector::from_vec(vec![0.5, 0.25 + 0.9 * eps])),
        (
            &rosen,
            DVector::from_vec(vec![0.6, 0.8]) * (1.0 + 0.9 * eps).sqrt(),
        ),
        (
            &rosen,
            DVector::from_vec(vec![0.6, 0.8]) * (1.0 - 0.9 * eps).sqrt(),
        ),
    ];
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut logged = 0;
    let mut outs = Vec::new();
    for (prob, x0) in starts {
        let c0 = prob.constraints(&x0).amax();
        ok &= (c0 - 0.9 * eps).abs() <= 1e-12;
        let out = run(prob, &consts, &x0);
        for r in &out.trace {
            if let Some(c) = r.constraint_norm {
                worst = worst.max(c);
                logged += 1;
            }
        }
        ok &= out.report.constraint_norm < eps;
        outs.push(out);
    }
    ok &= worst < eps;
    (
        verdict(
            ok,
            format!("4 solves from |c(x0)| = 0.9 eps; max |c| over {logged} logged iterates {worst:.4} < {eps}"),
        ),
        outs,
    )
}

fn criterion_8(outs: &[&SolveOutcome]) -> Verdict {
    let mut ok = true;
    let mut worst = 0.0f64;
    for out in outs {
        let r = &out.report;
        let k = &r.constants;
        let bound = (k.omega + k.omega_tilde) * k.tol + k.tol;
        ok &= r.converged() && r.lambda_norm <= k.tol && r.shifted_constraint_norm <= bound;
        worst = worst.max(r.shifted_constraint_norm / bound);
    }
    verdict(
        ok,
        format!(
            "{} converged solves; worst |c + omega lambda_hat| / bound {worst:.1e}",
            outs.len()
        ),
    )
}

fn main() {
    let consts = SolverConstants::default();
    let mut results: Vec<(usize, Verdict)> = Vec::new();

    results.push((1, criterion_1()));
    results.push((2, criterion_2()));

    let start = Instant::now();
    let endpoint: Vec<SolveOutcome> = ["cvxqp", "overdet", "rosenbrock-eq", "cubic1d"]
        .iter()
        .map(|name| {
            let prob = make_problem(name).unwrap();
            run(&prob, &consts, &prob.default_x0())
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let v4 = criterion_4(&endpoint, &consts, secs);
    let (v5, tail_run) = criterion_5(&endpoint[0]);
    let (v6, lp_runs) = criterion_6();
    let (v7, funnel_runs) = criterion_7();

    let all: Vec<&SolveOutcome> = endpoint
        .iter()
        .chain(std::iter::once(&tail_run))
        .chain(lp_runs.iter())
        .chain(funnel_runs.iter())
        .collect();
    let traces: Vec<(&str, &[TraceRecord])> = all
        .iter()
        .map(|o| (o.report.problem.as_str(), o.trace.as_slice()))
        .collect();
    results.push((3, criterion_3(&traces, consts.tol)));
    results.push((4, v4));
    results.push((5, v5));
    results.push((6, v6));
    results.push((7, v7));
    let mut converged: Vec<&SolveOutcome> = endpoint.iter().collect();
    converged.extend(lp_runs.iter());
    results.push((8, criterion_8(&converged)));

    results.sort_by_key(|(n, _)| *n);
    let mut failed = 0;
    for (n, v) in &results {
        println!(
            "criterion {n}: {} {}",
            if v.ok { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.ok);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
