use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use malm_ipm::config::{load_config, parse_assignment};
use malm_ipm::derivcheck::check_derivatives;
use malm_ipm::registry::{make_problem_seeded, PROBLEM_NAMES};
use malm_ipm::trace::write_jsonl;
use malm_ipm::{solve, Error, SolverConstants};

const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Parser)]
#[command(
    name = "malm-ipm",
    version,
    about = "Penalty-barrier interior point NLP solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a built-in problem.
    Solve {
        #[arg(long)]
        problem: String,
        /// Start point as comma separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Override a solver constant; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// File of key=value lines, applied before --set.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Path-following barrier schedule for linear problems.
        #[arg(long)]
        lp_mode: bool,
        /// Seed for the randomly generated problems.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Write the iteration trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the final report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Finite-difference checks of all derivatives at random points.
    CheckDerivatives {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Print the names of the built-in problems.
    ListProblems,
}

/// Input errors exit with 2, algorithmic failures with 1.
enum Failure {
    Usage(Error),
    Runtime(Error),
}

fn usage<E: Into<Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::ListProblems => {
            for name in PROBLEM_NAMES {
                println!("{name}");
            }
            Ok(true)
        }
        Command::CheckDerivatives {
            problem,
            seed,
            points,
        } => {
            let prob = make_problem_seeded(&problem, seed).map_err(usage)?;
            let report = check_derivatives(&prob, &SolverConstants::default(), seed, points)
                .map_err(Failure::Runtime)?;
            for c in &report.checks {
                println!(
                    "{:<20} max rel err {:.3e} (tol {:.0e}) {}",
                    c.name,
                    c.max_rel_error,
                    c.tolerance,
                    if c.passed() { "ok" } else { "FAILED" }
                );
            }
            Ok(report.passed())
        }
        Command::Solve {
            problem,
            x0,
            set,
            config,
            lp_mode,
            seed,
            trace,
            report,
        } => {
            let prob = make_problem_seeded(&problem, seed).map_err(usage)?;
            let mut consts = SolverConstants::default();
            if let Some(path) = &config {
                load_config(path, &mut consts).map_err(usage)?;
            }
            for assignment in &set {
                let (key, value) = parse_assignment(assignment).map_err(usage)?;
                consts.set(key, value).map_err(usage)?;
            }
            consts.lp_mode |= lp_mode;
            let x0 = x0
                .map(DVector::from_vec)
                .unwrap_or_else(|| prob.default_x0());

            let outcome = solve(&prob, &consts, &x0).map_err(usage)?;
            if let Some(path) = &trace {
                let file = File::create(path).map_err(|e| Failure::Runtime(e.into()))?;
                write_jsonl(BufWriter::new(file), &outcome.trace).map_err(Failure::Runtime)?;
            }
            let r = &outcome.report;
            if let Some(path) = &report {
                let file = File::create(path).map_err(|e| Failure::Runtime(e.into()))?;
                serde_json::to_writer_pretty(BufWriter::new(file), r)
                    .map_err(|e| Failure::Runtime(Error::Io(e.into())))?;
            }
            println!(
                "{}: {} f = {:.10e} |F| = {:.3e} |lambda| = {:.3e} |c| = {:.3e} outermost {} outer {} inner {}",
                r.problem,
                serde_json::to_value(r.status).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default(),
                r.objective,
                r.residual_norm,
                r.lambda_norm,
                r.constraint_norm,
                r.counters.outermost,
                r.counters.outer,
                r.counters.inner_steps,
            );
            if let Some(msg) = &r.message {
                eprintln!("{msg}");
            }
            Ok(r.converged())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
