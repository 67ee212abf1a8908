//! Built-in desk-scale test problems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::{ProblemFunctions, ProblemSpec};

pub const PROBLEM_NAMES: &[&str] = &[
    "lp2",
    "cubic1d",
    "cvxqp",
    "overdet",
    "rosenbrock-eq",
    "randlp",
];

const DEFAULT_SEED: u64 = 20_240_917;

pub fn make_problem(name: &str) -> Result<ProblemSpec> {
    make_problem_seeded(name, DEFAULT_SEED)
}

/// Like [`make_problem`]; `seed` only affects the randomly generated
/// instances (`cvxqp`, `overdet`, `randlp`).
pub fn make_problem_seeded(name: &str, seed: u64) -> Result<ProblemSpec> {
    match name {
        "lp2" => lp2(),
        "cubic1d" => cubic1d(),
        "cvxqp" => cvxqp(10, 4, seed),
        "overdet" => overdet(4, seed),
        "rosenbrock-eq" => rosenbrock_eq(),
        "randlp" => random_lp(20, 10, seed),
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            available: PROBLEM_NAMES.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

/// `f(x) = x'Qx/2 + g'x`, `c(x) = J'x - b` with `J` stored `n x m`.
#[derive(Clone, Debug)]
pub struct AffineQuadratic {
    q: DMatrix<f64>,
    g: DVector<f64>,
    jac: DMatrix<f64>,
    b: DVector<f64>,
}

impl AffineQuadratic {
    pub fn new(q: DMatrix<f64>, g: DVector<f64>, jac: DMatrix<f64>, b: DVector<f64>) -> Self {
        Self { q, g, jac, b }
    }

    pub fn linear(g: DVector<f64>, jac: DMatrix<f64>, b: DVector<f64>) -> Self {
        let n = g.len();
        Self::new(DMatrix::zeros(n, n), g, jac, b)
    }
}

impl ProblemFunctions for AffineQuadratic {
    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.g.dot(x)
    }

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.g
    }

    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        self.jac.tr_mul(x) - &self.b
    }

    fn constraint_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.jac.clone()
    }

    fn lagrangian_hessian(&self, _x: &DVector<f64>, _y: &DVector<f64>) -> DMatrix<f64> {
        self.q.clone()
    }
}

/// `f(x) = x^3 + 0.1 x` on `[-1, 2]` with a single identically zero constraint.
struct Cubic1d;

impl ProblemFunctions for Cubic1d {
    fn objective(&self, x: &DVector<f64>) -> f64 {
        x[0].powi(3) + 0.1 * x[0]
    }

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 3.0 * x[0] * x[0] + 0.1)
    }

    fn constraints(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }

    fn constraint_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }

    fn lagrangian_hessian(&self, x: &DVector<f64>, _y: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 6.0 * x[0])
    }
}

/// Rosenbrock's function restricted to the unit circle.
struct RosenbrockCircle;

impl ProblemFunctions for RosenbrockCircle {
    fn objective(&self, x: &DVector<f64>) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = x[1] - x[0] * x[0];
        DVector::from_vec(vec![-2.0 * (1.0 - x[0]) - 400.0 * x[0] * r, 200.0 * r])
    }

    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - 1.0)
    }

    fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[2.0 * x[0], 2.0 * x[1]])
    }

    fn lagrangian_hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let h11 = 2.0 - 400.0 * (x[1] - x[0] * x[0]) + 800.0 * x[0] * x[0] - 2.0 * y[0];
        let h12 = -400.0 * x[0];
        let h22 = 200.0 - 2.0 * y[0];
        DMatrix::from_row_slice(2, 2, &[h11, h12, h12, h22])
    }
}

fn lp2() -> Result<ProblemSpec> {
    let f = AffineQuadratic::linear(
        DVector::from_vec(vec![1.0, 0.0]),
        DMatrix::from_column_slice(2, 1, &[0.5, -1.0]),
        DVector::zeros(1),
    );
    Ok(ProblemSpec::new(
        "lp2",
        1,
        Box::new(f),
        DVector::zeros(2),
        DVector::from_element(2, 1.0),
        DMatrix::identity(2, 2),
        true,
    )?
    .with_default_x0(DVector::from_vec(vec![0.5, 0.25])))
}

fn cubic1d() -> Result<ProblemSpec> {
    Ok(ProblemSpec::new(
        "cubic1d",
        1,
        Box::new(Cubic1d),
        DVector::from_element(1, -1.0),
        DVector::from_element(1, 2.0),
        DMatrix::identity(1, 1),
        false,
    )?
    .with_default_x0(DVector::from_element(1, 0.5)))
}

fn rosenbrock_eq() -> Result<ProblemSpec> {
    Ok(ProblemSpec::new(
        "rosenbrock-eq",
        1,
        Box::new(RosenbrockCircle),
        DVector::from_element(2, -2.0),
        DVector::from_element(2, 2.0),
        DMatrix::identity(2, 2),
        false,
    )?
    .with_default_x0(DVector::from_vec(vec![0.6, 0.8])))
}

fn uniform_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

fn uniform_vector(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(lo..hi))
}

/// Strictly convex QP on `[-1, 1]^n` with `m` consistent linear equalities;
/// the default start satisfies the constraints exactly.
fn cvxqp(n: usize, m: usize, seed: u64) -> Result<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = uniform_matrix(&mut rng, n, n, -1.0, 1.0);
    let q = b.tr_mul(&b) / n as f64 + DMatrix::identity(n, n) * 0.5;
    let g = uniform_vector(&mut rng, n, -0.3, 0.3);
    let jac = uniform_matrix(&mut rng, n, m, -1.0, 1.0);
    let x_feas = uniform_vector(&mut rng, n, -0.5, 0.5);
    let rhs = jac.tr_mul(&x_feas);
    Ok(ProblemSpec::new(
        "cvxqp",
        m,
        Box::new(AffineQuadratic::new(q, g, jac, rhs)),
        DVector::from_element(n, -1.0),
        DVector::from_element(n, 1.0),
        DMatrix::identity(n, n),
        false,
    )?
    .with_default_x0(x_feas))
}

/// `m = 2n` consistent linear equalities, so the constraint Jacobian has
/// full row rank `n` only, with a weak quadratic objective. The default start
/// is displaced from the feasible point by 0.02 per component, which keeps
/// `||c||_inf <= 0.02 n`.
fn overdet(n: usize, seed: u64) -> Result<ProblemSpec> {
    let m = 2 * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f76_6572);
    let jac = uniform_matrix(&mut rng, n, m, -1.0, 1.0);
    let x_true = uniform_vector(&mut rng, n, -0.5, 0.5);
    // consistent right-hand side: x_true is the only feasible point
    let rhs = jac.tr_mul(&x_true);
    let q = DMatrix::identity(n, n) * 0.1;
    let g = uniform_vector(&mut rng, n, -0.05, 0.05);
    Ok(ProblemSpec::new(
        "overdet",
        m,
        Box::new(AffineQuadratic::new(q, g, jac, rhs)),
        DVector::from_element(n, -2.0),
        DVector::from_element(n, 2.0),
        DMatrix::identity(n, n),
        false,
    )?
    .with_default_x0(x_true.map(|v| v + 0.02)))
}

/// Random bounded LP on `[0, 1]^n` with `m` equalities and a strictly
/// feasible default start.
fn random_lp(n: usize, m: usize, seed: u64) -> Result<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c70);
    let g = uniform_vector(&mut rng, n, -1.0, 1.0);
    let jac = uniform_matrix(&mut rng, n, m, -1.0, 1.0);
    let x_feas = uniform_vector(&mut rng, n, 0.2, 0.8);
    let rhs = jac.tr_mul(&x_feas);
    Ok(ProblemSpec::new(
        "randlp",
        m,
        Box::new(AffineQuadratic::linear(g, jac, rhs)),
        DVector::zeros(n),
        DVector::from_element(n, 1.0),
        DMatrix::identity(n, n),
        true,
    )?
    .with_default_x0(x_feas))
}
