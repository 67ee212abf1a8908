#![allow(dead_code)]

use malm_ipm::problem::{Iterate, Params, ProblemFunctions, ProblemSpec, SolverConstants};
use malm_ipm::registry::AffineQuadratic;
use malm_ipm::residual::{eval_residual, eval_w};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fourth-order central difference Jacobian, one column per coordinate.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let h = rel_step * x[j].abs().max(1.0);
        let at = |k: f64| {
            let mut y = x.clone();
            y[j] += k * h;
            f(&y)
        };
        let col = (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) / (12.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

pub fn fd_gradient<F>(f: F, x: &DVector<f64>, rel_step: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    fd_jacobian(|y| DVector::from_element(1, f(y)), x, rel_step)
        .row(0)
        .transpose()
}

/// `||a - b||_inf / max(||b||_inf, 1)`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Jacobian of `F` in the layout `(x, lambda, mu_l, mu_r)`, assembled from
/// the problem callbacks:
///
/// ```text
/// [ H + rho_t S   -J       -I     I  ]
/// [ J'            beta I    0     0  ]
/// [ diag(mu_l)    0        D_l    0  ]
/// [ -diag(mu_r)   0         0    D_r ]
/// ```
pub fn dense_jacobian(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
    rho_tilde: f64,
) -> DMatrix<f64> {
    let (n, m) = (prob.n(), prob.m());
    let c = prob.constraints(&z.x);
    let w = eval_w(&c, consts).unwrap();
    let h = prob.lagrangian_hessian(&z.x, &(&p.lambda_hat + &z.lambda + w))
        + prob.scaling() * rho_tilde;
    let jac = prob.constraint_jacobian(&z.x);
    let d_l = &z.x - prob.x_lower();
    let d_r = prob.x_upper() - &z.x;
    let beta = consts.omega + consts.omega_tilde;
    let size = 3 * n + m;
    let mut a = DMatrix::zeros(size, size);
    for i in 0..n {
        for k in 0..n {
            a[(i, k)] = h[(i, k)];
        }
        for j in 0..m {
            a[(i, n + j)] = -jac[(i, j)];
            a[(n + j, i)] = jac[(i, j)];
        }
        a[(i, n + m + i)] = -1.0;
        a[(i, 2 * n + m + i)] = 1.0;
        a[(n + m + i, i)] = z.mu_l[i];
        a[(n + m + i, n + m + i)] = d_l[i];
        a[(2 * n + m + i, i)] = -z.mu_r[i];
        a[(2 * n + m + i, 2 * n + m + i)] = d_r[i];
    }
    for j in 0..m {
        a[(n + j, n + j)] = beta;
    }
    a
}

/// Solves `DF dz = -F` densely with LU.
pub fn dense_step(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
    rho_tilde: f64,
) -> DVector<f64> {
    let a = dense_jacobian(z, p, prob, consts, rho_tilde);
    let f = eval_residual(z, p, prob, consts).unwrap().to_vector();
    a.lu()
        .solve(&(-f))
        .expect("dense oracle matrix is singular")
}

/// Symmetric form of the step matrix: unknowns `(dx, -dlambda, dmu_l, dmu_r)`,
/// complementarity rows scaled by `-1/mu_l` and `-1/mu_r`.
pub fn symmetric_saddle(
    z: &Iterate,
    p: &Params,
    prob: &ProblemSpec,
    consts: &SolverConstants,
    rho_tilde: f64,
) -> DMatrix<f64> {
    let (n, m) = (prob.n(), prob.m());
    let a = dense_jacobian(z, p, prob, consts, rho_tilde);
    let mut s = a.clone();
    for j in 0..m {
        for r in 0..3 * n + m {
            s[(r, n + j)] = -a[(r, n + j)];
        }
    }
    for i in 0..n {
        let (rl, rr) = (n + m + i, 2 * n + m + i);
        for col in 0..3 * n + m {
            s[(rl, col)] /= -z.mu_l[i];
            s[(rr, col)] /= -z.mu_r[i];
        }
    }
    s
}

/// `(positive, negative, zero)` eigenvalue counts of a symmetric matrix.
pub fn inertia(s: &DMatrix<f64>) -> (usize, usize, usize) {
    let eig = s.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut out = (0, 0, 0);
    for &v in eig.eigenvalues.iter() {
        if v > 1e-13 * scale {
            out.0 += 1;
        } else if v < -1e-13 * scale {
            out.1 += 1;
        } else {
            out.2 += 1;
        }
    }
    out
}

/// Root of a continuous increasing function on `(a, b)` by bisection.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f(mid) > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

/// Scalar problem with nonconvex objective and a nonlinear constraint:
/// `f = x^3/2 - x`, `c = x^2/2 + x/10 - 1/10` on `[-1, 1.5]`.
pub struct Scalar;

impl ProblemFunctions for Scalar {
    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x[0].powi(3) - x[0]
    }
    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 1.5 * x[0] * x[0] - 1.0)
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 0.5 * x[0] * x[0] + 0.1 * x[0] - 0.1)
    }
    fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x[0] + 0.1)
    }
    fn lagrangian_hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 3.0 * x[0] - y[0])
    }
}

pub fn scalar_problem() -> ProblemSpec {
    ProblemSpec::new(
        "scalar",
        1,
        Box::new(Scalar),
        DVector::from_element(1, -1.0),
        DVector::from_element(1, 1.5),
        DMatrix::identity(1, 1),
        false,
    )
    .unwrap()
    .with_default_x0(DVector::from_element(1, 0.4))
}

/// Random convex QP with `n` variables and `m` equalities on `[-1, 1]^n`,
/// feasible at the default start.
pub fn random_qp(n: usize, m: usize, seed: u64) -> ProblemSpec {
    let mut r = rng(seed);
    let b = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    let q = b.transpose() * &b / n as f64 + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| r.gen_range(-0.5..0.5));
    let jac = DMatrix::from_fn(n, m, |_, _| r.gen_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| r.gen_range(-0.5..0.5));
    let rhs = jac.tr_mul(&x0);
    ProblemSpec::new(
        "random-qp",
        m,
        Box::new(AffineQuadratic::new(q, g, jac, rhs)),
        DVector::from_element(n, -1.0),
        DVector::from_element(n, 1.0),
        DMatrix::identity(n, n),
        false,
    )
    .unwrap()
    .with_default_x0(x0)
}

/// Random interior iterate near `x` (kept inside the funnel) with random
/// multipliers and parameters.
pub fn random_iterate(
    prob: &ProblemSpec,
    consts: &SolverConstants,
    r: &mut ChaCha8Rng,
) -> (Iterate, Params) {
    let (n, m) = (prob.n(), prob.m());
    let (lo, hi) = (prob.x_lower(), prob.x_upper());
    let anchor = prob.default_x0();
    let target = DVector::from_fn(n, |i, _| lo[i] + r.gen_range(0.1..0.9) * (hi[i] - lo[i]));
    let mut x = target.clone();
    let mut s = 1.0;
    while prob.constraints(&x).amax() >= 0.5 * consts.epsilon {
        s *= 0.6;
        x = &anchor + (&target - &anchor) * s;
    }
    let lambda = DVector::from_fn(m, |_, _| r.gen_range(-0.5..0.5));
    let mu_l = DVector::from_fn(n, |_, _| r.gen_range(0.05..1.5));
    let mu_r = DVector::from_fn(n, |_, _| r.gen_range(0.05..1.5));
    let lambda_hat = DVector::from_fn(m, |_, _| r.gen_range(-1.0..1.0));
    let tau = 10f64.powf(r.gen_range(-4.0..-1.0));
    (
        Iterate {
            x,
            lambda,
            mu_l,
            mu_r,
        },
        Params { tau, lambda_hat },
    )
}

/// Central iterate for `tau` at the default start with zero multipliers.
pub fn centered(prob: &ProblemSpec, tau: f64) -> (Iterate, Params) {
    let x = prob.default_x0();
    let (d_l, d_r) = prob.box_gaps(&x);
    (
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
    )
}
