//! Shared oracles for the integration suites. Each one recomputes a quantity
//! the library produces, by a structurally different route: exhaustive
//! enumeration, quadrature, finite differences, or a naive re-implementation.

#![allow(dead_code)]

use dda::network::GossipScheme;
use dda::polyhedron::Polyhedron;
use dda::problem::QuadraticEstimationProblem;
use dda::{Matrix, Vector};
use rand::Rng;

/// Exhaustive active-subset solution of min ‖x − z‖² over {Ax ≤ rhs}, with
/// A = [B; C]. Tries every subset of rows as the active set, solves the
/// equality-constrained KKT system for each, and keeps the KKT-consistent
/// candidate closest to z. Exponential in the row count: use on small sets
/// only. Returns (point, lambda, mu).
pub fn projection_oracle(set: &Polyhedron, z: &Vector) -> (Vector, Vector, Vector) {
    let (b, b_rhs) = set.block_b();
    let (c, c_rhs) = set.block_c();
    let n_b = b.nrows();
    let n = n_b + c.nrows();
    let d = set.dim();
    let mut rows = Matrix::zeros(n, d);
    let mut rhs = Vector::zeros(n);
    for i in 0..n_b {
        rows.row_mut(i).copy_from(&b.row(i));
        rhs[i] = b_rhs[i];
    }
    for i in 0..c.nrows() {
        rows.row_mut(n_b + i).copy_from(&c.row(i));
        rhs[n_b + i] = c_rhs[i];
    }

    let feas_tol = 1e-8 * (1.0 + z.amax() + rhs.amax());
    let mut best: Option<(f64, Vector, Vector)> = None;
    for mask in 0u32..(1 << n) {
        let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = subset.len();
        if k > d {
            continue;
        }
        let (x, nu_subset) = if k == 0 {
            (z.clone(), Vector::zeros(0))
        } else {
            let mut a_s = Matrix::zeros(k, d);
            let mut r_s = Vector::zeros(k);
            for (r, &i) in subset.iter().enumerate() {
                a_s.row_mut(r).copy_from(&rows.row(i));
                r_s[r] = rhs[i];
            }
            let gram = &a_s * a_s.transpose();
            let Some(inv) = gram.clone().try_inverse() else {
                continue; // dependent subset; an independent one gives the same face
            };
            let nu = inv * (&a_s * z - r_s);
            let x = z - a_s.transpose() * &nu;
            (x, nu)
        };
        // KKT: primal feasible everywhere, dual feasible on the subset.
        let slack = &rows * &x - &rhs;
        if slack.iter().any(|&s| s > feas_tol) {
            continue;
        }
        if nu_subset.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let dist = (&x - z).norm_squared();
        if best.as_ref().is_none_or(|(bd, _, _)| dist < *bd) {
            let mut nu = Vector::zeros(n);
            for (r, &i) in subset.iter().enumerate() {
                nu[i] = nu_subset[r].max(0.0);
            }
            best = Some((dist, x, nu));
        }
    }
    let (_, x, nu) = best.expect("nonempty polyhedron has a projection");
    (x, nu.rows(0, n_b).into_owned(), nu.rows(n_b, n - n_b).into_owned())
}

/// Σ = ∫₀^horizon e^{−G t} Q e^{−Gᵀ t} dt by the composite trapezoid rule.
/// For stable G (all eigenvalues positive) and horizon large enough, this
/// converges to the solution of G Σ + Σ Gᵀ = Q.
pub fn lyapunov_quadrature(g: &Matrix, q: &Matrix, horizon: f64, steps: usize) -> Matrix {
    let d = g.nrows();
    let h = horizon / steps as f64;
    let mut sum = Matrix::zeros(d, d);
    for i in 0..=steps {
        let t = i as f64 * h;
        let e = (g * -t).exp();
        let term = &e * q * e.transpose();
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        sum += term * (w * h);
    }
    sum
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    let d = x.len();
    Vector::from_fn(d, |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

/// Central-difference Hessian of a scalar function.
pub fn fd_hessian(f: impl Fn(&Vector) -> f64 + Copy, x: &Vector, h: f64) -> Matrix {
    let d = x.len();
    Matrix::from_fn(d, d, |i, j| {
        let mut pp = x.clone();
        let mut pm = x.clone();
        let mut mp = x.clone();
        let mut mm = x.clone();
        pp[i] += h;
        pp[j] += h;
        pm[i] += h;
        pm[j] -= h;
        mp[i] -= h;
        mp[j] += h;
        mm[i] -= h;
        mm[j] -= h;
        (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h * h)
    })
}

/// Naive reference implementation of the distributed dual-averaging round:
/// dense weight-matrix mixing and exhaustive-oracle projections, consuming the
/// RNG in the same order as the library (event draw, then per-agent gradient
/// draws). Returns the per-agent x iterates after each round.
pub fn naive_dda_run<R: Rng + ?Sized>(
    problem: &QuadraticEstimationProblem,
    set: &Polyhedron,
    scheme: &GossipScheme,
    schedule_a: f64,
    schedule_exp: f64,
    steps: usize,
    z0: &[Vector],
    exact_gradients: bool,
    rng: &mut R,
) -> Vec<Vec<Vector>> {
    let m = problem.m();
    let mut z: Vec<Vector> = z0.to_vec();
    let mut history = Vec::with_capacity(steps);
    for k in 1..=steps {
        let alpha = schedule_a / (k as f64).powf(schedule_exp);
        let event = scheme.sample_event(rng);
        let a = scheme.matrix_for(event);
        let mut x = Vec::with_capacity(m);
        let mut grads = Vec::with_capacity(m);
        for j in 0..m {
            let (xj, _, _) = projection_oracle(set, &z[j]);
            grads.push(if exact_gradients {
                problem.true_gradient(j, &xj)
            } else {
                problem.sample_gradient(j, &xj, rng)
            });
            x.push(xj);
        }
        let mut z_next = vec![Vector::zeros(problem.d()); m];
        for j in 0..m {
            let mut acc = Vector::zeros(problem.d());
            for i in 0..m {
                acc += &z[i] * a[(j, i)];
            }
            z_next[j] = acc - &grads[j] * alpha;
        }
        z = z_next;
        history.push(x);
    }
    history
}

/// Feasible random polyhedron plus a query point for projection fuzzing:
/// `x0` is strictly feasible by construction; the query scatters around it.
pub fn random_polyhedron<R: Rng + ?Sized>(rng: &mut R) -> (Polyhedron, Vector) {
    let d = rng.gen_range(1..=5);
    let n_rows = rng.gen_range(1..=8usize);
    let n_b = rng.gen_range(0..=n_rows.min(d));
    let x0 = Vector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
    let mut rows = Vec::with_capacity(n_rows);
    let mut rhs = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let mut a = Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
        if a.norm() < 1e-3 {
            a[0] = 1.0;
        }
        let offset = rng.gen_range(0.05..2.0);
        rhs.push(a.dot(&x0) + offset);
        rows.push(a);
    }
    let b = Matrix::from_fn(n_b, d, |i, j| rows[i][j]);
    let b_rhs = Vector::from_fn(n_b, |i, _| rhs[i]);
    let c = Matrix::from_fn(n_rows - n_b, d, |i, j| rows[n_b + i][j]);
    let c_rhs = Vector::from_fn(n_rows - n_b, |i, _| rhs[n_b + i]);
    let set = Polyhedron::new(b, b_rhs, c, c_rhs).expect("x0 is strictly feasible");
    let query = Vector::from_fn(d, |i, _| x0[i] + rng.gen_range(-4.0..4.0));
    (set, query)
}
