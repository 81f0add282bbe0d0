//! The stochastic objective the agents minimize: a quadratic parameter
//! estimation problem.
//!
//! Agent j observes pairs (u, y) with y = uᵀx* + v, u ~ N(0, R_j) and
//! v ~ N(0, σ²_j), and carries the cost f_j(x) = E[(uᵀx − y)²] =
//! (x − x*)ᵀR_j(x − x*) + σ²_j, optionally plus a linear tilt tᵀx.
//!
//! The tilt exists because x* is the unconstrained minimizer of the plain
//! cost: with the optimum sitting on a constraint facet the facet multiplier
//! is then zero (degenerate complementarity). A tilt t = −(s/m)·Bᵀ1 moves the
//! total gradient so that −∇f(x*) points into the relative interior of the
//! normal cone with strength s while leaving x*, the Hessian, and the gradient
//! noise covariance untouched.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::null_space_basis;
use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("inconsistent problem dimensions: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("regressor second moment of agent {agent} is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { agent: usize, min_eig: f64 },
    #[error("could not generate an instance meeting the restricted convexity margin in {attempts} attempts")]
    GenerationFailed { attempts: usize },
}

/// Per-agent quadratic costs with a shared optimum and Gaussian gradient noise.
#[derive(Debug, Clone)]
pub struct QuadraticEstimationProblem {
    x_star: Vector,
    r_u: Vec<Matrix>,
    sigma_v2: Vec<f64>,
    tilt: Option<Vector>,
    /// Square roots of each R_j (Cholesky when positive definite, symmetric
    /// eigenvalue square root otherwise), cached for regressor sampling.
    factors: Vec<Matrix>,
}

impl QuadraticEstimationProblem {
    pub fn new(
        x_star: Vector,
        r_u: Vec<Matrix>,
        sigma_v2: Vec<f64>,
        tilt: Option<Vector>,
    ) -> Result<Self, ProblemError> {
        let d = x_star.len();
        let m = r_u.len();
        if m == 0 || d == 0 {
            return Err(ProblemError::DimensionMismatch("need at least one agent and one dimension".into()));
        }
        if sigma_v2.len() != m {
            return Err(ProblemError::DimensionMismatch(format!(
                "{} regressor matrices vs {} noise variances",
                m,
                sigma_v2.len()
            )));
        }
        if let Some(t) = &tilt {
            if t.len() != d {
                return Err(ProblemError::DimensionMismatch(format!(
                    "tilt has length {}, expected {d}",
                    t.len()
                )));
            }
        }
        for (j, s2) in sigma_v2.iter().enumerate() {
            if !(*s2 >= 0.0) {
                return Err(ProblemError::InvalidParameter(format!(
                    "noise variance of agent {j} is {s2}"
                )));
            }
        }
        let mut factors = Vec::with_capacity(m);
        for (j, r) in r_u.iter().enumerate() {
            if r.nrows() != d || r.ncols() != d {
                return Err(ProblemError::DimensionMismatch(format!(
                    "agent {j} regressor moment is {}x{}, expected {d}x{d}",
                    r.nrows(),
                    r.ncols()
                )));
            }
            if (r - r.transpose()).amax() > 1e-10 * (1.0 + r.amax()) {
                return Err(ProblemError::InvalidParameter(format!(
                    "agent {j} regressor moment is not symmetric"
                )));
            }
            factors.push(psd_sqrt(r, j)?);
        }
        Ok(Self { x_star, r_u, sigma_v2, tilt, factors })
    }

    /// Random instance: R_j = M_jM_jᵀ/d with standard normal M_j, σ²_j uniform
    /// in `sigma_range`. Deterministic given the generator state.
    pub fn generate_instance<R: Rng + ?Sized>(
        m: usize,
        d: usize,
        x_star: Vector,
        sigma_range: (f64, f64),
        rng: &mut R,
    ) -> Result<Self, ProblemError> {
        if !(sigma_range.0 >= 0.0 && sigma_range.1 >= sigma_range.0) {
            return Err(ProblemError::InvalidParameter(format!(
                "noise variance range {sigma_range:?}"
            )));
        }
        let mut r_u = Vec::with_capacity(m);
        let mut sigma_v2 = Vec::with_capacity(m);
        for _ in 0..m {
            let mut gauss = Matrix::zeros(d, d);
            for r in 0..d {
                for c in 0..d {
                    gauss[(r, c)] = rng.sample(StandardNormal);
                }
            }
            let gram = &gauss * gauss.transpose() / d as f64;
            r_u.push((&gram + gram.transpose()) * 0.5);
            let span = sigma_range.1 - sigma_range.0;
            sigma_v2.push(sigma_range.0 + span * rng.gen::<f64>());
        }
        Self::new(x_star, r_u, sigma_v2, None)
    }

    /// As `generate_instance`, but resamples until the summed regressor moment
    /// restricted to ker(B) is positive definite with at least `margin`.
    pub fn generate_instance_restricted<R: Rng + ?Sized>(
        m: usize,
        d: usize,
        x_star: Vector,
        sigma_range: (f64, f64),
        b: &Matrix,
        margin: f64,
        rng: &mut R,
    ) -> Result<Self, ProblemError> {
        const ATTEMPTS: usize = 1000;
        for _ in 0..ATTEMPTS {
            let candidate = Self::generate_instance(m, d, x_star.clone(), sigma_range, rng)?;
            if candidate.restricted_convexity_margin(b) >= margin {
                return Ok(candidate);
            }
        }
        Err(ProblemError::GenerationFailed { attempts: ATTEMPTS })
    }

    /// λ_min of Σ_j R_j restricted to ker(B); infinite when the kernel is
    /// trivial (nothing to be convex over).
    pub fn restricted_convexity_margin(&self, b: &Matrix) -> f64 {
        let basis = null_space_basis(b);
        if basis.r == 0 {
            return f64::INFINITY;
        }
        let u_r = basis.u.columns(0, basis.r);
        let mut sum = Matrix::zeros(self.d(), self.d());
        for r in &self.r_u {
            sum += r;
        }
        let reduced = u_r.transpose() * sum * u_r;
        nalgebra::linalg::SymmetricEigen::new(reduced).eigenvalues.min()
    }

    /// Replaces the linear tilt term.
    pub fn with_tilt(mut self, tilt: Option<Vector>) -> Result<Self, ProblemError> {
        if let Some(t) = &tilt {
            if t.len() != self.d() {
                return Err(ProblemError::DimensionMismatch(format!(
                    "tilt has length {}, expected {}",
                    t.len(),
                    self.d()
                )));
            }
        }
        self.tilt = tilt;
        Ok(self)
    }

    /// The per-agent tilt t = −(s/m)·Bᵀ1 that makes −∇f(x*) = s·Bᵀ1 point into
    /// the relative interior of the normal cone of the facet {Bx = b}.
    pub fn facet_tilt(b: &Matrix, strength: f64, m: usize) -> Vector {
        let ones = Vector::from_element(b.nrows(), 1.0);
        -(b.transpose() * ones) * (strength / m as f64)
    }

    pub fn m(&self) -> usize {
        self.r_u.len()
    }

    pub fn d(&self) -> usize {
        self.x_star.len()
    }

    pub fn x_star(&self) -> &Vector {
        &self.x_star
    }

    pub fn regressor_moment(&self, j: usize) -> &Matrix {
        &self.r_u[j]
    }

    pub fn noise_variance(&self, j: usize) -> f64 {
        self.sigma_v2[j]
    }

    pub fn tilt(&self) -> Option<&Vector> {
        self.tilt.as_ref()
    }

    /// f_j(x) = (x − x*)ᵀR_j(x − x*) + σ²_j (+ tᵀx).
    pub fn objective(&self, j: usize, x: &Vector) -> f64 {
        let e = x - &self.x_star;
        let mut val = e.dot(&(&self.r_u[j] * &e)) + self.sigma_v2[j];
        if let Some(t) = &self.tilt {
            val += t.dot(x);
        }
        val
    }

    /// Draws one regressor/noise pair (u, v) for agent j: u = F_j·g from d
    /// standard normals in component order, then v from one more.
    pub fn draw<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> (Vector, f64) {
        let d = self.d();
        let mut g = Vector::zeros(d);
        for i in 0..d {
            g[i] = rng.sample(StandardNormal);
        }
        let u = &self.factors[j] * g;
        let v = self.sigma_v2[j].sqrt() * rng.sample::<f64, _>(StandardNormal);
        (u, v)
    }

    /// The sampled-gradient value for a given draw: 2u(uᵀx − uᵀx* − v) (+ t).
    /// Exposed so tests can pin u or force v = 0.
    pub fn gradient_from_draw(&self, j: usize, x: &Vector, u: &Vector, v: f64) -> Vector {
        let _ = j;
        let residual = u.dot(x) - u.dot(&self.x_star) - v;
        let mut grad = u * (2.0 * residual);
        if let Some(t) = &self.tilt {
            grad += t;
        }
        grad
    }

    /// One stochastic gradient ∇F_j(x; ξ) with a fresh draw; its expectation
    /// over draws equals `true_gradient`.
    pub fn sample_gradient<R: Rng + ?Sized>(&self, j: usize, x: &Vector, rng: &mut R) -> Vector {
        let (u, v) = self.draw(j, rng);
        self.gradient_from_draw(j, x, &u, v)
    }

    /// ∇f_j(x) = 2R_j(x − x*) (+ t).
    pub fn true_gradient(&self, j: usize, x: &Vector) -> Vector {
        let mut grad = &self.r_u[j] * (x - &self.x_star) * 2.0;
        if let Some(t) = &self.tilt {
            grad += t;
        }
        grad
    }

    /// ∇f(x) = Σ_j ∇f_j(x).
    pub fn total_gradient(&self, x: &Vector) -> Vector {
        let mut grad = Vector::zeros(self.d());
        for j in 0..self.m() {
            grad += self.true_gradient(j, x);
        }
        grad
    }

    /// ∇²f = 2·Σ_j R_j, constant in x.
    pub fn hessian_total(&self) -> Matrix {
        let mut sum = Matrix::zeros(self.d(), self.d());
        for r in &self.r_u {
            sum += r;
        }
        sum * 2.0
    }

    /// Cov(∇F_j(x*; ξ)) = 4σ²_j·R_j (the gradient at the optimum is −2uv + t).
    pub fn gradient_covariance(&self, j: usize) -> Matrix {
        &self.r_u[j] * (4.0 * self.sigma_v2[j])
    }

    /// Empirical surrogate for the gradient-noise second moment: the max over
    /// the probe points of the mean ‖∇F_j − ∇f_j‖² across agents and draws.
    pub fn empirical_noise_second_moment<R: Rng + ?Sized>(
        &self,
        points: &[Vector],
        draws_per_point: usize,
        rng: &mut R,
    ) -> f64 {
        let mut worst = 0.0f64;
        for x in points {
            let mut acc = 0.0;
            for j in 0..self.m() {
                let exact = self.true_gradient(j, x);
                for _ in 0..draws_per_point {
                    acc += (self.sample_gradient(j, x, rng) - &exact).norm_squared();
                }
            }
            worst = worst.max(acc / (self.m() * draws_per_point) as f64);
        }
        worst
    }
}

/// Symmetric PSD square root: Cholesky when possible, eigenvalue square root
/// (with tiny negative eigenvalues clamped) otherwise.
fn psd_sqrt(r: &Matrix, agent: usize) -> Result<Matrix, ProblemError> {
    if let Some(chol) = nalgebra::Cholesky::new(r.clone()) {
        return Ok(chol.l());
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(r.clone());
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-10 * (1.0 + r.amax()) {
        return Err(ProblemError::NotPsd { agent, min_eig });
    }
    let d = r.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for c in 0..d {
        let s = eig.eigenvalues[c].max(0.0).sqrt();
        scaled.column_mut(c).scale_mut(s);
    }
    Ok(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_agent_problem() -> QuadraticEstimationProblem {
        QuadraticEstimationProblem::new(
            Vector::from_row_slice(&[1.0, 2.0]),
            vec![Matrix::identity(2, 2), Matrix::identity(2, 2)],
            vec![1.0, 1.0],
            None,
        )
        .unwrap()
    }

    #[test]
    fn gradient_at_optimum_with_zero_noise_vanishes() {
        let p = two_agent_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (u, _) = p.draw(0, &mut rng);
        let g = p.gradient_from_draw(0, p.x_star(), &u, 0.0);
        assert_abs_diff_eq!(g.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exact_gradient_values() {
        let p = two_agent_problem();
        assert_abs_diff_eq!(p.true_gradient(0, p.x_star()).norm(), 0.0, epsilon = 1e-15);
        let g = p.true_gradient(0, &Vector::from_row_slice(&[2.0, 2.0]));
        assert_abs_diff_eq!(g, Vector::from_row_slice(&[2.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn hessian_of_two_identity_agents() {
        let p = two_agent_problem();
        assert_abs_diff_eq!(p.hessian_total(), Matrix::identity(2, 2) * 4.0, epsilon = 1e-14);
    }

    #[test]
    fn gradient_covariance_closed_form() {
        let p = QuadraticEstimationProblem::new(
            Vector::from_row_slice(&[0.0, 0.0]),
            vec![Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])],
            vec![3.0],
            None,
        )
        .unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[12.0, 0.0, 0.0, 24.0]);
        assert_abs_diff_eq!(p.gradient_covariance(0), expected, epsilon = 1e-12);

        let noiseless = QuadraticEstimationProblem::new(
            Vector::from_row_slice(&[0.0]),
            vec![Matrix::identity(1, 1)],
            vec![0.0],
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(noiseless.gradient_covariance(0).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sampled_gradient_mean_matches_exact_gradient() {
        let p = two_agent_problem();
        let x = Vector::from_row_slice(&[0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let mut mean = Vector::zeros(2);
        let mut sq = Vector::zeros(2);
        for _ in 0..n {
            let g = p.sample_gradient(0, &x, &mut rng);
            mean += &g;
            sq += g.component_mul(&g);
        }
        mean /= n as f64;
        sq /= n as f64;
        let exact = p.true_gradient(0, &x);
        assert_abs_diff_eq!(exact, Vector::from_row_slice(&[-2.0, -4.0]), epsilon = 1e-14);
        for i in 0..2 {
            let se = ((sq[i] - mean[i] * mean[i]).max(0.0) / n as f64).sqrt();
            assert!(
                (mean[i] - exact[i]).abs() <= 4.0 * se,
                "component {i}: mean {} vs exact {} (se {se})",
                mean[i],
                exact[i]
            );
        }
    }

    #[test]
    fn generated_instances_are_deterministic_and_psd() {
        let x_star = Vector::from_row_slice(&[1.0, 2.0]);
        let mk = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            QuadraticEstimationProblem::generate_instance(50, 2, x_star.clone(), (0.1, 1.0), &mut rng)
                .unwrap()
        };
        let a = mk();
        let b = mk();
        assert_eq!(a.m(), 50);
        for j in 0..a.m() {
            assert_eq!(a.regressor_moment(j), b.regressor_moment(j));
            assert_eq!(a.noise_variance(j), b.noise_variance(j));
            let eig = nalgebra::linalg::SymmetricEigen::new(a.regressor_moment(j).clone());
            assert!(eig.eigenvalues.min() >= -1e-12);
        }
    }

    #[test]
    fn restricted_generation_meets_margin() {
        let b = Matrix::from_row_slice(1, 2, &[-2.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = QuadraticEstimationProblem::generate_instance_restricted(
            5,
            2,
            Vector::from_row_slice(&[1.0, 2.0]),
            (0.5, 1.5),
            &b,
            0.1,
            &mut rng,
        )
        .unwrap();
        assert!(p.restricted_convexity_margin(&b) >= 0.1);
    }

    #[test]
    fn facet_tilt_points_into_the_normal_cone() {
        let b = Matrix::from_row_slice(1, 2, &[-2.0, 1.0]);
        let m = 5;
        let strength = 1.0;
        let t = QuadraticEstimationProblem::facet_tilt(&b, strength, m);
        assert_abs_diff_eq!(t, Vector::from_row_slice(&[0.4, -0.2]), epsilon = 1e-14);

        let p = QuadraticEstimationProblem::new(
            Vector::from_row_slice(&[1.0, 2.0]),
            vec![Matrix::identity(2, 2); m],
            vec![1.0; m],
            Some(t),
        )
        .unwrap();
        // −∇f(x*) = strength·Bᵀ1: strictly positive multiplier on the facet.
        let total = p.total_gradient(p.x_star());
        assert_abs_diff_eq!(-&total, b.transpose() * Vector::from_row_slice(&[strength]), epsilon = 1e-12);
    }

    #[test]
    fn tilt_moves_gradients_but_not_noise() {
        let base = two_agent_problem();
        let tilted = base
            .clone()
            .with_tilt(Some(Vector::from_row_slice(&[0.4, -0.2])))
            .unwrap();
        let x = Vector::from_row_slice(&[3.0, 1.0]);
        let shift = tilted.true_gradient(0, &x) - base.true_gradient(0, &x);
        assert_abs_diff_eq!(shift, Vector::from_row_slice(&[0.4, -0.2]), epsilon = 1e-14);
        assert_eq!(tilted.gradient_covariance(0), base.gradient_covariance(0));
        assert_eq!(tilted.hessian_total(), base.hessian_total());
    }
}
