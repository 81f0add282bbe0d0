//! Polyhedral constraint sets {x : Bx ≤ b, Cx ≤ c} with exact Euclidean
//! projection and KKT multiplier recovery.
//!
//! The B-block holds the constraints expected active at the optimum, the
//! C-block the rest; downstream analysis leans on that split. Projection is a
//! working-set method for the strictly convex QP min ½‖x − z‖² subject to the
//! stacked inequalities:
//!
//! 1. project z onto the affine set fixed by the working rows;
//! 2. drop the most negative multiplier if dual feasibility fails;
//! 3. add the most violated row (scaled by row norm) if primal feasibility fails;
//! 4. stop when the KKT system holds; an iteration cap guards against cycling.
//!
//! Degenerate working sets (dependent rows) fall back to least-squares
//! multipliers, so ties and redundant constraints stay harmless.

use thiserror::Error;

use crate::linalg::pseudo_inverse;
use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum PolyhedronError {
    #[error("constraint blocks disagree on dimension: {0}")]
    DimensionMismatch(String),
    #[error("constraint set is empty or could not be certified nonempty")]
    Infeasible,
    #[error("projection working-set loop hit the iteration cap ({iterations}); working rows {working:?}")]
    ActiveSetCycle { iterations: usize, working: Vec<usize> },
    #[error("point lies outside the constraint set (violation {violation:.3e})")]
    InfeasiblePoint { violation: f64 },
}

/// Euclidean projection onto the set plus the KKT certificate: multipliers for
/// both row blocks and the geometrically active rows at the projected point.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub point: Vector,
    pub lambda: Vector,
    pub mu: Vector,
    pub active_b: Vec<usize>,
    pub active_c: Vec<usize>,
}

/// Caller-owned working-set memory; reusing it across projections of nearby
/// inputs (consecutive algorithm iterates) makes the solve start from the
/// previous active set.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    working: Vec<usize>,
}

/// The set {x : Bx ≤ b, Cx ≤ c}. Immutable after construction; construction
/// certifies nonemptiness by projecting the origin.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    b: Matrix,
    b_rhs: Vector,
    c: Matrix,
    c_rhs: Vector,
    /// B over C, stacked, with the rhs vector and per-row norms cached.
    rows: Matrix,
    rhs: Vector,
    row_norms: Vector,
}

impl Polyhedron {
    pub fn new(b: Matrix, b_rhs: Vector, c: Matrix, c_rhs: Vector) -> Result<Self, PolyhedronError> {
        if b.ncols() != c.ncols() && b.nrows() > 0 && c.nrows() > 0 {
            return Err(PolyhedronError::DimensionMismatch(format!(
                "B has {} columns, C has {}",
                b.ncols(),
                c.ncols()
            )));
        }
        if b.nrows() != b_rhs.len() || c.nrows() != c_rhs.len() {
            return Err(PolyhedronError::DimensionMismatch(format!(
                "row counts ({}, {}) vs rhs lengths ({}, {})",
                b.nrows(),
                c.nrows(),
                b_rhs.len(),
                c_rhs.len()
            )));
        }
        let d = b.ncols().max(c.ncols());
        if d == 0 {
            return Err(PolyhedronError::DimensionMismatch("zero-dimensional set".into()));
        }
        let n = b.nrows() + c.nrows();
        let mut rows = Matrix::zeros(n, d);
        let mut rhs = Vector::zeros(n);
        for i in 0..b.nrows() {
            rows.row_mut(i).copy_from(&b.row(i));
            rhs[i] = b_rhs[i];
        }
        for i in 0..c.nrows() {
            rows.row_mut(b.nrows() + i).copy_from(&c.row(i));
            rhs[b.nrows() + i] = c_rhs[i];
        }
        let row_norms = Vector::from_iterator(n, (0..n).map(|i| rows.row(i).norm().max(f64::MIN_POSITIVE)));
        let set = Self { b, b_rhs, c, c_rhs, rows, rhs, row_norms };

        let origin = Vector::zeros(d);
        let proj = set
            .project(&origin)
            .map_err(|_| PolyhedronError::Infeasible)?;
        if !set.contains(&proj.point, 1e-8) {
            return Err(PolyhedronError::Infeasible);
        }
        Ok(set)
    }

    /// The 2-d wedge {−2x₁ + x₂ ≤ 0, x₁ ≤ 5, x₂ ≥ 0} used by the examples and
    /// test suites: one facet expected active (the B block) and two inactive.
    pub fn wedge_example() -> Self {
        Self::new(
            Matrix::from_row_slice(1, 2, &[-2.0, 1.0]),
            Vector::from_row_slice(&[0.0]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            Vector::from_row_slice(&[5.0, 0.0]),
        )
        .expect("wedge is nonempty")
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn n_rows_b(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_rows_c(&self) -> usize {
        self.c.nrows()
    }

    pub fn block_b(&self) -> (&Matrix, &Vector) {
        (&self.b, &self.b_rhs)
    }

    pub fn block_c(&self) -> (&Matrix, &Vector) {
        (&self.c, &self.c_rhs)
    }

    /// Componentwise membership test: Bx − b ≤ tol and Cx − c ≤ tol.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        let slack = &self.rows * x - &self.rhs;
        slack.iter().all(|&s| s <= tol)
    }

    /// Rows satisfied with equality at x, |row·x − rhs| ≤ tol, split by block.
    pub fn active_set(&self, x: &Vector, tol: f64) -> (Vec<usize>, Vec<usize>) {
        let slack = &self.rows * x - &self.rhs;
        let mut active_b = Vec::new();
        let mut active_c = Vec::new();
        for (i, &s) in slack.iter().enumerate() {
            if s.abs() <= tol {
                if i < self.b.nrows() {
                    active_b.push(i);
                } else {
                    active_c.push(i - self.b.nrows());
                }
            }
        }
        (active_b, active_c)
    }

    /// Euclidean projection with a fresh working set.
    pub fn project(&self, z: &Vector) -> Result<ProjectionResult, PolyhedronError> {
        let mut warm = WarmStart::default();
        self.project_warm(z, &mut warm)
    }

    /// Euclidean projection warm-started from (and updating) `warm`.
    ///
    /// Dual active-set iteration: the working set stays linearly independent
    /// with nonnegative multipliers throughout. Adding a violated row that is
    /// dependent on the working rows triggers a pure dual step that drops a
    /// blocking row instead, so the working system never turns inconsistent.
    pub fn project_warm(&self, z: &Vector, warm: &mut WarmStart) -> Result<ProjectionResult, PolyhedronError> {
        let n = self.rows.nrows();
        if n == 0 {
            return Ok(self.certificate(z.clone(), Vector::zeros(0), &[]));
        }
        let d = self.rows.ncols();
        let scale = 1.0 + z.amax() + self.rhs.amax();
        let feas_tol = 1e-11 * scale;

        let mut working: Vec<usize> = warm.working.iter().copied().filter(|&i| i < n).collect();
        working.dedup();

        // Fast path: interior input with an empty working set.
        if working.is_empty() {
            let slack = &self.rows * z - &self.rhs;
            let worst = (0..n).map(|i| slack[i] / self.row_norms[i]).fold(f64::NEG_INFINITY, f64::max);
            if worst <= feas_tol {
                warm.working.clear();
                return Ok(self.certificate(z.clone(), Vector::zeros(0), &[]));
            }
        }

        let cap = 100 + 20 * n;
        for _ in 0..cap {
            let (x, lam) = self.solve_working(z, &working);

            // A remembered working set may be stale: dependent rows make the
            // equality solve inconsistent, negative multipliers mark rows that
            // should not bind. Shed the worst offender and re-solve.
            let mut drop_pos: Option<(usize, f64)> = None;
            for (pos, &i) in working.iter().enumerate() {
                let residual = (self.rows.row(i).dot(&x.transpose()) - self.rhs[i]).abs() / self.row_norms[i];
                let badness = residual.max(-lam[pos] * self.row_norms[i]);
                if badness > feas_tol && drop_pos.is_none_or(|(_, b)| badness > b) {
                    drop_pos = Some((pos, badness));
                }
            }
            if let Some((pos, _)) = drop_pos {
                working.remove(pos);
                continue;
            }

            let slack = &self.rows * &x - &self.rhs;
            let mut entering: Option<(usize, f64)> = None;
            for i in 0..n {
                let v = slack[i] / self.row_norms[i];
                if !working.contains(&i) && entering.is_none_or(|(_, cv)| v > cv) {
                    entering = Some((i, v));
                }
            }
            match entering {
                Some((i, v)) if v > feas_tol => {
                    let mut y: Vec<f64> = lam.iter().map(|&l| l.max(0.0)).collect();
                    let mut xi = x;
                    let mut full_step = false;
                    for _ in 0..=d + 1 {
                        let (dir, r) = self.step_directions(&working, i);
                        let dd = dir.norm_squared();
                        let s_i = self.rows.row(i).dot(&xi.transpose()) - self.rhs[i];
                        let independent = dd > (1e-11 * self.row_norms[i]).powi(2);
                        let t2 = if independent { s_i / dd } else { f64::INFINITY };
                        let mut block: Option<(usize, f64)> = None;
                        for (pos, &rj) in r.iter().enumerate() {
                            if rj > 1e-12 {
                                let t = y[pos].max(0.0) / rj;
                                if block.is_none_or(|(_, bt)| t < bt) {
                                    block = Some((pos, t));
                                }
                            }
                        }
                        let t1 = block.map_or(f64::INFINITY, |(_, t)| t);
                        if !t1.is_finite() && !t2.is_finite() {
                            return Err(PolyhedronError::Infeasible);
                        }
                        if t2 <= t1 {
                            working.push(i);
                            full_step = true;
                            break;
                        }
                        let (pos, t) = block.expect("t1 finite means a blocking row exists");
                        if independent && t > 0.0 {
                            xi -= &dir * t;
                        }
                        for (p, yv) in y.iter_mut().enumerate() {
                            *yv -= t * r[p];
                        }
                        working.remove(pos);
                        y.remove(pos);
                    }
                    if !full_step {
                        return Err(PolyhedronError::ActiveSetCycle { iterations: cap, working });
                    }
                }
                // No violated row outside the working set and the working
                // system solved cleanly: x is the projection.
                _ => {
                    warm.working = working.clone();
                    return Ok(self.certificate(x, lam, &working));
                }
            }
        }
        Err(PolyhedronError::ActiveSetCycle { iterations: cap, working })
    }

    /// ½‖x‖² + ψ*(z) − ⟨x, z⟩ with ψ*(z) = ⟨z, Q(z)⟩ − ½‖Q(z)‖²; the divergence
    /// between a feasible point and a dual state, ≥ ½‖x − Q(z)‖².
    pub fn fenchel_coupling(&self, x: &Vector, z: &Vector) -> Result<f64, PolyhedronError> {
        let slack = &self.rows * x - &self.rhs;
        let violation = slack.iter().fold(0.0f64, |a, &s| a.max(s));
        if violation > 1e-9 {
            return Err(PolyhedronError::InfeasiblePoint { violation });
        }
        let q = self.project(z)?.point;
        Ok(0.5 * x.norm_squared() + (z.dot(&q) - 0.5 * q.norm_squared()) - x.dot(z))
    }

    /// Projection of z onto the affine set fixed by the working rows, with
    /// least-squares multipliers when the rows are dependent.
    fn solve_working(&self, z: &Vector, working: &[usize]) -> (Vector, Vector) {
        if working.is_empty() {
            return (z.clone(), Vector::zeros(0));
        }
        let k = working.len();
        let d = self.rows.ncols();
        let mut aw = Matrix::zeros(k, d);
        let mut aw_rhs = Vector::zeros(k);
        for (r, &i) in working.iter().enumerate() {
            aw.row_mut(r).copy_from(&self.rows.row(i));
            aw_rhs[r] = self.rhs[i];
        }
        let gram = &aw * aw.transpose();
        let y = &aw * z - aw_rhs;
        let lam = match nalgebra::Cholesky::new(gram.clone()) {
            Some(ch) => ch.solve(&y),
            None => pseudo_inverse(&gram) * &y,
        };
        let x = z - aw.transpose() * &lam;
        (x, lam)
    }

    /// For a candidate row i: the component of its normal orthogonal to the
    /// working rows (primal direction) and the least-squares coefficients of
    /// the working normals reproducing it (dual direction).
    fn step_directions(&self, working: &[usize], i: usize) -> (Vector, Vec<f64>) {
        let a_i = self.rows.row(i).transpose().into_owned();
        if working.is_empty() {
            return (a_i, Vec::new());
        }
        let k = working.len();
        let d = self.rows.ncols();
        let mut aw = Matrix::zeros(k, d);
        for (r, &w) in working.iter().enumerate() {
            aw.row_mut(r).copy_from(&self.rows.row(w));
        }
        let gram = &aw * aw.transpose();
        let rhs = &aw * &a_i;
        let r = match nalgebra::Cholesky::new(gram.clone()) {
            Some(ch) => ch.solve(&rhs),
            None => pseudo_inverse(&gram) * &rhs,
        };
        let dir = &a_i - aw.transpose() * &r;
        (dir, r.iter().copied().collect())
    }

    fn certificate(&self, point: Vector, lam_working: Vector, working: &[usize]) -> ProjectionResult {
        let mut lambda = Vector::zeros(self.b.nrows());
        let mut mu = Vector::zeros(self.c.nrows());
        for (r, &i) in working.iter().enumerate() {
            let v = lam_working[r].max(0.0);
            if i < self.b.nrows() {
                lambda[i] = v;
            } else {
                mu[i - self.b.nrows()] = v;
            }
        }
        let scale = 1.0 + point.amax() + self.rhs.amax();
        let (active_b, active_c) = self.active_set(&point, 1e-9 * scale);
        ProjectionResult { point, lambda, mu, active_b, active_c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn kkt_ok(set: &Polyhedron, z: &Vector, res: &ProjectionResult) {
        // Stationarity: x − z + Bᵀλ + Cᵀμ = 0.
        let (b, b_rhs) = set.block_b();
        let (c, c_rhs) = set.block_c();
        let mut station = &res.point - z;
        if b.nrows() > 0 {
            station += b.transpose() * &res.lambda;
        }
        if c.nrows() > 0 {
            station += c.transpose() * &res.mu;
        }
        assert_abs_diff_eq!(station.norm(), 0.0, epsilon = 1e-9);
        // Complementary slackness and dual feasibility.
        if b.nrows() > 0 {
            let slack = b * &res.point - b_rhs;
            for i in 0..b.nrows() {
                assert!(res.lambda[i] >= 0.0);
                assert_abs_diff_eq!(res.lambda[i] * slack[i], 0.0, epsilon = 1e-9);
            }
        }
        if c.nrows() > 0 {
            let slack = c * &res.point - c_rhs;
            for i in 0..c.nrows() {
                assert!(res.mu[i] >= 0.0);
                assert_abs_diff_eq!(res.mu[i] * slack[i], 0.0, epsilon = 1e-9);
            }
        }
        assert!(set.contains(&res.point, 1e-9));
    }

    #[test]
    fn interior_point_projects_to_itself() {
        let set = Polyhedron::wedge_example();
        let z = Vector::from_row_slice(&[1.0, 1.0]);
        let res = set.project(&z).unwrap();
        assert_abs_diff_eq!(res.point, z, epsilon = 1e-12);
        assert_abs_diff_eq!(res.lambda.norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(res.mu.norm(), 0.0, epsilon = 1e-12);
        assert!(res.active_b.is_empty() && res.active_c.is_empty());
        kkt_ok(&set, &z, &res);
    }

    #[test]
    fn exterior_point_lands_on_facet_with_multiplier() {
        let set = Polyhedron::wedge_example();
        let z = Vector::from_row_slice(&[-1.0, 1.0]);
        let res = set.project(&z).unwrap();
        assert_abs_diff_eq!(res.point, Vector::from_row_slice(&[0.2, 0.4]), epsilon = 1e-10);
        assert_abs_diff_eq!(res.lambda[0], 0.6, epsilon = 1e-10);
        assert_abs_diff_eq!(res.mu.norm(), 0.0, epsilon = 1e-12);
        assert_eq!(res.active_b, vec![0]);
        kkt_ok(&set, &z, &res);
    }

    #[test]
    fn feasible_boundary_point_is_fixed_with_zero_multiplier() {
        let set = Polyhedron::wedge_example();
        let z = Vector::from_row_slice(&[1.0, 2.0]);
        let res = set.project(&z).unwrap();
        assert_abs_diff_eq!(res.point, z, epsilon = 1e-12);
        assert_abs_diff_eq!(res.lambda.norm(), 0.0, epsilon = 1e-12);
        assert_eq!(res.active_b, vec![0]);
        assert!(res.active_c.is_empty());
        kkt_ok(&set, &z, &res);
    }

    #[test]
    fn projection_is_idempotent() {
        let set = Polyhedron::wedge_example();
        for z in [
            Vector::from_row_slice(&[-1.0, 1.0]),
            Vector::from_row_slice(&[7.0, -3.0]),
            Vector::from_row_slice(&[9.0, 30.0]),
        ] {
            let once = set.project(&z).unwrap().point;
            let twice = set.project(&once).unwrap().point;
            assert_abs_diff_eq!(once, twice, epsilon = 1e-12);
        }
    }

    #[test]
    fn membership_examples() {
        let set = Polyhedron::wedge_example();
        assert!(set.contains(&Vector::from_row_slice(&[1.0, 2.0]), 1e-9));
        assert!(!set.contains(&Vector::from_row_slice(&[0.0, 1.0]), 0.0));
        assert!(set.contains(&Vector::from_row_slice(&[5.0, 10.0]), 0.0));
    }

    #[test]
    fn active_rows_examples() {
        let set = Polyhedron::wedge_example();
        let (ab, ac) = set.active_set(&Vector::from_row_slice(&[1.0, 2.0]), 1e-6);
        assert_eq!((ab, ac), (vec![0], vec![]));
        let (ab, ac) = set.active_set(&Vector::from_row_slice(&[3.0, 1.0]), 1e-6);
        assert!(ab.is_empty() && ac.is_empty());
        let (ab, ac) = set.active_set(&Vector::from_row_slice(&[5.0, 10.0]), 1e-6);
        assert_eq!((ab, ac), (vec![0], vec![0]));
    }

    #[test]
    fn coupling_examples() {
        let set = Polyhedron::wedge_example();
        let x = Vector::from_row_slice(&[1.0, 1.0]);
        assert_abs_diff_eq!(set.fenchel_coupling(&x, &x).unwrap(), 0.0, epsilon = 1e-12);

        let x = Vector::from_row_slice(&[1.0, 2.0]);
        assert_abs_diff_eq!(set.fenchel_coupling(&x, &x).unwrap(), 0.0, epsilon = 1e-12);

        let z = Vector::from_row_slice(&[-1.0, 1.0]);
        let val = set.fenchel_coupling(&x, &z).unwrap();
        assert_abs_diff_eq!(val, 1.6, epsilon = 1e-10);
        assert!(val >= 1.28);
        // Strong-convexity lower bound ½‖x − Q(z)‖².
        let q = set.project(&z).unwrap().point;
        assert!(val + 1e-12 >= 0.5 * (&x - q).norm_squared());
    }

    #[test]
    fn coupling_rejects_infeasible_point() {
        let set = Polyhedron::wedge_example();
        let x = Vector::from_row_slice(&[0.0, 1.0]);
        let z = Vector::from_row_slice(&[1.0, 1.0]);
        assert!(matches!(
            set.fenchel_coupling(&x, &z),
            Err(PolyhedronError::InfeasiblePoint { .. })
        ));
    }

    #[test]
    fn empty_set_detected_at_construction() {
        let err = Polyhedron::new(
            Matrix::from_row_slice(2, 1, &[1.0, -1.0]),
            Vector::from_row_slice(&[-1.0, -1.0]),
            Matrix::zeros(0, 1),
            Vector::zeros(0),
        )
        .unwrap_err();
        assert!(matches!(err, PolyhedronError::Infeasible));
    }

    #[test]
    fn vertex_projection_recovers_two_multipliers() {
        let set = Polyhedron::wedge_example();
        // Beyond the vertex (5, 10): both the facet and the x₁ cap bind.
        let z = Vector::from_row_slice(&[9.0, 11.0]);
        let res = set.project(&z).unwrap();
        kkt_ok(&set, &z, &res);
        assert_abs_diff_eq!(res.point, Vector::from_row_slice(&[5.0, 10.0]), epsilon = 1e-9);
        assert!(res.lambda[0] > 0.0 && res.mu[0] > 0.0);
    }

    #[test]
    fn warm_start_reuses_working_set() {
        let set = Polyhedron::wedge_example();
        let mut warm = WarmStart::default();
        let z1 = Vector::from_row_slice(&[-1.0, 1.0]);
        let r1 = set.project_warm(&z1, &mut warm).unwrap();
        let z2 = Vector::from_row_slice(&[-1.1, 0.9]);
        let r2 = set.project_warm(&z2, &mut warm).unwrap();
        kkt_ok(&set, &z2, &r2);
        // Same facet stays active across the warm-started call.
        assert_eq!(r1.active_b, r2.active_b);
        // And the warm path agrees with a cold solve.
        let cold = set.project(&z2).unwrap();
        assert_abs_diff_eq!(r2.point, cold.point, epsilon = 1e-12);
    }
}
