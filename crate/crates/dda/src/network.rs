//! Random gossip weight matrices: per-round sampling, structured in-place
//! application, and exact mixing diagnostics.
//!
//! Every scheme draws one matrix A per communication round with A·1 = 1 and
//! nonnegative entries. The mixing report measures ρ, the spectral norm of
//! E[Aᵀ(I − 11ᵀ/m)A], by exact enumeration over the finite choice set (one
//! atom per edge or per broadcasting node); ρ < 1 is what makes disagreement
//! contract for i.i.d. rounds.

use rand::Rng;
use thiserror::Error;

use crate::algorithms::StepSizeSchedule;
use crate::linalg::spectral_norm;
use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("graph is not connected")]
    Disconnected,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("broadcast gossip requires a regular graph (degrees found: {0:?})")]
    NotRegular(Vec<usize>),
    #[error("broadcast averaging weight must lie in (0, 1], got {0}")]
    InvalidMix(f64),
    #[error("fixed weight matrix invalid: {0}")]
    InvalidFixedMatrix(String),
}

/// Undirected simple graph on m nodes.
#[derive(Debug, Clone)]
pub struct Graph {
    m: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn complete(m: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                edges.push((i, j));
            }
        }
        Self::from_edges(m, &edges).expect("complete graph is valid")
    }

    pub fn from_edges(m: usize, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        if m == 0 {
            return Err(NetworkError::InvalidGraph("zero nodes".into()));
        }
        let mut adjacency = vec![Vec::new(); m];
        let mut seen = std::collections::BTreeSet::new();
        for &(i, j) in edges {
            if i >= m || j >= m {
                return Err(NetworkError::InvalidGraph(format!("edge ({i},{j}) out of range")));
            }
            if i == j {
                return Err(NetworkError::InvalidGraph(format!("self-loop at {i}")));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(NetworkError::InvalidGraph(format!("duplicate edge ({i},{j})")));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        let edges = seen.into_iter().collect();
        Ok(Self { m, edges, adjacency })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn is_connected(&self) -> bool {
        if self.m == 0 {
            return false;
        }
        let mut seen = vec![false; self.m];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.m
    }

    pub fn is_regular(&self) -> bool {
        let deg = self.adjacency[0].len();
        self.adjacency.iter().all(|n| n.len() == deg)
    }
}

/// One realized communication round, identified by its random choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GossipEvent {
    /// The chosen edge averages its two endpoints.
    Pair(usize, usize),
    /// The chosen node pushes its value to every neighbor.
    Broadcast(usize),
    /// Deterministic round of a fixed scheme.
    Fixed,
}

#[derive(Debug, Clone)]
enum SchemeKind {
    Pairwise,
    Broadcast { mix: f64 },
    Fixed { a: Matrix },
}

/// A generator of i.i.d. random weight matrices.
#[derive(Debug, Clone)]
pub struct GossipScheme {
    kind: SchemeKind,
    graph: Graph,
}

/// ρ and exact stochasticity flags for a scheme, from enumerating its atoms.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MixingReport {
    pub rho: f64,
    pub row_stochastic: bool,
    pub column_stochastic_in_mean: bool,
    pub doubly_stochastic_always: bool,
}

impl GossipScheme {
    /// Uniformly random edge; the endpoints swap to their average.
    pub fn pairwise(graph: Graph) -> Result<Self, NetworkError> {
        if !graph.is_connected() {
            return Err(NetworkError::Disconnected);
        }
        if graph.edges.is_empty() {
            return Err(NetworkError::InvalidGraph("pairwise gossip needs at least one edge".into()));
        }
        Ok(Self { kind: SchemeKind::Pairwise, graph })
    }

    /// Uniformly random broadcaster; each neighbor j moves to
    /// (1 − mix)·z_j + mix·z_broadcaster. Restricted to regular graphs so the
    /// mean weight matrix stays column stochastic.
    pub fn broadcast(graph: Graph, mix: f64) -> Result<Self, NetworkError> {
        if !(mix > 0.0 && mix <= 1.0) {
            return Err(NetworkError::InvalidMix(mix));
        }
        if !graph.is_connected() {
            return Err(NetworkError::Disconnected);
        }
        if !graph.is_regular() {
            let degrees = graph.adjacency.iter().map(|n| n.len()).collect();
            return Err(NetworkError::NotRegular(degrees));
        }
        Ok(Self { kind: SchemeKind::Broadcast { mix }, graph })
    }

    /// The same matrix every round; must be nonnegative with unit row sums.
    pub fn fixed(a: Matrix) -> Result<Self, NetworkError> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(NetworkError::InvalidFixedMatrix(format!(
                "must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|&v| v < 0.0) {
            return Err(NetworkError::InvalidFixedMatrix("negative entry".into()));
        }
        for i in 0..a.nrows() {
            let s: f64 = a.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(NetworkError::InvalidFixedMatrix(format!("row {i} sums to {s}")));
            }
        }
        let graph = Graph::complete(a.nrows());
        Ok(Self { kind: SchemeKind::Fixed { a }, graph })
    }

    pub fn m(&self) -> usize {
        self.graph.m
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// True when every realizable weight matrix is doubly stochastic.
    pub fn doubly_stochastic_always(&self) -> bool {
        self.atoms()
            .iter()
            .all(|(_, event)| column_sums_are_one(&self.matrix_for(*event), 1e-12))
    }

    /// Draws the random choice behind one communication round.
    pub fn sample_event<R: Rng + ?Sized>(&self, rng: &mut R) -> GossipEvent {
        match &self.kind {
            SchemeKind::Pairwise => {
                let (i, j) = self.graph.edges[rng.gen_range(0..self.graph.edges.len())];
                GossipEvent::Pair(i, j)
            }
            SchemeKind::Broadcast { .. } => GossipEvent::Broadcast(rng.gen_range(0..self.graph.m)),
            SchemeKind::Fixed { .. } => GossipEvent::Fixed,
        }
    }

    /// Materializes the weight matrix of an event.
    pub fn matrix_for(&self, event: GossipEvent) -> Matrix {
        let m = self.graph.m;
        match (&self.kind, event) {
            (SchemeKind::Pairwise, GossipEvent::Pair(i, j)) => {
                let mut a = Matrix::identity(m, m);
                a[(i, i)] = 0.5;
                a[(j, j)] = 0.5;
                a[(i, j)] = 0.5;
                a[(j, i)] = 0.5;
                a
            }
            (SchemeKind::Broadcast { mix }, GossipEvent::Broadcast(i)) => {
                let mut a = Matrix::identity(m, m);
                for &j in self.graph.neighbors(i) {
                    a[(j, j)] = 1.0 - mix;
                    a[(j, i)] = *mix;
                }
                a
            }
            (SchemeKind::Fixed { a }, GossipEvent::Fixed) => a.clone(),
            (_, event) => panic!("event {event:?} does not belong to this scheme"),
        }
    }

    /// Samples one round's weight matrix.
    pub fn sample_weight_matrix<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let event = self.sample_event(rng);
        self.matrix_for(event)
    }

    /// Applies an event's weight matrix to per-agent vectors in place, using
    /// the event structure instead of a dense multiply.
    pub fn apply_event(&self, event: GossipEvent, values: &mut [Vector]) {
        debug_assert_eq!(values.len(), self.graph.m);
        match (&self.kind, event) {
            (SchemeKind::Pairwise, GossipEvent::Pair(i, j)) => {
                let avg = (&values[i] + &values[j]) * 0.5;
                values[i].copy_from(&avg);
                values[j].copy_from(&avg);
            }
            (SchemeKind::Broadcast { mix }, GossipEvent::Broadcast(i)) => {
                // The broadcaster's own row is the identity row, so reading
                // values[i] while rewriting neighbors is safe.
                let source = values[i].clone();
                for &j in self.graph.neighbors(i) {
                    let updated = &values[j] * (1.0 - mix) + &source * *mix;
                    values[j].copy_from(&updated);
                }
            }
            (SchemeKind::Fixed { a }, GossipEvent::Fixed) => {
                let old: Vec<Vector> = values.to_vec();
                for (r, value) in values.iter_mut().enumerate() {
                    let mut acc = &old[0] * a[(r, 0)];
                    for (c, prev) in old.iter().enumerate().skip(1) {
                        acc += prev * a[(r, c)];
                    }
                    value.copy_from(&acc);
                }
            }
            (_, event) => panic!("event {event:?} does not belong to this scheme"),
        }
    }

    /// The finite probability atoms of one round: (probability, event).
    pub fn atoms(&self) -> Vec<(f64, GossipEvent)> {
        match &self.kind {
            SchemeKind::Pairwise => {
                let p = 1.0 / self.graph.edges.len() as f64;
                self.graph.edges.iter().map(|&(i, j)| (p, GossipEvent::Pair(i, j))).collect()
            }
            SchemeKind::Broadcast { .. } => {
                let p = 1.0 / self.graph.m as f64;
                (0..self.graph.m).map(|i| (p, GossipEvent::Broadcast(i))).collect()
            }
            SchemeKind::Fixed { .. } => vec![(1.0, GossipEvent::Fixed)],
        }
    }

    /// Exact mixing diagnostics by enumeration over the scheme's atoms.
    pub fn mixing_report(&self) -> MixingReport {
        let m = self.graph.m;
        let mut expected_second_moment = Matrix::zeros(m, m);
        let mut expected_a = Matrix::zeros(m, m);
        let mut row_stochastic = true;
        let mut doubly_stochastic_always = true;
        let center = Matrix::identity(m, m) - Matrix::from_element(m, m, 1.0 / m as f64);
        for (p, event) in self.atoms() {
            let a = self.matrix_for(event);
            row_stochastic &= a.iter().all(|&v| v >= 0.0) && row_sums_are_one(&a, 1e-14);
            doubly_stochastic_always &= column_sums_are_one(&a, 1e-12);
            expected_second_moment += a.transpose() * &center * &a * p;
            expected_a += &a * p;
        }
        MixingReport {
            rho: spectral_norm(&expected_second_moment),
            row_stochastic,
            column_stochastic_in_mean: column_sums_are_one(&expected_a, 1e-12),
            doubly_stochastic_always,
        }
    }

    /// Monte Carlo estimate of E[Aᵀ(I − 11ᵀ/m)A] for cross-checking the exact
    /// enumeration; returns (estimate, per-entry standard errors).
    pub fn second_moment_monte_carlo<R: Rng + ?Sized>(
        &self,
        n_samples: usize,
        rng: &mut R,
    ) -> (Matrix, Matrix) {
        let m = self.graph.m;
        let center = Matrix::identity(m, m) - Matrix::from_element(m, m, 1.0 / m as f64);
        let mut mean = Matrix::zeros(m, m);
        let mut sq = Matrix::zeros(m, m);
        for _ in 0..n_samples {
            let a = self.sample_weight_matrix(rng);
            let s = a.transpose() * &center * &a;
            mean += &s;
            sq += s.component_mul(&s);
        }
        mean /= n_samples as f64;
        sq /= n_samples as f64;
        let se = (sq - mean.component_mul(&mean)).map(|v| (v.max(0.0) / n_samples as f64).sqrt());
        (mean, se)
    }
}

/// i.i.d. rounds keep pace with any polynomially decaying step size exactly
/// when ρ < 1, so the joint step-size/mixing condition reduces to that test.
pub fn check_stepsize_vs_mixing(rho: f64, _schedule: &StepSizeSchedule) -> bool {
    rho < 1.0
}

fn row_sums_are_one(a: &Matrix, tol: f64) -> bool {
    (0..a.nrows()).all(|i| (a.row(i).iter().sum::<f64>() - 1.0).abs() <= tol)
}

fn column_sums_are_one(a: &Matrix, tol: f64) -> bool {
    (0..a.ncols()).all(|j| (a.column(j).iter().sum::<f64>() - 1.0).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::StepSizeSchedule;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairwise_on_two_nodes_is_the_average() {
        let scheme = GossipScheme::pairwise(Graph::complete(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let a = scheme.sample_weight_matrix(&mut rng);
            assert_eq!(a, Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]));
        }
    }

    #[test]
    fn pairwise_edge_matrix_on_three_nodes() {
        let scheme = GossipScheme::pairwise(Graph::complete(3)).unwrap();
        let a = scheme.matrix_for(GossipEvent::Pair(0, 1));
        let expected = Matrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(a, expected);
        // Symmetric and idempotent.
        assert_eq!(a.transpose(), a);
        assert_abs_diff_eq!(&a * &a, a.clone(), epsilon = 1e-15);
    }

    #[test]
    fn broadcast_matrix_on_three_nodes() {
        let scheme = GossipScheme::broadcast(Graph::complete(3), 0.5).unwrap();
        let a = scheme.matrix_for(GossipEvent::Broadcast(0));
        let expected = Matrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.5, 0.0, 0.5],
        );
        assert_eq!(a, expected);
    }

    #[test]
    fn pairwise_three_node_mixing_is_exact() {
        let scheme = GossipScheme::pairwise(Graph::complete(3)).unwrap();
        // Enumerating the 3 edges gives E[Aᵀ(I−11ᵀ/3)A] = (1/2)I − (1/6)11ᵀ.
        let m = 3;
        let center = Matrix::identity(m, m) - Matrix::from_element(m, m, 1.0 / 3.0);
        let mut expected = Matrix::zeros(m, m);
        for (p, e) in scheme.atoms() {
            let a = scheme.matrix_for(e);
            expected += a.transpose() * &center * &a * p;
        }
        let closed_form = Matrix::identity(3, 3) * 0.5 - Matrix::from_element(3, 3, 1.0 / 6.0);
        assert_abs_diff_eq!(expected, closed_form, epsilon = 1e-14);

        let report = scheme.mixing_report();
        assert_abs_diff_eq!(report.rho, 0.5, epsilon = 1e-12);
        assert!(report.row_stochastic);
        assert!(report.doubly_stochastic_always);
        assert!(report.column_stochastic_in_mean);
    }

    #[test]
    fn perfect_averaging_has_zero_rho() {
        let m = 4;
        let a = Matrix::from_element(m, m, 1.0 / m as f64);
        let scheme = GossipScheme::fixed(a).unwrap();
        let report = scheme.mixing_report();
        assert!(report.rho <= 1e-12, "rho {}", report.rho);
        assert!(report.doubly_stochastic_always);
    }

    #[test]
    fn broadcast_flags_on_three_nodes() {
        let scheme = GossipScheme::broadcast(Graph::complete(3), 0.5).unwrap();
        let report = scheme.mixing_report();
        assert!(report.row_stochastic);
        assert!(!report.doubly_stochastic_always);
        assert!(report.column_stochastic_in_mean);
        assert!(report.rho < 1.0);
    }

    #[test]
    fn stepsize_mixing_check_is_rho_below_one() {
        let schedule = StepSizeSchedule::new(5.0, 0.67).unwrap();
        assert!(check_stepsize_vs_mixing(0.5, &schedule));
        assert!(!check_stepsize_vs_mixing(1.0, &schedule));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let graph = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(GossipScheme::pairwise(graph), Err(NetworkError::Disconnected)));
    }

    #[test]
    fn broadcast_requires_regular_graph() {
        let path = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(matches!(
            GossipScheme::broadcast(path, 0.5),
            Err(NetworkError::NotRegular(_))
        ));
    }

    #[test]
    fn events_apply_like_their_matrices() {
        let d = 2;
        let mk = |vals: &[f64]| -> Vec<Vector> {
            vals.chunks(d).map(Vector::from_row_slice).collect()
        };
        let stack = |vs: &[Vector]| -> Matrix {
            let mut m = Matrix::zeros(vs.len(), d);
            for (i, v) in vs.iter().enumerate() {
                m.row_mut(i).copy_from(&v.transpose());
            }
            m
        };
        let schemes = vec![
            GossipScheme::pairwise(Graph::complete(3)).unwrap(),
            GossipScheme::broadcast(Graph::complete(3), 0.3).unwrap(),
            GossipScheme::fixed(Matrix::from_row_slice(
                3,
                3,
                &[0.2, 0.5, 0.3, 0.1, 0.6, 0.3, 0.4, 0.4, 0.2],
            ))
            .unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for scheme in schemes {
            for _ in 0..10 {
                let event = scheme.sample_event(&mut rng);
                let a = scheme.matrix_for(event);
                let mut values = mk(&[1.0, -2.0, 0.5, 3.0, -1.5, 4.0]);
                let dense = &a * stack(&values);
                scheme.apply_event(event, &mut values);
                assert_abs_diff_eq!(stack(&values), dense, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn sampled_rows_always_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let schemes = vec![
            GossipScheme::pairwise(Graph::complete(5)).unwrap(),
            GossipScheme::broadcast(Graph::complete(5), 0.37).unwrap(),
        ];
        for scheme in schemes {
            for _ in 0..200 {
                let a = scheme.sample_weight_matrix(&mut rng);
                assert!(a.iter().all(|&v| v >= 0.0));
                for i in 0..a.nrows() {
                    assert_abs_diff_eq!(a.row(i).iter().sum::<f64>(), 1.0, epsilon = 1e-14);
                }
            }
        }
    }
}
