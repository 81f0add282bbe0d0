//! The distributed dual-averaging iteration, a distributed projected-gradient
//! baseline, step-size schedules, trajectory recording, and the exact per-step
//! error decomposition used to validate the convergence analysis.
//!
//! One dual-averaging round k maps state k−1 to state k:
//!
//! ```text
//! x_{j,k} = Q(z_{j,k−1})                      (projection of each dual)
//! z_{j,k} = Σ_i [A_k]_{ji} z_{i,k−1} − α_k ∇F_j(x_{j,k}; ξ_{j,k})
//! ```
//!
//! with A_k drawn i.i.d. from the gossip scheme and Q the Euclidean projection
//! onto the feasible polyhedron. The projected-gradient baseline replaces the
//! dual recursion with `x_{j,k} = Q(Σ_i [A_k]_{ji} x_{i,k−1} − α_k ∇F_j(x_{j,k−1}))`.

use rand::Rng;
use thiserror::Error;

use crate::linalg::projection_matrix;
use crate::network::{GossipEvent, GossipScheme};
use crate::polyhedron::{Polyhedron, PolyhedronError, ProjectionResult, WarmStart};
use crate::problem::QuadraticEstimationProblem;
use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("invalid step-size schedule: {0}")]
    InvalidSchedule(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("agent {agent} projection failed at iteration {k}: {source}")]
    AgentProjection {
        k: usize,
        agent: usize,
        #[source]
        source: PolyhedronError,
    },
    #[error("average-iterate projection failed at iteration {k}: {source}")]
    AverageProjection {
        k: usize,
        #[source]
        source: PolyhedronError,
    },
    #[error("the error decomposition requires a scheme whose every weight matrix is doubly stochastic")]
    RequiresDoublyStochastic,
    #[error("invalid state pair: {0}")]
    InvalidStatePair(String),
}

/// α_k = a / k^alpha_exp for k ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeSchedule {
    a: f64,
    alpha_exp: f64,
}

impl StepSizeSchedule {
    pub fn new(a: f64, alpha_exp: f64) -> Result<Self, AlgorithmError> {
        if !a.is_finite() || a <= 0.0 {
            return Err(AlgorithmError::InvalidSchedule(format!("a = {a}, need a finite and > 0")));
        }
        if !alpha_exp.is_finite() || alpha_exp <= 0.0 {
            return Err(AlgorithmError::InvalidSchedule(format!(
                "alpha_exp = {alpha_exp}, need finite and > 0 so steps decay"
            )));
        }
        Ok(Self { a, alpha_exp })
    }

    pub fn value(&self, k: usize) -> f64 {
        assert!(k >= 1, "iterations are indexed from 1");
        self.a / (k as f64).powf(self.alpha_exp)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn alpha_exp(&self) -> f64 {
        self.alpha_exp
    }

    /// True when alpha_exp sits in the open window (2/3, 1) required by the
    /// asymptotic normality results. Outside it runs still work; callers
    /// surface a warning instead.
    pub fn in_theory_window(&self) -> bool {
        self.alpha_exp > 2.0 / 3.0 && self.alpha_exp < 1.0
    }
}

/// Where the gradients come from: fresh stochastic draws, or the exact
/// expectation (useful for noiseless diagnostics; consumes no randomness).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Sampled,
    Exact,
}

/// Initial dual variables z_{j,0}.
#[derive(Debug, Clone)]
pub enum InitSpec {
    /// Every agent starts at the same point.
    Point(Vector),
    /// One uniform draw from the box, shared by all agents (components drawn
    /// in index order).
    Box { lo: Vector, hi: Vector },
    /// Explicit per-agent starting points.
    PerAgent(Vec<Vector>),
}

impl InitSpec {
    pub fn draw<R: Rng + ?Sized>(
        &self,
        m: usize,
        d: usize,
        rng: &mut R,
    ) -> Result<Vec<Vector>, AlgorithmError> {
        match self {
            InitSpec::Point(p) => {
                if p.len() != d {
                    return Err(AlgorithmError::DimensionMismatch(format!(
                        "init point has length {}, expected {d}",
                        p.len()
                    )));
                }
                Ok(vec![p.clone(); m])
            }
            InitSpec::Box { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return Err(AlgorithmError::DimensionMismatch(format!(
                        "init box has lengths {}/{}, expected {d}",
                        lo.len(),
                        hi.len()
                    )));
                }
                for i in 0..d {
                    if !(lo[i] <= hi[i]) {
                        return Err(AlgorithmError::DimensionMismatch(format!(
                            "init box is empty in component {i}: [{}, {}]",
                            lo[i], hi[i]
                        )));
                    }
                }
                let mut p = Vector::zeros(d);
                for i in 0..d {
                    p[i] = lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>();
                }
                Ok(vec![p; m])
            }
            InitSpec::PerAgent(points) => {
                if points.len() != m {
                    return Err(AlgorithmError::DimensionMismatch(format!(
                        "{} init points for {m} agents",
                        points.len()
                    )));
                }
                for (j, p) in points.iter().enumerate() {
                    if p.len() != d {
                        return Err(AlgorithmError::DimensionMismatch(format!(
                            "init point of agent {j} has length {}, expected {d}",
                            p.len()
                        )));
                    }
                }
                Ok(points.clone())
            }
        }
    }
}

/// Snapshot of a dual-averaging run after k rounds.
///
/// For k ≥ 1 the primal fields hold x_{j,k} = Q(z_{j,k−1}) and the projection
/// of the averaged dual, x̄_k = Q(z̄_{k−1}), with its multipliers. At k = 0
/// only the duals exist; `x` is empty and `xbar_proj` is `None`.
#[derive(Debug, Clone)]
pub struct DdaState {
    pub k: usize,
    pub z: Vec<Vector>,
    pub x: Vec<Vector>,
    pub zbar: Vector,
    pub xbar_proj: Option<ProjectionResult>,
}

impl DdaState {
    pub fn xbar(&self) -> Option<&Vector> {
        self.xbar_proj.as_ref().map(|p| &p.point)
    }

    /// Dual disagreement Σ_j ‖z_j − z̄‖².
    pub fn consensus_error(&self) -> f64 {
        self.z.iter().map(|zj| (zj - &self.zbar).norm_squared()).sum()
    }
}

/// What one round consumed and produced besides the new state.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub alpha: f64,
    pub event: GossipEvent,
    /// The gradients ∇F_j(x_{j,k}; ξ_{j,k}) applied to the duals, in agent order.
    pub grads: Vec<Vector>,
}

/// Incremental dual-averaging runner with warm-started projections.
///
/// Randomness order per round: the gossip event first, then agent 0's
/// gradient draw through agent m−1's (each d regressor normals then one
/// noise normal). `GradientMode::Exact` draws nothing for gradients.
pub struct DdaRun<'a> {
    problem: &'a QuadraticEstimationProblem,
    set: &'a Polyhedron,
    scheme: &'a GossipScheme,
    schedule: StepSizeSchedule,
    gradients: GradientMode,
    state: DdaState,
    warm_agents: Vec<WarmStart>,
    warm_average: WarmStart,
}

impl<'a> DdaRun<'a> {
    pub fn new<R: Rng + ?Sized>(
        problem: &'a QuadraticEstimationProblem,
        set: &'a Polyhedron,
        scheme: &'a GossipScheme,
        schedule: StepSizeSchedule,
        gradients: GradientMode,
        init: &InitSpec,
        rng: &mut R,
    ) -> Result<Self, AlgorithmError> {
        let m = problem.m();
        let d = problem.d();
        if set.dim() != d {
            return Err(AlgorithmError::DimensionMismatch(format!(
                "feasible set lives in dimension {}, problem in {d}",
                set.dim()
            )));
        }
        if scheme.m() != m {
            return Err(AlgorithmError::DimensionMismatch(format!(
                "gossip scheme has {} nodes, problem has {m} agents",
                scheme.m()
            )));
        }
        let z = init.draw(m, d, rng)?;
        let mut zbar = Vector::zeros(d);
        for zj in &z {
            zbar += zj;
        }
        zbar /= m as f64;
        Ok(Self {
            problem,
            set,
            scheme,
            schedule,
            gradients,
            state: DdaState { k: 0, z, x: Vec::new(), zbar, xbar_proj: None },
            warm_agents: vec![WarmStart::default(); m],
            warm_average: WarmStart::default(),
        })
    }

    pub fn state(&self) -> &DdaState {
        &self.state
    }

    pub fn schedule(&self) -> &StepSizeSchedule {
        &self.schedule
    }

    /// Advances one round and returns what it consumed.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepOutcome, AlgorithmError> {
        let m = self.problem.m();
        let d = self.problem.d();
        let k = self.state.k + 1;
        let alpha = self.schedule.value(k);

        let mut x = Vec::with_capacity(m);
        for j in 0..m {
            let proj = self
                .set
                .project_warm(&self.state.z[j], &mut self.warm_agents[j])
                .map_err(|source| AlgorithmError::AgentProjection { k, agent: j, source })?;
            x.push(proj.point);
        }
        let xbar_proj = self
            .set
            .project_warm(&self.state.zbar, &mut self.warm_average)
            .map_err(|source| AlgorithmError::AverageProjection { k, source })?;

        let event = self.scheme.sample_event(rng);
        let grads: Vec<Vector> = match self.gradients {
            GradientMode::Sampled => {
                (0..m).map(|j| self.problem.sample_gradient(j, &x[j], rng)).collect()
            }
            GradientMode::Exact => (0..m).map(|j| self.problem.true_gradient(j, &x[j])).collect(),
        };

        self.scheme.apply_event(event, &mut self.state.z);
        for j in 0..m {
            self.state.z[j].axpy(-alpha, &grads[j], 1.0);
        }
        let mut zbar = Vector::zeros(d);
        for zj in &self.state.z {
            zbar += zj;
        }
        zbar /= m as f64;

        self.state.k = k;
        self.state.x = x;
        self.state.zbar = zbar;
        self.state.xbar_proj = Some(xbar_proj);
        Ok(StepOutcome { alpha, event, grads })
    }
}

/// Which iterations a trajectory keeps: every `stride_near` rounds up to
/// `far_threshold`, every `stride_far` after, plus always the final round.
#[derive(Debug, Clone)]
pub struct RecordSpec {
    pub stride_near: usize,
    pub far_threshold: usize,
    pub stride_far: usize,
    /// Keep per-agent primal iterates (not just the average) in each record.
    pub per_agent: bool,
}

impl Default for RecordSpec {
    fn default() -> Self {
        Self { stride_near: 1, far_threshold: 2000, stride_far: 10, per_agent: true }
    }
}

impl RecordSpec {
    pub fn every(stride: usize) -> Self {
        Self { stride_near: stride, far_threshold: usize::MAX, stride_far: stride, per_agent: true }
    }

    pub fn should_record(&self, k: usize, steps: usize) -> bool {
        if k == 0 || k > steps {
            return false;
        }
        if k == steps {
            return true;
        }
        let stride = if k <= self.far_threshold { self.stride_near } else { self.stride_far };
        stride != 0 && k % stride == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Dda,
    Dpg,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Dda => "dda",
            AlgorithmKind::Dpg => "dpg",
        }
    }
}

/// One recorded round.
///
/// For dual averaging, `consensus_error` is the dual disagreement
/// Σ_j ‖z_{j,k} − z̄_k‖² and the multipliers come from projecting z̄_{k−1}.
/// For the projected-gradient baseline there are no duals: `consensus_error`
/// is the primal disagreement Σ_j ‖x_{j,k} − x̄_k‖² and the multiplier
/// vectors are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub k: usize,
    /// Per-agent primal iterates; empty when the record spec skips them.
    pub x: Vec<Vector>,
    pub xbar: Vector,
    pub consensus_error: f64,
    pub dist_to_opt: Vec<f64>,
    pub active_b: Vec<usize>,
    pub active_c: Vec<usize>,
    pub lambda: Vector,
    pub mu: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub algorithm: AlgorithmKind,
    pub m: usize,
    pub d: usize,
    pub steps: usize,
    pub records: Vec<TrajectoryRecord>,
}

fn rhs_scale(set: &Polyhedron) -> f64 {
    let mut s = 0.0f64;
    for v in set.block_b().1.iter() {
        s = s.max(v.abs());
    }
    for v in set.block_c().1.iter() {
        s = s.max(v.abs());
    }
    s
}

fn dda_record(
    state: &DdaState,
    problem: &QuadraticEstimationProblem,
    per_agent: bool,
) -> TrajectoryRecord {
    let proj = state.xbar_proj.as_ref().expect("record of an advanced state");
    TrajectoryRecord {
        k: state.k,
        x: if per_agent { state.x.clone() } else { Vec::new() },
        xbar: proj.point.clone(),
        consensus_error: state.consensus_error(),
        dist_to_opt: state.x.iter().map(|xj| (xj - problem.x_star()).norm()).collect(),
        active_b: proj.active_b.clone(),
        active_c: proj.active_c.clone(),
        lambda: proj.lambda.clone(),
        mu: proj.mu.clone(),
    }
}

/// Runs dual averaging for `steps` rounds and records a trajectory.
#[allow(clippy::too_many_arguments)]
pub fn dda_run<R: Rng + ?Sized>(
    problem: &QuadraticEstimationProblem,
    set: &Polyhedron,
    scheme: &GossipScheme,
    schedule: &StepSizeSchedule,
    steps: usize,
    init: &InitSpec,
    gradients: GradientMode,
    rng: &mut R,
    record: &RecordSpec,
) -> Result<Trajectory, AlgorithmError> {
    let mut run = DdaRun::new(problem, set, scheme, *schedule, gradients, init, rng)?;
    let mut records = Vec::new();
    for k in 1..=steps {
        run.step(rng)?;
        if record.should_record(k, steps) {
            records.push(dda_record(run.state(), problem, record.per_agent));
        }
    }
    Ok(Trajectory {
        algorithm: AlgorithmKind::Dda,
        m: problem.m(),
        d: problem.d(),
        steps,
        records,
    })
}

/// Snapshot of a projected-gradient run: at k = 0 the raw starting points
/// (possibly infeasible), for k ≥ 1 the feasible post-projection iterates.
#[derive(Debug, Clone)]
pub struct DpgState {
    pub k: usize,
    pub x: Vec<Vector>,
}

impl DpgState {
    /// Mean primal iterate.
    pub fn xbar(&self) -> Vector {
        let mut xbar = Vector::zeros(self.x[0].len());
        for xj in &self.x {
            xbar += xj;
        }
        xbar / self.x.len() as f64
    }

    /// Primal disagreement Σ_j ‖x_j − x̄‖² (there are no duals to disagree).
    pub fn consensus_error(&self) -> f64 {
        let xbar = self.xbar();
        self.x.iter().map(|xj| (xj - &xbar).norm_squared()).sum()
    }
}

/// Incremental projected-gradient runner. Consumes randomness in the same
/// order as `DdaRun` (init draw; per round the gossip event, then gradient
/// draws) so the two algorithms can be paired on identical seed streams.
pub struct DpgRun<'a> {
    problem: &'a QuadraticEstimationProblem,
    set: &'a Polyhedron,
    scheme: &'a GossipScheme,
    schedule: StepSizeSchedule,
    gradients: GradientMode,
    state: DpgState,
    warms: Vec<WarmStart>,
}

impl<'a> DpgRun<'a> {
    pub fn new<R: Rng + ?Sized>(
        problem: &'a QuadraticEstimationProblem,
        set: &'a Polyhedron,
        scheme: &'a GossipScheme,
        schedule: StepSizeSchedule,
        gradients: GradientMode,
        init: &InitSpec,
        rng: &mut R,
    ) -> Result<Self, AlgorithmError> {
        let m = problem.m();
        let d = problem.d();
        if set.dim() != d {
            return Err(AlgorithmError::DimensionMismatch(format!(
                "feasible set lives in dimension {}, problem in {d}",
                set.dim()
            )));
        }
        if scheme.m() != m {
            return Err(AlgorithmError::DimensionMismatch(format!(
                "gossip scheme has {} nodes, problem has {m} agents",
                scheme.m()
            )));
        }
        let x = init.draw(m, d, rng)?;
        Ok(Self {
            problem,
            set,
            scheme,
            schedule,
            gradients,
            state: DpgState { k: 0, x },
            warms: vec![WarmStart::default(); m],
        })
    }

    pub fn state(&self) -> &DpgState {
        &self.state
    }

    /// One round: mix, step from the pre-mix gradients, project.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepOutcome, AlgorithmError> {
        let m = self.problem.m();
        let k = self.state.k + 1;
        let alpha = self.schedule.value(k);
        let event = self.scheme.sample_event(rng);
        let grads: Vec<Vector> = match self.gradients {
            GradientMode::Sampled => {
                (0..m).map(|j| self.problem.sample_gradient(j, &self.state.x[j], rng)).collect()
            }
            GradientMode::Exact => {
                (0..m).map(|j| self.problem.true_gradient(j, &self.state.x[j])).collect()
            }
        };
        self.scheme.apply_event(event, &mut self.state.x);
        for j in 0..m {
            self.state.x[j].axpy(-alpha, &grads[j], 1.0);
            self.state.x[j] = self
                .set
                .project_warm(&self.state.x[j], &mut self.warms[j])
                .map_err(|source| AlgorithmError::AgentProjection { k, agent: j, source })?
                .point;
        }
        self.state.k = k;
        Ok(StepOutcome { alpha, event, grads })
    }
}

/// Runs the distributed projected-gradient baseline and records a trajectory.
#[allow(clippy::too_many_arguments)]
pub fn dpg_run<R: Rng + ?Sized>(
    problem: &QuadraticEstimationProblem,
    set: &Polyhedron,
    scheme: &GossipScheme,
    schedule: &StepSizeSchedule,
    steps: usize,
    init: &InitSpec,
    gradients: GradientMode,
    rng: &mut R,
    record: &RecordSpec,
) -> Result<Trajectory, AlgorithmError> {
    let mut run = DpgRun::new(problem, set, scheme, *schedule, gradients, init, rng)?;
    let scale_rhs = rhs_scale(set);
    let mut records = Vec::new();
    for k in 1..=steps {
        run.step(rng)?;
        if record.should_record(k, steps) {
            let st = run.state();
            let xbar = st.xbar();
            let consensus_error = st.consensus_error();
            let tol = 1e-9 * (1.0 + xbar.amax() + scale_rhs);
            let (active_b, active_c) = set.active_set(&xbar, tol);
            records.push(TrajectoryRecord {
                k,
                x: if record.per_agent { st.x.clone() } else { Vec::new() },
                xbar,
                consensus_error,
                dist_to_opt: st.x.iter().map(|xj| (xj - problem.x_star()).norm()).collect(),
                active_b,
                active_c,
                lambda: Vector::zeros(0),
                mu: Vector::zeros(0),
            });
        }
    }
    Ok(Trajectory {
        algorithm: AlgorithmKind::Dpg,
        m: problem.m(),
        d: problem.d(),
        steps,
        records,
    })
}

/// The pieces of one round of the averaged-iterate error recursion.
///
/// With Δ_k = P_B(x̄_k − x*) and H = (1/m)·P_B ∇²f(x*) P_B, consecutive states
/// of a doubly stochastic run satisfy exactly
///
/// ```text
/// Δ_{k+1} = Δ_k − α_k·H·Δ_k + α_k·(ζ_k + η_k + s_k + ε_k)
/// ```
///
/// where ζ is the Taylor remainder of ∇f at x̄_k (identically zero for
/// quadratics), η the consensus-gap gradient error, s the sampling noise, and
/// ε the projection-multiplier correction (plus the stationarity term
/// −(1/m)P_B∇f(x*), zero whenever −∇f(x*) lies in range(Bᵀ)).
#[derive(Debug, Clone)]
pub struct ErrorDecomposition {
    pub alpha: f64,
    pub delta: Vector,
    pub delta_next: Vector,
    pub zeta: Vector,
    pub eta: Vector,
    pub s: Vector,
    pub eps: Vector,
    /// ‖Δ_{k+1} − (Δ_k − α_k·H·Δ_k + α_k·(ζ+η+s+ε))‖; zero up to roundoff.
    pub residual: f64,
}

/// Decomposes the transition from `prev` (round k ≥ 1) to `next` (round k+1).
///
/// `grads` must be the gradients from the round that produced `prev`, i.e.
/// `StepOutcome::grads` evaluated at `prev.x`. Requires a scheme whose
/// matrices are always doubly stochastic, since only then does the averaged
/// dual follow z̄_k = z̄_{k−1} − (α_k/m)·Σ_j ∇F_j.
pub fn error_decomposition(
    problem: &QuadraticEstimationProblem,
    set: &Polyhedron,
    scheme: &GossipScheme,
    schedule: &StepSizeSchedule,
    prev: &DdaState,
    next: &DdaState,
    grads: &[Vector],
) -> Result<ErrorDecomposition, AlgorithmError> {
    if !scheme.doubly_stochastic_always() {
        return Err(AlgorithmError::RequiresDoublyStochastic);
    }
    if next.k != prev.k + 1 || prev.k == 0 {
        return Err(AlgorithmError::InvalidStatePair(format!(
            "need consecutive advanced states, got k = {} and {}",
            prev.k, next.k
        )));
    }
    let m = problem.m();
    let d = problem.d();
    if grads.len() != m || prev.x.len() != m {
        return Err(AlgorithmError::InvalidStatePair(format!(
            "{} gradients / {} primal iterates for {m} agents",
            grads.len(),
            prev.x.len()
        )));
    }
    let (prev_proj, next_proj) = match (&prev.xbar_proj, &next.xbar_proj) {
        (Some(p), Some(n)) => (p, n),
        _ => {
            return Err(AlgorithmError::InvalidStatePair(
                "states are missing the averaged-dual projection".into(),
            ))
        }
    };

    let m_f = m as f64;
    let alpha = schedule.value(prev.k);
    let p_b = projection_matrix(set.block_b().0);
    let eye = Matrix::identity(d, d);
    let x_star = problem.x_star();
    let xbar = &prev_proj.point;
    let hess = problem.hessian_total();

    let delta = &p_b * (xbar - x_star);
    let delta_next = &p_b * (&next_proj.point - x_star);

    let lin_remainder =
        problem.total_gradient(xbar) - problem.total_gradient(x_star) - &hess * (xbar - x_star);
    let zeta = -(&p_b * lin_remainder) / m_f;

    let mut eta_sum = Vector::zeros(d);
    let mut s_sum = Vector::zeros(d);
    for j in 0..m {
        let at_agent = problem.true_gradient(j, &prev.x[j]);
        eta_sum += problem.true_gradient(j, xbar) - &at_agent;
        s_sum += &grads[j] - at_agent;
    }
    let eta = (&p_b * eta_sum) / m_f;
    let s = -(&p_b * s_sum) / m_f;

    let mut eps = (&p_b * (&hess * ((&p_b - &eye) * (xbar - x_star)))) / m_f;
    if set.n_rows_c() > 0 {
        let c = set.block_c().0;
        eps += (&p_b * (c.transpose() * (&prev_proj.mu - &next_proj.mu))) / alpha;
    }
    eps -= (&p_b * problem.total_gradient(x_star)) / m_f;

    let h = (&p_b * (&hess * &p_b)) / m_f;
    let predicted = &delta - (&h * &delta) * alpha + (&zeta + &eta + &s + &eps) * alpha;
    let residual = (&delta_next - predicted).norm();

    Ok(ErrorDecomposition { alpha, delta, delta_next, zeta, eta, s, eps, residual })
}
