//! Asymptotic predictions and the Monte Carlo machinery that validates them.
//!
//! The model side turns a problem + feasible set into the limit quantities of
//! the averaged iterate: with B the constraint block active at x*,
//! P_B the projector onto ker(B), U an orthogonal basis ordered kernel-first,
//! and H = (1/m)·P_B ∇²f(x*) P_B,
//!
//! * the scaled error x̄_k − x* over √α_k tends to N(0, Σ) where the free-block
//!   Σ₁ solves the Lyapunov equation G·Σ₁ + Σ₁·Gᵀ = U_rᵀ Σ̄_P U_r with
//!   G = U_rᵀ H U_r and Σ̄_P = P_B Σ̄ P_B, Σ̄ = (1/m²)·Σ_j Cov(∇F_j(x*)),
//! * windowed averages of the iterates, scaled by the square root of the
//!   window length, tend to N(0, Σ*) with Σ* = H† Σ̄_P H†.
//!
//! The experiment side runs seed-derived replications (in parallel, with
//! canonical aggregation order) and reduces them to the statistics the theory
//! speaks about: empirical covariances, one-dimensional Kolmogorov-Smirnov
//! tests, consensus decay slopes, identification times, and tail-ratio trends.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::algorithms::{
    dda_run, dpg_run, AlgorithmError, AlgorithmKind, DdaRun, DpgRun, GradientMode, InitSpec,
    RecordSpec, StepSizeSchedule, Trajectory,
};
use crate::linalg::{
    lyapunov_solve, null_space_basis, projection_matrix, pseudo_inverse, LinalgError, SubspaceBasis,
};
use crate::network::GossipScheme;
use crate::polyhedron::Polyhedron;
use crate::problem::QuadraticEstimationProblem;
use crate::{derive_seed, Matrix, Vector};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("the declared facet block is not the active set at the optimum: {0}")]
    ActiveSetMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
}

/// Limit covariances and the spectral data behind them.
#[derive(Debug, Clone)]
pub struct AsymptoticModel {
    /// Orthogonal basis ordered kernel-first; `basis.r` is the free dimension.
    pub basis: SubspaceBasis,
    /// Projector onto ker(B).
    pub p_b: Matrix,
    /// H = (1/m)·P_B ∇²f(x*) P_B.
    pub h: Matrix,
    /// Free-block curvature G = U_rᵀ H U_r (r×r).
    pub g: Matrix,
    /// Σ̄ = (1/m²)·Σ_j Cov(∇F_j(x*)).
    pub sigma_bar: Matrix,
    /// Free-block solution of G·Σ₁ + Σ₁·Gᵀ = U_rᵀ Σ̄_P U_r.
    pub sigma1: Matrix,
    /// Scaled-error covariance Σ = U·blockdiag(Σ₁, 0)·Uᵀ (d×d, rank ≤ r).
    pub sigma: Matrix,
    /// Averaged-iterate covariance Σ* = H† Σ̄_P H†.
    pub sigma_star: Matrix,
    /// Least-squares multiplier of the mean objective on the facet rows:
    /// y* = −(BBᵀ)†B·∇f̄(x*).
    pub facet_multiplier: Vector,
    /// ‖P_B ∇f̄(x*)‖: zero exactly when −∇f̄(x*) ∈ range(Bᵀ).
    pub criticality_residual: f64,
    /// Criticality holds and every facet multiplier is strictly positive.
    pub strict_complementarity: bool,
    /// λ_min of the symmetric part of G (∞ when r = 0).
    pub restricted_margin: f64,
}

/// Builds the asymptotic model at the problem's optimum.
///
/// The set's first block must be exactly the constraints active at x*: rows of
/// the B block hold with equality, rows of the C block with strict slack.
pub fn build_asymptotic_model(
    problem: &QuadraticEstimationProblem,
    set: &Polyhedron,
) -> Result<AsymptoticModel, AnalysisError> {
    let d = problem.d();
    let m_f = problem.m() as f64;
    if set.dim() != d {
        return Err(AnalysisError::InvalidArgument(format!(
            "set dimension {} vs problem dimension {d}",
            set.dim()
        )));
    }
    let x_star = problem.x_star();
    if !set.contains(x_star, 1e-8) {
        return Err(AnalysisError::InvalidArgument(
            "the optimum is not feasible for the given set".into(),
        ));
    }
    let (b, b_rhs) = set.block_b();
    let (c, c_rhs) = set.block_c();
    let scale = 1.0 + x_star.amax();
    if b.nrows() > 0 {
        let facet_residual = (b * x_star - b_rhs).amax();
        if facet_residual > 1e-8 * scale {
            return Err(AnalysisError::ActiveSetMismatch(format!(
                "a declared-active row has slack {facet_residual:.3e} at the optimum"
            )));
        }
    }
    if c.nrows() > 0 {
        let min_slack = (c_rhs - c * x_star).min();
        if min_slack <= 1e-8 * scale {
            return Err(AnalysisError::ActiveSetMismatch(format!(
                "a declared-inactive row is tight at the optimum (slack {min_slack:.3e})"
            )));
        }
    }

    let basis = null_space_basis(b);
    let r = basis.r;
    let p_b = projection_matrix(b);
    let hess = problem.hessian_total();
    let h = (&p_b * (&hess * &p_b)) / m_f;

    let mut sigma_bar = Matrix::zeros(d, d);
    for j in 0..problem.m() {
        sigma_bar += problem.gradient_covariance(j);
    }
    sigma_bar /= m_f * m_f;
    let sigma_bar_p = &p_b * (&sigma_bar * &p_b);

    let mean_grad_at_opt = problem.total_gradient(x_star) / m_f;
    let criticality_residual = (&p_b * &mean_grad_at_opt).norm();
    let facet_multiplier = if b.nrows() > 0 {
        -(pseudo_inverse(&(b * b.transpose())) * (b * &mean_grad_at_opt))
    } else {
        Vector::zeros(0)
    };
    let critical = criticality_residual <= 1e-8 * (1.0 + mean_grad_at_opt.norm());
    let strict_complementarity =
        critical && facet_multiplier.iter().all(|&y| y > 1e-8);

    let u_r = basis.u.columns(0, r).into_owned();
    let (g, sigma1, restricted_margin) = if r == 0 {
        (Matrix::zeros(0, 0), Matrix::zeros(0, 0), f64::INFINITY)
    } else {
        let g = u_r.transpose() * (&h * &u_r);
        let noise_reduced = u_r.transpose() * (&sigma_bar_p * &u_r);
        let sym = (&g + g.transpose()) * 0.5;
        let margin = nalgebra::linalg::SymmetricEigen::new(sym).eigenvalues.min();
        let sigma1 = lyapunov_solve(&g, &noise_reduced)?;
        (g, sigma1, margin)
    };

    let mut padded = Matrix::zeros(d, d);
    padded.view_mut((0, 0), (r, r)).copy_from(&sigma1);
    let sigma = &basis.u * padded * basis.u.transpose();
    let h_pinv = pseudo_inverse(&h);
    let sigma_star = &h_pinv * (&sigma_bar_p * &h_pinv);

    Ok(AsymptoticModel {
        basis,
        p_b,
        h,
        g,
        sigma_bar,
        sigma1,
        sigma,
        sigma_star,
        facet_multiplier,
        criticality_residual,
        strict_complementarity,
        restricted_margin,
    })
}

/// Replication plan for `monte_carlo`. Replication i runs on the seed stream
/// `derive_seed(master_seed, i+1)`.
#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    pub runs: usize,
    pub steps: usize,
    /// Which algorithm the replications run (the baseline mode exists to
    /// compare identification statistics on the same seeds).
    pub algorithm: AlgorithmKind,
    /// Agent whose iterates feed the scaled-error and windowed samples.
    pub agent: usize,
    /// The averaging window is (⌊fraction·steps⌋, steps].
    pub window_start_fraction: f64,
    /// Activity tolerance for streamed identification tracking.
    pub ident_tol: f64,
    /// Log-grid density for the consensus decay curve; 0 disables the curve.
    pub consensus_points_per_decade: usize,
    pub master_seed: u64,
}

impl MonteCarloConfig {
    pub fn new(runs: usize, steps: usize, master_seed: u64) -> Self {
        Self {
            runs,
            steps,
            algorithm: AlgorithmKind::Dda,
            agent: 0,
            window_start_fraction: 0.75,
            ident_tol: 1e-6,
            consensus_points_per_decade: 16,
            master_seed,
        }
    }
}

/// Uniform streaming interface over the two algorithms.
enum AnyRun<'a> {
    Dda(DdaRun<'a>),
    Dpg(DpgRun<'a>),
}

impl<'a> AnyRun<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new<R: rand::Rng + ?Sized>(
        kind: AlgorithmKind,
        problem: &'a QuadraticEstimationProblem,
        set: &'a Polyhedron,
        scheme: &'a GossipScheme,
        schedule: StepSizeSchedule,
        gradients: GradientMode,
        init: &InitSpec,
        rng: &mut R,
    ) -> Result<Self, AlgorithmError> {
        Ok(match kind {
            AlgorithmKind::Dda => {
                AnyRun::Dda(DdaRun::new(problem, set, scheme, schedule, gradients, init, rng)?)
            }
            AlgorithmKind::Dpg => {
                AnyRun::Dpg(DpgRun::new(problem, set, scheme, schedule, gradients, init, rng)?)
            }
        })
    }

    fn step<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), AlgorithmError> {
        match self {
            AnyRun::Dda(r) => r.step(rng).map(|_| ()),
            AnyRun::Dpg(r) => r.step(rng).map(|_| ()),
        }
    }

    fn x(&self) -> &[Vector] {
        match self {
            AnyRun::Dda(r) => &r.state().x,
            AnyRun::Dpg(r) => &r.state().x,
        }
    }

    fn xbar(&self) -> Vector {
        match self {
            AnyRun::Dda(r) => r.state().xbar().expect("advanced state").clone(),
            AnyRun::Dpg(r) => r.state().xbar(),
        }
    }

    fn consensus_error(&self) -> f64 {
        match self {
            AnyRun::Dda(r) => r.state().consensus_error(),
            AnyRun::Dpg(r) => r.state().consensus_error(),
        }
    }
}

/// What one replication reduces to.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: u64,
    pub seed: u64,
    /// x_{agent,K}.
    pub final_x_agent: Vector,
    /// (x_{agent,K} − x*)/√α_K.
    pub scaled_error: Vector,
    /// √N·(window mean of x_{agent,t} − x*), N the window length.
    pub windowed_average_error: Vector,
    pub final_consensus_error: f64,
    pub final_dist_to_opt: f64,
    pub final_max_dist_to_opt: f64,
    /// First round from which the averaged iterate's active set stayed equal
    /// to the active set at x*; None when it still differed at round K.
    pub identified_since: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MonteCarloOutput {
    /// One summary per replication, in run-id order.
    pub summaries: Vec<RunSummary>,
    /// Rounds of the consensus decay curve (log grid).
    pub consensus_grid: Vec<usize>,
    /// Mean over replications of Σ_j ‖z_{j,k} − z̄_k‖² at each grid round.
    pub mean_consensus: Vec<f64>,
}

/// Log-spaced integer grid in [1, max_k], deduplicated.
pub fn log_grid(max_k: usize, points_per_decade: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if max_k == 0 || points_per_decade == 0 {
        return out;
    }
    let mut i = 0usize;
    loop {
        let k = 10f64.powf(i as f64 / points_per_decade as f64).round().max(1.0) as usize;
        if k > max_k {
            break;
        }
        if out.last() != Some(&k) {
            out.push(k);
        }
        i += 1;
    }
    out
}

/// Runs seed-derived dual-averaging replications in parallel and collects
/// per-run summaries plus the mean consensus decay curve. Output is
/// independent of thread scheduling: replications are aggregated in run-id
/// order.
pub fn monte_carlo(
    problem: &QuadraticEstimationProblem,
    set: &Polyhedron,
    scheme: &GossipScheme,
    schedule: &StepSizeSchedule,
    init: &InitSpec,
    gradients: GradientMode,
    cfg: &MonteCarloConfig,
) -> Result<MonteCarloOutput, AnalysisError> {
    if cfg.runs == 0 || cfg.steps == 0 {
        return Err(AnalysisError::InvalidArgument(
            "monte carlo needs at least one run and one step".into(),
        ));
    }
    if cfg.agent >= problem.m() {
        return Err(AnalysisError::InvalidArgument(format!(
            "agent {} out of range for {} agents",
            cfg.agent,
            problem.m()
        )));
    }
    if !(0.0..1.0).contains(&cfg.window_start_fraction) {
        return Err(AnalysisError::InvalidArgument(format!(
            "window start fraction {} must lie in [0, 1)",
            cfg.window_start_fraction
        )));
    }

    let grid = log_grid(cfg.steps, cfg.consensus_points_per_decade);
    let x_star = problem.x_star();
    let target = declared_active_target(set);
    let k0 = ((cfg.window_start_fraction * cfg.steps as f64).floor() as usize).min(cfg.steps - 1);
    let n_window = (cfg.steps - k0) as f64;
    let alpha_final = schedule.value(cfg.steps);

    let results: Result<Vec<(RunSummary, Vec<f64>)>, AnalysisError> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|run_id| {
            let seed = derive_seed(cfg.master_seed, run_id + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut run = AnyRun::new(
                cfg.algorithm,
                problem,
                set,
                scheme,
                *schedule,
                gradients,
                init,
                &mut rng,
            )?;
            let mut window_sum = Vector::zeros(problem.d());
            let mut consensus = Vec::with_capacity(grid.len());
            let mut gi = 0usize;
            let mut last_mismatch = 0usize;
            for k in 1..=cfg.steps {
                run.step(&mut rng)?;
                if k > k0 {
                    window_sum += &run.x()[cfg.agent];
                }
                if gi < grid.len() && grid[gi] == k {
                    consensus.push(run.consensus_error());
                    gi += 1;
                }
                let active = set.active_set(&run.xbar(), cfg.ident_tol);
                if active != target {
                    last_mismatch = k;
                }
            }
            let final_x_agent = run.x()[cfg.agent].clone();
            let scaled_error = (&final_x_agent - x_star) / alpha_final.sqrt();
            let windowed_average_error =
                (window_sum / n_window - x_star) * n_window.sqrt();
            let dists: Vec<f64> =
                run.x().iter().map(|xj| (xj - x_star).norm()).collect();
            let summary = RunSummary {
                run_id,
                seed,
                final_x_agent,
                scaled_error,
                windowed_average_error,
                final_consensus_error: run.consensus_error(),
                final_dist_to_opt: dists[cfg.agent],
                final_max_dist_to_opt: dists.iter().copied().fold(0.0, f64::max),
                identified_since: if last_mismatch == cfg.steps {
                    None
                } else {
                    Some(last_mismatch + 1)
                },
            };
            Ok((summary, consensus))
        })
        .collect();
    let mut results = results?;
    results.sort_by_key(|(s, _)| s.run_id);

    let mut mean_consensus = vec![0.0; grid.len()];
    for (_, curve) in &results {
        for (acc, v) in mean_consensus.iter_mut().zip(curve) {
            *acc += v;
        }
    }
    for v in &mut mean_consensus {
        *v /= cfg.runs as f64;
    }

    Ok(MonteCarloOutput {
        summaries: results.into_iter().map(|(s, _)| s).collect(),
        consensus_grid: grid,
        mean_consensus,
    })
}

/// The active set a run is expected to settle on: every equality-like row of
/// the declared block tight, none of the guard rows tight.
fn declared_active_target(set: &Polyhedron) -> (Vec<usize>, Vec<usize>) {
    ((0..set.n_rows_b()).collect(), Vec::new())
}

/// First recorded round from which every later recorded active set of the
/// averaged iterate equals the declared facet (all of the declared block
/// tight, no guard row tight); None if the last record still differs (or
/// there are no records). Exact only when the trajectory recorded every
/// round.
pub fn identification_time(traj: &Trajectory, set: &Polyhedron, tol: f64) -> Option<usize> {
    let target = declared_active_target(set);
    let mut since = None;
    for rec in &traj.records {
        if set.active_set(&rec.xbar, tol) == target {
            since.get_or_insert(rec.k);
        } else {
            since = None;
        }
    }
    since
}

#[derive(Debug, Clone)]
pub struct IdentificationConfig {
    pub runs: usize,
    pub steps: usize,
    pub tol: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationOutcome {
    pub run_id: u64,
    pub seed: u64,
    pub dda_since: Option<usize>,
    pub dpg_since: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct IdentificationReport {
    pub outcomes: Vec<IdentificationOutcome>,
    pub dda_identified_fraction: f64,
    pub dpg_identified_fraction: f64,
    /// Median identification round among the runs that identified (None when
    /// none did).
    pub dda_median_since: Option<f64>,
    pub dpg_median_since: Option<f64>,
}

/// Runs dual averaging and the projected-gradient baseline on identical seed
/// streams and compares how often (and when) each settles on the optimal
/// active set.
pub fn identification_experiment(
    problem: &QuadraticEstimationProblem,
    set: &Polyhedron,
    scheme: &GossipScheme,
    schedule: &StepSizeSchedule,
    init: &InitSpec,
    gradients: GradientMode,
    cfg: &IdentificationConfig,
) -> Result<IdentificationReport, AnalysisError> {
    if cfg.runs == 0 || cfg.steps == 0 {
        return Err(AnalysisError::InvalidArgument(
            "identification experiment needs at least one run and one step".into(),
        ));
    }
    let record = RecordSpec {
        stride_near: 1,
        far_threshold: usize::MAX,
        stride_far: 1,
        per_agent: false,
    };
    let results: Result<Vec<IdentificationOutcome>, AnalysisError> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|run_id| {
            let seed = derive_seed(cfg.master_seed, run_id + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dda = dda_run(
                problem, set, scheme, schedule, cfg.steps, init, gradients, &mut rng, &record,
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dpg = dpg_run(
                problem, set, scheme, schedule, cfg.steps, init, gradients, &mut rng, &record,
            )?;
            Ok(IdentificationOutcome {
                run_id,
                seed,
                dda_since: identification_time(&dda, set, cfg.tol),
                dpg_since: identification_time(&dpg, set, cfg.tol),
            })
        })
        .collect();
    let mut outcomes = results?;
    outcomes.sort_by_key(|o| o.run_id);

    let frac = |f: &dyn Fn(&IdentificationOutcome) -> Option<usize>| {
        outcomes.iter().filter(|o| f(o).is_some()).count() as f64 / cfg.runs as f64
    };
    let median_of = |f: &dyn Fn(&IdentificationOutcome) -> Option<usize>| {
        median(
            outcomes
                .iter()
                .filter_map(|o| f(o).map(|k| k as f64))
                .collect(),
        )
    };
    let dda_pick: &dyn Fn(&IdentificationOutcome) -> Option<usize> = &|o| o.dda_since;
    let dpg_pick: &dyn Fn(&IdentificationOutcome) -> Option<usize> = &|o| o.dpg_since;
    Ok(IdentificationReport {
        dda_identified_fraction: frac(dda_pick),
        dpg_identified_fraction: frac(dpg_pick),
        dda_median_since: median_of(dda_pick),
        dpg_median_since: median_of(dpg_pick),
        outcomes,
    })
}

/// Median of a sample (mean of the central pair for even sizes); None when
/// empty.
pub fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Sample mean and (n−1)-normalized covariance of vector samples.
pub fn empirical_covariance(samples: &[Vector]) -> (Vector, Matrix) {
    assert!(!samples.is_empty(), "need at least one sample");
    let d = samples[0].len();
    let n = samples.len();
    let mut mean = Vector::zeros(d);
    for s in samples {
        mean += s;
    }
    mean /= n as f64;
    let mut cov = Matrix::zeros(d, d);
    if n > 1 {
        for s in samples {
            let e = s - &mean;
            cov += &e * e.transpose();
        }
        cov /= (n - 1) as f64;
    }
    (mean, cov)
}

/// ‖observed − reference‖_F / ‖reference‖_F. A zero reference gives 0 for an
/// exact match and +inf otherwise.
pub fn relative_frobenius(observed: &Matrix, reference: &Matrix) -> f64 {
    let diff = (observed - reference).norm();
    let denom = reference.norm();
    if denom == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / denom
    }
}

/// Empirical covariance of a sample set against a predicted covariance.
#[derive(Debug, Clone)]
pub struct CovarianceComparison {
    pub n: usize,
    pub mean: Vector,
    pub covariance: Matrix,
    pub reference: Matrix,
    pub relative_frobenius_error: f64,
}

pub fn covariance_comparison(samples: &[Vector], reference: &Matrix) -> CovarianceComparison {
    let (mean, covariance) = empirical_covariance(samples);
    CovarianceComparison {
        n: samples.len(),
        relative_frobenius_error: relative_frobenius(&covariance, reference),
        mean,
        covariance,
        reference: reference.clone(),
    }
}

/// Distributional summary of a Monte Carlo batch against an asymptotic model:
/// covariances of the scaled final error and the windowed averaged error, a
/// one-dimensional normality test along the leading manifold direction, the
/// off-manifold leakage, and active-set identification statistics.
#[derive(Debug, Clone)]
pub struct CovarianceReport {
    pub n: usize,
    pub empirical_cov_scaled: Matrix,
    pub empirical_cov_averaged: Matrix,
    pub rel_frobenius_error_sigma: f64,
    pub rel_frobenius_error_sigma_star: f64,
    pub ks_statistic_active_direction: f64,
    pub ks_pvalue_active_direction: f64,
    pub offmanifold_std_ratio: f64,
    pub identification_fraction: f64,
    /// Median identification round among the runs that identified; None when
    /// none did.
    pub median_identification_time: Option<f64>,
}

/// Aggregates a Monte Carlo batch into a [`CovarianceReport`]. Needs at least
/// two replications for the covariances to exist.
///
/// Degenerate cases are graded strictly: with a singular model variance along
/// the test direction the p-value is 1 when the projected samples are all
/// (numerically) zero and 0 otherwise, and a zero on-manifold spread makes the
/// leakage ratio 0 or +inf by the same rule.
pub fn covariance_report(
    batch: &MonteCarloOutput,
    model: &AsymptoticModel,
) -> Result<CovarianceReport, AnalysisError> {
    let n = batch.summaries.len();
    if n < 2 {
        return Err(AnalysisError::InvalidArgument(format!(
            "covariance report needs at least 2 replications, got {n}"
        )));
    }
    // Canonical replication order, so the report does not depend on how the
    // batch was assembled.
    let mut order: Vec<&RunSummary> = batch.summaries.iter().collect();
    order.sort_by_key(|s| s.run_id);
    let scaled: Vec<Vector> = order.iter().map(|s| s.scaled_error.clone()).collect();
    let averaged: Vec<Vector> =
        order.iter().map(|s| s.windowed_average_error.clone()).collect();
    let (_, cov_scaled) = empirical_covariance(&scaled);
    let (_, cov_averaged) = empirical_covariance(&averaged);

    let (statistic, p_value) = if model.basis.r == 0 {
        (0.0, 1.0)
    } else {
        let u1 = model.basis.u.column(0).clone_owned();
        let projected: Vec<f64> = scaled.iter().map(|s| u1.dot(s)).collect();
        let var = (u1.transpose() * &model.sigma * &u1)[(0, 0)];
        if var > 0.0 {
            let ks = ks_test_normal(&projected, 0.0, var)?;
            (ks.statistic, ks.p_value)
        } else if projected.iter().all(|s| s.abs() <= 1e-12) {
            (0.0, 1.0)
        } else {
            (1.0, 0.0)
        }
    };

    let (on, off) = manifold_component_rms(&scaled, &model.basis);
    let offmanifold_std_ratio = if on == 0.0 {
        if off == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        off / on
    };

    let identified: Vec<f64> = batch
        .summaries
        .iter()
        .filter_map(|s| s.identified_since.map(|k| k as f64))
        .collect();
    let identification_fraction = identified.len() as f64 / n as f64;

    Ok(CovarianceReport {
        n,
        rel_frobenius_error_sigma: relative_frobenius(&cov_scaled, &model.sigma),
        rel_frobenius_error_sigma_star: relative_frobenius(&cov_averaged, &model.sigma_star),
        empirical_cov_scaled: cov_scaled,
        empirical_cov_averaged: cov_averaged,
        ks_statistic_active_direction: statistic,
        ks_pvalue_active_direction: p_value,
        offmanifold_std_ratio,
        identification_fraction,
        median_identification_time: median(identified),
    })
}

/// Two-sided Kolmogorov-Smirnov statistic sup_x |F_n(x) − F(x)| against a
/// continuous reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    assert!(!samples.is_empty(), "need at least one sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// CDF of the Kolmogorov distribution, combining the theta-function series for
/// small arguments with the alternating tail series for large ones.
pub fn kolmogorov_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t < 1.18 {
        let f = std::f64::consts::PI.powi(2) / (8.0 * t * t);
        let mut sum = 0.0;
        for j in 1..=10u32 {
            let odd = (2 * j - 1) as f64;
            sum += (-odd * odd * f).exp();
        }
        ((2.0 * std::f64::consts::PI).sqrt() / t * sum).min(1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for j in 1..=10u32 {
            let jj = j as f64;
            sum += sign * (-2.0 * jj * jj * t * t).exp();
            sign = -sign;
        }
        (1.0 - 2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value P(√n·D_n > √n·d) = 2·Σ_{j≥1} (−1)^{j−1} e^{−2j²t²} at
/// t = √n·d.
pub fn kolmogorov_p_value(statistic: f64, n: usize) -> f64 {
    1.0 - kolmogorov_cdf((n as f64).sqrt() * statistic)
}

#[derive(Debug, Clone)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// KS test of scalar samples against N(mean, var) (no parameter estimation:
/// mean and variance come from the theory being tested).
pub fn ks_test_normal(samples: &[f64], mean: f64, var: f64) -> Result<KsResult, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::InvalidArgument("empty sample".into()));
    }
    if !(var > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "reference variance {var} must be positive"
        )));
    }
    let normal = Normal::new(mean, var.sqrt())
        .map_err(|e| AnalysisError::InvalidArgument(format!("bad reference normal: {e}")))?;
    let statistic = ks_statistic(samples, |x| normal.cdf(x));
    Ok(KsResult { statistic, p_value: kolmogorov_p_value(statistic, samples.len()) })
}

/// Root-mean-square size of the kernel (on-manifold) and row-space
/// (off-manifold) components of the samples in the given kernel-first basis.
pub fn manifold_component_rms(samples: &[Vector], basis: &SubspaceBasis) -> (f64, f64) {
    assert!(!samples.is_empty(), "need at least one sample");
    let n = samples.len() as f64;
    let mut on = 0.0;
    let mut off = 0.0;
    for s in samples {
        let coords = basis.u.transpose() * s;
        for i in 0..coords.len() {
            if i < basis.r {
                on += coords[i] * coords[i];
            } else {
                off += coords[i] * coords[i];
            }
        }
    }
    ((on / n).sqrt(), (off / n).sqrt())
}

/// Least-squares slope of log10(value) against log10(k) over grid points with
/// kmin ≤ k ≤ kmax and value > 0; None with fewer than two usable points.
pub fn fit_loglog_slope(ks: &[usize], values: &[f64], kmin: usize, kmax: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(values)
        .filter(|(k, v)| **k >= kmin && **k <= kmax && **v > 0.0)
        .map(|(k, v)| ((*k as f64).log10(), v.log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Replication plan for the almost-sure rate probe.
#[derive(Debug, Clone)]
pub struct TrendConfig {
    pub runs: usize,
    pub steps: usize,
    /// Exponent δ of the tested rate ‖Δ_k‖/α_k^δ.
    pub delta: f64,
    /// Number of equal windows the tail is split into (≥ 2).
    pub windows: usize,
    /// The probe starts at k = max(1, ⌊tail_fraction·steps⌋).
    pub tail_fraction: f64,
    /// Resolution of the consensus-decay curve recorded alongside the ratios.
    pub consensus_points_per_decade: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendRun {
    pub run_id: u64,
    /// Largest ratio seen anywhere in the tail window.
    pub max_ratio: f64,
    pub first_median: f64,
    pub last_median: f64,
    pub decreasing: bool,
}

#[derive(Debug, Clone)]
pub struct TrendReport {
    pub runs: Vec<TrendRun>,
    pub fraction_decreasing: f64,
    pub max_ratio: f64,
    /// Rounds at which the consensus error was recorded.
    pub consensus_grid: Vec<usize>,
    /// Replication-averaged Σ_j ‖z_{j,k} − z̄_k‖² on that grid.
    pub mean_consensus: Vec<f64>,
    /// Log-log slope of the averaged consensus error over k ≥ 100 (None when
    /// the run is too short to fit); the step-size theory predicts −2·alpha_exp.
    pub consensus_slope: Option<f64>,
}

/// Tests the almost-sure rate prediction ‖Δ_k‖ = o(α_k^δ) pathwise: for each
/// replication, tracks r_k = ‖P_B(x̄_k − x*)‖/α_k^δ over the tail of the run,
/// splits the tail into equal windows, and calls the run decreasing when the
/// last window's median ratio is below the first's.
pub fn tail_trend_probe(
    problem: &QuadraticEstimationProblem,
    set: &Polyhedron,
    scheme: &GossipScheme,
    schedule: &StepSizeSchedule,
    init: &InitSpec,
    gradients: GradientMode,
    cfg: &TrendConfig,
) -> Result<TrendReport, AnalysisError> {
    if cfg.runs == 0 || cfg.steps == 0 {
        return Err(AnalysisError::InvalidArgument(
            "trend probe needs at least one run and one step".into(),
        ));
    }
    if cfg.windows < 2 {
        return Err(AnalysisError::InvalidArgument("need at least two windows".into()));
    }
    let delta_bound = 1.0 - 1.0 / (2.0 * schedule.alpha_exp());
    if !(cfg.delta > 0.0 && cfg.delta < delta_bound) {
        return Err(AnalysisError::InvalidArgument(format!(
            "delta {} must lie in (0, {delta_bound}) for step exponent {}",
            cfg.delta,
            schedule.alpha_exp()
        )));
    }
    if !(0.0..1.0).contains(&cfg.tail_fraction) {
        return Err(AnalysisError::InvalidArgument(format!(
            "tail fraction {} must lie in [0, 1)",
            cfg.tail_fraction
        )));
    }
    let start = ((cfg.tail_fraction * cfg.steps as f64).floor() as usize).max(1);
    if cfg.steps - start + 1 < cfg.windows {
        return Err(AnalysisError::InvalidArgument(format!(
            "tail [{start}, {}] is shorter than {} windows",
            cfg.steps, cfg.windows
        )));
    }
    let p_b = projection_matrix(set.block_b().0);
    let x_star = problem.x_star();
    let grid = log_grid(cfg.steps, cfg.consensus_points_per_decade);

    let results: Result<Vec<(TrendRun, Vec<f64>)>, AnalysisError> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|run_id| {
            let seed = derive_seed(cfg.master_seed, run_id + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut run =
                DdaRun::new(problem, set, scheme, *schedule, gradients, init, &mut rng)?;
            let mut ratios = Vec::with_capacity(cfg.steps - start + 1);
            let mut consensus = Vec::with_capacity(grid.len());
            let mut gi = 0usize;
            for k in 1..=cfg.steps {
                run.step(&mut rng)?;
                if k >= start {
                    let delta_k =
                        (&p_b * (run.state().xbar().expect("advanced state") - x_star)).norm();
                    ratios.push(delta_k / schedule.value(k).powf(cfg.delta));
                }
                if gi < grid.len() && grid[gi] == k {
                    consensus.push(run.state().consensus_error());
                    gi += 1;
                }
            }
            let w = ratios.len() / cfg.windows;
            let first_median = median(ratios[..w].to_vec()).expect("window is nonempty");
            let last_median =
                median(ratios[ratios.len() - w..].to_vec()).expect("window is nonempty");
            let trend = TrendRun {
                run_id,
                max_ratio: ratios.iter().copied().fold(0.0, f64::max),
                first_median,
                last_median,
                decreasing: last_median < first_median,
            };
            Ok((trend, consensus))
        })
        .collect();
    let mut results = results?;
    results.sort_by_key(|(r, _)| r.run_id);
    let mut mean_consensus = vec![0.0; grid.len()];
    for (_, consensus) in &results {
        for (acc, v) in mean_consensus.iter_mut().zip(consensus) {
            *acc += v;
        }
    }
    for v in &mut mean_consensus {
        *v /= cfg.runs as f64;
    }
    let consensus_slope = fit_loglog_slope(&grid, &mean_consensus, 100, cfg.steps);
    let runs: Vec<TrendRun> = results.into_iter().map(|(r, _)| r).collect();
    let fraction_decreasing =
        runs.iter().filter(|r| r.decreasing).count() as f64 / cfg.runs as f64;
    let max_ratio = runs.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    Ok(TrendReport {
        runs,
        fraction_decreasing,
        max_ratio,
        consensus_grid: grid,
        mean_consensus,
        consensus_slope,
    })
}

/// One-stop checklist of the standing assumptions for a configured experiment.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AssumptionReport {
    pub optimum_feasible: bool,
    pub declared_facet_active: bool,
    pub rho: f64,
    pub rho_lt_one: bool,
    pub doubly_stochastic_always: bool,
    pub schedule_in_theory_window: bool,
    pub restricted_margin: f64,
    pub restricted_margin_positive: bool,
    pub facet_multiplier: Vec<f64>,
    pub strict_complementarity: bool,
    pub noise_second_moment_at_optimum: f64,
    /// Conjunction of the checks the asymptotic theory needs.
    pub all_ok: bool,
}

/// Evaluates the checklist; `noise_draws` gradient draws per agent estimate
/// the noise second moment at the optimum.
pub fn assumption_report(
    problem: &QuadraticEstimationProblem,
    set: &Polyhedron,
    scheme: &GossipScheme,
    schedule: &StepSizeSchedule,
    noise_draws: usize,
    seed: u64,
) -> AssumptionReport {
    let mixing = scheme.mixing_report();
    let model = build_asymptotic_model(problem, set);
    let optimum_feasible = set.contains(problem.x_star(), 1e-8);
    let declared_facet_active =
        !matches!(model, Err(AnalysisError::ActiveSetMismatch(_))) && optimum_feasible;
    let (restricted_margin, facet_multiplier, strict_complementarity) = match &model {
        Ok(m) => (
            m.restricted_margin,
            m.facet_multiplier.iter().copied().collect(),
            m.strict_complementarity,
        ),
        Err(_) => (f64::NAN, Vec::new(), false),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let noise_second_moment_at_optimum = problem.empirical_noise_second_moment(
        std::slice::from_ref(problem.x_star()),
        noise_draws.max(1),
        &mut rng,
    );
    let rho_lt_one = mixing.rho < 1.0;
    let schedule_in_theory_window = schedule.in_theory_window();
    let restricted_margin_positive = restricted_margin > 0.0;
    let all_ok = optimum_feasible
        && declared_facet_active
        && rho_lt_one
        && schedule_in_theory_window
        && restricted_margin_positive
        && strict_complementarity;
    AssumptionReport {
        optimum_feasible,
        declared_facet_active,
        rho: mixing.rho,
        rho_lt_one,
        doubly_stochastic_always: mixing.doubly_stochastic_always,
        schedule_in_theory_window,
        restricted_margin,
        restricted_margin_positive,
        facet_multiplier,
        strict_complementarity,
        noise_second_moment_at_optimum,
        all_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::AlgorithmKind;
    use crate::algorithms::TrajectoryRecord;
    use crate::network::Graph;
    use approx::assert_abs_diff_eq;
    use rand_distr::Distribution;

    fn wedge_single_agent(tilted: bool) -> (QuadraticEstimationProblem, Polyhedron) {
        let set = Polyhedron::wedge_example();
        let tilt = if tilted {
            Some(QuadraticEstimationProblem::facet_tilt(set.block_b().0, 1.0, 1))
        } else {
            None
        };
        let problem = QuadraticEstimationProblem::new(
            Vector::from_row_slice(&[1.0, 2.0]),
            vec![Matrix::identity(2, 2)],
            vec![1.0],
            tilt,
        )
        .unwrap();
        (problem, set)
    }

    #[test]
    fn worked_single_agent_model() {
        let (problem, set) = wedge_single_agent(false);
        let model = build_asymptotic_model(&problem, &set).unwrap();

        let p_b = Matrix::from_row_slice(2, 2, &[0.2, 0.4, 0.4, 0.8]);
        assert_abs_diff_eq!(model.p_b, p_b, epsilon = 1e-12);
        assert_abs_diff_eq!(model.h, &p_b * 2.0, epsilon = 1e-12);
        assert_eq!(model.basis.r, 1);
        assert_eq!(model.g.nrows(), 1);
        assert_abs_diff_eq!(model.g[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(model.sigma_bar, Matrix::identity(2, 2) * 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(model.sigma1[(0, 0)], 1.0, epsilon = 1e-12);
        let sigma = Matrix::from_row_slice(2, 2, &[0.2, 0.4, 0.4, 0.8]);
        assert_abs_diff_eq!(model.sigma, sigma, epsilon = 1e-12);
        assert_abs_diff_eq!(model.sigma_star, p_b, epsilon = 1e-12);
        assert_abs_diff_eq!(model.restricted_margin, 2.0, epsilon = 1e-12);
        // Untilted: the optimum is unconstrained-stationary, multiplier zero.
        assert_abs_diff_eq!(model.facet_multiplier[0], 0.0, epsilon = 1e-12);
        assert!(!model.strict_complementarity);
    }

    #[test]
    fn tilt_gives_strict_complementarity_without_touching_covariances() {
        let (plain, set) = wedge_single_agent(false);
        let (tilted, _) = wedge_single_agent(true);
        let a = build_asymptotic_model(&plain, &set).unwrap();
        let b = build_asymptotic_model(&tilted, &set).unwrap();
        assert_abs_diff_eq!(a.sigma, b.sigma, epsilon = 1e-12);
        assert_abs_diff_eq!(a.sigma_star, b.sigma_star, epsilon = 1e-12);
        assert_abs_diff_eq!(b.facet_multiplier[0], 1.0, epsilon = 1e-10);
        assert!(b.criticality_residual <= 1e-10);
        assert!(b.strict_complementarity);
    }

    #[test]
    fn model_rejects_misdeclared_facet() {
        let set = Polyhedron::wedge_example();
        // Optimum strictly inside the wedge: the declared facet row is slack.
        let problem = QuadraticEstimationProblem::new(
            Vector::from_row_slice(&[2.0, 1.0]),
            vec![Matrix::identity(2, 2)],
            vec![1.0],
            None,
        )
        .unwrap();
        let err = build_asymptotic_model(&problem, &set).unwrap_err();
        assert!(matches!(err, AnalysisError::ActiveSetMismatch(_)));
    }

    #[test]
    fn model_satisfies_its_own_equations_on_a_random_instance() {
        let set = Polyhedron::wedge_example();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let problem = QuadraticEstimationProblem::generate_instance_restricted(
            4,
            2,
            Vector::from_row_slice(&[1.0, 2.0]),
            (0.5, 1.5),
            set.block_b().0,
            0.1,
            &mut rng,
        )
        .unwrap()
        .with_tilt(Some(QuadraticEstimationProblem::facet_tilt(set.block_b().0, 1.0, 4)))
        .unwrap();
        let model = build_asymptotic_model(&problem, &set).unwrap();

        let resid = &model.g * &model.sigma1 + &model.sigma1 * model.g.transpose()
            - model.basis.u.columns(0, 1).transpose()
                * (&model.p_b * (&model.sigma_bar * &model.p_b))
                * model.basis.u.columns(0, 1);
        assert!(resid.amax() <= 1e-10);
        assert_abs_diff_eq!(model.sigma, model.sigma.transpose(), epsilon = 1e-12);
        assert!((set.block_b().0 * &model.sigma).amax() <= 1e-10);
        assert!(model.restricted_margin >= 0.1 * 2.0 / 4.0 - 1e-9);
        assert!(model.strict_complementarity);
    }

    #[test]
    fn log_grid_is_sorted_unique_and_bounded() {
        let grid = log_grid(10_000, 16);
        assert_eq!(grid.first(), Some(&1));
        assert_eq!(grid.last(), Some(&10_000));
        for w in grid.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(log_grid(0, 16).is_empty());
        assert!(log_grid(100, 0).is_empty());
    }

    #[test]
    fn median_handles_odd_even_and_empty() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }

    #[test]
    fn empirical_covariance_of_a_tiny_sample() {
        let samples = vec![
            Vector::from_row_slice(&[1.0, 0.0]),
            Vector::from_row_slice(&[-1.0, 0.0]),
            Vector::from_row_slice(&[0.0, 0.0]),
        ];
        let (mean, cov) = empirical_covariance(&samples);
        assert_abs_diff_eq!(mean.norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cov, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn ks_statistic_hand_value() {
        let d = ks_statistic(&[0.1, 0.2, 0.8], |x| x.clamp(0.0, 1.0));
        assert_abs_diff_eq!(d, 7.0 / 15.0, epsilon = 1e-12);
    }

    #[test]
    fn kolmogorov_distribution_reference_values() {
        assert_abs_diff_eq!(1.0 - kolmogorov_cdf(1.0), 0.26999967, epsilon = 1e-6);
        assert_abs_diff_eq!(1.0 - kolmogorov_cdf(0.5), 0.9639452436, epsilon = 1e-6);
        assert!(kolmogorov_cdf(0.02) <= 1e-12);
        assert!(1.0 - kolmogorov_cdf(3.0) <= 1e-7);
        // The two series agree where they meet.
        assert_abs_diff_eq!(kolmogorov_cdf(1.18 - 1e-9), kolmogorov_cdf(1.18 + 1e-9), epsilon = 1e-8);
        let mut last = 0.0;
        for i in 1..=60 {
            let v = kolmogorov_cdf(i as f64 * 0.05);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn ks_test_accepts_its_own_distribution() {
        // Deterministic normal scores: quantiles of N(2, 9).
        let normal = Normal::new(2.0, 3.0).unwrap();
        let n = 400;
        let samples: Vec<f64> =
            (1..=n).map(|i| normal.inverse_cdf((i as f64 - 0.5) / n as f64)).collect();
        let res = ks_test_normal(&samples, 2.0, 9.0).unwrap();
        assert!(res.p_value > 0.99, "p = {}", res.p_value);
        let shifted = ks_test_normal(&samples, 0.0, 9.0).unwrap();
        assert!(shifted.p_value < 1e-6, "p = {}", shifted.p_value);
        assert!(ks_test_normal(&samples, 0.0, 0.0).is_err());
    }

    #[test]
    fn manifold_components_split_along_the_basis() {
        let b = Matrix::from_row_slice(1, 2, &[-2.0, 1.0]);
        let basis = null_space_basis(&b);
        let u1 = basis.u.column(0).into_owned();
        let u2 = basis.u.column(1).into_owned();
        let samples = vec![&u1 * 3.0, &u1 * -3.0];
        let (on, off) = manifold_component_rms(&samples, &basis);
        assert_abs_diff_eq!(on, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(off, 0.0, epsilon = 1e-12);
        let mixed = vec![&u1 * 4.0 + &u2 * 1.0];
        let (on, off) = manifold_component_rms(&mixed, &basis);
        assert_abs_diff_eq!(on, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(off, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn loglog_slope_recovers_an_exact_power_law() {
        let ks = log_grid(10_000, 8);
        let values: Vec<f64> = ks.iter().map(|&k| 3.0 * (k as f64).powf(-1.34)).collect();
        let slope = fit_loglog_slope(&ks, &values, 100, 10_000).unwrap();
        assert_abs_diff_eq!(slope, -1.34, epsilon = 1e-12);
        assert!(fit_loglog_slope(&ks, &values, 10_001, 10_002).is_none());
    }

    #[test]
    fn identification_time_scans_for_the_stable_suffix() {
        let set = Polyhedron::wedge_example();
        let rec = |k: usize, xbar: [f64; 2]| TrajectoryRecord {
            k,
            x: Vec::new(),
            xbar: Vector::from_row_slice(&xbar),
            consensus_error: 0.0,
            dist_to_opt: Vec::new(),
            active_b: Vec::new(),
            active_c: Vec::new(),
            lambda: Vector::zeros(0),
            mu: Vector::zeros(0),
        };
        let traj = |xs: Vec<TrajectoryRecord>| Trajectory {
            algorithm: AlgorithmKind::Dda,
            m: 1,
            d: 2,
            steps: xs.last().map_or(0, |r| r.k),
            records: xs,
        };
        // Interior, then on the facet for good.
        let t = traj(vec![rec(1, [1.0, 1.0]), rec(2, [1.0, 2.0]), rec(3, [1.5, 3.0])]);
        assert_eq!(identification_time(&t, &set, 1e-6), Some(2));
        // Falls off the facet at the end.
        let t = traj(vec![rec(1, [1.0, 2.0]), rec(2, [1.0, 1.0])]);
        assert_eq!(identification_time(&t, &set, 1e-6), None);
        // Never on the facet.
        let t = traj(vec![rec(1, [1.0, 1.0])]);
        assert_eq!(identification_time(&t, &set, 1e-6), None);
        assert_eq!(identification_time(&traj(vec![]), &set, 1e-6), None);
        // Pinned to a corner where a guard row is tight too: not identified.
        let t = traj(vec![rec(1, [5.0, 10.0])]);
        assert_eq!(identification_time(&t, &set, 1e-6), None);
    }

    fn small_experiment() -> (QuadraticEstimationProblem, Polyhedron, GossipScheme, StepSizeSchedule, InitSpec)
    {
        let set = Polyhedron::wedge_example();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let problem = QuadraticEstimationProblem::generate_instance_restricted(
            3,
            2,
            Vector::from_row_slice(&[1.0, 2.0]),
            (0.5, 1.5),
            set.block_b().0,
            0.1,
            &mut rng,
        )
        .unwrap()
        .with_tilt(Some(QuadraticEstimationProblem::facet_tilt(set.block_b().0, 1.0, 3)))
        .unwrap();
        let scheme = GossipScheme::pairwise(Graph::complete(3)).unwrap();
        let schedule = StepSizeSchedule::new(5.0, 0.67).unwrap();
        let init = InitSpec::Box {
            lo: Vector::from_row_slice(&[0.0, 0.0]),
            hi: Vector::from_row_slice(&[5.0, 5.0]),
        };
        (problem, set, scheme, schedule, init)
    }

    #[test]
    fn monte_carlo_is_deterministic_and_ordered() {
        let (problem, set, scheme, schedule, init) = small_experiment();
        let cfg = MonteCarloConfig::new(6, 80, 1234);
        let go = || {
            monte_carlo(&problem, &set, &scheme, &schedule, &init, GradientMode::Sampled, &cfg)
                .unwrap()
        };
        let a = go();
        let b = go();
        assert_eq!(a.summaries, b.summaries);
        assert_eq!(a.mean_consensus, b.mean_consensus);
        for (i, s) in a.summaries.iter().enumerate() {
            assert_eq!(s.run_id, i as u64);
            assert_eq!(s.seed, derive_seed(1234, i as u64 + 1));
            assert!(s.final_max_dist_to_opt >= s.final_dist_to_opt - 1e-15);
        }
        assert_eq!(a.consensus_grid, log_grid(80, 16));
        assert!(a.mean_consensus.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn monte_carlo_validates_its_config() {
        let (problem, set, scheme, schedule, init) = small_experiment();
        let bad_agent = MonteCarloConfig { agent: 5, ..MonteCarloConfig::new(2, 10, 0) };
        assert!(monte_carlo(
            &problem,
            &set,
            &scheme,
            &schedule,
            &init,
            GradientMode::Sampled,
            &bad_agent
        )
        .is_err());
        let no_steps = MonteCarloConfig::new(2, 0, 0);
        assert!(monte_carlo(
            &problem,
            &set,
            &scheme,
            &schedule,
            &init,
            GradientMode::Sampled,
            &no_steps
        )
        .is_err());
    }

    #[test]
    fn monte_carlo_runs_the_projected_gradient_baseline_too() {
        let (problem, set, scheme, schedule, init) = small_experiment();
        let cfg = MonteCarloConfig {
            algorithm: AlgorithmKind::Dpg,
            ..MonteCarloConfig::new(3, 60, 1234)
        };
        let go = || {
            monte_carlo(&problem, &set, &scheme, &schedule, &init, GradientMode::Sampled, &cfg)
                .unwrap()
        };
        let a = go();
        assert_eq!(a.summaries, go().summaries);
        let dda = monte_carlo(
            &problem,
            &set,
            &scheme,
            &schedule,
            &init,
            GradientMode::Sampled,
            &MonteCarloConfig::new(3, 60, 1234),
        )
        .unwrap();
        // Same seeds, different recursion: the iterates must differ.
        assert_ne!(a.summaries[0].final_x_agent, dda.summaries[0].final_x_agent);
    }

    #[test]
    fn batch_report_summarizes_a_small_run() {
        let (problem, set, scheme, schedule, init) = small_experiment();
        let model = build_asymptotic_model(&problem, &set).unwrap();
        let cfg = MonteCarloConfig::new(8, 150, 77);
        let batch =
            monte_carlo(&problem, &set, &scheme, &schedule, &init, GradientMode::Sampled, &cfg)
                .unwrap();
        let report = covariance_report(&batch, &model).unwrap();
        assert_eq!(report.n, 8);
        assert!(report.ks_pvalue_active_direction >= 0.0);
        assert!(report.ks_pvalue_active_direction <= 1.0);
        assert!((0.0..=1.0).contains(&report.identification_fraction));
        assert!(report.offmanifold_std_ratio >= 0.0);
        assert!(report.rel_frobenius_error_sigma.is_finite());
        assert!(report.rel_frobenius_error_sigma_star.is_finite());
        assert_eq!(report.empirical_cov_scaled.nrows(), 2);

        let starved = MonteCarloOutput {
            summaries: batch.summaries[..1].to_vec(),
            consensus_grid: Vec::new(),
            mean_consensus: Vec::new(),
        };
        assert!(covariance_report(&starved, &model).is_err());
    }

    #[test]
    fn batch_report_is_calibrated_on_synthetic_normal_samples() {
        // Feed the report replications drawn exactly from the model law: the
        // covariance errors must be small and the KS test must not reject.
        let set = Polyhedron::wedge_example();
        let problem = QuadraticEstimationProblem::new(
            Vector::from_row_slice(&[1.0, 2.0]),
            vec![Matrix::identity(2, 2)],
            vec![1.0],
            None,
        )
        .unwrap();
        let model = build_asymptotic_model(&problem, &set).unwrap();
        let u1 = model.basis.u.column(0).clone_owned();
        let sd = (u1.transpose() * &model.sigma * &u1)[(0, 0)].sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 4000u64;
        let summaries: Vec<RunSummary> = (0..n)
            .map(|run_id| {
                let g: f64 = rand_distr::StandardNormal.sample(&mut rng);
                let scaled = &u1 * (sd * g);
                let g2: f64 = rand_distr::StandardNormal.sample(&mut rng);
                // The averaged statistic has covariance Σ* = P_B (this
                // instance), supported on the same line.
                let averaged = &u1 * g2;
                RunSummary {
                    run_id,
                    seed: run_id,
                    final_x_agent: Vector::zeros(2),
                    scaled_error: scaled,
                    windowed_average_error: averaged,
                    final_consensus_error: 0.0,
                    final_dist_to_opt: 0.0,
                    final_max_dist_to_opt: 0.0,
                    identified_since: Some(10),
                }
            })
            .collect();
        let batch = MonteCarloOutput {
            summaries,
            consensus_grid: Vec::new(),
            mean_consensus: Vec::new(),
        };
        let report = covariance_report(&batch, &model).unwrap();
        assert!(report.rel_frobenius_error_sigma < 0.1, "{}", report.rel_frobenius_error_sigma);
        assert!(
            report.rel_frobenius_error_sigma_star < 0.1,
            "{}",
            report.rel_frobenius_error_sigma_star
        );
        assert!(report.ks_pvalue_active_direction > 0.01);
        assert!(report.offmanifold_std_ratio < 1e-8);
        assert_eq!(report.identification_fraction, 1.0);
        assert_eq!(report.median_identification_time, Some(10.0));
    }

    #[test]
    fn zero_reference_frobenius_distinguishes_exact_from_off() {
        let z = Matrix::zeros(2, 2);
        assert_eq!(relative_frobenius(&z, &z), 0.0);
        assert_eq!(relative_frobenius(&Matrix::identity(2, 2), &z), f64::INFINITY);
    }

    #[test]
    fn identification_experiment_pairs_seeds() {
        let (problem, set, scheme, schedule, init) = small_experiment();
        let cfg = IdentificationConfig { runs: 8, steps: 400, tol: 1e-6, master_seed: 99 };
        let report = identification_experiment(
            &problem,
            &set,
            &scheme,
            &schedule,
            &init,
            GradientMode::Sampled,
            &cfg,
        )
        .unwrap();
        assert_eq!(report.outcomes.len(), 8);
        for (i, o) in report.outcomes.iter().enumerate() {
            assert_eq!(o.run_id, i as u64);
            assert_eq!(o.seed, derive_seed(99, i as u64 + 1));
        }
        assert!(report.dda_identified_fraction >= 0.0 && report.dda_identified_fraction <= 1.0);
        if report.dda_identified_fraction > 0.0 {
            assert!(report.dda_median_since.is_some());
        }
    }

    #[test]
    fn trend_probe_runs_and_validates() {
        let (problem, set, scheme, schedule, init) = small_experiment();
        let cfg = TrendConfig {
            runs: 4,
            steps: 600,
            delta: 0.2,
            windows: 6,
            tail_fraction: 0.2,
            consensus_points_per_decade: 16,
            master_seed: 7,
        };
        let report = tail_trend_probe(
            &problem,
            &set,
            &scheme,
            &schedule,
            &init,
            GradientMode::Sampled,
            &cfg,
        )
        .unwrap();
        assert_eq!(report.runs.len(), 4);
        for r in &report.runs {
            assert!(r.first_median.is_finite() && r.last_median.is_finite());
            assert!(r.max_ratio >= r.first_median && r.max_ratio >= r.last_median);
            assert_eq!(r.decreasing, r.last_median < r.first_median);
        }
        assert!(report.max_ratio >= report.runs[0].max_ratio);
        assert_eq!(report.consensus_grid, log_grid(600, 16));
        assert_eq!(report.mean_consensus.len(), report.consensus_grid.len());
        assert!(report.consensus_slope.is_some());
        let bad = TrendConfig { windows: 1, ..cfg.clone() };
        assert!(tail_trend_probe(
            &problem,
            &set,
            &scheme,
            &schedule,
            &init,
            GradientMode::Sampled,
            &bad
        )
        .is_err());
        // The admissible exponent range depends on the step-size decay: for
        // exponent 0.67 the bound is 1 − 1/1.34 ≈ 0.2537, so 0.3 is out.
        let too_big = TrendConfig { delta: 0.3, ..cfg };
        let err = tail_trend_probe(
            &problem,
            &set,
            &scheme,
            &schedule,
            &init,
            GradientMode::Sampled,
            &too_big,
        )
        .unwrap_err();
        assert!(err.to_string().contains("delta"));
    }

    #[test]
    fn assumption_report_on_the_tilted_instance() {
        let (problem, set, scheme, schedule, _) = small_experiment();
        let report = assumption_report(&problem, &set, &scheme, &schedule, 200, 5);
        assert!(report.optimum_feasible);
        assert!(report.declared_facet_active);
        assert_abs_diff_eq!(report.rho, 0.5, epsilon = 1e-12);
        assert!(report.rho_lt_one);
        assert!(report.doubly_stochastic_always);
        assert!(report.schedule_in_theory_window);
        assert!(report.restricted_margin_positive);
        assert!(report.strict_complementarity);
        assert!(report.noise_second_moment_at_optimum > 0.0);
        assert!(report.all_ok);

        let untilted = QuadraticEstimationProblem::new(
            Vector::from_row_slice(&[1.0, 2.0]),
            vec![Matrix::identity(2, 2); 3],
            vec![1.0; 3],
            None,
        )
        .unwrap();
        let report = assumption_report(&untilted, &set, &scheme, &schedule, 200, 5);
        assert!(!report.strict_complementarity);
        assert!(!report.all_ok);
    }
}
