//! Command implementations behind the CLI: each takes a validated config,
//! runs the experiment, and writes its artifacts into the output directory.
//!
//! Error classes map to process exit codes: configuration and I/O problems
//! exit 1, numerical failures inside a run exit 2. `cmd_check` only prints;
//! everything else writes CSVs plus a manifest JSON that echoes the config.

use std::io::Write;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::algorithms::{dda_run, dpg_run, AlgorithmError, AlgorithmKind};
use crate::analysis::{
    assumption_report, build_asymptotic_model, covariance_report, identification_time,
    monte_carlo, tail_trend_probe, AnalysisError, MonteCarloConfig, TrendConfig,
};
use crate::config::{ConfigError, ExperimentConfig};
use crate::network::check_stepsize_vs_mixing;
use crate::output::{
    write_consensus_csv, write_histogram_csv, write_manifest, write_samples_csv,
    write_trajectory_csv, AsymptoticModelJson, CovarianceReportJson, OutputError, TrendReportJson,
};
use crate::derive_seed;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
}

impl DriverError {
    /// 1 for configuration/file problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Config(_) | DriverError::Output(_) => 1,
            DriverError::Analysis(AnalysisError::InvalidArgument(_))
            | DriverError::Analysis(AnalysisError::ActiveSetMismatch(_)) => 1,
            _ => 2,
        }
    }
}

fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, DriverError> {
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|source| {
        DriverError::Output(OutputError::Io { path: dir.clone(), source })
    })?;
    Ok(dir)
}

#[derive(Debug, Serialize)]
struct RunReportJson {
    algorithm: &'static str,
    steps: usize,
    records: usize,
    final_dist_to_opt_avg: Option<f64>,
    final_consensus_error: Option<f64>,
    identification_round: Option<usize>,
}

/// Runs a single seeded trajectory and writes `trajectory.csv` + `run.json`.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, DriverError> {
    let dir = ensure_out_dir(cfg)?;
    let problem = cfg.build_problem()?;
    let set = cfg.build_polyhedron()?;
    let scheme = cfg.build_scheme()?;
    let schedule = cfg.build_schedule()?;
    let init = cfg.build_init();
    let record = cfg.build_record();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.run.master_seed, 1));

    let traj = match cfg.algorithm_kind() {
        AlgorithmKind::Dda => dda_run(
            &problem,
            &set,
            &scheme,
            &schedule,
            cfg.run.steps,
            &init,
            cfg.gradient_mode(),
            &mut rng,
            &record,
        )?,
        AlgorithmKind::Dpg => dpg_run(
            &problem,
            &set,
            &scheme,
            &schedule,
            cfg.run.steps,
            &init,
            cfg.gradient_mode(),
            &mut rng,
            &record,
        )?,
    };

    let csv_path = dir.join("trajectory.csv");
    write_trajectory_csv(&csv_path, &traj, problem.x_star(), &set)?;

    let last = traj.records.last();
    let report = RunReportJson {
        algorithm: traj.algorithm.name(),
        steps: traj.steps,
        records: traj.records.len(),
        final_dist_to_opt_avg: last.map(|r| (&r.xbar - problem.x_star()).norm()),
        final_consensus_error: last.map(|r| r.consensus_error),
        identification_round: identification_time(&traj, &set, cfg.run.ident_tol),
    };
    let manifest = write_manifest(&dir, "run", cfg, vec!["trajectory.csv".into()], report)?;
    Ok(vec![csv_path, manifest])
}

#[derive(Debug, Serialize)]
struct MonteCarloReportJson {
    algorithm: &'static str,
    runs: usize,
    steps: usize,
    agent: usize,
    report: CovarianceReportJson,
    model: AsymptoticModelJson,
    consensus_slope: Option<f64>,
}

/// Runs the replication batch and writes `samples.csv`, `histogram.csv`,
/// `consensus.csv`, and `montecarlo.json`.
pub fn cmd_montecarlo(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, DriverError> {
    let dir = ensure_out_dir(cfg)?;
    let problem = cfg.build_problem()?;
    let set = cfg.build_polyhedron()?;
    let scheme = cfg.build_scheme()?;
    let schedule = cfg.build_schedule()?;
    let init = cfg.build_init();

    let mc = MonteCarloConfig {
        algorithm: cfg.algorithm_kind(),
        agent: cfg.run.agent,
        window_start_fraction: cfg.run.window_fraction,
        ident_tol: cfg.run.ident_tol,
        consensus_points_per_decade: cfg.run.consensus_points_per_decade,
        ..MonteCarloConfig::new(cfg.run.runs, cfg.run.steps, cfg.run.master_seed)
    };
    let batch = monte_carlo(
        &problem,
        &set,
        &scheme,
        &schedule,
        &init,
        cfg.gradient_mode(),
        &mc,
    )?;
    let model = build_asymptotic_model(&problem, &set)?;
    let report = covariance_report(&batch, &model)?;
    let consensus_slope = crate::analysis::fit_loglog_slope(
        &batch.consensus_grid,
        &batch.mean_consensus,
        100,
        cfg.run.steps,
    );

    let samples_path = dir.join("samples.csv");
    write_samples_csv(&samples_path, &batch)?;
    let histogram_path = dir.join("histogram.csv");
    write_histogram_csv(&histogram_path, &batch, &model, 40)?;
    let consensus_path = dir.join("consensus.csv");
    write_consensus_csv(&consensus_path, &batch.consensus_grid, &batch.mean_consensus)?;

    let payload = MonteCarloReportJson {
        algorithm: cfg.algorithm_kind().name(),
        runs: cfg.run.runs,
        steps: cfg.run.steps,
        agent: cfg.run.agent,
        report: CovarianceReportJson::from(&report),
        model: AsymptoticModelJson::from(&model),
        consensus_slope,
    };
    let manifest = write_manifest(
        &dir,
        "montecarlo",
        cfg,
        vec!["samples.csv".into(), "histogram.csv".into(), "consensus.csv".into()],
        payload,
    )?;
    Ok(vec![samples_path, histogram_path, consensus_path, manifest])
}

#[derive(Debug, Serialize)]
struct MixingReportJson {
    rho: f64,
    rho_lt_one: bool,
    row_stochastic: bool,
    column_stochastic_in_mean: bool,
    doubly_stochastic_always: bool,
    schedule_in_theory_window: bool,
}

/// Computes the exact mixing report of the configured scheme and writes
/// `mixing.json`.
pub fn cmd_mixing(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, DriverError> {
    let dir = ensure_out_dir(cfg)?;
    let scheme = cfg.build_scheme()?;
    let schedule = cfg.build_schedule()?;
    let mixing = scheme.mixing_report();
    let payload = MixingReportJson {
        rho: mixing.rho,
        rho_lt_one: check_stepsize_vs_mixing(mixing.rho, &schedule),
        row_stochastic: mixing.row_stochastic,
        column_stochastic_in_mean: mixing.column_stochastic_in_mean,
        doubly_stochastic_always: mixing.doubly_stochastic_always,
        schedule_in_theory_window: schedule.in_theory_window(),
    };
    let manifest = write_manifest(&dir, "mixing", cfg, Vec::new(), payload)?;
    Ok(vec![manifest])
}

/// Evaluates the standing assumptions and prints one pass/warn line per check
/// with the computed quantity. Writes nothing; warnings do not fail the
/// command. Returns the number of warnings.
pub fn cmd_check(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<usize, DriverError> {
    let problem = cfg.build_problem()?;
    let set = cfg.build_polyhedron()?;
    let scheme = cfg.build_scheme()?;
    let schedule = cfg.build_schedule()?;
    let report = assumption_report(
        &problem,
        &set,
        &scheme,
        &schedule,
        cfg.run.noise_draws,
        cfg.run.master_seed,
    );

    let mut warns = 0usize;
    let mut line = |ok: bool, text: String| -> std::io::Result<()> {
        if !ok {
            warns += 1;
        }
        writeln!(out, "{} {}", if ok { "pass" } else { "warn" }, text)
    };
    let io = |source| DriverError::Output(OutputError::Io { path: "<stdout>".into(), source });

    line(report.optimum_feasible, format!("optimum feasible: x* inside the constraint set = {}", report.optimum_feasible)).map_err(io)?;
    line(report.declared_facet_active, format!("declared facet active at x*: {}", report.declared_facet_active)).map_err(io)?;
    line(report.rho_lt_one, format!("mixing contraction: rho = {} (needs < 1)", report.rho)).map_err(io)?;
    line(report.doubly_stochastic_always, format!("doubly stochastic weights every round: {}", report.doubly_stochastic_always)).map_err(io)?;
    line(report.schedule_in_theory_window, format!("step exponent in (2/3, 1): alpha_exp = {}", schedule.alpha_exp())).map_err(io)?;
    line(report.restricted_margin_positive, format!("restricted convexity margin on the facet: {}", report.restricted_margin)).map_err(io)?;
    line(report.strict_complementarity, format!("strict complementarity: facet multiplier = {:?}", report.facet_multiplier)).map_err(io)?;
    line(report.noise_second_moment_at_optimum.is_finite(), format!("gradient noise second moment at x*: {}", report.noise_second_moment_at_optimum)).map_err(io)?;
    writeln!(out, "{}: {} warning(s)", if report.all_ok { "all checks passed" } else { "checks completed" }, warns).map_err(io)?;
    Ok(warns)
}

#[derive(Debug, Serialize)]
struct RateProbeReportJson {
    delta: f64,
    delta_bound: f64,
    #[serde(flatten)]
    trend: TrendReportJson,
}

/// Runs the tail-ratio trend probe and writes `consensus.csv` +
/// `rate_probe.json`.
pub fn cmd_rate_probe(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, DriverError> {
    let dir = ensure_out_dir(cfg)?;
    let problem = cfg.build_problem()?;
    let set = cfg.build_polyhedron()?;
    let scheme = cfg.build_scheme()?;
    let schedule = cfg.build_schedule()?;
    let init = cfg.build_init();

    let trend_cfg = TrendConfig {
        runs: cfg.run.runs,
        steps: cfg.run.steps,
        delta: cfg.run.delta,
        windows: cfg.run.trend_windows,
        tail_fraction: cfg.run.tail_fraction,
        consensus_points_per_decade: cfg.run.consensus_points_per_decade,
        master_seed: cfg.run.master_seed,
    };
    let report = tail_trend_probe(
        &problem,
        &set,
        &scheme,
        &schedule,
        &init,
        cfg.gradient_mode(),
        &trend_cfg,
    )?;

    let consensus_path = dir.join("rate_consensus.csv");
    write_consensus_csv(&consensus_path, &report.consensus_grid, &report.mean_consensus)?;
    let payload = RateProbeReportJson {
        delta: cfg.run.delta,
        delta_bound: 1.0 - 1.0 / (2.0 * schedule.alpha_exp()),
        trend: TrendReportJson::from(&report),
    };
    let manifest =
        write_manifest(&dir, "rate_probe", cfg, vec!["rate_consensus.csv".into()], payload)?;
    Ok(vec![consensus_path, manifest])
}
