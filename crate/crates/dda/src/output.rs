//! CSV and JSON artifact writers.
//!
//! Files are deterministic functions of config and seed: no timestamps, no
//! machine identifiers, no float formatting that depends on locale. CSVs are
//! plain RFC-4180 tables with a header row; the run manifest JSON written next
//! to them carries the full config echo and the master seed, so a directory is
//! reproducible from its manifest alone.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::algorithms::Trajectory;
use crate::analysis::{AsymptoticModel, CovarianceReport, MonteCarloOutput, TrendReport};
use crate::config::ExperimentConfig;
use crate::polyhedron::Polyhedron;
use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize {what}: {source}")]
    Json {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv { path: path.to_path_buf(), source }
}

pub fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn vector_entries(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// 0/1 membership mask over `n` rows, e.g. active rows {0, 2} of 3 → "101".
/// Fixed width keeps the column sortable and spreadsheet-safe.
pub fn active_mask(active: &[usize], n: usize) -> String {
    let mut mask = vec![b'0'; n];
    for &i in active {
        if i < n {
            mask[i] = b'1';
        }
    }
    String::from_utf8(mask).expect("ascii")
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(
    path: &Path,
    what: &'static str,
    value: &T,
) -> Result<(), OutputError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|source| OutputError::Json { what, source })?;
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(text.as_bytes()).map_err(io_err(path))?;
    file.write_all(b"\n").map_err(io_err(path))?;
    Ok(())
}

/// One row per agent per recorded round (plus a single `avg` row per round
/// when per-agent recording is off). Columns:
///
/// * `k`: round index,
/// * `agent`: 0-based agent index, or `avg` for the averaged iterate,
/// * `x1..xd`: the iterate,
/// * `dist_to_opt`: Euclidean distance to the configured optimum,
/// * `consensus_error`: Σ_j ‖z_{j,k} − z̄_k‖² for the round (repeated per row),
/// * `active_b`, `active_c`: 0/1 masks of the rows of B and C tight at the
///   averaged iterate (repeated per row).
pub fn write_trajectory_csv(
    path: &Path,
    traj: &Trajectory,
    x_star: &Vector,
    set: &Polyhedron,
) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["k".to_string(), "agent".to_string()];
    for i in 1..=traj.d {
        header.push(format!("x{i}"));
    }
    header.extend(
        ["dist_to_opt", "consensus_error", "active_b", "active_c"].map(str::to_string),
    );
    w.write_record(&header).map_err(csv_err(path))?;

    for rec in &traj.records {
        let b_mask = active_mask(&rec.active_b, set.n_rows_b());
        let c_mask = active_mask(&rec.active_c, set.n_rows_c());
        let mut write_row = |agent: &str, x: &Vector, dist: f64| -> Result<(), OutputError> {
            let mut row = vec![rec.k.to_string(), agent.to_string()];
            for v in x.iter() {
                row.push(v.to_string());
            }
            row.push(dist.to_string());
            row.push(rec.consensus_error.to_string());
            row.push(b_mask.clone());
            row.push(c_mask.clone());
            w.write_record(&row).map_err(csv_err(path))
        };
        if rec.x.is_empty() {
            write_row("avg", &rec.xbar, (&rec.xbar - x_star).norm())?;
        } else {
            for (j, x) in rec.x.iter().enumerate() {
                write_row(&j.to_string(), x, rec.dist_to_opt[j])?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// One row per replication: seeds, the scaled and windowed-averaged error
/// vectors, final distances, and the identification round (empty when the run
/// never settled on the declared facet).
pub fn write_samples_csv(path: &Path, batch: &MonteCarloOutput) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let d = batch.summaries.first().map_or(0, |s| s.scaled_error.len());
    let mut header = vec!["run_id".to_string(), "seed".to_string()];
    for i in 1..=d {
        header.push(format!("scaled{i}"));
    }
    for i in 1..=d {
        header.push(format!("averaged{i}"));
    }
    header.extend(
        ["final_consensus_error", "final_dist_to_opt", "final_max_dist_to_opt", "identified_since"]
            .map(str::to_string),
    );
    w.write_record(&header).map_err(csv_err(path))?;
    for s in &batch.summaries {
        let mut row = vec![s.run_id.to_string(), s.seed.to_string()];
        for v in s.scaled_error.iter() {
            row.push(v.to_string());
        }
        for v in s.windowed_average_error.iter() {
            row.push(v.to_string());
        }
        row.push(s.final_consensus_error.to_string());
        row.push(s.final_dist_to_opt.to_string());
        row.push(s.final_max_dist_to_opt.to_string());
        row.push(s.identified_since.map(|k| k.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Binned marginals of the scaled and averaged error components, with the
/// model's normal density at each bin center for overlay plots. Columns:
/// `statistic` (scaled|averaged), `component` (1-based), `bin_lo`, `bin_hi`,
/// `count`, `density`, `model_density`.
pub fn write_histogram_csv(
    path: &Path,
    batch: &MonteCarloOutput,
    model: &AsymptoticModel,
    bins: usize,
) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["statistic", "component", "bin_lo", "bin_hi", "count", "density", "model_density"])
        .map_err(csv_err(path))?;
    let d = batch.summaries.first().map_or(0, |s| s.scaled_error.len());
    let bins = bins.max(1);
    for (name, pick, cov) in [
        ("scaled", 0usize, &model.sigma),
        ("averaged", 1usize, &model.sigma_star),
    ] {
        for comp in 0..d {
            let values: Vec<f64> = batch
                .summaries
                .iter()
                .map(|s| {
                    if pick == 0 {
                        s.scaled_error[comp]
                    } else {
                        s.windowed_average_error[comp]
                    }
                })
                .collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
            let mut counts = vec![0usize; bins];
            for &v in &values {
                let idx = (((v - lo) / width) as usize).min(bins - 1);
                counts[idx] += 1;
            }
            let n = values.len() as f64;
            let var = cov[(comp, comp)];
            for (b, &count) in counts.iter().enumerate() {
                let bin_lo = lo + b as f64 * width;
                let bin_hi = bin_lo + width;
                let center = 0.5 * (bin_lo + bin_hi);
                let model_density = if var > 0.0 {
                    (-center * center / (2.0 * var)).exp()
                        / (2.0 * std::f64::consts::PI * var).sqrt()
                } else {
                    0.0
                };
                w.write_record([
                    name.to_string(),
                    (comp + 1).to_string(),
                    bin_lo.to_string(),
                    bin_hi.to_string(),
                    count.to_string(),
                    (count as f64 / (n * width)).to_string(),
                    model_density.to_string(),
                ])
                .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Replication-averaged consensus error on the logarithmic round grid.
pub fn write_consensus_csv(
    path: &Path,
    grid: &[usize],
    mean_consensus: &[f64],
) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["k", "mean_consensus_error"]).map_err(csv_err(path))?;
    for (k, v) in grid.iter().zip(mean_consensus) {
        w.write_record([k.to_string(), v.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// JSON image of the asymptotic model (dense matrices as row lists).
#[derive(Debug, Serialize)]
pub struct AsymptoticModelJson {
    pub free_dimension: usize,
    pub p_b: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub sigma_star: Vec<Vec<f64>>,
    pub facet_multiplier: Vec<f64>,
    pub strict_complementarity: bool,
    pub restricted_margin: f64,
    pub criticality_residual: f64,
}

impl From<&AsymptoticModel> for AsymptoticModelJson {
    fn from(m: &AsymptoticModel) -> Self {
        Self {
            free_dimension: m.basis.r,
            p_b: matrix_rows(&m.p_b),
            h: matrix_rows(&m.h),
            g: matrix_rows(&m.g),
            sigma: matrix_rows(&m.sigma),
            sigma_star: matrix_rows(&m.sigma_star),
            facet_multiplier: vector_entries(&m.facet_multiplier),
            strict_complementarity: m.strict_complementarity,
            restricted_margin: m.restricted_margin,
            criticality_residual: m.criticality_residual,
        }
    }
}

/// JSON image of a Monte Carlo covariance report.
#[derive(Debug, Serialize)]
pub struct CovarianceReportJson {
    pub n: usize,
    pub empirical_cov_scaled: Vec<Vec<f64>>,
    pub empirical_cov_averaged: Vec<Vec<f64>>,
    pub rel_frobenius_error_sigma: f64,
    pub rel_frobenius_error_sigma_star: f64,
    pub ks_statistic_active_direction: f64,
    pub ks_pvalue_active_direction: f64,
    pub offmanifold_std_ratio: f64,
    pub identification_fraction: f64,
    pub median_identification_time: Option<f64>,
}

impl From<&CovarianceReport> for CovarianceReportJson {
    fn from(r: &CovarianceReport) -> Self {
        Self {
            n: r.n,
            empirical_cov_scaled: matrix_rows(&r.empirical_cov_scaled),
            empirical_cov_averaged: matrix_rows(&r.empirical_cov_averaged),
            rel_frobenius_error_sigma: r.rel_frobenius_error_sigma,
            rel_frobenius_error_sigma_star: r.rel_frobenius_error_sigma_star,
            ks_statistic_active_direction: r.ks_statistic_active_direction,
            ks_pvalue_active_direction: r.ks_pvalue_active_direction,
            offmanifold_std_ratio: r.offmanifold_std_ratio,
            identification_fraction: r.identification_fraction,
            median_identification_time: r.median_identification_time,
        }
    }
}

/// JSON image of a tail-ratio trend report.
#[derive(Debug, Serialize)]
pub struct TrendReportJson {
    pub fraction_decreasing: f64,
    pub max_ratio: f64,
    pub consensus_slope: Option<f64>,
    pub runs: Vec<TrendRunJson>,
}

#[derive(Debug, Serialize)]
pub struct TrendRunJson {
    pub run_id: u64,
    pub max_ratio: f64,
    pub first_median: f64,
    pub last_median: f64,
    pub decreasing: bool,
}

impl From<&TrendReport> for TrendReportJson {
    fn from(r: &TrendReport) -> Self {
        Self {
            fraction_decreasing: r.fraction_decreasing,
            max_ratio: r.max_ratio,
            consensus_slope: r.consensus_slope,
            runs: r
                .runs
                .iter()
                .map(|t| TrendRunJson {
                    run_id: t.run_id,
                    max_ratio: t.max_ratio,
                    first_median: t.first_median,
                    last_median: t.last_median,
                    decreasing: t.decreasing,
                })
                .collect(),
        }
    }
}

/// Wrapper written as `<command>.json` next to the CSVs: the full config echo,
/// the master seed, the list of files produced, and the command's report.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, T: Serialize> {
    pub command: &'a str,
    pub master_seed: u64,
    pub outputs: Vec<String>,
    pub config: &'a ExperimentConfig,
    pub report: T,
}

pub fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    outputs: Vec<String>,
    report: T,
) -> Result<PathBuf, OutputError> {
    let manifest = Manifest {
        command,
        master_seed: config.run.master_seed,
        outputs,
        config,
        report,
    };
    let path = dir.join(format!("{command}.json"));
    write_json(&path, "manifest", &manifest)?;
    Ok(path)
}
