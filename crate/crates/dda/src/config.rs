//! TOML experiment configuration and its translation into domain objects.
//!
//! One file describes a whole experiment: the estimation problem, the feasible
//! set, the gossip scheme, the step-size schedule, run sizes, and output
//! location. Scalar fields can be overridden from the command line. Every run
//! is seeded from `run.master_seed`; there is no wall-clock seeding anywhere.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{AlgorithmKind, GradientMode, InitSpec, RecordSpec, StepSizeSchedule};
use crate::network::{Graph, GossipScheme, NetworkError};
use crate::polyhedron::{Polyhedron, PolyhedronError};
use crate::problem::{ProblemError, QuadraticEstimationProblem};
use crate::{derive_seed, Matrix, Vector};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Parse errors carry the offending line and column from the TOML parser.
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Polyhedron(#[from] PolyhedronError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub m: usize,
    pub d: usize,
    pub x_star: Vec<f64>,
    /// Per-agent noise variance σ²_j is drawn uniformly from this range.
    #[serde(default = "default_sigma_range")]
    pub sigma_range: [f64; 2],
    /// Required lower bound on the restricted convexity margin of generated
    /// instances (0 accepts any draw).
    #[serde(default)]
    pub margin: f64,
    /// Strength of the objective tilt pushing the optimum onto the declared
    /// facet; omit for the plain untilted problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt_strength: Option<f64>,
    /// Explicit per-agent data, bypassing seeded generation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentConfig>,
}

fn default_sigma_range() -> [f64; 2] {
    [0.5, 1.5]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Second moment of the regressor, row by row (d×d, symmetric PSD).
    pub r_u: Vec<Vec<f64>>,
    pub sigma_v2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyhedronConfig {
    #[serde(default)]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub b_rhs: Vec<f64>,
    #[serde(default)]
    pub c: Vec<Vec<f64>>,
    #[serde(default)]
    pub c_rhs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// "pairwise", "broadcast", or "fixed".
    pub kind: String,
    /// "complete" (default) or "edges" with the explicit list below.
    #[serde(default = "default_graph")]
    pub graph: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<[usize; 2]>,
    /// Broadcast mixing weight in (0, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<f64>,
    /// Fixed weight matrix, row by row (m×m, row sums 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

fn default_graph() -> String {
    "complete".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub a: f64,
    pub alpha_exp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// "dda" (dual averaging) or "dpg" (projected-gradient baseline).
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    pub steps: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Agent whose iterate the scaled statistics track (0-based).
    #[serde(default)]
    pub agent: usize,
    pub master_seed: u64,
    /// "sampled" (stochastic gradients) or "exact".
    #[serde(default = "default_gradient_mode")]
    pub gradient_mode: String,
    /// The averaged statistic uses rounds after this fraction of the horizon.
    #[serde(default = "default_window_fraction")]
    pub window_fraction: f64,
    #[serde(default = "default_ident_tol")]
    pub ident_tol: f64,
    /// Rate-probe exponent; must stay below 1 − 1/(2·alpha_exp).
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_trend_windows")]
    pub trend_windows: usize,
    /// The rate probe starts at this fraction of the horizon.
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
    /// Gradient draws per agent for the noise-moment check.
    #[serde(default = "default_noise_draws")]
    pub noise_draws: usize,
    #[serde(default = "default_consensus_ppd")]
    pub consensus_points_per_decade: usize,
}

fn default_algorithm() -> String {
    "dda".into()
}
fn default_runs() -> usize {
    1
}
fn default_gradient_mode() -> String {
    "sampled".into()
}
fn default_window_fraction() -> f64 {
    0.75
}
fn default_ident_tol() -> f64 {
    1e-6
}
fn default_delta() -> f64 {
    0.2
}
fn default_trend_windows() -> usize {
    6
}
fn default_tail_fraction() -> f64 {
    0.2
}
fn default_noise_draws() -> usize {
    200
}
fn default_consensus_ppd() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordConfig {
    #[serde(default = "default_one")]
    pub stride_near: usize,
    #[serde(default = "default_far_threshold")]
    pub far_threshold: usize,
    #[serde(default = "default_stride_far")]
    pub stride_far: usize,
    #[serde(default = "default_true")]
    pub per_agent: bool,
}

fn default_one() -> usize {
    1
}
fn default_far_threshold() -> usize {
    2000
}
fn default_stride_far() -> usize {
    10
}
fn default_true() -> bool {
    true
}

impl Default for RecordConfig {
    fn default() -> Self {
        Self {
            stride_near: default_one(),
            far_threshold: default_far_threshold(),
            stride_far: default_stride_far(),
            per_agent: default_true(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// "box", "point", or "per_agent".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

/// A full experiment description, as parsed from one TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub polyhedron: PolyhedronConfig,
    pub scheme: SchemeConfig,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub record: RecordConfig,
    pub init: InitConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command-line overrides for scalar config fields; `None` keeps the file's
/// value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub runs: Option<usize>,
    pub steps: Option<usize>,
    pub scheme: Option<String>,
    pub agent: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|source| {
            ConfigError::Parse { path: path.to_path_buf(), source: Box::new(source) }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, ov: &Overrides) -> Result<(), ConfigError> {
        if let Some(seed) = ov.seed {
            self.run.master_seed = seed;
        }
        if let Some(out) = &ov.out {
            self.output.dir = out.clone();
        }
        if let Some(runs) = ov.runs {
            self.run.runs = runs;
        }
        if let Some(steps) = ov.steps {
            self.run.steps = steps;
        }
        if let Some(scheme) = &ov.scheme {
            self.scheme.kind = scheme.clone();
        }
        if let Some(agent) = ov.agent {
            self.run.agent = agent;
        }
        self.validate()
    }

    /// Structural validation beyond what parsing enforces. Construction of the
    /// domain objects re-checks the numeric conditions (PSD-ness, row sums,
    /// connectivity); this pass catches shape mistakes with field names.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if p.m == 0 || p.d == 0 {
            return Err(invalid("problem.m and problem.d must be at least 1"));
        }
        if p.x_star.len() != p.d {
            return Err(invalid(format!(
                "problem.x_star has {} entries, expected problem.d = {}",
                p.x_star.len(),
                p.d
            )));
        }
        if !(p.sigma_range[0] >= 0.0 && p.sigma_range[1] >= p.sigma_range[0]) {
            return Err(invalid(format!(
                "problem.sigma_range {:?} must be 0 <= lo <= hi",
                p.sigma_range
            )));
        }
        if !(p.margin >= 0.0) {
            return Err(invalid("problem.margin must be nonnegative"));
        }
        if !p.agents.is_empty() {
            if p.agents.len() != p.m {
                return Err(invalid(format!(
                    "problem.agents lists {} agents, expected problem.m = {}",
                    p.agents.len(),
                    p.m
                )));
            }
            for (j, a) in p.agents.iter().enumerate() {
                check_rows(&a.r_u, p.d, p.d, &format!("problem.agents[{j}].r_u"))?;
            }
        }

        let q = &self.polyhedron;
        check_rows(&q.b, q.b.len(), p.d, "polyhedron.b")?;
        check_rows(&q.c, q.c.len(), p.d, "polyhedron.c")?;
        if q.b.len() != q.b_rhs.len() {
            return Err(invalid(format!(
                "polyhedron.b has {} rows but b_rhs has {} entries",
                q.b.len(),
                q.b_rhs.len()
            )));
        }
        if q.c.len() != q.c_rhs.len() {
            return Err(invalid(format!(
                "polyhedron.c has {} rows but c_rhs has {} entries",
                q.c.len(),
                q.c_rhs.len()
            )));
        }

        let s = &self.scheme;
        match s.kind.as_str() {
            "pairwise" | "broadcast" => {
                match s.graph.as_str() {
                    "complete" => {}
                    "edges" => {
                        if s.edges.is_empty() {
                            return Err(invalid(
                                "scheme.graph = \"edges\" needs a nonempty scheme.edges list",
                            ));
                        }
                    }
                    other => {
                        return Err(invalid(format!(
                            "scheme.graph must be \"complete\" or \"edges\", got {other:?}"
                        )))
                    }
                }
                if let Some(mix) = s.mix {
                    if !(mix > 0.0 && mix <= 1.0) {
                        return Err(invalid(format!("scheme.mix {mix} must lie in (0, 1]")));
                    }
                }
            }
            "fixed" => {
                let matrix = s
                    .matrix
                    .as_ref()
                    .ok_or_else(|| invalid("scheme.kind = \"fixed\" needs scheme.matrix"))?;
                check_rows(matrix, p.m, p.m, "scheme.matrix")?;
            }
            other => {
                return Err(invalid(format!(
                    "scheme.kind must be \"pairwise\", \"broadcast\", or \"fixed\", got {other:?}"
                )))
            }
        }

        if !(self.schedule.a > 0.0 && self.schedule.a.is_finite()) {
            return Err(invalid("schedule.a must be positive and finite"));
        }
        if !(self.schedule.alpha_exp > 0.0 && self.schedule.alpha_exp.is_finite()) {
            return Err(invalid("schedule.alpha_exp must be positive and finite"));
        }

        let r = &self.run;
        match r.algorithm.as_str() {
            "dda" | "dpg" => {}
            other => {
                return Err(invalid(format!(
                    "run.algorithm must be \"dda\" or \"dpg\", got {other:?}"
                )))
            }
        }
        match r.gradient_mode.as_str() {
            "sampled" | "exact" => {}
            other => {
                return Err(invalid(format!(
                    "run.gradient_mode must be \"sampled\" or \"exact\", got {other:?}"
                )))
            }
        }
        if r.agent >= p.m {
            return Err(invalid(format!(
                "run.agent {} is out of range for problem.m = {}",
                r.agent, p.m
            )));
        }
        if !(0.0..1.0).contains(&r.window_fraction) {
            return Err(invalid(format!(
                "run.window_fraction {} must lie in [0, 1)",
                r.window_fraction
            )));
        }
        if !(r.ident_tol > 0.0) {
            return Err(invalid("run.ident_tol must be positive"));
        }
        if !(0.0..1.0).contains(&r.tail_fraction) {
            return Err(invalid(format!(
                "run.tail_fraction {} must lie in [0, 1)",
                r.tail_fraction
            )));
        }
        if r.trend_windows < 2 {
            return Err(invalid("run.trend_windows must be at least 2"));
        }
        if self.record.stride_near == 0 || self.record.stride_far == 0 {
            return Err(invalid("record strides must be at least 1"));
        }

        let i = &self.init;
        match i.kind.as_str() {
            "box" => {
                let lo = i.lo.as_ref().ok_or_else(|| invalid("init.kind = \"box\" needs init.lo"))?;
                let hi = i.hi.as_ref().ok_or_else(|| invalid("init.kind = \"box\" needs init.hi"))?;
                if lo.len() != p.d || hi.len() != p.d {
                    return Err(invalid(format!(
                        "init.lo and init.hi must each have problem.d = {} entries",
                        p.d
                    )));
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(invalid("init box needs lo <= hi componentwise"));
                }
            }
            "point" => {
                let point =
                    i.point.as_ref().ok_or_else(|| invalid("init.kind = \"point\" needs init.point"))?;
                if point.len() != p.d {
                    return Err(invalid(format!(
                        "init.point must have problem.d = {} entries",
                        p.d
                    )));
                }
            }
            "per_agent" => {
                if i.points.len() != p.m {
                    return Err(invalid(format!(
                        "init.points lists {} starting points, expected problem.m = {}",
                        i.points.len(),
                        p.m
                    )));
                }
                check_rows(&i.points, p.m, p.d, "init.points")?;
            }
            other => {
                return Err(invalid(format!(
                    "init.kind must be \"box\", \"point\", or \"per_agent\", got {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Builds the problem instance. Generated instances draw from the stream
    /// `derive_seed(master_seed, 0)`, so replication streams (1, 2, ...) never
    /// overlap instance generation.
    pub fn build_problem(&self) -> Result<QuadraticEstimationProblem, ConfigError> {
        let p = &self.problem;
        let x_star = Vector::from_row_slice(&p.x_star);
        let base = if p.agents.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.run.master_seed, 0));
            let range = (p.sigma_range[0], p.sigma_range[1]);
            if p.margin > 0.0 {
                let set = self.build_polyhedron()?;
                QuadraticEstimationProblem::generate_instance_restricted(
                    p.m,
                    p.d,
                    x_star,
                    range,
                    set.block_b().0,
                    p.margin,
                    &mut rng,
                )?
            } else {
                QuadraticEstimationProblem::generate_instance(p.m, p.d, x_star, range, &mut rng)?
            }
        } else {
            let r_u = p.agents.iter().map(|a| to_matrix(&a.r_u, p.d, p.d)).collect();
            let sigma_v2 = p.agents.iter().map(|a| a.sigma_v2).collect();
            QuadraticEstimationProblem::new(x_star, r_u, sigma_v2, None)?
        };
        let tilt = p.tilt_strength.map(|s| {
            let b = to_matrix(&self.polyhedron.b, self.polyhedron.b.len(), p.d);
            QuadraticEstimationProblem::facet_tilt(&b, s, p.m)
        });
        Ok(base.with_tilt(tilt)?)
    }

    pub fn build_polyhedron(&self) -> Result<Polyhedron, ConfigError> {
        let q = &self.polyhedron;
        let d = self.problem.d;
        Ok(Polyhedron::new(
            to_matrix(&q.b, q.b.len(), d),
            Vector::from_row_slice(&q.b_rhs),
            to_matrix(&q.c, q.c.len(), d),
            Vector::from_row_slice(&q.c_rhs),
        )?)
    }

    pub fn build_scheme(&self) -> Result<GossipScheme, ConfigError> {
        let s = &self.scheme;
        let m = self.problem.m;
        let graph = || -> Result<Graph, ConfigError> {
            match s.graph.as_str() {
                "complete" => Ok(Graph::complete(m)),
                _ => {
                    let edges: Vec<(usize, usize)> =
                        s.edges.iter().map(|e| (e[0], e[1])).collect();
                    Ok(Graph::from_edges(m, &edges)?)
                }
            }
        };
        match s.kind.as_str() {
            "pairwise" => Ok(GossipScheme::pairwise(graph()?)?),
            "broadcast" => Ok(GossipScheme::broadcast(graph()?, s.mix.unwrap_or(0.5))?),
            _ => {
                let rows = s.matrix.as_ref().expect("validated");
                Ok(GossipScheme::fixed(to_matrix(rows, m, m))?)
            }
        }
    }

    pub fn build_schedule(&self) -> Result<StepSizeSchedule, ConfigError> {
        StepSizeSchedule::new(self.schedule.a, self.schedule.alpha_exp)
            .map_err(|e| invalid(e.to_string()))
    }

    pub fn build_init(&self) -> InitSpec {
        let i = &self.init;
        match i.kind.as_str() {
            "box" => InitSpec::Box {
                lo: Vector::from_row_slice(i.lo.as_ref().expect("validated")),
                hi: Vector::from_row_slice(i.hi.as_ref().expect("validated")),
            },
            "point" => InitSpec::Point(Vector::from_row_slice(i.point.as_ref().expect("validated"))),
            _ => InitSpec::PerAgent(
                i.points.iter().map(|p| Vector::from_row_slice(p)).collect(),
            ),
        }
    }

    pub fn build_record(&self) -> RecordSpec {
        RecordSpec {
            stride_near: self.record.stride_near,
            far_threshold: self.record.far_threshold,
            stride_far: self.record.stride_far,
            per_agent: self.record.per_agent,
        }
    }

    pub fn algorithm_kind(&self) -> AlgorithmKind {
        match self.run.algorithm.as_str() {
            "dpg" => AlgorithmKind::Dpg,
            _ => AlgorithmKind::Dda,
        }
    }

    pub fn gradient_mode(&self) -> GradientMode {
        match self.run.gradient_mode.as_str() {
            "exact" => GradientMode::Exact,
            _ => GradientMode::Sampled,
        }
    }
}

fn check_rows(
    rows: &[Vec<f64>],
    expected_rows: usize,
    expected_cols: usize,
    field: &str,
) -> Result<(), ConfigError> {
    if rows.len() != expected_rows {
        return Err(invalid(format!(
            "{field} has {} rows, expected {expected_rows}",
            rows.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != expected_cols {
            return Err(invalid(format!(
                "{field} row {i} has {} entries, expected {expected_cols}",
                row.len()
            )));
        }
    }
    Ok(())
}

fn to_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Matrix {
    Matrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}
