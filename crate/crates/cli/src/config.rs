//! Experiment configuration files.
//!
//! A config names either a preset system or the four matrices, plus optional
//! initial state, horizon, input segments, grid, run and perturbation blocks.
//! Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use phadapt_core::{presets, Error as CoreError, InputSignal, Matrix, PhSystem, RunConfig, TimeGrid, Vector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Segment `k` holds `value` on `(from_k, from_{k+1}]`; the first segment
    /// also covers `t = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<InputSegment>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSegment {
    pub from: f64,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
}

pub const DEFAULT_INTERVALS: usize = 1000;
pub const DEFAULT_MAGNITUDE: f64 = 5.0;

/// A config problem located by a dotted path such as `system.J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { String::new() } else { path };
            ConfigError::new(path, e.into_inner())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub time: f64,
    pub magnitude: f64,
    pub component: usize,
}

/// A config with presets expanded and every invariant checked.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub sys: PhSystem,
    pub x0: Vector,
    pub horizon: f64,
    pub input: InputSignal,
    pub grid: TimeGrid,
    pub run: RunConfig,
    pub perturbation: Perturbation,
    pub output: Option<PathBuf>,
}

fn matrix(path: &str, rows: &[Vec<f64>]) -> Result<Matrix, ConfigError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(ConfigError::new(path, "matrix must be non-empty"));
    }
    for (k, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(ConfigError::new(
                format!("{path}[{k}]"),
                format!("row has {} entries, expected {cols}", row.len()),
            ));
        }
    }
    Ok(Matrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn system_error(e: CoreError) -> ConfigError {
    match e {
        CoreError::InvalidSystem { field, reason } => ConfigError::new(format!("system.{field}"), reason),
        CoreError::DimensionMismatch { context, expected, found } => ConfigError::new(
            "system",
            format!("{context}: expected {expected}, found {found}"),
        ),
        other => ConfigError::new("system", other),
    }
}

fn resolve_system(spec: &SystemSpec) -> Result<PhSystem, ConfigError> {
    let any_matrix = spec.j.is_some() || spec.r.is_some() || spec.q.is_some() || spec.b.is_some();
    match (&spec.preset, any_matrix) {
        (Some(name), false) => presets::by_name(name).map_err(|e| ConfigError::new("system.preset", e)),
        (Some(_), true) => Err(ConfigError::new("system", "give either a preset or matrices, not both")),
        (None, _) => {
            let get = |m: &Option<Vec<Vec<f64>>>, name: &str| {
                let path = format!("system.{name}");
                m.as_deref()
                    .ok_or_else(|| ConfigError::new(&path, "missing matrix"))
                    .and_then(|rows| matrix(&path, rows))
            };
            let (j, r, q, b) = (get(&spec.j, "J")?, get(&spec.r, "R")?, get(&spec.q, "Q")?, get(&spec.b, "B")?);
            PhSystem::new(j, r, q, b).map_err(system_error)
        }
    }
}

fn resolve_input(cfg: &ExperimentConfig, sys: &PhSystem, horizon: f64) -> Result<InputSignal, ConfigError> {
    let m = sys.input_dim();
    let Some(segments) = &cfg.input else {
        return if cfg.system.preset.is_some() && horizon == presets::HORIZON {
            Ok(presets::step_input())
        } else {
            InputSignal::zero(horizon, m).map_err(|e| ConfigError::new("input", e))
        };
    };
    if segments.is_empty() {
        return Err(ConfigError::new("input", "at least one segment is required"));
    }
    let mut breakpoints = Vec::with_capacity(segments.len() + 1);
    let mut values = Vec::with_capacity(segments.len());
    for (k, seg) in segments.iter().enumerate() {
        let path = format!("input[{k}]");
        if k == 0 && seg.from != 0.0 {
            return Err(ConfigError::new(format!("{path}.from"), "first segment must start at 0"));
        }
        if k > 0 && !(seg.from > segments[k - 1].from && seg.from < horizon) {
            return Err(ConfigError::new(
                format!("{path}.from"),
                format!("must increase and stay below the horizon {horizon}"),
            ));
        }
        if seg.value.len() != m {
            return Err(ConfigError::new(
                format!("{path}.value"),
                format!("expected {m} entries, found {}", seg.value.len()),
            ));
        }
        breakpoints.push(seg.from);
        values.push(Vector::from_column_slice(&seg.value));
    }
    breakpoints.push(horizon);
    InputSignal::new(breakpoints, values).map_err(|e| ConfigError::new("input", e))
}

fn resolve_grid(spec: Option<&GridSpec>, horizon: f64) -> Result<TimeGrid, ConfigError> {
    let spec = spec.cloned().unwrap_or(GridSpec {
        intervals: Some(DEFAULT_INTERVALS),
        nodes: None,
    });
    match (spec.intervals, spec.nodes) {
        (Some(m), None) => {
            if m == 0 {
                return Err(ConfigError::new("grid.intervals", "must be at least 1"));
            }
            TimeGrid::uniform(horizon, m).map_err(|e| ConfigError::new("grid.intervals", e))
        }
        (None, Some(nodes)) => {
            if nodes.first() != Some(&0.0) || nodes.last().is_none_or(|t| (t - horizon).abs() > 1e-12 * horizon) {
                return Err(ConfigError::new("grid.nodes", format!("must run from 0 to the horizon {horizon}")));
            }
            TimeGrid::new(nodes).map_err(|e| ConfigError::new("grid.nodes", e))
        }
        _ => Err(ConfigError::new("grid", "give exactly one of intervals or nodes")),
    }
}

fn run_error(e: CoreError) -> ConfigError {
    match e {
        CoreError::InvalidTheta(theta) => ConfigError::new("run.theta", format!("must lie in (0, 1], got {theta}")),
        // Core messages lead with the offending key, e.g. "run.tol must be >= 0".
        CoreError::InvalidConfig(msg) => {
            let key = msg.split_whitespace().next().unwrap_or("");
            if key.starts_with("run.") {
                ConfigError::new(key, msg.clone())
            } else if key.starts_with("qoi.") {
                ConfigError::new(format!("run.{key}"), msg.clone())
            } else {
                ConfigError::new("run", msg)
            }
        }
        other => ConfigError::new("run", other),
    }
}

impl Experiment {
    pub fn resolve(cfg: &ExperimentConfig) -> Result<Self, ConfigError> {
        let sys = resolve_system(&cfg.system)?;
        let n = sys.state_dim();
        let preset = cfg.system.preset.is_some();

        let x0 = match &cfg.x0 {
            Some(v) if v.len() == n => Vector::from_column_slice(v),
            Some(v) => return Err(ConfigError::new("x0", format!("expected {n} entries, found {}", v.len()))),
            None if preset => presets::initial_state(),
            None => return Err(ConfigError::new("x0", "required unless a preset is used")),
        };
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::new("x0", "entries must be finite"));
        }

        let horizon = match cfg.horizon {
            Some(t) if t > 0.0 && t.is_finite() => t,
            Some(t) => return Err(ConfigError::new("horizon", format!("must be positive, got {t}"))),
            None if preset => presets::HORIZON,
            None => return Err(ConfigError::new("horizon", "required unless a preset is used")),
        };

        let input = resolve_input(cfg, &sys, horizon)?;
        let grid = resolve_grid(cfg.grid.as_ref(), horizon)?;
        let run = cfg.run.clone().unwrap_or_default();
        run.validate().map_err(run_error)?;

        let p = cfg.perturbation.clone().unwrap_or(PerturbationSpec {
            time: None,
            magnitude: None,
            component: None,
        });
        let perturbation = Perturbation {
            time: p.time.unwrap_or(horizon / 2.0),
            magnitude: p.magnitude.unwrap_or(DEFAULT_MAGNITUDE),
            component: p.component.unwrap_or(0),
        };
        if !(perturbation.time > 0.0 && perturbation.time <= horizon) {
            return Err(ConfigError::new("perturbation.time", format!("must lie in (0, {horizon}]")));
        }
        if !perturbation.magnitude.is_finite() {
            return Err(ConfigError::new("perturbation.magnitude", "must be finite"));
        }
        if perturbation.component >= n {
            return Err(ConfigError::new(
                "perturbation.component",
                format!("must be below the state dimension {n}"),
            ));
        }

        Ok(Self {
            sys,
            x0,
            horizon,
            input,
            grid,
            run,
            perturbation,
            output: cfg.output.clone(),
        })
    }
}
