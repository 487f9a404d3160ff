//! Scenario files: TOML with nested sections, checked against the
//! per-scenario list of required keys before any computation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spacelike_flow::diagnostics::{INTEGRAL_SLACK, MONOTONE_SLACK};
use spacelike_flow::geometry::RadialMetric;
use spacelike_flow::initial_data::InitialData;
use spacelike_flow::io::read_snapshot;
use spacelike_flow::solver::SolverConfig;
use toml::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "flow_1d")]
    Flow1d,
    #[serde(rename = "flow_radial")]
    FlowRadial,
    #[serde(rename = "dirichlet")]
    Dirichlet,
    #[serde(rename = "nested_balls")]
    NestedBalls,
    #[serde(rename = "no_lift_off")]
    NoLiftOff,
    #[serde(rename = "barrier_verify")]
    BarrierVerify,
    #[serde(rename = "translating_verify")]
    TranslatingVerify,
    #[serde(rename = "decay_study")]
    DecayStudy,
}

impl Scenario {
    /// Dotted keys that must be present for this scenario.
    fn required(self) -> &'static [&'static str] {
        const SOLVER: [&str; 4] = ["solver.h", "solver.cfl_safety", "solver.t_end", "solver.snapshot_every"];
        match self {
            Scenario::Flow1d | Scenario::DecayStudy => {
                &["initial_data.family", SOLVER[0], SOLVER[1], SOLVER[2], SOLVER[3], "domain.extent"]
            }
            Scenario::FlowRadial => {
                &["metric.n", "initial_data.family", SOLVER[0], SOLVER[1], SOLVER[2], SOLVER[3], "domain.extent"]
            }
            Scenario::Dirichlet => {
                &["metric.n", "initial_data.family", SOLVER[0], SOLVER[1], SOLVER[2], SOLVER[3], "dirichlet.radius"]
            }
            Scenario::NestedBalls => {
                &["metric.n", "initial_data.family", SOLVER[0], SOLVER[1], SOLVER[2], SOLVER[3], "dirichlet.radii"]
            }
            Scenario::NoLiftOff => &[
                "metric.n",
                "initial_data.family",
                SOLVER[0],
                SOLVER[1],
                SOLVER[2],
                SOLVER[3],
                "domain.extent",
                "barrier.eps",
            ],
            Scenario::BarrierVerify => &["metric.n", "barrier.eps", "barrier.r1_min", "barrier.height"],
            Scenario::TranslatingVerify => &["translating.n", "translating.t0", "translating.alpha", "translating.mu"],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Half-width of a line grid or outer radius of a radial grid.
    pub extent: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletConfig {
    pub radius: Option<f64>,
    pub radii: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    pub eps: f64,
    /// Smallest admissible `r0`; defaults to the decay radius of the data.
    pub r1_min: Option<f64>,
    /// Cap `h`; defaults to `sup |u0|`.
    pub height: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatingConfig {
    pub n: usize,
    pub t0: f64,
    pub alpha: f64,
    pub mu: f64,
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub sup_phi: bool,
    pub barrier_margin: bool,
    /// Ricci constant `C` for the phi monitor; estimated from the metric when absent.
    pub ricci_constant: Option<f64>,
    pub monotone_slack: f64,
    pub integral_slack: f64,
    /// Allowed growth of `max |grad u|` over its initial value.
    pub gradient_slack: f64,
    pub fit_window: Option<[f64; 2]>,
    /// Accepted range for the fitted decay exponent (decay_study).
    pub decay_target: Option<[f64; 2]>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            sup_phi: false,
            barrier_margin: false,
            ricci_constant: None,
            monotone_slack: MONOTONE_SLACK,
            integral_slack: INTEGRAL_SLACK,
            gradient_slack: 0.02,
            fit_window: None,
            decay_target: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted key -> values; runs cover the Cartesian product.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<Value>>,
    /// Pair the lists element by element instead of taking their product.
    #[serde(default)]
    pub zip: bool,
    /// Accepted range for the fitted scaling exponent.
    pub target: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub metric: Option<RadialMetric>,
    pub initial_data: Option<InitialData>,
    pub solver: Option<SolverConfig>,
    pub domain: Option<DomainConfig>,
    pub dirichlet: Option<DirichletConfig>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    pub barrier: Option<BarrierConfig>,
    pub translating: Option<TranslatingConfig>,
    pub output_dir: Option<PathBuf>,
}

fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(value, |v, key| v.get(key))
}

/// Sets a dotted key, creating intermediate tables.
pub fn set_path(value: &mut Value, path: &str, new: Value) -> CliResult<()> {
    let mut cur = value;
    let keys: Vec<&str> = path.split('.').collect();
    for key in &keys[..keys.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{path}: {key} is not a table")))?;
        cur = table.entry(key.to_string()).or_insert_with(|| Value::Table(Default::default()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("{path}: parent is not a table")))?;
    table.insert(keys[keys.len() - 1].to_string(), new);
    Ok(())
}

pub fn read_raw(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Value>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Replaces `initial_data = { family = "file", path = ... }` by the
/// tabulated samples of that snapshot file.
fn resolve_data_file(raw: &mut Value, base: &Path) -> CliResult<()> {
    let Some(data) = raw.get_mut("initial_data") else { return Ok(()) };
    if data.get("family").and_then(Value::as_str) != Some("file") {
        return Ok(());
    }
    let rel = data
        .get("path")
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::Config("initial_data.path is required for family = \"file\"".into()))?;
    let path = base.join(rel);
    let snap = read_snapshot(&path).map_err(|e| CliError::Config(format!("initial_data.path {}: {e}", path.display())))?;
    let table = toml::toml! { family = "tabulated" };
    let mut v = Value::Table(table);
    set_path(&mut v, "nodes", Value::Array(snap.nodes.into_iter().map(Value::Float).collect()))?;
    set_path(&mut v, "values", Value::Array(snap.values.into_iter().map(Value::Float).collect()))?;
    *data = v;
    Ok(())
}

/// Checks required keys, deserializes and validates a raw config.
pub fn from_raw(mut raw: Value, base: &Path) -> CliResult<ScenarioConfig> {
    let tag = lookup(&raw, "scenario").ok_or_else(|| CliError::Config("missing required field scenario".into()))?;
    let scenario: Scenario = tag
        .clone()
        .try_into()
        .map_err(|_| CliError::Config(format!("scenario: unknown tag {tag}")))?;
    for key in scenario.required() {
        if lookup(&raw, key).is_none() {
            return Err(CliError::Config(format!("missing required field {key}")));
        }
    }
    // a [sweep] section only matters to the sweep subcommand
    if let Some(t) = raw.as_table_mut() {
        t.remove("sweep");
    }
    resolve_data_file(&mut raw, base)?;
    let cfg: ScenarioConfig = raw.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> CliResult<ScenarioConfig> {
    let base = path.parent().unwrap_or(Path::new("."));
    from_raw(read_raw(path)?, base)
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> CliResult<()> {
        if let Some(m) = &self.metric {
            m.validate().map_err(|e| CliError::Config(format!("metric: {e}")))?;
        }
        if let Some(d) = &self.initial_data {
            d.validate().map_err(|e| CliError::Config(format!("initial_data: {e}")))?;
        }
        if let Some(s) = &self.solver {
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(d) = &self.domain {
            check(d.extent > 0.0 && d.extent.is_finite(), || "domain.extent must be positive".into())?;
        }
        if let Some(b) = &self.barrier {
            check(b.eps >= 0.0, || "barrier.eps must be nonnegative".into())?;
        }
        let diag = &self.diagnostics;
        check(diag.monotone_slack >= 0.0 && diag.integral_slack >= 0.0 && diag.gradient_slack >= 0.0, || {
            "diagnostics slacks must be nonnegative".into()
        })?;
        if let Some([a, b]) = diag.fit_window {
            check(a < b, || "diagnostics.fit_window must be increasing".into())?;
        }
        match self.scenario {
            Scenario::Flow1d | Scenario::DecayStudy => {
                let m = self.metric();
                check(m.n == 1 && m.a == 0.0, || "metric: line scenarios need the flat metric with n = 1".into())?;
                check(!diag.sup_phi && !diag.barrier_margin, || {
                    "diagnostics: sup_phi and barrier_margin need a radial scenario".into()
                })?;
            }
            Scenario::Dirichlet | Scenario::NestedBalls if diag.sup_phi || diag.barrier_margin => {
                return Err(CliError::Config(
                    "diagnostics: sup_phi and barrier_margin apply to flow_radial and no_lift_off".into(),
                ));
            }
            Scenario::NestedBalls => {
                let radii = self.dirichlet.as_ref().and_then(|d| d.radii.as_ref()).map_or(0, Vec::len);
                check(radii >= 2, || "dirichlet.radii needs at least two radii".into())?;
            }
            Scenario::NoLiftOff | Scenario::BarrierVerify => {
                check(self.metric().n >= 3, || "metric.n must be at least 3 for the static barrier".into())?;
            }
            _ => {}
        }
        if diag.barrier_margin && self.barrier.is_none() {
            return Err(CliError::Config("diagnostics.barrier_margin needs barrier.eps".into()));
        }
        if diag.sup_phi && self.metric().a == 0.0 {
            return Err(CliError::Config("diagnostics.sup_phi needs a curved metric".into()));
        }
        Ok(())
    }

    pub fn metric(&self) -> RadialMetric {
        self.metric.unwrap_or_else(|| RadialMetric::euclidean(1))
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver.expect("solver section checked at load time")
    }

    pub fn data(&self) -> &InitialData {
        self.initial_data.as_ref().expect("initial_data checked at load time")
    }
}
