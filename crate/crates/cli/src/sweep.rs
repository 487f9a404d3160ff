//! Parameter sweeps: one run per grid point, executed in parallel, each in
//! its own subdirectory, aggregated afterwards on one thread.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spacelike_flow::diagnostics::power_law_fit;
use spacelike_flow::io::{format_f64, write_json};
use spacelike_flow::solver::nested_difference;
use toml::Value;

use crate::config::{from_raw, set_path, Scenario, ScenarioConfig, SweepConfig};
use crate::error::{CliError, CliResult};
use crate::scenario::{dirichlet, run_scenario, write_table, Context, Outcome};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.json";
const RADIUS_KEY: &str = "dirichlet.radius";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub parameter: String,
    pub metric: String,
    pub exponent: f64,
    pub r_squared: f64,
    pub target: Option<[f64; 2]>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub runs: usize,
    pub failed: usize,
    pub fits: Vec<ScalingFit>,
}

#[derive(Debug)]
pub struct SweepResult {
    pub summary: SweepSummary,
    pub exit_code: i32,
}

struct Point {
    assignment: Vec<(String, Value)>,
    config: ScenarioConfig,
}

fn cell(v: &Value) -> String {
    match v {
        Value::Float(f) => format_f64(*f),
        Value::Integer(i) => format_f64(*i as f64),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn numeric(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Expands the grid into its Cartesian product (in key order) or, with
/// `zip`, into element-wise tuples.
fn expand(raw: &Value, sweep: &SweepConfig, base: &Path) -> CliResult<Vec<Point>> {
    let mut assignments: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    if sweep.zip {
        let len = sweep.grid.values().next().map_or(0, Vec::len);
        if sweep.grid.values().any(|v| v.len() != len) {
            return Err(CliError::Config("sweep.zip needs grid lists of equal length".into()));
        }
        assignments = (0..len)
            .map(|i| sweep.grid.iter().map(|(k, v)| (k.clone(), v[i].clone())).collect())
            .collect();
    } else {
        for (key, values) in &sweep.grid {
            let mut next = Vec::new();
            for a in &assignments {
                for v in values {
                    let mut b = a.clone();
                    b.push((key.clone(), v.clone()));
                    next.push(b);
                }
            }
            assignments = next;
        }
    }
    if sweep.grid.is_empty() || assignments.len() < 2 {
        return Err(CliError::Config(format!(
            "sweep.grid needs at least two parameter points, got {}",
            if sweep.grid.is_empty() { 0 } else { assignments.len() }
        )));
    }
    assignments
        .into_iter()
        .map(|assignment| {
            let mut v = raw.clone();
            for (key, value) in &assignment {
                if key == "scenario" || key.starts_with("sweep") || key == "output_dir" {
                    return Err(CliError::Config(format!("sweep.grid cannot override {key}")));
                }
                set_path(&mut v, key, value.clone())?;
            }
            let config = from_raw(v, base)?;
            Ok(Point { assignment, config })
        })
        .collect()
}

fn run_point(p: &Point, dir: &Path, ctx: Context) -> CliResult<Outcome> {
    // nested-ball points are single Dirichlet runs compared afterwards
    if p.config.scenario == Scenario::NestedBalls {
        let radius = p.config.dirichlet.as_ref().and_then(|d| d.radius).ok_or_else(|| {
            CliError::Config("a nested_balls sweep needs dirichlet.radius in sweep.grid".into())
        })?;
        std::fs::create_dir_all(dir)?;
        return dirichlet(&p.config, dir, radius);
    }
    run_scenario(&p.config, dir, ctx)
}

pub fn run_sweep(raw: Value, base: &Path, out: &Path, workers: usize, ctx: Context) -> CliResult<SweepResult> {
    let mut raw = raw;
    let sweep_value = raw
        .as_table_mut()
        .and_then(|t| t.remove("sweep"))
        .ok_or_else(|| CliError::Config("missing required field sweep.grid".into()))?;
    let sweep: SweepConfig = sweep_value
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("sweep: {e}")))?;
    let points = expand(&raw, &sweep, base)?;
    std::fs::create_dir_all(out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
    let dirs: Vec<PathBuf> = (0..points.len()).map(|i| out.join(format!("run_{i:03}"))).collect();
    let results: Vec<CliResult<Outcome>> =
        pool.install(|| points.par_iter().zip(&dirs).map(|(p, d)| run_point(p, d, ctx)).collect());

    let keys: Vec<String> = sweep.grid.keys().cloned().collect();
    let metric_keys: BTreeSet<String> =
        results.iter().flatten().flat_map(|o| o.metrics.keys().cloned()).collect();
    let mut csv = format!("run,{},status", keys.join(","));
    for k in &metric_keys {
        csv.push(',');
        csv.push_str(k);
    }
    csv.push('\n');
    let mut failed = 0;
    for (i, (p, r)) in points.iter().zip(&results).enumerate() {
        let status = match r {
            Ok(o) if o.passed(ctx.strict) => "ok",
            Ok(_) => "failed",
            Err(_) => "error",
        };
        if status != "ok" {
            failed += 1;
        }
        let mut row = vec![format!("run_{i:03}")];
        row.extend(p.assignment.iter().map(|(_, v)| cell(v)));
        row.push(status.into());
        for k in &metric_keys {
            row.push(r.as_ref().ok().and_then(|o| o.metrics.get(k)).map(|v| format_f64(*v)).unwrap_or_default());
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
        if let Err(e) = r {
            eprintln!("run_{i:03}: {e}");
        }
    }
    std::fs::write(out.join(SWEEP_FILE), csv)?;

    let mut fits = Vec::new();
    let scenario = points[0].config.scenario;
    if scenario == Scenario::Dirichlet && keys.iter().any(|k| k == RADIUS_KEY) {
        let metric = "max_boundary_slope";
        let pairs: Vec<(f64, f64)> = points
            .iter()
            .zip(&results)
            .filter_map(|(p, r)| {
                let x = p.assignment.iter().find(|(k, _)| k == RADIUS_KEY).and_then(|(_, v)| numeric(v))?;
                Some((x, *r.as_ref().ok()?.metrics.get(metric)?))
            })
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (exponent, r_squared) = match power_law_fit(&xs, &ys) {
            Ok((e, _, r2)) => (e, r2),
            Err(e) => {
                eprintln!("boundary-slope fit: {e}");
                (f64::NAN, f64::NAN)
            }
        };
        let pass = exponent.is_finite() && sweep.target.map_or(true, |[lo, hi]| exponent >= lo && exponent <= hi);
        fits.push(ScalingFit {
            parameter: RADIUS_KEY.into(),
            metric: metric.into(),
            exponent,
            r_squared,
            target: sweep.target,
            pass,
        });
    }
    if scenario == Scenario::NestedBalls {
        let mut runs: Vec<_> = results.iter().filter_map(|r| r.as_ref().ok()?.dirichlet.as_ref()).collect();
        runs.sort_by(|a, b| a.radius.total_cmp(&b.radius));
        let t_end = points[0].config.solver().t_end;
        let window = runs.first().map_or(0.0, |r| r.radius / 2.0);
        let rows: Vec<Vec<f64>> = runs
            .windows(2)
            .map(|p| {
                let d = nested_difference(p[0], p[1], window, t_end);
                vec![d.r_small, d.r_large, d.window, d.max_diff]
            })
            .collect();
        write_table(&out.join("nested.csv"), "r_small,r_large,window,max_diff", &rows)?;
    }
    let summary = SweepSummary { runs: points.len(), failed, fits };
    write_json(&out.join(SWEEP_SUMMARY_FILE), &summary)?;
    let exit_code = if failed > 0 || summary.fits.iter().any(|f| !f.pass) { 1 } else { 0 };
    Ok(SweepResult { summary, exit_code })
}
