//! Runs one scenario and writes its artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spacelike_flow::barriers::{
    build_outer_barrier, translating_barrier_certificate, verify_static_supersolution, TranslatingBarrier,
};
use spacelike_flow::diagnostics::{
    boundary_slope_series, decay_exponent_fit, default_fit_window, h1_decay_check, l2_monotone_check,
    max_principle_check, phi_monotone_check, CheckReport, DecayFit,
};
use spacelike_flow::field::Field;
use spacelike_flow::geometry::{ricci_bound, ConformalMetric};
use spacelike_flow::initial_data::decay_radius;
use spacelike_flow::io::{
    format_f64, write_diagnostics, write_initial_condition, write_json, write_snapshot, TrajectorySummary,
    DIAGNOSTICS_FILE, SNAPSHOT_DIR, SUMMARY_FILE,
};
use spacelike_flow::solver::{
    nested_ball_study, run_flow, solve_dirichlet, DirichletRun, FlowTrajectory, Monitors, PhiMonitor, Termination,
};

use crate::config::{Scenario, ScenarioConfig};
use crate::error::{CliError, CliResult};

/// Tolerance of the translating-barrier identity at random points.
pub const TRANSLATING_TOL: f64 = 1e-12;
/// Tolerance of the strict-supersolution identity on profile radii.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Decay fits below this r^2 raise a warning.
pub const FIT_R2_WARN: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        CheckResult { name: name.into(), pass: value <= bound, value, bound }
    }

    fn from_report(name: &str, r: CheckReport, bound: f64) -> Self {
        CheckResult { name: name.into(), pass: r.pass, value: r.worst_violation, bound }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub numeric_failure: Option<String>,
    pub trajectory: Option<TrajectorySummary>,
    pub decay_fit: Option<DecayFit>,
    /// Kept for sweep aggregation; not serialized.
    pub dirichlet: Option<DirichletRun>,
}

impl Outcome {
    pub fn passed(&self, strict: bool) -> bool {
        self.numeric_failure.is_none() && self.checks.iter().all(|c| c.pass) && (!strict || self.warnings.is_empty())
    }

    pub fn exit_code(&self, strict: bool) -> i32 {
        if self.numeric_failure.is_some() {
            3
        } else if self.passed(strict) {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub numeric_failure: Option<String>,
    pub trajectory: Option<TrajectorySummary>,
    pub decay_fit: Option<DecayFit>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Context {
    pub seed: u64,
    pub strict: bool,
}

/// Writes a numeric table with the given header.
pub fn write_table(path: &Path, header: &str, rows: &[Vec<f64>]) -> CliResult<()> {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn run_scenario(cfg: &ScenarioConfig, out: &Path, ctx: Context) -> CliResult<Outcome> {
    fs::create_dir_all(out)?;
    let mut outcome = match cfg.scenario {
        Scenario::Flow1d => flow_line(cfg, out, false)?,
        Scenario::DecayStudy => flow_line(cfg, out, true)?,
        Scenario::FlowRadial | Scenario::NoLiftOff => flow_radial(cfg, out)?,
        Scenario::Dirichlet => dirichlet(cfg, out, cfg.dirichlet.as_ref().and_then(|d| d.radius).unwrap_or_default())?,
        Scenario::NestedBalls => nested(cfg, out)?,
        Scenario::BarrierVerify => barrier_verify(cfg, out)?,
        Scenario::TranslatingVerify => translating_verify(cfg, out, ctx.seed)?,
    };
    if ctx.strict && !outcome.warnings.is_empty() {
        outcome.checks.push(CheckResult {
            name: "no_warnings".into(),
            pass: false,
            value: outcome.warnings.len() as f64,
            bound: 0.0,
        });
    }
    let summary = ScenarioSummary {
        scenario: cfg.scenario,
        pass: outcome.passed(ctx.strict),
        checks: outcome.checks.clone(),
        warnings: outcome.warnings.clone(),
        metrics: outcome.metrics.clone(),
        numeric_failure: outcome.numeric_failure.clone(),
        trajectory: outcome.trajectory.clone(),
        decay_fit: outcome.decay_fit,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(outcome)
}

/// Writes diagnostics and snapshots and records the checks every flow shares.
fn finish_flow(out: &Path, traj: &FlowTrajectory, cfg: &ScenarioConfig, outcome: &mut Outcome) -> CliResult<()> {
    write_diagnostics(&out.join(DIAGNOSTICS_FILE), &traj.records)?;
    let snaps = out.join(SNAPSHOT_DIR);
    for (t, f) in &traj.snapshots {
        write_snapshot(&snaps, *t, f)?;
    }
    let diag = &cfg.diagnostics;
    match traj.termination {
        Termination::SpacelikeViolation => {
            outcome.numeric_failure = Some(traj.violation.clone().unwrap_or_else(|| "spacelike violation".into()));
        }
        Termination::StepCap => outcome.checks.push(CheckResult {
            name: "reached_t_end".into(),
            pass: false,
            value: traj.final_time(),
            bound: cfg.solver().t_end,
        }),
        Termination::ReachedTEnd => {}
    }
    if traj.rejected_steps > 0 {
        outcome.warnings.push(format!("{} step halvings were needed", traj.rejected_steps));
    }
    outcome
        .checks
        .push(CheckResult::from_report("max_principle", max_principle_check(&traj.records, diag.monotone_slack)?, diag.monotone_slack));
    let g0 = traj.records[0].grad_max;
    let gmax = traj.records.iter().map(|r| r.grad_max).fold(g0, f64::max);
    outcome.checks.push(CheckResult::at_most("gradient_growth", gmax - g0, diag.gradient_slack));
    if let Some(last) = traj.records.last() {
        let m = &mut outcome.metrics;
        m.insert("sup_u".into(), last.sup_u);
        m.insert("grad_max".into(), last.grad_max);
        m.insert("l2".into(), last.l2);
        m.insert("h1_grad".into(), last.h1_grad);
        m.insert("t_final".into(), last.t);
    }
    outcome.metrics.insert("steps".into(), traj.steps as f64);
    outcome.metrics.insert("max_grad".into(), gmax);
    outcome.trajectory = Some(TrajectorySummary::of(traj));
    Ok(())
}

fn flow_line(cfg: &ScenarioConfig, out: &Path, fit: bool) -> CliResult<Outcome> {
    let solver = cfg.solver();
    let extent = cfg.domain.as_ref().map(|d| d.extent).unwrap_or_default();
    let metric = cfg.metric();
    let u0 = cfg.data().sample_line(-extent, extent, solver.h)?;
    let traj = run_flow(&metric, &u0, &solver, &Monitors::default())?;
    let mut outcome = Outcome::default();
    finish_flow(out, &traj, cfg, &mut outcome)?;
    let diag = &cfg.diagnostics;
    outcome.checks.push(CheckResult::from_report(
        "l2_monotone",
        l2_monotone_check(&traj.records, diag.integral_slack)?,
        diag.integral_slack,
    ));
    outcome.checks.push(CheckResult::from_report(
        "h1_bound",
        h1_decay_check(&traj.records, diag.integral_slack)?,
        diag.integral_slack,
    ));
    if fit {
        let window = diag.fit_window.map_or_else(|| default_fit_window(&traj.records), |[a, b]| (a, b));
        let f = decay_exponent_fit(&traj.records, window)?;
        outcome.metrics.insert("decay_exponent".into(), f.exponent);
        if f.r_squared < FIT_R2_WARN {
            outcome.warnings.push(format!("decay fit r^2 = {} below {FIT_R2_WARN}", f.r_squared));
        }
        if let Some([lo, hi]) = diag.decay_target {
            outcome.checks.push(CheckResult {
                name: "decay_exponent".into(),
                pass: f.exponent >= lo && f.exponent <= hi,
                value: f.exponent,
                bound: if f.exponent < lo { lo } else { hi },
            });
        }
        outcome.decay_fit = Some(f);
    }
    Ok(outcome)
}

fn monitors(cfg: &ScenarioConfig, u0: &Field) -> CliResult<Monitors> {
    let metric = cfg.metric();
    let diag = &cfg.diagnostics;
    let mut mon = Monitors::default();
    let lo = u0.nodes[0].max(metric.min_radius());
    let hi = *u0.nodes.last().unwrap_or(&lo);
    if diag.sup_phi {
        let c = match diag.ricci_constant {
            Some(c) => c,
            None => ricci_bound(&metric, lo.max(cfg.solver().h), hi, 200)?,
        };
        let shift = u0.values.iter().copied().fold(0.0, f64::min);
        mon.phi = Some(PhiMonitor::from_ricci_constant(c, shift)?);
    }
    if diag.barrier_margin || cfg.scenario == Scenario::NoLiftOff {
        let b = cfg
            .barrier
            .as_ref()
            .ok_or_else(|| CliError::Config("barrier.eps is required".into()))?;
        let r1 = match b.r1_min {
            Some(r) => r,
            None => decay_radius(u0, b.eps)?.max(lo).max(cfg.solver().h),
        };
        let height = b.height.unwrap_or_else(|| u0.sup_abs()).max(b.eps);
        mon.barrier = Some(build_outer_barrier(&metric, r1, height, b.eps)?);
    }
    Ok(mon)
}

fn flow_radial(cfg: &ScenarioConfig, out: &Path) -> CliResult<Outcome> {
    let solver = cfg.solver();
    let metric = cfg.metric();
    let extent = cfg.domain.as_ref().map(|d| d.extent).unwrap_or_default();
    let lo = if metric.is_flat() { 0.0 } else { solver.r_inner };
    let u0 = cfg.data().sample_radial(lo, extent, solver.h)?;
    let mon = monitors(cfg, &u0)?;
    let traj = run_flow(&metric, &u0, &solver, &mon)?;
    let mut outcome = Outcome::default();
    finish_flow(out, &traj, cfg, &mut outcome)?;
    if mon.phi.is_some() {
        let slack = cfg.diagnostics.monotone_slack;
        outcome
            .checks
            .push(CheckResult::from_report("phi_monotone", phi_monotone_check(&traj.records, slack)?, slack));
    }
    if let Some(b) = &mon.barrier {
        let min_margin = traj
            .records
            .iter()
            .filter_map(|r| r.barrier_margin)
            .fold(f64::INFINITY, f64::min);
        if min_margin == f64::INFINITY {
            outcome.warnings.push(format!("barrier radius r0 = {} lies outside the grid", b.r0));
        }
        outcome.metrics.insert("barrier_r0".into(), b.r0);
        outcome.metrics.insert("min_barrier_margin".into(), min_margin);
        outcome.checks.push(CheckResult {
            name: "barrier_margin".into(),
            pass: min_margin > 0.0,
            value: min_margin,
            bound: 0.0,
        });
    }
    Ok(outcome)
}

pub fn dirichlet(cfg: &ScenarioConfig, out: &Path, radius: f64) -> CliResult<Outcome> {
    let solver = cfg.solver();
    let metric = cfg.metric();
    let run = solve_dirichlet(radius, &metric, cfg.data(), &solver, &Monitors::default())?;
    let mut outcome = Outcome::default();
    finish_flow(out, &run.trajectory, cfg, &mut outcome)?;
    write_initial_condition(&out.join("initial_condition.csv"), &run.interpolation)?;
    let series = boundary_slope_series(&run.trajectory.snapshots, &run.interpolation.sigma_tilde);
    let rows: Vec<Vec<f64>> = series.times.iter().zip(&series.slopes).map(|(t, s)| vec![*t, *s]).collect();
    write_table(&out.join("boundary_slopes.csv"), "t,slope", &rows)?;
    let m = &mut outcome.metrics;
    m.insert("radius".into(), radius);
    m.insert("lambda".into(), run.interpolation.lambda);
    m.insert("max_boundary_slope".into(), series.max_slope);
    outcome.dirichlet = Some(run);
    Ok(outcome)
}

fn nested(cfg: &ScenarioConfig, out: &Path) -> CliResult<Outcome> {
    let radii = cfg.dirichlet.as_ref().and_then(|d| d.radii.clone()).unwrap_or_default();
    let table = nested_ball_study(&radii, &cfg.metric(), cfg.data(), &cfg.solver())?;
    let rows: Vec<Vec<f64>> = table.iter().map(|d| vec![d.r_small, d.r_large, d.window, d.max_diff]).collect();
    write_table(&out.join("nested.csv"), "r_small,r_large,window,max_diff", &rows)?;
    let mut outcome = Outcome::default();
    if let Some(last) = table.last() {
        outcome.metrics.insert("max_diff_largest_pair".into(), last.max_diff);
    }
    Ok(outcome)
}

fn barrier_verify(cfg: &ScenarioConfig, out: &Path) -> CliResult<Outcome> {
    let metric = cfg.metric();
    let b = cfg.barrier.as_ref().expect("barrier section checked at load time");
    let profile = build_outer_barrier(
        &metric,
        b.r1_min.unwrap_or_default(),
        b.height.unwrap_or_default(),
        b.eps,
    )?;
    let report = verify_static_supersolution(&metric, &profile, &profile.certificate_radii());
    write_json(&out.join("barrier_report.json"), &report)?;
    let rows: Vec<Vec<f64>> = profile.r_grid.iter().zip(&profile.b_values).map(|(r, v)| vec![*r, *v]).collect();
    write_table(&out.join("barrier_profile.csv"), "r,b", &rows)?;
    let mut outcome = Outcome::default();
    outcome
        .checks
        .push(CheckResult::at_most("supersolution_identity", report.max_identity_deviation(), IDENTITY_TOL));
    outcome.checks.push(CheckResult::at_most("curved_sign", report.worst_curved(), 0.0));
    outcome.metrics.insert("r0".into(), profile.r0);
    outcome.metrics.insert("worst_curved".into(), report.worst_curved());
    Ok(outcome)
}

/// Uniform point of the ball `B_radius(center)`.
pub fn ball_point(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = center.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if p.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
            return center.iter().zip(&p).map(|(c, d)| c + radius * d).collect();
        }
    }
}

/// Worst `|residual - alpha|` of the translating barrier at `samples`
/// random points of its space-time domain.
pub fn translating_identity_deviation(tb: &TranslatingBarrier, samples: usize, rng: &mut ChaCha8Rng) -> CliResult<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = ball_point(rng, &tb.x0, tb.rho);
        let t = rng.gen_range(0.0..=-tb.t0);
        worst = worst.max((tb.flat_residual(&x, t)? - tb.alpha).abs());
    }
    Ok(worst)
}

fn translating_verify(cfg: &ScenarioConfig, out: &Path, seed: u64) -> CliResult<Outcome> {
    let tc = cfg.translating.as_ref().expect("translating section checked at load time");
    let x0 = tc.x0.clone().unwrap_or_else(|| vec![0.0; tc.n]);
    if x0.len() != tc.n {
        return Err(CliError::Config(format!("translating.x0 has {} entries, n = {}", x0.len(), tc.n)));
    }
    let tb = TranslatingBarrier::new(x0, tc.t0, tc.alpha, tc.mu)?;
    let cert = translating_barrier_certificate(&tb);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dev = translating_identity_deviation(&tb, tc.samples, &mut rng)?;
    write_json(&out.join("translating_report.json"), &(&tb, &cert, dev))?;
    let mut outcome = Outcome::default();
    outcome.checks.push(CheckResult::at_most("translating_identity", dev, TRANSLATING_TOL));
    outcome.checks.push(CheckResult {
        name: "spacelike_gap".into(),
        pass: cert.min_spacelike_gap >= cert.gap_bound,
        value: cert.min_spacelike_gap,
        bound: cert.gap_bound,
    });
    outcome.checks.push(CheckResult {
        name: "boundary_slope".into(),
        pass: cert.pass,
        value: cert.min_boundary_slope,
        bound: cert.slope_bound,
    });
    outcome.metrics.insert("rho".into(), cert.rho);
    Ok(outcome)
}
