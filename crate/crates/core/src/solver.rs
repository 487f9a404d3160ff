//! Explicit time stepping of the graphical flow on line and radial grids.
//!
//! Line grids evolve `u_t = u'' / (1 - u'^2)`; radial grids evolve the reduced
//! operator of [`crate::geometry::mcf_operator_radial`], with the limit
//! `n u''(0) / w(0)^2` at the axis.

use serde::{Deserialize, Serialize};

use crate::barriers::BarrierProfile;
use crate::diagnostics::{barrier_margin, field_norms, phi_supremum, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::field::{BoundaryCondition, Field, FieldKind};
use crate::geometry::{radial_operator_from_factor, ConformalMetric, RadialMetric, TOL_SPACELIKE};
use crate::initial_data::{interpolate_initial_data, lipschitz_constant, InitialData, InterpolationResult};

/// Maximum number of times a rejected step is retried with half the step.
pub const MAX_HALVINGS: usize = 10;
/// Edge nodes must carry less than this fraction of `sup |u0|` in `run_flow`.
pub const EDGE_DECAY: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClampPolicy {
    /// Halve the step and retry, up to [`MAX_HALVINGS`] times.
    #[default]
    Reject,
    HaltAndReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub h: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    /// Record diagnostics at this time interval; every step when absent.
    #[serde(default)]
    pub record_every: Option<f64>,
    #[serde(default)]
    pub clamp_policy: ClampPolicy,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Inner radius of radial grids when the metric is singular at the origin.
    #[serde(default = "default_r_inner")]
    pub r_inner: f64,
}

fn default_max_steps() -> usize {
    50_000_000
}

fn default_r_inner() -> f64 {
    1.0
}

impl SolverConfig {
    pub fn new(h: f64, cfl_safety: f64, t_end: f64) -> Self {
        SolverConfig {
            h,
            cfl_safety,
            t_end,
            snapshot_every: t_end,
            record_every: None,
            clamp_policy: ClampPolicy::Reject,
            max_steps: default_max_steps(),
            r_inner: default_r_inner(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::domain(format!("solver.h must be positive, got {}", self.h)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::domain(format!("solver.cfl_safety must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::domain(format!("solver.t_end must be positive, got {}", self.t_end)));
        }
        if !(self.snapshot_every > 0.0) {
            return Err(Error::domain("solver.snapshot_every must be positive"));
        }
        if let Some(r) = self.record_every {
            if !(r > 0.0) {
                return Err(Error::domain("solver.record_every must be positive"));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::domain("solver.max_steps must be positive"));
        }
        if !(self.r_inner > 0.0) {
            return Err(Error::domain("solver.r_inner must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTEnd,
    SpacelikeViolation,
    StepCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub snapshots: Vec<(f64, Field)>,
    pub records: Vec<DiagnosticsRecord>,
    pub termination: Termination,
    pub steps: usize,
    pub rejected_steps: usize,
    /// Description of the violation that stopped the run, if any.
    pub violation: Option<String>,
}

impl FlowTrajectory {
    pub fn final_field(&self) -> &Field {
        &self.snapshots.last().expect("trajectory has snapshots").1
    }

    pub fn final_time(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.0)
    }
}

/// `phi = v exp(mu e^(lambda (u - shift)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiMonitor {
    pub lambda: f64,
    pub mu: f64,
    pub shift: f64,
}

impl PhiMonitor {
    /// `lambda = C`, `mu = 1/C` for a Ricci constant `C > 0`.
    pub fn from_ricci_constant(c: f64, shift: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("phi monitor needs a positive Ricci constant, got {c}")));
        }
        Ok(PhiMonitor { lambda: c, mu: 1.0 / c, shift })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Monitors {
    pub phi: Option<PhiMonitor>,
    pub barrier: Option<BarrierProfile>,
}

/// Per-node coefficients of the discrete operator.
struct Operator {
    kind: FieldKind,
    n: f64,
    h: f64,
    nodes: Vec<f64>,
    w: Vec<f64>,
    dw: Vec<f64>,
    /// `1 / (h w)` at edge midpoints.
    inv_edge: Vec<f64>,
    bc: [BoundaryCondition; 2],
}

impl Operator {
    fn new<M: ConformalMetric + ?Sized>(metric: &M, field: &Field) -> Result<Self> {
        field.validate()?;
        let len = field.len();
        let flat = metric.is_flat();
        match field.kind {
            FieldKind::Line if !flat => {
                return Err(Error::domain("line grids evolve in the flat metric only"));
            }
            FieldKind::Radial => {
                let r0 = field.nodes[0];
                if !flat && r0 < metric.min_radius() {
                    return Err(Error::domain(format!(
                        "radial grid starts at {r0}, inside the metric's working domain"
                    )));
                }
                if !flat && r0 == 0.0 && metric.min_radius() > 0.0 {
                    return Err(Error::domain("metric is singular at the origin; start the grid at r_inner"));
                }
            }
            _ => {}
        }
        let (w, dw): (Vec<f64>, Vec<f64>) = if field.kind == FieldKind::Line || flat {
            (vec![1.0; len], vec![0.0; len])
        } else {
            field.nodes.iter().map(|&r| metric.factor(r)).unzip()
        };
        let inv_edge = (0..len - 1)
            .map(|i| {
                let w = if field.kind == FieldKind::Line || flat {
                    1.0
                } else {
                    metric.factor(0.5 * (field.nodes[i] + field.nodes[i + 1])).0
                };
                1.0 / (field.h * w)
            })
            .collect();
        Ok(Operator {
            kind: field.kind,
            n: metric.dim() as f64,
            h: field.h,
            nodes: field.nodes.clone(),
            w,
            dw,
            inv_edge,
            bc: field.bc,
        })
    }

    /// Writes the operator into `out` and returns the largest coefficient of
    /// `u''` over the updated nodes.
    fn evaluate(&self, u: &[f64], out: &mut [f64]) -> Result<f64> {
        let len = u.len();
        let h = self.h;
        let inv_h2 = 1.0 / (h * h);
        let mut max_coef: f64 = 0.0;
        for end in 0..2 {
            let (i, j) = if end == 0 { (0, 1) } else { (len - 1, len - 2) };
            let inv_w2 = 1.0 / (self.w[i] * self.w[i]);
            let d2u = 2.0 * (u[j] - u[i]) * inv_h2;
            out[i] = match self.bc[end] {
                BoundaryCondition::DirichletZero | BoundaryCondition::Pinned => 0.0,
                BoundaryCondition::AsymptoticDecay => {
                    max_coef = max_coef.max(inv_w2);
                    inv_w2 * d2u
                }
                BoundaryCondition::AxisSymmetry => {
                    max_coef = max_coef.max(self.n * inv_w2);
                    self.n * inv_w2 * d2u
                }
            };
        }
        match self.kind {
            FieldKind::Line => {
                let half_inv_h = 0.5 / h;
                let mut min_gap = f64::INFINITY;
                for (o, p) in out[1..len - 1].iter_mut().zip(u.windows(3)) {
                    let du = (p[2] - p[0]) * half_inv_h;
                    let gap = 1.0 - du * du;
                    min_gap = min_gap.min(gap);
                    *o = (p[2] - 2.0 * p[1] + p[0]) * inv_h2 / gap;
                }
                if !(min_gap > TOL_SPACELIKE) {
                    let i = (1..len - 1)
                        .find(|&i| {
                            let du = (u[i + 1] - u[i - 1]) * half_inv_h;
                            !(1.0 - du * du > TOL_SPACELIKE)
                        })
                        .unwrap_or(1);
                    let du = (u[i + 1] - u[i - 1]) * half_inv_h;
                    return Err(Error::SpacelikeViolation { grad_sq: du * du, at: Some(self.nodes[i]) });
                }
                max_coef = max_coef.max(1.0 / min_gap);
            }
            FieldKind::Radial => {
                let dim = self.n as usize;
                for i in 1..len - 1 {
                    let du = (u[i + 1] - u[i - 1]) / (2.0 * h);
                    let d2u = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_h2;
                    let (w, dw) = (self.w[i], self.dw[i]);
                    out[i] = radial_operator_from_factor(dim, self.nodes[i], w, dw, du, d2u)?;
                    let p = du / w;
                    max_coef = max_coef.max(1.0 / (w * w * (1.0 - p * p)));
                }
            }
        }
        Ok(max_coef)
    }

    fn dt_from_coefficient(&self, safety: f64, max_coef: f64) -> f64 {
        if max_coef > 0.0 {
            safety * self.h * self.h / (2.0 * max_coef)
        } else {
            safety * self.h * self.h / 2.0
        }
    }

    /// Largest node-to-node slope in `sigma` and where it occurs.
    fn max_edge_slope(&self, u: &[f64]) -> (f64, f64) {
        let slopes = u.windows(2).zip(&self.inv_edge).map(|(p, k)| (p[1] - p[0]).abs() * k);
        let max = slopes.clone().fold(0.0, |m: f64, s| if s > m || s.is_nan() { s } else { m });
        if max < 1.0 - TOL_SPACELIKE {
            return (max, f64::NAN);
        }
        let (i, s) = slopes
            .enumerate()
            .find(|(_, s)| !(*s < 1.0 - TOL_SPACELIKE))
            .unwrap_or((0, max));
        (s, 0.5 * (self.nodes[i] + self.nodes[i + 1]))
    }
}

/// `cfl_safety h^2 / (2 max c)` where `c` is the coefficient of `u''` at the
/// updated nodes: `1/(w^2 (1 - |grad u|^2))` inside, `n / w^2` at the axis.
pub fn stable_dt<M: ConformalMetric + ?Sized>(field: &Field, metric: &M, config: &SolverConfig) -> Result<f64> {
    config.validate()?;
    let op = Operator::new(metric, field)?;
    let mut out = vec![0.0; field.len()];
    let c = op.evaluate(&field.values, &mut out)?;
    Ok(op.dt_from_coefficient(config.cfl_safety, c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub field: Field,
    pub dt: f64,
    pub halvings: usize,
}

struct Stepper<'c> {
    op: Operator,
    config: &'c SolverConfig,
    rhs: Vec<f64>,
    trial: Vec<f64>,
}

impl<'c> Stepper<'c> {
    fn new<M: ConformalMetric + ?Sized>(metric: &M, field: &Field, config: &'c SolverConfig) -> Result<Self> {
        let len = field.len();
        Ok(Stepper {
            op: Operator::new(metric, field)?,
            config,
            rhs: vec![0.0; len],
            trial: vec![0.0; len],
        })
    }

    /// Advances `u` in place by at most `cap`; returns the step taken and
    /// the number of halvings.
    fn step(&mut self, u: &mut Vec<f64>, cap: f64) -> Result<(f64, usize)> {
        let c = self.op.evaluate(u, &mut self.rhs)?;
        let mut dt = self.op.dt_from_coefficient(self.config.cfl_safety, c).min(cap);
        let last = u.len() - 1;
        for halvings in 0..=MAX_HALVINGS {
            for ((t, &v), &r) in self.trial.iter_mut().zip(u.iter()).zip(&self.rhs) {
                *t = v + dt * r;
            }
            if self.op.bc[0] == BoundaryCondition::DirichletZero {
                self.trial[0] = 0.0;
            }
            if self.op.bc[1] == BoundaryCondition::DirichletZero {
                self.trial[last] = 0.0;
            }
            let (s, at) = self.op.max_edge_slope(&self.trial);
            if s < 1.0 - TOL_SPACELIKE {
                std::mem::swap(u, &mut self.trial);
                return Ok((dt, halvings));
            }
            if self.config.clamp_policy == ClampPolicy::HaltAndReport || halvings == MAX_HALVINGS {
                return Err(Error::SpacelikeViolation { grad_sq: s * s, at: Some(at) });
            }
            dt *= 0.5;
        }
        unreachable!()
    }
}

fn single_step<M: ConformalMetric + ?Sized>(field: &Field, metric: &M, config: &SolverConfig) -> Result<StepOutcome> {
    config.validate()?;
    let mut stepper = Stepper::new(metric, field, config)?;
    let mut u = field.values.clone();
    let (dt, halvings) = stepper.step(&mut u, f64::INFINITY)?;
    Ok(StepOutcome { field: field.with_values(u), dt, halvings })
}

/// One forward Euler step of `u_t = u'' / (1 - u'^2)` on a line grid.
pub fn step_1d(field: &Field, config: &SolverConfig) -> Result<StepOutcome> {
    if field.kind != FieldKind::Line {
        return Err(Error::domain("step_1d needs a line field"));
    }
    single_step(field, &RadialMetric::euclidean(1), config)
}

/// One forward Euler step of the reduced radial operator.
pub fn step_radial<M: ConformalMetric + ?Sized>(field: &Field, metric: &M, config: &SolverConfig) -> Result<StepOutcome> {
    if field.kind != FieldKind::Radial {
        return Err(Error::domain("step_radial needs a radial field"));
    }
    single_step(field, metric, config)
}

fn make_record<M: ConformalMetric + ?Sized>(
    t: f64,
    field: &Field,
    metric: &M,
    monitors: &Monitors,
) -> Result<DiagnosticsRecord> {
    let norms = field_norms(field, metric);
    let sup_phi = match monitors.phi {
        Some(p) => Some(phi_supremum(field, metric, p.lambda, p.mu, p.shift)?),
        None => None,
    };
    Ok(DiagnosticsRecord {
        t,
        sup_u: norms.sup_u,
        grad_max: norms.grad_max,
        l2: norms.l2,
        h1_grad: norms.h1_grad,
        sup_phi,
        barrier_margin: monitors.barrier.as_ref().map(|b| barrier_margin(field, b)),
    })
}

/// Evolves `u0` to `config.t_end`, landing exactly on every snapshot and
/// record time.
pub fn advance<M: ConformalMetric + ?Sized>(
    metric: &M,
    u0: &Field,
    config: &SolverConfig,
    monitors: &Monitors,
) -> Result<FlowTrajectory> {
    config.validate()?;
    u0.check_spacelike(metric)?;
    let mut stepper = Stepper::new(metric, u0, config)?;
    let mut u = u0.values.clone();
    for (end, idx) in [(0, 0), (1, u.len() - 1)] {
        if u0.bc[end] == BoundaryCondition::DirichletZero && u[idx] != 0.0 {
            return Err(Error::domain(format!("Dirichlet end at {} carries {}", u0.nodes[idx], u[idx])));
        }
    }
    let tol = 1e-12 * config.t_end.max(1.0);
    let mut t = 0.0;
    let mut records = vec![make_record(0.0, u0, metric, monitors)?];
    let mut snapshots = vec![(0.0, u0.clone())];
    let (mut snap_k, mut rec_k) = (1u64, 1u64);
    let mut steps = 0;
    let mut rejected = 0;
    let mut violation = None;
    let termination = loop {
        if t >= config.t_end - tol {
            break Termination::ReachedTEnd;
        }
        if steps >= config.max_steps {
            break Termination::StepCap;
        }
        let next_snap = (snap_k as f64 * config.snapshot_every).min(config.t_end);
        let next_rec = config.record_every.map_or(f64::INFINITY, |r| rec_k as f64 * r);
        let target = next_snap.min(next_rec).min(config.t_end);
        let cap = target - t;
        match stepper.step(&mut u, cap) {
            Ok((dt, halvings)) => {
                steps += 1;
                rejected += halvings;
                // absorb round-off so record and snapshot times come out exact
                t = if dt == cap || t + dt >= target - tol { target } else { t + dt };
            }
            Err(Error::SpacelikeViolation { grad_sq, at }) => {
                violation = Some(format!("|grad u|^2 = {grad_sq} at r = {at:?}, t = {t}"));
                break Termination::SpacelikeViolation;
            }
            Err(e) => return Err(e),
        }
        let due_record = match config.record_every {
            None => true,
            Some(r) => {
                let due = t >= next_rec - tol;
                while rec_k as f64 * r <= t + tol {
                    rec_k += 1;
                }
                due
            }
        };
        let due_snap = t >= next_snap - tol;
        if due_snap {
            while snap_k as f64 * config.snapshot_every <= t + tol {
                snap_k += 1;
            }
        }
        if due_record || due_snap {
            let field = u0.with_values(u.clone());
            if due_record {
                match make_record(t, &field, metric, monitors) {
                    Ok(r) => records.push(r),
                    Err(Error::SpacelikeViolation { grad_sq, at }) => {
                        violation = Some(format!("|grad u|^2 = {grad_sq} at r = {at:?}, t = {t}"));
                        snapshots.push((t, field));
                        break Termination::SpacelikeViolation;
                    }
                    Err(e) => return Err(e),
                }
            }
            if due_snap {
                snapshots.push((t, field));
            }
        }
    };
    let field = u0.with_values(u);
    if records.last().map_or(true, |r| r.t < t) {
        if let Ok(r) = make_record(t, &field, metric, monitors) {
            records.push(r);
        }
    }
    if snapshots.last().map_or(true, |s| s.0 < t) {
        snapshots.push((t, field));
    }
    Ok(FlowTrajectory {
        snapshots,
        records,
        termination,
        steps,
        rejected_steps: rejected,
        violation,
    })
}

/// Whole-space flow approximated on the truncated grid of `u0`, which must
/// have decayed below `EDGE_DECAY sup |u0|` next to every Dirichlet end.
pub fn run_flow<M: ConformalMetric + ?Sized>(
    metric: &M,
    u0: &Field,
    config: &SolverConfig,
    monitors: &Monitors,
) -> Result<FlowTrajectory> {
    let sup = u0.sup_abs();
    let len = u0.len();
    for (end, idx) in [(0, 1), (1, len - 2)] {
        if u0.bc[end] == BoundaryCondition::DirichletZero && u0.values[idx].abs() > EDGE_DECAY * sup {
            return Err(Error::domain(format!(
                "initial data have not decayed at the grid edge: |u0({})| = {}",
                u0.nodes[idx],
                u0.values[idx].abs()
            )));
        }
    }
    advance(metric, u0, config, monitors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletRun {
    pub radius: f64,
    pub interpolation: InterpolationResult,
    pub trajectory: FlowTrajectory,
}

/// Flow of the modified data `(sigma_R, u_{0,R})` on `[r_lo, R^2]` with zero
/// data at `R^2`, where the modification happens across `[R - 1, R]`. The
/// grid starts at the axis for flat metrics and at `config.r_inner`
/// otherwise. The interpolation margin is half the gap `1 - Lip(u0)`.
pub fn solve_dirichlet(
    big_r: f64,
    metric: &RadialMetric,
    u0: &InitialData,
    config: &SolverConfig,
    monitors: &Monitors,
) -> Result<DirichletRun> {
    config.validate()?;
    let r_lo = if metric.is_flat() { 0.0 } else { config.r_inner };
    if !(big_r - 1.0 > r_lo) {
        return Err(Error::domain(format!("R = {big_r} leaves no room above the inner radius {r_lo}")));
    }
    let field = u0.sample_radial(r_lo, big_r * big_r, config.h)?;
    let lip = lipschitz_constant(metric, &field);
    if !(lip < 1.0) {
        return Err(Error::SpacelikeViolation { grad_sq: lip * lip, at: None });
    }
    let eps = 0.5 * (1.0 - lip);
    let interpolation = interpolate_initial_data(metric, &field, big_r - 1.0, big_r, eps)?;
    let trajectory = advance(&interpolation.sigma_tilde, &interpolation.u_tilde, config, monitors)?;
    Ok(DirichletRun { radius: big_r, interpolation, trajectory })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedDifference {
    pub r_small: f64,
    pub r_large: f64,
    pub window: f64,
    pub max_diff: f64,
}

/// Runs [`solve_dirichlet`] for every radius (concurrently) and compares
/// consecutive runs on `r <= R_min / 2` at their common snapshot times.
pub fn nested_ball_study(
    radii: &[f64],
    metric: &RadialMetric,
    u0: &InitialData,
    config: &SolverConfig,
) -> Result<Vec<NestedDifference>> {
    if radii.len() < 2 {
        return Err(Error::InsufficientData("nested-ball study needs at least two radii".into()));
    }
    if radii.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::domain("radii must be strictly increasing"));
    }
    let runs: Vec<Result<DirichletRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = radii
            .iter()
            .map(|&r| s.spawn(move || solve_dirichlet(r, metric, u0, config, &Monitors::default())))
            .collect();
        handles.into_iter().map(|h| h.join().expect("nested-ball run panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let window = radii[0] / 2.0;
    Ok(runs.windows(2).map(|p| nested_difference(&p[0], &p[1], window, config.t_end)).collect())
}

/// `max |u_small - u_large|` on `r <= window` over the snapshot times the
/// two runs share.
pub fn nested_difference(small: &DirichletRun, large: &DirichletRun, window: f64, t_end: f64) -> NestedDifference {
    let tol = 1e-9 * t_end.max(1.0);
    let (a, b) = (&small.trajectory, &large.trajectory);
    let mut max_diff: f64 = 0.0;
    for (ta, fa) in &a.snapshots {
        let Some((_, fb)) = b.snapshots.iter().find(|(tb, _)| (tb - ta).abs() <= tol) else {
            continue;
        };
        for (&r, &ua) in fa.nodes.iter().zip(&fa.values) {
            if r <= window {
                max_diff = max_diff.max((ua - fb.interpolate(r)).abs());
            }
        }
    }
    NestedDifference {
        r_small: small.radius,
        r_large: large.radius,
        window,
        max_diff,
    }
}
