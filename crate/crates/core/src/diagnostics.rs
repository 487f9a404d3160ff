//! Monitored quantities: norms, the `phi` quantity, barrier margins, boundary
//! slopes and decay fits.

use serde::{Deserialize, Serialize};

use crate::barriers::BarrierProfile;
use crate::error::{Error, Result};
use crate::field::{Field, FieldKind};
use crate::geometry::{ConformalMetric, TOL_SPACELIKE};

/// Per-step slack of the maximum principle check.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Relative slack on the integral bounds.
pub const INTEGRAL_SLACK: f64 = 1e-3;
/// Records with `t` below this are excluded from default decay fits.
pub const TRANSIENT_TIME: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub sup_u: f64,
    pub grad_max: f64,
    pub l2: f64,
    pub h1_grad: f64,
    pub sup_phi: Option<f64>,
    pub barrier_margin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNorms {
    pub sup_u: f64,
    pub grad_max: f64,
    pub l2: f64,
    pub h1_grad: f64,
}

/// Trapezoid weights times the volume element: `dx` on a line,
/// `r^(n-1) w^n dr` on a radial grid.
pub fn volume_weights<M: ConformalMetric + ?Sized>(field: &Field, metric: &M) -> Vec<f64> {
    let n = field.len();
    let w = field.conformal_factors(metric);
    let dim = metric.dim() as i32;
    (0..n)
        .map(|i| {
            let trap = if i == 0 || i == n - 1 { 0.5 * field.h } else { field.h };
            match field.kind {
                FieldKind::Line => trap,
                FieldKind::Radial => trap * field.nodes[i].powi(dim - 1) * w[i].powi(dim),
            }
        })
        .collect()
}

/// `sup |u|`, `max |grad u|_sigma`, `||u||_L2` and `||grad u||_L2`.
pub fn field_norms<M: ConformalMetric + ?Sized>(field: &Field, metric: &M) -> FieldNorms {
    let weights = volume_weights(field, metric);
    let grads = field.gradient_norms(metric);
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for i in 0..field.len() {
        l2 += weights[i] * field.values[i] * field.values[i];
        h1 += weights[i] * grads[i] * grads[i];
    }
    FieldNorms {
        sup_u: field.sup_abs(),
        grad_max: grads.iter().copied().fold(0.0, f64::max),
        l2: l2.sqrt(),
        h1_grad: h1.sqrt(),
    }
}

/// `sup v exp(mu e^(lambda (u - shift)))` with `v = (1 - |grad u|^2)^(-1/2)`.
pub fn phi_supremum<M: ConformalMetric + ?Sized>(
    field: &Field,
    metric: &M,
    lambda_phi: f64,
    mu_phi: f64,
    shift: f64,
) -> Result<f64> {
    let grads = field.gradient_norms(metric);
    let mut sup = f64::NEG_INFINITY;
    for (i, (&g, &u)) in grads.iter().zip(&field.values).enumerate() {
        let g2 = g * g;
        if !(g2 < 1.0 - TOL_SPACELIKE) {
            return Err(Error::SpacelikeViolation { grad_sq: g2, at: Some(field.nodes[i]) });
        }
        let v = 1.0 / (1.0 - g2).sqrt();
        sup = sup.max(v * (mu_phi * (lambda_phi * (u - shift)).exp()).exp());
    }
    Ok(sup)
}

/// `min (b_eps(r) - |u|)` over nodes with `r >= r0`; `+inf` when there are none.
pub fn barrier_margin(field: &Field, profile: &BarrierProfile) -> f64 {
    field
        .nodes
        .iter()
        .zip(&field.values)
        .filter(|(&r, _)| r.abs() >= profile.r0)
        .map(|(&r, &u)| profile.eval(r.abs()) - u.abs())
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCheck {
    pub pass: bool,
    pub sup_grad: f64,
    pub barrier_slope: f64,
}

/// `sup |grad u|_sigma` over nodes with `|x|` in `region` against the
/// barrier's boundary slope; passes when the former is strictly smaller.
pub fn comparison_hypothesis_check<M: ConformalMetric + ?Sized>(
    field: &Field,
    metric: &M,
    barrier_slope: f64,
    region: (f64, f64),
) -> ComparisonCheck {
    let grads = field.gradient_norms(metric);
    let sup_grad = field
        .nodes
        .iter()
        .zip(grads)
        .filter(|(&x, _)| x.abs() >= region.0 && x.abs() <= region.1)
        .map(|(_, g)| g)
        .fold(0.0, f64::max);
    ComparisonCheck {
        pass: sup_grad < barrier_slope,
        sup_grad,
        barrier_slope,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares fit `ln y = intercept + exponent ln x`.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!("need >= 2 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InsufficientData("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok((slope, intercept, r2))
}

/// Fits `sup_u ~ t^exponent` over records with `t` in `window`.
pub fn decay_exponent_fit(records: &[DiagnosticsRecord], window: (f64, f64)) -> Result<DecayFit> {
    if !(window.0 < window.1) {
        return Err(Error::domain(format!("empty fit window {window:?}")));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1 && r.t > 0.0 && r.sup_u > 0.0)
        .map(|r| (r.t, r.sup_u))
        .unzip();
    if ts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} usable records in {window:?}, need 10",
            ts.len()
        )));
    }
    let (exponent, intercept, r_squared) = power_law_fit(&ts, &ys)?;
    Ok(DecayFit { exponent, intercept, r_squared, window })
}

/// Last decade of simulated time, starting no earlier than [`TRANSIENT_TIME`].
pub fn default_fit_window(records: &[DiagnosticsRecord]) -> (f64, f64) {
    let t_end = records.last().map_or(0.0, |r| r.t);
    ((t_end / 10.0).max(TRANSIENT_TIME), t_end)
}

/// Outer-boundary `|grad u|_sigma` from a second-order one-sided difference.
pub fn boundary_slope<M: ConformalMetric + ?Sized>(field: &Field, metric: &M) -> f64 {
    let n = field.len();
    let u = &field.values;
    if field.bc[1].is_reflective() {
        return 0.0;
    }
    let d = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * field.h);
    let w = field.conformal_factors(metric)[n - 1];
    d.abs() / w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySlopeSeries {
    pub times: Vec<f64>,
    pub slopes: Vec<f64>,
    pub max_slope: f64,
}

pub fn boundary_slope_series<M: ConformalMetric + ?Sized>(
    snapshots: &[(f64, Field)],
    metric: &M,
) -> BoundarySlopeSeries {
    let times: Vec<f64> = snapshots.iter().map(|s| s.0).collect();
    let slopes: Vec<f64> = snapshots.iter().map(|s| boundary_slope(&s.1, metric)).collect();
    let max_slope = slopes.iter().copied().fold(0.0, f64::max);
    BoundarySlopeSeries { times, slopes, max_slope }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub pass: bool,
    /// Largest excess over the allowed value (zero or negative when passing).
    pub worst_violation: f64,
    /// Time of the worst record.
    pub at: f64,
}

/// Passes iff `sup_u` never increases by more than `slack` between records.
pub fn max_principle_check(records: &[DiagnosticsRecord], slack: f64) -> Result<CheckReport> {
    if records.len() < 2 {
        return Err(Error::InsufficientData("maximum principle check needs >= 2 records".into()));
    }
    let mut worst = (f64::NEG_INFINITY, records[0].t);
    for pair in records.windows(2) {
        let up = pair[1].sup_u - pair[0].sup_u;
        if up > worst.0 {
            worst = (up, pair[1].t);
        }
    }
    Ok(CheckReport {
        pass: worst.0 <= slack,
        worst_violation: worst.0,
        at: worst.1,
    })
}

/// Passes iff `l2 <= l2(0) (1 + rel_slack)` and `l2` never increases by more
/// than `rel_slack l2(0)` between records.
pub fn l2_monotone_check(records: &[DiagnosticsRecord], rel_slack: f64) -> Result<CheckReport> {
    if records.len() < 2 {
        return Err(Error::InsufficientData("L2 check needs >= 2 records".into()));
    }
    let scale = records[0].l2;
    let mut worst = (f64::NEG_INFINITY, records[0].t);
    for pair in records.windows(2) {
        let up = pair[1].l2 - pair[0].l2;
        if up > worst.0 {
            worst = (up, pair[1].t);
        }
    }
    Ok(CheckReport {
        pass: worst.0 <= rel_slack * scale,
        worst_violation: worst.0,
        at: worst.1,
    })
}

/// Passes iff `l2^2 + t h1_grad^2 <= l2(0)^2 (1 + rel_slack)` at every record.
/// `worst_violation` is the largest value of the left side minus the bound.
pub fn h1_decay_check(records: &[DiagnosticsRecord], rel_slack: f64) -> Result<CheckReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::InsufficientData("no records".into()))?;
    let bound = first.l2 * first.l2 * (1.0 + rel_slack);
    let mut worst = (f64::NEG_INFINITY, first.t);
    for r in records {
        let lhs = r.l2 * r.l2 + r.t * r.h1_grad * r.h1_grad;
        if lhs - bound > worst.0 {
            worst = (lhs - bound, r.t);
        }
    }
    Ok(CheckReport {
        pass: worst.0 <= 0.0,
        worst_violation: worst.0,
        at: worst.1,
    })
}

/// Passes iff `sup_phi` never increases by more than `slack` between records.
pub fn phi_monotone_check(records: &[DiagnosticsRecord], slack: f64) -> Result<CheckReport> {
    let phis: Vec<(f64, f64)> = records.iter().filter_map(|r| r.sup_phi.map(|p| (r.t, p))).collect();
    if phis.len() < 2 {
        return Err(Error::InsufficientData("phi check needs >= 2 records with sup_phi".into()));
    }
    let mut worst = (f64::NEG_INFINITY, phis[0].0);
    for pair in phis.windows(2) {
        let up = pair[1].1 - pair[0].1;
        if up > worst.0 {
            worst = (up, pair[1].0);
        }
    }
    Ok(CheckReport {
        pass: worst.0 <= slack,
        worst_violation: worst.0,
        at: worst.1,
    })
}
