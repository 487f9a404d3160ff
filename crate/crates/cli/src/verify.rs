//! Closed-form identity suite.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spacelike_flow::barriers::{
    flat_radial_operator, maximal_derivs, supersolution_profile_derivs, translating_barrier_certificate,
    TranslatingBarrier,
};
use spacelike_flow::geometry::{graph_quantities, ConformalMetric, RadialMetric};

use crate::error::{CliError, CliResult};
use crate::scenario::{ball_point, translating_identity_deviation, IDENTITY_TOL, TRANSLATING_TOL};

/// Deliberate corruption for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Flip the sign of the flat operator in the strict-supersolution identity.
    SignFlip,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub dims: Vec<usize>,
    pub c_values: Vec<f64>,
    pub r0_values: Vec<f64>,
    pub mu_values: Vec<f64>,
    pub t0_values: Vec<f64>,
    /// Random points per (n, mu, t0) combination and per metric for the graph identities.
    pub samples: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            dims: vec![3, 4, 5],
            c_values: vec![0.5, 1.0, 2.0],
            r0_values: vec![0.1, 1.0, 10.0],
            mu_values: vec![0.1, 0.5, 0.9],
            t0_values: vec![-2.0, -10.0, -100.0],
            samples: 1000,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityRow {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64) -> Self {
        IdentityRow { name: name.into(), cases, worst, tolerance, pass: worst <= tolerance }
    }
}

/// `points` log-spaced radii in `[lo, hi]`.
fn radii(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |k| lo * (hi / lo).powf(k as f64 / (points - 1) as f64))
}

pub fn run_suite(opts: &VerifyOptions) -> CliResult<Vec<IdentityRow>> {
    let lists = [
        ("--dims", opts.dims.is_empty()),
        ("--c-values", opts.c_values.is_empty()),
        ("--r0-values", opts.r0_values.is_empty()),
        ("--mu-values", opts.mu_values.is_empty()),
        ("--t0-values", opts.t0_values.is_empty()),
        ("--samples", opts.samples == 0),
    ];
    if let Some((flag, _)) = lists.iter().find(|(_, empty)| *empty) {
        return Err(CliError::Config(format!("nothing to verify: {flag} is empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = Vec::new();

    let (mut worst, mut cases) = (0.0f64, 0);
    for &n in &opts.dims {
        for &c in &opts.c_values {
            for r in radii(0.1, 100.0, 401) {
                let d = maximal_derivs(n, c, r)?;
                worst = worst.max(flat_radial_operator(n, r, &d).abs());
                cases += 1;
            }
        }
    }
    rows.push(IdentityRow::new("maximal_surface_residual", cases, worst, IDENTITY_TOL));

    let sign = if opts.fault == Some(Fault::SignFlip) { -1.0 } else { 1.0 };
    let (mut worst, mut cases) = (0.0f64, 0);
    for &n in &opts.dims {
        for &r0 in &opts.r0_values {
            for r in radii(r0, 100.0 * r0.max(1.0), 401) {
                let d = supersolution_profile_derivs(n, r0, r)?;
                worst = worst.max((sign * flat_radial_operator(n, r, &d) - 0.5 * d.slope / r).abs());
                cases += 1;
            }
        }
    }
    rows.push(IdentityRow::new("strict_supersolution_identity", cases, worst, IDENTITY_TOL));

    let (mut worst, mut deficit, mut cases, mut certs) = (0.0f64, f64::NEG_INFINITY, 0, 0);
    for &n in &opts.dims {
        for &mu in &opts.mu_values {
            for &t0 in &opts.t0_values {
                let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let alpha = rng.gen_range(0.0..2.0);
                let tb = TranslatingBarrier::new(x0, t0, alpha, mu)?;
                worst = worst.max(translating_identity_deviation(&tb, opts.samples, &mut rng)?);
                cases += opts.samples;
                let cert = translating_barrier_certificate(&tb);
                deficit = deficit
                    .max(cert.gap_bound - cert.min_spacelike_gap)
                    .max(cert.slope_bound - cert.min_boundary_slope);
                certs += 1;
            }
        }
    }
    rows.push(IdentityRow::new("translating_identity", cases, worst, TRANSLATING_TOL));
    // the slope bound is met up to rounding at the sphere, so allow one ulp-scale slack
    rows.push(IdentityRow::new("translating_certificate", certs, deficit.max(0.0), 1e-14));

    let (mut worst, mut cases) = (0.0f64, 0);
    for &n in &opts.dims {
        for metric in [RadialMetric::euclidean(n), RadialMetric::conformal_power(n, 0.5, 1.0)?] {
            for _ in 0..opts.samples {
                let r = rng.gen_range(1.0..50.0);
                let x = ball_point(&mut rng, &vec![0.0; n], 1.0);
                let xn = x.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-3);
                let x: Vec<f64> = x.iter().map(|c| c / xn * r).collect();
                let g = ball_point(&mut rng, &vec![0.0; n], 1.0);
                let gn = g.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-3);
                let s: f64 = rng.gen_range(0.0..0.95);
                let scale = s.sqrt() * metric.factor(r).0 / gn;
                let grad: Vec<f64> = g.iter().map(|c| c * scale).collect();
                let gq = graph_quantities(&metric, &x, &grad)?;
                let v2 = gq.v * gq.v;
                let id = (&gq.g * &gq.g_inv - DMatrix::<f64>::identity(n, n)).amax();
                let norm = (gq.grad_norm_sq_induced(&grad) - (v2 - 1.0)).abs() / v2;
                worst = worst.max(id).max(norm);
                cases += 1;
            }
        }
    }
    rows.push(IdentityRow::new("graph_identities", cases, worst, TRANSLATING_TOL));
    Ok(rows)
}

pub fn render(rows: &[IdentityRow]) -> String {
    let mut out = format!("{:<32} {:>8} {:>16} {:>10}  result\n", "identity", "cases", "worst deviation", "tolerance");
    for r in rows {
        out.push_str(&format!(
            "{:<32} {:>8} {:>16.3e} {:>10.0e}  {}\n",
            r.name,
            r.cases,
            r.worst,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    out
}
