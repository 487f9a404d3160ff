//! Barrier families for the flow: the Minkowski maximal surface, the static
//! rotationally symmetric supersolution `b` with its offset/capped variant
//! `b_eps`, and the translating light-cone barrier.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    log_space, mcf_operator_cartesian, mcf_operator_radial, ConformalMetric, RadialMetric,
};
use crate::quadrature;

/// Absolute tolerance for the height integral (in units of `r0`).
pub const HEIGHT_TOL: f64 = 1e-12;
pub const PROFILE_GRID_POINTS: usize = 1024;
pub const CERTIFICATE_POINTS: usize = 256;
pub const MAX_DOUBLINGS: usize = 40;
/// The profile grid reaches at least `PROFILE_SPAN * r0`.
pub const PROFILE_SPAN: f64 = 1e4;
/// ... and far enough that the tail of `b` is below this fraction of the cap.
pub const TAIL_FRACTION: f64 = 1e-6;

/// `beta'(r) = -(1 + c r^(2n-2))^(-1/2)`, the slope of the rotationally
/// symmetric maximal hypersurface in Minkowski space.
pub fn maximal_slope(n: usize, c: f64, r: f64) -> Result<f64> {
    let q = maximal_q(n, c, r)?;
    Ok(-1.0 / (1.0 + q).sqrt())
}

fn maximal_q(n: usize, c: f64, r: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("maximal surface needs c > 0, got {c}")));
    }
    if n == 0 || !(r >= 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("maximal surface needs n >= 1 and r >= 0 (n = {n}, r = {r})")));
    }
    Ok(c * r.powi(2 * n as i32 - 2))
}

/// Closed-form `(beta', beta'', 1 - beta'^2)`.
pub fn maximal_derivs(n: usize, c: f64, r: f64) -> Result<ProfileDerivs> {
    let q = maximal_q(n, c, r)?;
    let s = 1.0 + q;
    Ok(ProfileDerivs {
        slope: -1.0 / s.sqrt(),
        second: (n as f64 - 1.0) * c * r.powi(2 * n as i32 - 3) / (s * s.sqrt()),
        one_minus_slope_sq: q / s,
    })
}

/// `u''/(1 - u'^2) + (n - 1) u'/r` with `1 - u'^2` supplied in closed form,
/// so that no cancellation happens where `|u'|` is close to one.
pub fn flat_radial_operator(n: usize, r: f64, d: &ProfileDerivs) -> f64 {
    d.second / d.one_minus_slope_sq + (n as f64 - 1.0) * d.slope / r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileDerivs {
    pub slope: f64,
    pub second: f64,
    pub one_minus_slope_sq: f64,
}

fn check_profile_args(n: usize, r0: f64, r: f64) -> Result<()> {
    if n < 3 {
        return Err(Error::domain(format!("static barrier needs n >= 3, got {n}")));
    }
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::domain(format!("inner radius must be positive, got {r0}")));
    }
    if !(r >= r0) || !r.is_finite() {
        return Err(Error::domain(format!("radius {r} is inside r0 = {r0}")));
    }
    Ok(())
}

/// `b' = -(1 + (r/r0)^(2n-3))^(-1/2)` and its closed-form companions.
pub fn supersolution_profile_derivs(n: usize, r0: f64, r: f64) -> Result<ProfileDerivs> {
    check_profile_args(n, r0, r)?;
    let x = r / r0;
    let m = 2 * n as i32 - 3;
    let q = x.powi(m);
    let s = 1.0 + q;
    Ok(ProfileDerivs {
        slope: -1.0 / s.sqrt(),
        second: (n as f64 - 1.5) / r0 * x.powi(m - 1) / (s * s.sqrt()),
        one_minus_slope_sq: q / s,
    })
}

/// `B(x) = int_x^inf (1 + s^m)^(-1/2) ds`, so that `b(r) = r0 B(r/r0)`.
/// Substituting `s = x / y^2` turns it into a smooth integral over `(0, 1]`.
fn scaled_height(n: usize, x: f64) -> Result<f64> {
    let m = (2 * n - 3) as f64;
    let half_m = 0.5 * m;
    let pre = 2.0 * x * x.powf(-half_m);
    let integrand = |y: f64| {
        let q = (y * y / x).powf(m);
        pre * y.powf(m - 3.0) / (1.0 + q).sqrt()
    };
    quadrature::integrate(integrand, 0.0, 1.0, HEIGHT_TOL, 4000).map(|e| e.value)
}

/// Height of the static supersolution, `b(r) = -int_r^inf b'(s) ds`.
pub fn supersolution_height(n: usize, r0: f64, r: f64) -> Result<f64> {
    check_profile_args(n, r0, r)?;
    Ok(r0 * scaled_height(n, r / r0)?)
}

/// Coefficient of the leading tail, `b(r) ~ coeff * r^-(n - 5/2)`.
pub fn tail_coefficient(n: usize, r0: f64) -> f64 {
    r0.powf(n as f64 - 1.5) / (n as f64 - 2.5)
}

/// Tabulated static barrier `b_eps = b + eps` on `r >= r0`, extended by the
/// cap inside `B_{r0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierProfile {
    pub n: usize,
    pub r0: f64,
    pub eps: f64,
    pub cap: f64,
    pub r_grid: Vec<f64>,
    pub b_values: Vec<f64>,
    pub tail_coeff: f64,
}

impl BarrierProfile {
    /// Tabulates `b + eps` from `r0` to `max(PROFILE_SPAN r0, r_tail)`, where
    /// `r_tail` is the radius at which the tail drops below `TAIL_FRACTION * cap`.
    pub fn tabulate(n: usize, r0: f64, eps: f64, cap: f64) -> Result<Self> {
        check_profile_args(n, r0, r0)?;
        if !(cap > 0.0) || !(eps >= 0.0) {
            return Err(Error::domain("barrier needs cap > 0 and eps >= 0"));
        }
        let tail_coeff = tail_coefficient(n, r0);
        let r_tail = (tail_coeff / (TAIL_FRACTION * cap)).powf(1.0 / (n as f64 - 2.5));
        let r_max = (PROFILE_SPAN * r0).max(r_tail);
        let r_grid = log_space(r0, r_max, PROFILE_GRID_POINTS);
        let b_values = r_grid
            .iter()
            .map(|&r| supersolution_height(n, r0, r).map(|b| b + eps))
            .collect::<Result<Vec<_>>>()?;
        Ok(BarrierProfile {
            n,
            r0,
            eps,
            cap,
            r_grid,
            b_values,
            tail_coeff,
        })
    }

    pub fn outer_radius(&self) -> f64 {
        *self.r_grid.last().unwrap()
    }

    /// `b_eps(r)`: the cap inside `r0`, cubic Hermite interpolation of
    /// `ln b` against `ln r` on the grid, and the power tail beyond it.
    pub fn eval(&self, r: f64) -> f64 {
        if r < self.r0 {
            return self.cap;
        }
        let nf = self.n as f64;
        if r >= self.outer_radius() {
            return self.tail_coeff * r.powf(-(nf - 2.5)) + self.eps;
        }
        let i = self.r_grid.partition_point(|&g| g <= r).clamp(1, self.r_grid.len() - 1) - 1;
        let (ra, rb) = (self.r_grid[i], self.r_grid[i + 1]);
        let (ba, bb) = (self.b_values[i] - self.eps, self.b_values[i + 1] - self.eps);
        // d ln b / d ln r = r b' / b
        let slope = |rr: f64, bb: f64| {
            let d = supersolution_profile_derivs(self.n, self.r0, rr).unwrap();
            rr * d.slope / bb
        };
        let (ya, yb) = (ba.ln(), bb.ln());
        let (ma, mb) = (slope(ra, ba), slope(rb, bb));
        let (la, lb) = (ra.ln(), rb.ln());
        let dl = lb - la;
        let t = (r.ln() - la) / dl;
        let (t2, t3) = (t * t, t * t * t);
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * ya
            + (t3 - 2.0 * t2 + t) * dl * ma
            + (-2.0 * t3 + 3.0 * t2) * yb
            + (t3 - t2) * dl * mb;
        y.exp() + self.eps
    }

    /// Closed-form `b'` and `b''` (the offset does not change them).
    pub fn derivs(&self, r: f64) -> Result<ProfileDerivs> {
        supersolution_profile_derivs(self.n, self.r0, r)
    }

    /// `256` log-spaced radii from `r0` to the outer grid radius.
    pub fn certificate_radii(&self) -> Vec<f64> {
        log_space(self.r0, self.outer_radius(), CERTIFICATE_POINTS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationEntry {
    pub radius: f64,
    pub flat_value: f64,
    pub identity_deviation: f64,
    pub curved_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub entries: Vec<VerificationEntry>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn max_identity_deviation(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.identity_deviation))
    }

    /// Largest curved operator value; `<= 0` means the certificate holds.
    pub fn worst_curved(&self) -> f64 {
        self.entries.iter().fold(f64::NEG_INFINITY, |m, e| m.max(e.curved_value))
    }
}

/// Evaluates the flat operator (and its deviation from `b'/(2r)`) and the
/// curved operator on the profile at each sample radius.
pub fn verify_static_supersolution<M: ConformalMetric + ?Sized>(
    metric: &M,
    profile: &BarrierProfile,
    sample_radii: &[f64],
) -> VerificationReport {
    let entries = sample_radii
        .iter()
        .map(|&r| match profile.derivs(r) {
            Ok(d) => {
                let flat = flat_radial_operator(profile.n, r, &d);
                let deviation = (flat - 0.5 * d.slope / r).abs();
                let curved = mcf_operator_radial(metric, r, d.slope, d.second).unwrap_or(f64::NAN);
                VerificationEntry {
                    radius: r,
                    flat_value: flat,
                    identity_deviation: deviation,
                    curved_value: curved,
                    pass: curved <= 0.0,
                }
            }
            Err(_) => VerificationEntry {
                radius: r,
                flat_value: f64::NAN,
                identity_deviation: f64::NAN,
                curved_value: f64::NAN,
                pass: false,
            },
        })
        .collect();
    VerificationReport { entries }
}

/// Finds `r0 >= r1_min` by doubling until `b(r0) >= h` and the curved
/// operator is non-positive on the certificate radii, then tabulates
/// `b_eps = b + eps` with cap `h`.
pub fn build_outer_barrier<M: ConformalMetric + ?Sized>(
    metric: &M,
    r1_min: f64,
    h: f64,
    eps: f64,
) -> Result<BarrierProfile> {
    let n = metric.dim();
    if n < 3 {
        return Err(Error::domain(format!("static barrier needs n >= 3, got {n}")));
    }
    if !(h > 0.0) || !(eps >= 0.0) {
        return Err(Error::domain(format!("barrier needs h > 0 and eps >= 0 (h = {h}, eps = {eps})")));
    }
    if !(r1_min > 0.0) || r1_min < metric.min_radius() {
        return Err(Error::domain(format!("minimum inner radius {r1_min} outside the metric domain")));
    }
    let mut r0 = r1_min;
    let mut residual = f64::NAN;
    for _ in 0..=MAX_DOUBLINGS {
        if supersolution_height(n, r0, r0)? >= h {
            let profile = BarrierProfile::tabulate(n, r0, eps, h)?;
            let report = verify_static_supersolution(metric, &profile, &profile.certificate_radii());
            if report.all_pass() {
                return Ok(profile);
            }
            residual = report.worst_curved();
        }
        r0 *= 2.0;
    }
    Err(Error::Construction {
        doublings: MAX_DOUBLINGS,
        r0: r0 / 2.0,
        residual,
    })
}

/// `b_hat(x, t) = sqrt(2n(t - t0) + |x - x0|^2) + alpha t` on
/// `B_rho(x0) x [0, -t0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatingBarrier {
    pub n: usize,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub alpha: f64,
    pub mu: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslatingValues {
    pub value: f64,
    pub dt: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
}

impl TranslatingBarrier {
    pub fn new(x0: Vec<f64>, t0: f64, alpha: f64, mu: f64) -> Result<Self> {
        let n = x0.len();
        if n == 0 {
            return Err(Error::domain("center must have at least one coordinate"));
        }
        if !(t0 < -1.0) || !(alpha >= 0.0) || !(mu > 0.0 && mu < 1.0) {
            return Err(Error::domain(format!(
                "translating barrier needs t0 < -1, alpha >= 0, 0 < mu < 1 (t0 = {t0}, alpha = {alpha}, mu = {mu})"
            )));
        }
        let rho = ((2.0 - mu) / mu * 4.0 * n as f64 * (-t0)).sqrt();
        Ok(TranslatingBarrier { n, x0, t0, alpha, mu, rho })
    }

    pub fn centered(n: usize, t0: f64, alpha: f64, mu: f64) -> Result<Self> {
        Self::new(vec![0.0; n], t0, alpha, mu)
    }

    pub fn time_window(&self) -> (f64, f64) {
        (0.0, -self.t0)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<TranslatingValues> {
        if x.len() != self.n {
            return Err(Error::domain("point dimension does not match the barrier"));
        }
        let y: Vec<f64> = x.iter().zip(&self.x0).map(|(a, b)| a - b).collect();
        let dist_sq: f64 = y.iter().map(|c| c * c).sum();
        if dist_sq.sqrt() > self.rho * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "|x - x0| = {} outside the ball of radius {}",
                dist_sq.sqrt(),
                self.rho
            )));
        }
        if !(t >= 0.0 && t <= -self.t0) {
            return Err(Error::domain(format!("time {t} outside [0, {}]", -self.t0)));
        }
        let nf = self.n as f64;
        let s = 2.0 * nf * (t - self.t0) + dist_sq;
        let root = s.sqrt();
        let grad: Vec<f64> = y.iter().map(|c| c / root).collect();
        let mut hess = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let d = if i == j { 1.0 } else { 0.0 };
                hess[(i, j)] = (d - y[i] * y[j] / s) / root;
            }
        }
        Ok(TranslatingValues {
            value: root + self.alpha * t,
            dt: nf / root + self.alpha,
            grad,
            hess,
        })
    }

    /// `d_t b_hat - g^ij(delta, grad b_hat) b_hat_ij`, which equals `alpha`.
    pub fn flat_residual(&self, x: &[f64], t: f64) -> Result<f64> {
        let vals = self.eval(x, t)?;
        let flat = RadialMetric::euclidean(self.n);
        Ok(vals.dt - mcf_operator_cartesian(&flat, x, &vals.grad, &vals.hess)?)
    }

    /// Same residual with the curved operator of `metric`.
    pub fn curved_residual<M: ConformalMetric + ?Sized>(&self, metric: &M, x: &[f64], t: f64) -> Result<f64> {
        let vals = self.eval(x, t)?;
        Ok(vals.dt - mcf_operator_cartesian(metric, x, &vals.grad, &vals.hess)?)
    }

    /// Deterministic sample of the ball: the center, and points at fractions
    /// of `rho` along `+-e_k`.
    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        let mut pts = vec![self.x0.clone()];
        for frac in [0.25, 0.5, 0.75, 1.0] {
            for k in 0..self.n {
                for sign in [-1.0, 1.0] {
                    let mut p = self.x0.clone();
                    p[k] += sign * frac * self.rho;
                    pts.push(p);
                }
            }
        }
        pts
    }

    pub fn sample_times(&self, count: usize) -> Vec<f64> {
        let end = -self.t0;
        (0..count).map(|i| end * i as f64 / (count - 1).max(1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslatingCertificate {
    pub rho: f64,
    /// Minimum of `1 - |grad b_hat|^2` over the ball and time window.
    pub min_spacelike_gap: f64,
    pub gap_bound: f64,
    /// Minimum radial slope on the sphere `|x - x0| = rho`.
    pub min_boundary_slope: f64,
    pub slope_bound: f64,
    pub pass: bool,
}

/// Checks `1 - |grad b_hat|^2 >= mu/4` on the ball and the boundary slope
/// `>= sqrt(1 - mu/2)` on its sphere, sampling radius and time on
/// grids that include the extreme corners.
pub fn translating_barrier_certificate(tb: &TranslatingBarrier) -> TranslatingCertificate {
    let nf = tb.n as f64;
    let times = tb.sample_times(65);
    let mut min_gap = f64::INFINITY;
    let mut min_slope = f64::INFINITY;
    for &t in &times {
        let a = 2.0 * nf * (t - tb.t0);
        for k in 0..=64 {
            let d = tb.rho * k as f64 / 64.0;
            min_gap = min_gap.min(a / (a + d * d));
        }
        min_slope = min_slope.min(tb.rho / (a + tb.rho * tb.rho).sqrt());
    }
    let gap_bound = tb.mu / 4.0;
    let slope_bound = (1.0 - tb.mu / 2.0).sqrt();
    TranslatingCertificate {
        rho: tb.rho,
        min_spacelike_gap: min_gap,
        gap_bound,
        min_boundary_slope: min_slope,
        slope_bound,
        pass: min_gap >= gap_bound && min_slope >= slope_bound * (1.0 - 1e-14),
    }
}

/// Distance `|x0|` (found by doubling from `rho + start`) beyond which the
/// curved residual of a barrier centered on the first axis is positive at
/// every sample point and time.
pub fn far_out_threshold<M: ConformalMetric + ?Sized>(
    metric: &M,
    t0: f64,
    alpha: f64,
    mu: f64,
    start: f64,
    max_doublings: usize,
) -> Result<f64> {
    let n = metric.dim();
    let rho = TranslatingBarrier::centered(n, t0, alpha, mu)?.rho;
    let mut offset = start.max(1.0);
    for _ in 0..=max_doublings {
        let mut x0 = vec![0.0; n];
        x0[0] = rho + offset;
        let tb = TranslatingBarrier::new(x0, t0, alpha, mu)?;
        let mut positive = true;
        'outer: for p in tb.sample_points() {
            for t in tb.sample_times(5) {
                if tb.curved_residual(metric, &p, t)? <= 0.0 {
                    positive = false;
                    break 'outer;
                }
            }
        }
        if positive {
            return Ok(rho + offset);
        }
        offset *= 2.0;
    }
    Err(Error::Numeric(format!(
        "curved translating residual not positive within {max_doublings} doublings"
    )))
}

/// `|grad b| / (r/r0)^-(n - 3/2)` and `b / (r0^(n-3/2) r^-(n-5/2))` over the
/// profile radii with `r >= 4 r0`: the empirical bracket constants of the
/// asymptotics.
pub fn asymptotic_brackets(profile: &BarrierProfile) -> Result<((f64, f64), (f64, f64))> {
    let nf = profile.n as f64;
    let mut grad = (f64::INFINITY, 0.0f64);
    let mut height = (f64::INFINITY, 0.0f64);
    for (&r, &b) in profile.r_grid.iter().zip(&profile.b_values) {
        if r < 4.0 * profile.r0 {
            continue;
        }
        let x = r / profile.r0;
        let d = profile.derivs(r)?;
        let g = d.slope.abs() / x.powf(-(nf - 1.5));
        let hgt = (b - profile.eps) / (profile.r0.powf(nf - 1.5) * r.powf(-(nf - 2.5)));
        grad = (grad.0.min(g), grad.1.max(g));
        height = (height.0.min(hgt), height.1.max(hgt));
    }
    Ok((grad, height))
}
