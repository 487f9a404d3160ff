//! Conformally flat, rotationally symmetric metrics `sigma = w(r)^2 delta` and
//! the pointwise quantities of a spacelike graph `u` over them.
//!
//! Everything here is a pure function of its inputs. The Cartesian evaluators
//! work on `R^n` with explicit index sums and exist mostly as an oracle for the
//! reduced radial operator that the solver uses.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradients with `|grad u|^2_sigma >= 1 - TOL_SPACELIKE` are rejected.
pub const TOL_SPACELIKE: f64 = 1e-10;

/// Smallest radius at which a non-Euclidean conformal factor is evaluated.
pub const R_MIN: f64 = 1e-6;

/// Spacing used when differentiating Christoffel symbols for the Ricci tensor.
pub const RICCI_FD_STEP: f64 = 1e-4;

/// A rotationally symmetric metric `w(r)^2 delta_ij` on (part of) `R^n`.
pub trait ConformalMetric: Send + Sync {
    fn dim(&self) -> usize;

    /// Conformal factor `w` and its radial derivative `w'`.
    fn factor(&self, r: f64) -> (f64, f64);

    /// Radii below this are outside the working domain. Zero means the metric
    /// is smooth through the origin.
    fn min_radius(&self) -> f64;

    fn is_flat(&self) -> bool {
        false
    }
}

impl<M: ConformalMetric + ?Sized> ConformalMetric for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn factor(&self, r: f64) -> (f64, f64) {
        (**self).factor(r)
    }
    fn min_radius(&self) -> f64 {
        (**self).min_radius()
    }
    fn is_flat(&self) -> bool {
        (**self).is_flat()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFamily {
    Euclidean,
    ConformalPower,
}

/// `w(r) = 1 + a r^(-tau)`, so `omega(r) = a r^(-tau)` controls both
/// `|sigma - delta|` and `r |d sigma|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialMetric {
    pub n: usize,
    pub family: MetricFamily,
    #[serde(default)]
    pub a: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1.0
}

impl RadialMetric {
    pub fn euclidean(n: usize) -> Self {
        RadialMetric {
            n,
            family: MetricFamily::Euclidean,
            a: 0.0,
            tau: 1.0,
        }
    }

    pub fn conformal_power(n: usize, a: f64, tau: f64) -> Result<Self> {
        let m = RadialMetric {
            n,
            family: MetricFamily::ConformalPower,
            a,
            tau,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        match self.family {
            MetricFamily::Euclidean if self.a != 0.0 => {
                Err(Error::domain("euclidean metric must have a = 0"))
            }
            MetricFamily::ConformalPower if !(self.a > 0.0 && self.a.is_finite()) => Err(
                Error::domain(format!("conformal_power needs finite a > 0, got {}", self.a)),
            ),
            MetricFamily::ConformalPower if !(self.tau > 0.0 && self.tau.is_finite()) => Err(
                Error::domain(format!("conformal_power needs finite tau > 0, got {}", self.tau)),
            ),
            _ => Ok(()),
        }
    }

    /// Decay profile `omega(r) = a r^(-tau)`.
    pub fn omega(&self, r: f64) -> f64 {
        match self.family {
            MetricFamily::Euclidean => 0.0,
            MetricFamily::ConformalPower => self.a * r.powf(-self.tau),
        }
    }

    /// Same metric in another dimension.
    pub fn with_dim(&self, n: usize) -> Self {
        RadialMetric { n, ..*self }
    }
}

impl ConformalMetric for RadialMetric {
    fn dim(&self) -> usize {
        self.n
    }

    fn factor(&self, r: f64) -> (f64, f64) {
        match self.family {
            MetricFamily::Euclidean => (1.0, 0.0),
            MetricFamily::ConformalPower => {
                let p = self.a * r.powf(-self.tau);
                (1.0 + p, -self.tau * p / r)
            }
        }
    }

    fn min_radius(&self) -> f64 {
        match self.family {
            MetricFamily::Euclidean => 0.0,
            MetricFamily::ConformalPower => R_MIN,
        }
    }

    fn is_flat(&self) -> bool {
        self.family == MetricFamily::Euclidean
    }
}

/// Christoffel symbols `Gamma^k_ij`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Christoffel {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    #[inline]
    fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        self.data[(k * self.n + i) * self.n + j] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricAt {
    pub sigma: DMatrix<f64>,
    pub sigma_inv: DMatrix<f64>,
    pub christoffel: Christoffel,
}

fn check_point<M: ConformalMetric + ?Sized>(metric: &M, x: &[f64]) -> Result<f64> {
    if x.len() != metric.dim() {
        return Err(Error::domain(format!(
            "point has {} components, metric dimension is {}",
            x.len(),
            metric.dim()
        )));
    }
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain("non-finite point"));
    }
    let r = norm(x);
    check_radius(metric, r)?;
    Ok(r)
}

pub(crate) fn check_radius<M: ConformalMetric + ?Sized>(metric: &M, r: f64) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::domain("non-finite radius"));
    }
    let r_min = metric.min_radius();
    if !metric.is_flat() && r_min > 0.0 && r < r_min {
        return Err(Error::domain(format!(
            "radius {r} below the metric's working domain (r_min = {r_min})"
        )));
    }
    Ok(())
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `d(ln w)/dx_j`, zero at the origin and for flat metrics.
fn log_factor_gradient<M: ConformalMetric + ?Sized>(metric: &M, x: &[f64], r: f64) -> Vec<f64> {
    if metric.is_flat() || r == 0.0 {
        return vec![0.0; x.len()];
    }
    let (w, dw) = metric.factor(r);
    let radial = dw / w;
    x.iter().map(|xj| radial * xj / r).collect()
}

fn christoffel_unchecked<M: ConformalMetric + ?Sized>(metric: &M, x: &[f64], r: f64) -> Christoffel {
    let n = x.len();
    let mut gamma = Christoffel::zeros(n);
    if metric.is_flat() {
        return gamma;
    }
    let f = log_factor_gradient(metric, x, r);
    // Gamma^k_ij = delta^k_i f_j + delta^k_j f_i - delta_ij f_k for sigma = e^{2f} delta
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                if k == i {
                    v += f[j];
                }
                if k == j {
                    v += f[i];
                }
                if i == j {
                    v -= f[k];
                }
                gamma.set(k, i, j, v);
            }
        }
    }
    gamma
}

/// `sigma`, its inverse and the Christoffel symbols at `x`.
pub fn metric_eval<M: ConformalMetric + ?Sized>(metric: &M, x: &[f64]) -> Result<MetricAt> {
    let r = check_point(metric, x)?;
    let n = x.len();
    let (w, _) = if metric.is_flat() { (1.0, 0.0) } else { metric.factor(r) };
    let w2 = w * w;
    Ok(MetricAt {
        sigma: DMatrix::identity(n, n) * w2,
        sigma_inv: DMatrix::identity(n, n) / w2,
        christoffel: christoffel_unchecked(metric, x, r),
    })
}

/// Ricci tensor of `sigma` at `x`, from second-order central differences of
/// the Christoffel symbols with spacing [`RICCI_FD_STEP`].
pub fn ricci_eval<M: ConformalMetric + ?Sized>(metric: &M, x: &[f64]) -> Result<DMatrix<f64>> {
    let r = check_point(metric, x)?;
    let n = x.len();
    if metric.is_flat() {
        return Ok(DMatrix::zeros(n, n));
    }
    let h = RICCI_FD_STEP;
    if r - h < metric.min_radius() {
        return Err(Error::domain(format!(
            "radius {r} too close to r_min for the Ricci stencil"
        )));
    }
    let gamma = christoffel_unchecked(metric, x, r);
    // d_gamma[m] = d/dx_m Gamma
    let d_gamma: Vec<Christoffel> = (0..n)
        .map(|m| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[m] += h;
            xm[m] -= h;
            let gp = christoffel_unchecked(metric, &xp, norm(&xp));
            let gm = christoffel_unchecked(metric, &xm, norm(&xm));
            let mut d = Christoffel::zeros(n);
            for (idx, v) in d.data.iter_mut().enumerate() {
                *v = (gp.data[idx] - gm.data[idx]) / (2.0 * h);
            }
            d
        })
        .collect();

    let mut ric = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                v += d_gamma[k].get(k, i, j) - d_gamma[j].get(k, i, k);
                for l in 0..n {
                    v += gamma.get(k, k, l) * gamma.get(l, i, j)
                        - gamma.get(k, j, l) * gamma.get(l, i, k);
                }
            }
            ric[(i, j)] = v;
        }
    }
    // the stencil is symmetric only up to rounding
    let sym = (&ric + ric.transpose()) * 0.5;
    Ok(sym)
}

/// Smallest `C` with `|Ric(w, w)| <= C |w|^2_sigma` over `samples`
/// log-spaced radii in `[r_lo, r_hi]`.
pub fn ricci_bound<M: ConformalMetric + ?Sized>(
    metric: &M,
    r_lo: f64,
    r_hi: f64,
    samples: usize,
) -> Result<f64> {
    if !(r_lo > 0.0 && r_hi > r_lo) || samples < 2 {
        return Err(Error::domain("ricci_bound needs 0 < r_lo < r_hi and two samples"));
    }
    let n = metric.dim();
    let mut c: f64 = 0.0;
    for r in log_space(r_lo, r_hi, samples) {
        let mut x = vec![0.0; n];
        x[0] = r;
        let ric = ricci_eval(metric, &x)?;
        let (w, _) = metric.factor(r);
        // sigma = w^2 I, so the sigma-relative eigenvalues are those of Ric / w^2
        let eig = (ric / (w * w)).symmetric_eigen();
        c = eig.eigenvalues.iter().fold(c, |m, e| m.max(e.abs()));
    }
    Ok(c)
}

pub(crate) fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Induced quantities of the graph of `u` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphQuantities {
    /// Tilt factor `1 / sqrt(1 - |grad u|^2_sigma)`.
    pub v: f64,
    /// `g_ij = sigma_ij - u_i u_j`.
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub nu_spatial: Vec<f64>,
    pub nu_time: f64,
}

impl GraphQuantities {
    /// `g^ij u_i u_j`, which equals `v^2 - 1`.
    pub fn grad_norm_sq_induced(&self, grad_u: &[f64]) -> f64 {
        quadratic_form(&self.g_inv, grad_u)
    }
}

pub(crate) fn quadratic_form(m: &DMatrix<f64>, w: &[f64]) -> f64 {
    let n = w.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += m[(i, j)] * w[i] * w[j];
        }
    }
    s
}

/// `g^ij(sigma, grad u)` together with `|grad u|^2_sigma`.
fn induced_inverse(sigma_inv: &DMatrix<f64>, grad_u: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    let n = grad_u.len();
    let up: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|k| sigma_inv[(i, k)] * grad_u[k]).sum())
        .collect();
    let s: f64 = up.iter().zip(grad_u).map(|(a, b)| a * b).sum();
    if !s.is_finite() || s >= 1.0 - TOL_SPACELIKE {
        return Err(Error::SpacelikeViolation { grad_sq: s, at: None });
    }
    let mut g_inv = sigma_inv.clone();
    let denom = 1.0 - s;
    for i in 0..n {
        for j in 0..n {
            g_inv[(i, j)] += up[i] * up[j] / denom;
        }
    }
    Ok((g_inv, s))
}

pub fn graph_quantities<M: ConformalMetric + ?Sized>(
    metric: &M,
    x: &[f64],
    grad_u: &[f64],
) -> Result<GraphQuantities> {
    if grad_u.len() != x.len() {
        return Err(Error::domain("gradient and point dimensions differ"));
    }
    let at = metric_eval(metric, x)?;
    let (g_inv, s) = induced_inverse(&at.sigma_inv, grad_u)?;
    let n = x.len();
    let mut g = at.sigma.clone();
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] -= grad_u[i] * grad_u[j];
        }
    }
    let v = 1.0 / (1.0 - s).sqrt();
    let nu_spatial = (0..n)
        .map(|i| v * (0..n).map(|k| at.sigma_inv[(i, k)] * grad_u[k]).sum::<f64>())
        .collect();
    Ok(GraphQuantities {
        v,
        g,
        g_inv,
        nu_spatial,
        nu_time: v,
    })
}

/// `g^ij(sigma, grad u) (u_ij - Gamma^k_ij u_k)` at a point of `R^n`.
pub fn mcf_operator_cartesian<M: ConformalMetric + ?Sized>(
    metric: &M,
    x: &[f64],
    grad_u: &[f64],
    hess_u: &DMatrix<f64>,
) -> Result<f64> {
    let n = x.len();
    if grad_u.len() != n || hess_u.nrows() != n || hess_u.ncols() != n {
        return Err(Error::domain("gradient/Hessian dimensions do not match the point"));
    }
    let scale = hess_u.amax().max(1.0);
    if (hess_u - hess_u.transpose()).amax() > 1e-12 * scale {
        return Err(Error::domain("Hessian is not symmetric"));
    }
    let at = metric_eval(metric, x)?;
    let (g_inv, _) = induced_inverse(&at.sigma_inv, grad_u)?;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut cov = hess_u[(i, j)];
            for (k, uk) in grad_u.iter().enumerate() {
                cov -= at.christoffel.get(k, i, j) * uk;
            }
            total += g_inv[(i, j)] * cov;
        }
    }
    Ok(total)
}

/// Reduced operator for `u(x) = U(|x|)`:
/// `w^-2 [ (U'' - U' F) / (1 - p^2) + (n - 1) U' (1/r + F) ]`
/// with `F = w'/w` and `p = U'/w`. The flat case is
/// `U''/(1 - U'^2) + (n - 1) U'/r`.
pub fn mcf_operator_radial<M: ConformalMetric + ?Sized>(
    metric: &M,
    r: f64,
    du: f64,
    d2u: f64,
) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::Axis);
    }
    if !(r > 0.0) {
        return Err(Error::domain(format!("radius must be positive, got {r}")));
    }
    check_radius(metric, r)?;
    let (w, dw) = metric.factor(r);
    radial_operator_from_factor(metric.dim(), r, w, dw, du, d2u)
        .map_err(|e| with_location(e, r))
}

#[inline]
pub(crate) fn radial_operator_from_factor(
    n: usize,
    r: f64,
    w: f64,
    dw: f64,
    du: f64,
    d2u: f64,
) -> Result<f64> {
    let p = du / w;
    let p2 = p * p;
    if !p2.is_finite() || p2 >= 1.0 - TOL_SPACELIKE {
        return Err(Error::SpacelikeViolation { grad_sq: p2, at: Some(r) });
    }
    let f = dw / w;
    let inv_w2 = 1.0 / (w * w);
    Ok(inv_w2 * ((d2u - du * f) / (1.0 - p2) + (n as f64 - 1.0) * du * (1.0 / r + f)))
}

/// Limit of the radial operator at the axis for an even profile:
/// `n U''(0) / w(0)^2`.
pub fn mcf_operator_axis<M: ConformalMetric + ?Sized>(metric: &M, d2u: f64) -> Result<f64> {
    if !metric.is_flat() && metric.min_radius() > 0.0 {
        return Err(Error::domain("metric is singular at the origin; no axis rule"));
    }
    let (w, _) = if metric.is_flat() { (1.0, 0.0) } else { metric.factor(0.0) };
    Ok(metric.dim() as f64 * d2u / (w * w))
}

fn with_location(e: Error, r: f64) -> Error {
    match e {
        Error::SpacelikeViolation { grad_sq, .. } => Error::SpacelikeViolation { grad_sq, at: Some(r) },
        other => other,
    }
}

/// Cartesian gradient and Hessian of `u(x) = U(|x|)` from `U'`, `U''`.
pub fn radial_extension(x: &[f64], du: f64, d2u: f64) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.len();
    let r = norm(x);
    let grad = x.iter().map(|xi| du * xi / r).collect();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let xx = x[i] * x[j] / (r * r);
            let delta = if i == j { 1.0 } else { 0.0 };
            hess[(i, j)] = d2u * xx + du / r * (delta - xx);
        }
    }
    (grad, hess)
}
