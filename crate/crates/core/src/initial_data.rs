//! Initial data: families of test profiles, the cutoff interpolation between
//! `(sigma, u0)` and `(delta, 0)`, and the decay radius `r1(eps)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BoundaryCondition, Field, FieldKind};
use crate::geometry::{ConformalMetric, RadialMetric};

/// Safety factor applied to the scaling constant.
pub const LAMBDA_SAFETY: f64 = 1.05;

fn check_cutoff(s_lo: f64, s_hi: f64) -> Result<()> {
    if !(s_lo < s_hi) {
        return Err(Error::domain(format!("cutoff needs s_lo < s_hi, got {s_lo} and {s_hi}")));
    }
    Ok(())
}

/// `1 - (6s^5 - 15s^4 + 10s^3)` with `s = (x - s_lo) / (s_hi - s_lo)`,
/// clamped to 1 below `s_lo` and 0 above `s_hi`.
pub fn smooth_cutoff(s_lo: f64, s_hi: f64, x: f64) -> Result<f64> {
    check_cutoff(s_lo, s_hi)?;
    Ok(cutoff_unchecked(s_lo, s_hi, x).0)
}

/// Derivative of [`smooth_cutoff`] in `x`.
pub fn smooth_cutoff_derivative(s_lo: f64, s_hi: f64, x: f64) -> Result<f64> {
    check_cutoff(s_lo, s_hi)?;
    Ok(cutoff_unchecked(s_lo, s_hi, x).1)
}

fn cutoff_unchecked(s_lo: f64, s_hi: f64, x: f64) -> (f64, f64) {
    if x <= s_lo {
        return (1.0, 0.0);
    }
    if x >= s_hi {
        return (0.0, 0.0);
    }
    let width = s_hi - s_lo;
    let s = (x - s_lo) / width;
    let s3 = s * s * s;
    let value = 1.0 - s3 * (10.0 - 15.0 * s + 6.0 * s * s);
    let slope = -30.0 * s * s * (1.0 - s) * (1.0 - s) / width;
    (value, slope)
}

/// Test profiles, evaluated at `|x - center|` (line) or `r` (radial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    /// `height` on `|x - center| <= plateau`, falling to zero over `ramp`.
    Bump {
        height: f64,
        #[serde(default)]
        center: f64,
        plateau: f64,
        ramp: f64,
    },
    /// `height * exp(-((x - center) / scale)^2)`.
    Gaussian {
        height: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Piecewise linear through the given samples, zero outside them.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl InitialData {
    /// Height 0.5, plateau radius 1, ramp width 2: Lipschitz constant 0.46875.
    pub fn standard_bump() -> Self {
        InitialData::Bump {
            height: 0.5,
            center: 0.0,
            plateau: 1.0,
            ramp: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InitialData::Zero => Ok(()),
            InitialData::Bump { height, center, plateau, ramp } => {
                if !(height.is_finite() && center.is_finite() && *plateau >= 0.0 && *ramp > 0.0) {
                    return Err(Error::domain("bump needs finite height, plateau >= 0 and ramp > 0"));
                }
                Ok(())
            }
            InitialData::Gaussian { height, center, scale } => {
                if !(height.is_finite() && center.is_finite() && *scale > 0.0) {
                    return Err(Error::domain("gaussian needs finite height and scale > 0"));
                }
                Ok(())
            }
            InitialData::Tabulated { nodes, values } => {
                if nodes.len() < 2 || nodes.len() != values.len() {
                    return Err(Error::domain("tabulated data needs >= 2 matching nodes and values"));
                }
                if nodes.windows(2).any(|p| !(p[1] > p[0])) {
                    return Err(Error::domain("tabulated nodes must be strictly increasing"));
                }
                if values.iter().chain(nodes).any(|v| !v.is_finite()) {
                    return Err(Error::domain("tabulated data must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialData::Zero => 0.0,
            InitialData::Bump { height, center, plateau, ramp } => {
                height * cutoff_unchecked(*plateau, plateau + ramp, (x - center).abs()).0
            }
            InitialData::Gaussian { height, center, scale } => {
                let s = (x - center) / scale;
                height * (-s * s).exp()
            }
            InitialData::Tabulated { nodes, values } => {
                let last = nodes.len() - 1;
                if x < nodes[0] || x > nodes[last] {
                    return 0.0;
                }
                let i = nodes.partition_point(|&g| g <= x).clamp(1, last) - 1;
                let t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
                (1.0 - t) * values[i] + t * values[i + 1]
            }
        }
    }

    /// Analytic Lipschitz constant in the flat metric.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            InitialData::Zero => 0.0,
            InitialData::Bump { height, ramp, .. } => height.abs() * 1.875 / ramp,
            InitialData::Gaussian { height, scale, .. } => {
                height.abs() * (2.0 / std::f64::consts::E).sqrt() / scale
            }
            InitialData::Tabulated { nodes, values } => nodes
                .windows(2)
                .zip(values.windows(2))
                .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Radius outside which the data vanish identically, if there is one.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            InitialData::Zero => Some(0.0),
            InitialData::Bump { center, plateau, ramp, .. } => Some(center.abs() + plateau + ramp),
            InitialData::Gaussian { .. } => None,
            InitialData::Tabulated { nodes, .. } => {
                Some(nodes[0].abs().max(nodes[nodes.len() - 1].abs()))
            }
        }
    }

    pub fn sample(
        &self,
        kind: FieldKind,
        lo: f64,
        hi: f64,
        h: f64,
        bc: [BoundaryCondition; 2],
    ) -> Result<Field> {
        self.validate()?;
        let mut f = Field::uniform(kind, lo, hi, h, bc, |x| self.eval(x))?;
        for (end, idx) in [(0, 0), (1, f.len() - 1)] {
            if f.bc[end] == BoundaryCondition::DirichletZero {
                f.values[idx] = 0.0;
            }
        }
        Ok(f)
    }

    pub fn sample_line(&self, lo: f64, hi: f64, h: f64) -> Result<Field> {
        use BoundaryCondition::DirichletZero;
        self.sample(FieldKind::Line, lo, hi, h, [DirichletZero, DirichletZero])
    }

    pub fn sample_radial(&self, lo: f64, hi: f64, h: f64) -> Result<Field> {
        let inner = if lo == 0.0 {
            BoundaryCondition::AxisSymmetry
        } else {
            BoundaryCondition::AsymptoticDecay
        };
        self.sample(FieldKind::Radial, lo, hi, h, [inner, BoundaryCondition::DirichletZero])
    }
}

/// `sigma_tilde = W^2 delta` with
/// `W^2 = psi3 (psi1 + (1 - psi1) lambda) w^2 + (1 - psi3)`, where `psi_k`
/// falls from 1 to 0 across `[S_k, S_{k+1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedMetric {
    pub base: RadialMetric,
    pub lambda: f64,
    pub radii: [f64; 4],
}

impl InterpolatedMetric {
    fn cutoffs(&self, r: f64) -> [(f64, f64); 3] {
        let s = &self.radii;
        [
            cutoff_unchecked(s[0], s[1], r),
            cutoff_unchecked(s[1], s[2], r),
            cutoff_unchecked(s[2], s[3], r),
        ]
    }

    /// `psi2`, the cutoff applied to the data.
    pub fn data_cutoff(&self, r: f64) -> (f64, f64) {
        self.cutoffs(r)[1]
    }
}

impl ConformalMetric for InterpolatedMetric {
    fn dim(&self) -> usize {
        self.base.n
    }

    fn factor(&self, r: f64) -> (f64, f64) {
        if r >= self.radii[3] {
            return (1.0, 0.0);
        }
        let [(p1, dp1), _, (p3, dp3)] = self.cutoffs(r);
        let (w, dw) = self.base.factor(r);
        let blend = p1 + (1.0 - p1) * self.lambda;
        let w2 = w * w;
        let big_w2 = p3 * blend * w2 + (1.0 - p3);
        let d_big_w2 = dp3 * blend * w2 + p3 * dp1 * (1.0 - self.lambda) * w2 + p3 * blend * 2.0 * w * dw - dp3;
        let big_w = big_w2.sqrt();
        (big_w, d_big_w2 / (2.0 * big_w))
    }

    fn min_radius(&self) -> f64 {
        self.base.min_radius()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationResult {
    pub sigma_tilde: InterpolatedMetric,
    pub u_tilde: Field,
    pub lambda: f64,
    /// `S1..S4`.
    pub radii: [f64; 4],
    pub eps: f64,
    /// Discrete `max |grad u_tilde|_{sigma_tilde}` that was verified.
    pub max_slope: f64,
}

/// Blends `(sigma, u0)` into `(delta, 0)` across `[R1, R2]`, split in equal
/// thirds. The scaling constant is
/// `max(1, 2 sup(u0^2 |grad psi2|^2 + psi2^2 |grad u0|^2) / (1 - eps)^2)`
/// over `S2 <= r <= S3`, times [`LAMBDA_SAFETY`].
pub fn interpolate_initial_data(
    metric: &RadialMetric,
    u0: &Field,
    r1: f64,
    r2: f64,
    eps: f64,
) -> Result<InterpolationResult> {
    metric.validate()?;
    u0.validate()?;
    if u0.kind != FieldKind::Radial {
        return Err(Error::domain("interpolation needs a radial field"));
    }
    if !(r1 > 0.0 && r2 > r1 && r1 >= metric.min_radius()) {
        return Err(Error::domain(format!("need 0 < R1 < R2, got R1 = {r1}, R2 = {r2}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("margin must lie in (0, 1), got {eps}")));
    }
    let third = (r2 - r1) / 3.0;
    let radii = [r1, r1 + third, r1 + 2.0 * third, r2];
    let du = u0.derivative();
    let w = u0.conformal_factors(metric);
    let mut sup: f64 = 0.0;
    for i in 0..u0.len() {
        let r = u0.nodes[i];
        if r < radii[1] || r > radii[2] {
            continue;
        }
        let (p2, dp2) = cutoff_unchecked(radii[1], radii[2], r);
        let u = u0.values[i];
        sup = sup.max((u * u * dp2 * dp2 + p2 * p2 * du[i] * du[i]) / (w[i] * w[i]));
    }
    let raw = if sup > 0.0 {
        (2.0 * sup / ((1.0 - eps) * (1.0 - eps))).max(1.0)
    } else {
        1.0
    };
    let lambda = raw * LAMBDA_SAFETY;
    let sigma_tilde = InterpolatedMetric { base: *metric, lambda, radii };
    let values = u0
        .nodes
        .iter()
        .zip(&u0.values)
        .map(|(&r, &u)| sigma_tilde.data_cutoff(r).0 * u)
        .collect();
    let u_tilde = u0.with_values(values);
    let bound = 1.0 - eps;
    let slopes = u_tilde.gradient_norms(&sigma_tilde);
    let (worst_i, max_slope) = slopes
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
    if max_slope > bound {
        return Err(Error::Interpolation {
            slope: max_slope,
            bound,
            r: u_tilde.nodes[worst_i],
        });
    }
    Ok(InterpolationResult {
        sigma_tilde,
        u_tilde,
        lambda,
        radii,
        eps,
        max_slope,
    })
}

/// `max |grad u|_sigma` over the nodes, from [`Field::derivative`].
pub fn lipschitz_constant<M: ConformalMetric + ?Sized>(metric: &M, field: &Field) -> f64 {
    field.gradient_norms(metric).into_iter().fold(0.0, f64::max)
}

/// Smallest grid radius `|x|` beyond which `|u0| <= eps` at every node.
/// Returns the innermost `|x|` when no node exceeds `eps`.
pub fn decay_radius(u0: &Field, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    let last = u0.len() - 1;
    let outer_ends: &[usize] = match u0.kind {
        FieldKind::Line => &[0, last],
        FieldKind::Radial => &[last],
    };
    for &i in outer_ends {
        if u0.values[i].abs() > eps {
            return Err(Error::domain(format!(
                "|u0| = {} exceeds eps = {eps} at the outer node {}",
                u0.values[i].abs(),
                u0.nodes[i]
            )));
        }
    }
    let radius = |x: f64| x.abs();
    let exceed = u0
        .nodes
        .iter()
        .zip(&u0.values)
        .filter(|(_, v)| v.abs() > eps)
        .map(|(&x, _)| radius(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let candidates = u0.nodes.iter().map(|&x| radius(x)).filter(|&r| r > exceed);
    Ok(candidates.fold(f64::INFINITY, f64::min))
}
