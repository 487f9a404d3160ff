//! Grid functions on a uniform line or radial grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConformalMetric, TOL_SPACELIKE};

/// Relative tolerance on the uniform spacing.
pub const SPACING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Line,
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Value held at zero.
    DirichletZero,
    /// Value held at its initial value.
    Pinned,
    /// Homogeneous Neumann end (even reflection through a ghost node).
    AsymptoticDecay,
    /// `u'(0) = 0` at the origin of a radial grid.
    AxisSymmetry,
}

impl BoundaryCondition {
    pub fn is_reflective(self) -> bool {
        matches!(self, BoundaryCondition::AsymptoticDecay | BoundaryCondition::AxisSymmetry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub kind: FieldKind,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub h: f64,
    /// Conditions at the first and last node.
    pub bc: [BoundaryCondition; 2],
}

impl Field {
    pub fn new(
        kind: FieldKind,
        nodes: Vec<f64>,
        values: Vec<f64>,
        bc: [BoundaryCondition; 2],
    ) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::domain(format!("a field needs at least 3 nodes, got {}", nodes.len())));
        }
        let h = (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64;
        let f = Field { kind, nodes, values, h, bc };
        f.validate()?;
        Ok(f)
    }

    /// Samples `f` on `lo, lo + h, ..., hi`. `hi - lo` must be a whole
    /// number of steps.
    pub fn uniform(
        kind: FieldKind,
        lo: f64,
        hi: f64,
        h: f64,
        bc: [BoundaryCondition; 2],
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if !(h > 0.0) || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::domain(format!("bad grid [{lo}, {hi}] with h = {h}")));
        }
        let steps = ((hi - lo) / h).round();
        if ((lo + steps * h) - hi).abs() > 1e-9 * h.max(hi.abs()) {
            return Err(Error::domain(format!("[{lo}, {hi}] is not a whole number of steps of {h}")));
        }
        let count = steps as usize + 1;
        let nodes: Vec<f64> = (0..count)
            .map(|i| if i + 1 == count { hi } else { lo + i as f64 * h })
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        let field = Field { kind, nodes, values, h, bc };
        field.validate()?;
        Ok(field)
    }

    /// Line grid with zero Dirichlet data at both ends.
    pub fn line(lo: f64, hi: f64, h: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        use BoundaryCondition::DirichletZero;
        Field::uniform(FieldKind::Line, lo, hi, h, [DirichletZero, DirichletZero], f)
    }

    /// Radial grid with the axis rule at `r = 0` (or a reflecting inner end
    /// when `lo > 0`) and zero Dirichlet data at `hi`.
    pub fn radial(lo: f64, hi: f64, h: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let inner = if lo == 0.0 {
            BoundaryCondition::AxisSymmetry
        } else {
            BoundaryCondition::AsymptoticDecay
        };
        Field::uniform(FieldKind::Radial, lo, hi, h, [inner, BoundaryCondition::DirichletZero], f)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n < 3 || self.values.len() != n {
            return Err(Error::domain(format!(
                "field has {} nodes and {} values",
                n,
                self.values.len()
            )));
        }
        if !(self.h > 0.0) {
            return Err(Error::domain("grid spacing must be positive"));
        }
        for (i, pair) in self.nodes.windows(2).enumerate() {
            let d = pair[1] - pair[0];
            let scale = self.h.max(pair[1].abs());
            if (d - self.h).abs() > SPACING_TOL * scale {
                return Err(Error::domain(format!("non-uniform spacing at node {i}: {d} vs {}", self.h)));
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite field value"));
        }
        if self.kind == FieldKind::Radial && self.nodes[0] < 0.0 {
            return Err(Error::domain("radial nodes must be nonnegative"));
        }
        let axis_ok = self.kind == FieldKind::Radial && self.nodes[0] == 0.0;
        if self.bc[1] == BoundaryCondition::AxisSymmetry
            || (self.bc[0] == BoundaryCondition::AxisSymmetry && !axis_ok)
        {
            return Err(Error::domain("axis_symmetry is only allowed at r = 0 of a radial grid"));
        }
        if axis_ok && self.bc[0] != BoundaryCondition::AxisSymmetry {
            return Err(Error::domain("a radial grid starting at r = 0 needs axis_symmetry there"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Field {
        Field { values, ..self.clone() }
    }

    /// `w` at every node; line grids and flat metrics give 1.
    pub fn conformal_factors<M: ConformalMetric + ?Sized>(&self, metric: &M) -> Vec<f64> {
        if self.kind == FieldKind::Line || metric.is_flat() {
            return vec![1.0; self.len()];
        }
        self.nodes.iter().map(|&r| metric.factor(r).0).collect()
    }

    /// `u'` at every node: central differences inside, zero at reflecting
    /// ends and second-order one-sided differences at Dirichlet or pinned ends.
    pub fn derivative(&self) -> Vec<f64> {
        let u = &self.values;
        let n = u.len();
        let h = self.h;
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            d[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
        }
        if !self.bc[0].is_reflective() {
            d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        }
        if !self.bc[1].is_reflective() {
            d[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
        }
        d
    }

    /// `|grad u|_sigma = |u'| / w` at every node.
    pub fn gradient_norms<M: ConformalMetric + ?Sized>(&self, metric: &M) -> Vec<f64> {
        self.derivative()
            .iter()
            .zip(self.conformal_factors(metric))
            .map(|(d, w)| d.abs() / w)
            .collect()
    }

    /// Largest node-to-node slope in `sigma`, with `w` taken at the midpoint.
    pub fn max_edge_slope<M: ConformalMetric + ?Sized>(&self, metric: &M) -> (f64, f64) {
        let curved = self.kind == FieldKind::Radial && !metric.is_flat();
        let mut worst = (0.0, self.nodes[0]);
        for i in 0..self.len() - 1 {
            let mid = 0.5 * (self.nodes[i] + self.nodes[i + 1]);
            let w = if curved { metric.factor(mid).0 } else { 1.0 };
            let s = (self.values[i + 1] - self.values[i]).abs() / (self.h * w);
            if s > worst.0 || s.is_nan() {
                worst = (s, mid);
            }
        }
        worst
    }

    /// Errors unless every node-to-node slope is below `1 - TOL_SPACELIKE`.
    pub fn check_spacelike<M: ConformalMetric + ?Sized>(&self, metric: &M) -> Result<()> {
        let (s, at) = self.max_edge_slope(metric);
        if !(s < 1.0 - TOL_SPACELIKE) {
            return Err(Error::SpacelikeViolation { grad_sq: s * s, at: Some(at) });
        }
        Ok(())
    }

    /// Linear interpolation of the values at `x` (clamped to the grid).
    pub fn interpolate(&self, x: f64) -> f64 {
        let last = self.len() - 1;
        let s = ((x - self.nodes[0]) / self.h).clamp(0.0, last as f64);
        let i = (s.floor() as usize).min(last - 1);
        let t = s - i as f64;
        (1.0 - t) * self.values[i] + t * self.values[i + 1]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RadialMetric;

    #[test]
    fn uniform_grid_hits_both_ends() {
        let f = Field::line(-20.0, 20.0, 0.02, |x| x).unwrap();
        assert_eq!(f.len(), 2001);
        assert_eq!(f.nodes[0], -20.0);
        assert_eq!(f.nodes[2000], 20.0);
        assert!(Field::line(0.0, 1.0, 0.3, |x| x).is_err());
    }

    #[test]
    fn axis_rules() {
        let f = Field::radial(0.0, 4.0, 0.5, |_| 0.0).unwrap();
        assert_eq!(f.bc[0], BoundaryCondition::AxisSymmetry);
        let g = Field::radial(1.0, 4.0, 0.5, |_| 0.0).unwrap();
        assert_eq!(g.bc[0], BoundaryCondition::AsymptoticDecay);
        let mut bad = g.clone();
        bad.bc[0] = BoundaryCondition::AxisSymmetry;
        assert!(bad.validate().is_err());
        let mut bad = f.clone();
        bad.kind = FieldKind::Line;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn derivative_is_exact_for_quadratics() {
        let f = Field::line(0.0, 1.0, 0.1, |x| 3.0 * x * x - x).unwrap();
        for (x, d) in f.nodes.iter().zip(f.derivative()) {
            assert!((d - (6.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_slope_and_spacelike_check() {
        let flat = RadialMetric::euclidean(1);
        let f = Field::line(0.0, 1.0, 0.25, |x| 0.5 * x).unwrap();
        assert!((f.max_edge_slope(&flat).0 - 0.5).abs() < 1e-15);
        assert!(f.check_spacelike(&flat).is_ok());
        let g = f.with_values(vec![0.0, 0.3, 0.0, 0.0, 0.0]);
        assert!(matches!(g.check_spacelike(&flat), Err(Error::SpacelikeViolation { .. })));
    }

    #[test]
    fn interpolation_is_linear() {
        let f = Field::line(0.0, 1.0, 0.5, |x| 2.0 * x).unwrap();
        assert!((f.interpolate(0.3) - 0.6).abs() < 1e-15);
        assert_eq!(f.interpolate(5.0), 2.0);
    }
}
