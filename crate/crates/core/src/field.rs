//! Discretized fields living on a [`Grid`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Relative node threshold: nodes with `|ψ| < NODE_THRESHOLD · max|ψ|` are masked.
pub const NODE_THRESHOLD: f64 = 1e-8;

/// Tolerance of the "normalized" tag under the grid quadrature.
pub const NORMALIZED_TOL: f64 = 1e-8;

/// Wavefunction samples with a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
    time: f64,
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<Complex64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidInput("non-finite wavefunction value".into()));
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: &Grid, time: f64) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            grid: grid.clone(),
            time,
        }
    }

    /// Sample `f(q)` at every node.
    pub fn from_fn(grid: &Grid, time: f64, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self {
            grid: grid.clone(),
            values,
            time,
        }
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<Complex64>, time: f64) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values, time }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `∫|ψ|² dV` under the grid quadrature.
    pub fn norm_sqr(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, z)| w * z.norm_sqr())
            .sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORMALIZED_TOL
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(Error::InvalidInput("cannot normalize a zero field".into()));
        }
        let s = 1.0 / n.sqrt();
        self.values.iter_mut().for_each(|z| *z *= s);
        Ok(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Nodes below the node threshold.
    pub fn node_mask(&self) -> Vec<bool> {
        let cut = NODE_THRESHOLD * self.max_abs();
        self.values.iter().map(|z| z.norm() < cut).collect()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| z * s).collect(),
            time: self.time,
        }
    }

    pub fn check_same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.grid != other.grid {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Energy,
    Density,
    Velocity,
    InverseTime,
    Dimensionless,
}

/// Real samples; entries under `mask` carry no value (NaN).
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
    units: Units,
    mask: Option<Vec<bool>>,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>, units: Units) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in unmasked field".into()));
        }
        Ok(Self {
            grid,
            values,
            units,
            mask: None,
        })
    }

    /// Build a field whose masked entries are set to NaN.
    pub fn masked(grid: Grid, mut values: Vec<f64>, units: Units, mask: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || mask.len() != grid.len() {
            return Err(Error::InvalidInput("value/mask length mismatch".into()));
        }
        for (v, &m) in values.iter_mut().zip(&mask) {
            if m {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::InvalidInput("non-finite value outside the mask".into()));
            }
        }
        Ok(Self {
            grid,
            values,
            units,
            mask: Some(mask),
        })
    }

    pub fn from_fn(grid: &Grid, units: Units, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self {
            grid: grid.clone(),
            values,
            units,
            mask: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn is_masked(&self, idx: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m[idx])
    }

    /// `(index, value)` over unmasked nodes.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(move |(i, _)| !self.is_masked(*i))
            .map(|(i, v)| (i, *v))
    }
}

/// Amplitude/action pair `ψ = A·exp(iS/ħ)` with a node mask.
///
/// On masked nodes `S` holds the principal phase (times ħ), so recomposition
/// is exact everywhere; the unwrapping guarantee applies only off-mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarField {
    pub(crate) grid: Grid,
    pub(crate) amplitude: Vec<f64>,
    pub(crate) action: Vec<f64>,
    pub(crate) mask: Vec<bool>,
    pub(crate) hbar: f64,
    pub(crate) time: f64,
}

impl PolarField {
    pub fn new(
        grid: Grid,
        amplitude: Vec<f64>,
        action: Vec<f64>,
        mask: Vec<bool>,
        hbar: f64,
        time: f64,
    ) -> Result<Self> {
        let n = grid.len();
        if amplitude.len() != n || action.len() != n || mask.len() != n {
            return Err(Error::InvalidInput("polar field length mismatch".into()));
        }
        if amplitude.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidInput("amplitude must be finite and non-negative".into()));
        }
        if action.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("action must be finite".into()));
        }
        Ok(Self {
            grid,
            amplitude,
            action,
            mask,
            hbar,
            time,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn action(&self) -> &[f64] {
        &self.action
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn masked_fraction(&self) -> f64 {
        self.mask.iter().filter(|m| **m).count() as f64 / self.mask.len() as f64
    }
}

/// Phase-space point `(q, p)` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl ClassicalState {
    pub fn new(q: Vec<f64>, p: Vec<f64>, t: f64) -> Result<Self> {
        if q.len() != p.len() || q.is_empty() || q.len() > 2 {
            return Err(Error::InvalidInput(format!(
                "state dimensions q={} p={} are invalid",
                q.len(),
                p.len()
            )));
        }
        let s = Self { q, p, t };
        if !s.is_finite() {
            return Err(Error::InvalidInput("non-finite classical state".into()));
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite()) && self.t.is_finite()
    }
}

/// Tangent vector `(ξ, η) = (δq, δp)` along a base trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub t: f64,
}

impl VariationalState {
    pub fn new(xi: Vec<f64>, eta: Vec<f64>, t: f64) -> Result<Self> {
        if xi.len() != eta.len() || xi.is_empty() {
            return Err(Error::InvalidInput("variation dimensions mismatch".into()));
        }
        if xi.iter().chain(&eta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite variation".into()));
        }
        Ok(Self { xi, eta, t })
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn norm(&self) -> f64 {
        self.xi.iter().chain(&self.eta).map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn rejects_non_finite_values() {
        let g = Grid::line(0.0, 1.0, 8, Boundary::Periodic).unwrap();
        let mut v = vec![Complex64::new(1.0, 0.0); 8];
        v[3] = Complex64::new(f64::NAN, 0.0);
        assert!(ComplexField::new(g, v, 0.0).is_err());
    }

    #[test]
    fn normalization_uses_grid_quadrature() {
        let g = Grid::line(0.0, 2.0, 16, Boundary::Periodic).unwrap();
        let f = ComplexField::from_fn(&g, 0.0, |_| Complex64::new(3.0, 0.0))
            .normalized()
            .unwrap();
        assert!(f.is_normalized());
        assert!((f.values()[0].re - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn masked_real_field_hides_values() {
        let g = Grid::line(0.0, 1.0, 8, Boundary::Box).unwrap();
        let mut mask = vec![false; 8];
        mask[0] = true;
        let f = RealField::masked(g, vec![1.0; 8], Units::Energy, mask).unwrap();
        assert!(f.values()[0].is_nan());
        assert_eq!(f.iter_valid().count(), 7);
    }
}
