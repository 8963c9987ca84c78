//! Uniform 1D/2D lattices and the constant diagonal kinetic metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Last node is one spacing short of `max`; `max` is identified with `min`.
    Periodic,
    /// Both endpoints are nodes; wavefunctions vanish there.
    Box,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::Box => "box",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

/// A uniform lattice in one or two dimensions, stored row-major (last axis contiguous).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
    boundary: Boundary,
}

impl Grid {
    pub fn new(axes: Vec<Axis>, boundary: Boundary) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.points < MIN_POINTS {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: points ≥ {MIN_POINTS} required, got {}",
                    a.points
                )));
            }
            if !(a.min.is_finite() && a.max.is_finite() && a.max > a.min) {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: extent [{}, {}] is not an increasing finite interval",
                    a.min, a.max
                )));
            }
        }
        Ok(Self { axes, boundary })
    }

    pub fn line(min: f64, max: f64, points: usize, boundary: Boundary) -> Result<Self> {
        Self::new(vec![Axis { min, max, points }], boundary)
    }

    pub fn plane(x: (f64, f64, usize), y: (f64, f64, usize), boundary: Boundary) -> Result<Self> {
        Self::new(
            vec![
                Axis { min: x.0, max: x.1, points: x.2 },
                Axis { min: y.0, max: y.1, points: y.2 },
            ],
            boundary,
        )
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn points(&self, axis: usize) -> usize {
        self.axes[axis].points
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim() {
            Err(Error::AxisOutOfRange { axis, dim: self.dim() })
        } else {
            Ok(())
        }
    }

    pub fn length(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        a.max - a.min
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        match self.boundary {
            Boundary::Periodic => (a.max - a.min) / a.points as f64,
            Boundary::Box => (a.max - a.min) / (a.points - 1) as f64,
        }
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.axes[axis].min + i as f64 * self.spacing(axis)
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points(axis)).map(|i| self.coord(axis, i)).collect()
    }

    /// Stride of `axis` in the flat layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.axes[axis + 1..].iter().map(|a| a.points).product()
    }

    pub fn unravel(&self, idx: usize) -> [usize; 2] {
        match self.dim() {
            1 => [idx, 0],
            _ => {
                let n1 = self.axes[1].points;
                [idx / n1, idx % n1]
            }
        }
    }

    pub fn ravel(&self, ij: [usize; 2]) -> usize {
        match self.dim() {
            1 => ij[0],
            _ => ij[0] * self.axes[1].points + ij[1],
        }
    }

    /// Coordinates of a flat node index; unused components are zero.
    pub fn node(&self, idx: usize) -> [f64; 2] {
        let ij = self.unravel(idx);
        let mut q = [0.0; 2];
        for (a, qa) in q.iter_mut().enumerate().take(self.dim()) {
            *qa = self.coord(a, ij[a]);
        }
        q
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Quadrature weights: rectangle rule on periodic grids, trapezoid on box grids.
    pub fn weights(&self) -> Vec<f64> {
        let dv = self.cell_volume();
        (0..self.len())
            .map(|idx| {
                let ij = self.unravel(idx);
                let mut w = dv;
                if self.boundary == Boundary::Box {
                    for a in 0..self.dim() {
                        if ij[a] == 0 || ij[a] == self.axes[a].points - 1 {
                            w *= 0.5;
                        }
                    }
                }
                w
            })
            .collect()
    }

    /// True for nodes on a box wall (always false on periodic grids).
    pub fn is_wall(&self, idx: usize) -> bool {
        if self.boundary == Boundary::Periodic {
            return false;
        }
        let ij = self.unravel(idx);
        (0..self.dim()).any(|a| ij[a] == 0 || ij[a] == self.axes[a].points - 1)
    }

    /// Lattice neighbours along every axis; never wraps across a periodic seam.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let ij = self.unravel(idx);
        (0..self.dim()).flat_map(move |a| {
            let n = self.axes[a].points;
            let mut out = [None, None];
            if ij[a] > 0 {
                let mut k = ij;
                k[a] -= 1;
                out[0] = Some(self.ravel(k));
            }
            if ij[a] + 1 < n {
                let mut k = ij;
                k[a] += 1;
                out[1] = Some(self.ravel(k));
            }
            out.into_iter().flatten()
        })
    }

    /// Whether `q` lies inside the sampled extent.
    pub fn contains(&self, q: &[f64]) -> bool {
        self.axes.iter().zip(q).all(|(a, &x)| x >= a.min && x <= a.max)
    }

    /// Fold a coordinate onto `[min, max)` along a periodic axis.
    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let a = &self.axes[axis];
        let l = a.max - a.min;
        a.min + (x - a.min).rem_euclid(l)
    }
}

/// Constant diagonal kinetic metric `g_ii = 1/m_i` together with the action quantum ħ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    inv_mass: Vec<f64>,
    hbar: f64,
}

impl Metric {
    pub fn new(masses: &[f64], hbar: f64) -> Result<Self> {
        if masses.is_empty() || masses.len() > 2 {
            return Err(Error::InvalidMetric(format!(
                "expected 1 or 2 masses, got {}",
                masses.len()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidMetric(format!("mass must be positive, got {m}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidMetric(format!("ħ must be positive, got {hbar}")));
        }
        Ok(Self {
            inv_mass: masses.iter().map(|m| 1.0 / m).collect(),
            hbar,
        })
    }

    /// ħ = 1 and unit masses.
    pub fn natural(dim: usize) -> Self {
        Self {
            inv_mass: vec![1.0; dim],
            hbar: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.inv_mass.len()
    }

    pub fn g(&self, axis: usize) -> f64 {
        self.inv_mass[axis]
    }

    pub fn mass(&self, axis: usize) -> f64 {
        1.0 / self.inv_mass[axis]
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::InvalidMetric(format!(
                "metric has {} entries but the grid is {}-dimensional",
                self.dim(),
                grid.dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_depends_on_boundary() {
        let p = Grid::line(0.0, 1.0, 10, Boundary::Periodic).unwrap();
        let b = Grid::line(0.0, 1.0, 11, Boundary::Box).unwrap();
        assert!((p.spacing(0) - 0.1).abs() < 1e-15);
        assert!((b.spacing(0) - 0.1).abs() < 1e-15);
        assert!((b.coord(0, 10) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_coarse_grids() {
        let err = Grid::line(0.0, 1.0, 4, Boundary::Box).unwrap_err();
        assert!(err.to_string().contains("points ≥ 8 required"));
    }

    #[test]
    fn trapezoid_weights_integrate_constants_exactly() {
        let g = Grid::plane((0.0, 2.0, 9), (-1.0, 1.0, 17), Boundary::Box).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 4.0).abs() < 1e-14);
    }

    #[test]
    fn ravel_roundtrip_and_neighbors() {
        let g = Grid::plane((0.0, 1.0, 8), (0.0, 1.0, 9), Boundary::Periodic).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.ravel(g.unravel(idx)), idx);
        }
        assert_eq!(g.neighbors(0).count(), 2);
        assert_eq!(g.neighbors(g.ravel([3, 4])).count(), 4);
    }

    #[test]
    fn metric_validation() {
        assert!(Metric::new(&[1.0, -2.0], 1.0).is_err());
        assert!(Metric::new(&[1.0], 0.0).is_err());
        let m = Metric::new(&[2.0], 1.0).unwrap();
        assert_eq!(m.g(0), 0.5);
    }
}
