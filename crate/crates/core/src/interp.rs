//! Cubic splines on uniform knots.

use crate::grid::Grid;
use crate::linalg::{solve_cyclic_constant, solve_tridiagonal};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    x0: f64,
    h: f64,
    values: Vec<f64>,
    second: Vec<f64>,
    periodic: bool,
}

impl CubicSpline {
    /// Periodic splines treat knot `n` as knot `0`; otherwise natural end conditions.
    pub fn new(x0: f64, h: f64, values: Vec<f64>, periodic: bool) -> Self {
        let n = values.len();
        let rhs: Vec<f64> = (0..n)
            .map(|j| {
                if periodic {
                    let l = values[(j + n - 1) % n];
                    let r = values[(j + 1) % n];
                    6.0 * (l - 2.0 * values[j] + r) / (h * h)
                } else if j == 0 || j == n - 1 {
                    0.0
                } else {
                    6.0 * (values[j - 1] - 2.0 * values[j] + values[j + 1]) / (h * h)
                }
            })
            .collect();
        let second = if periodic {
            solve_cyclic_constant(1.0, 4.0, 1.0, &rhs)
        } else {
            let mut lower = vec![1.0; n];
            let mut diag = vec![4.0; n];
            let mut upper = vec![1.0; n];
            diag[0] = 1.0;
            upper[0] = 0.0;
            diag[n - 1] = 1.0;
            lower[n - 1] = 0.0;
            solve_tridiagonal(&lower, &diag, &upper, &rhs)
        };
        Self {
            x0,
            h,
            values,
            second,
            periodic,
        }
    }

    pub fn along_axis(grid: &Grid, axis: usize, values: Vec<f64>) -> Self {
        Self::new(grid.coord(axis, 0), grid.spacing(axis), values, grid.is_periodic())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let mut s = (x - self.x0) / self.h;
        let (j, j1);
        if self.periodic {
            s = s.rem_euclid(n as f64);
            j = (s.floor() as usize).min(n - 1);
            j1 = (j + 1) % n;
        } else {
            s = s.clamp(0.0, (n - 1) as f64);
            j = (s.floor() as usize).min(n - 2);
            j1 = j + 1;
        }
        let t = s - j as f64;
        let u = 1.0 - t;
        u * self.values[j]
            + t * self.values[j1]
            + self.h * self.h / 6.0 * ((u * u * u - u) * self.second[j] + (t * t * t - t) * self.second[j1])
    }
}

/// Interpolant of a node field on a 1D or 2D grid (tensor-product splines in 2D).
#[derive(Debug, Clone)]
pub struct GridSpline {
    grid: Grid,
    rows: Vec<CubicSpline>,
}

impl GridSpline {
    pub fn new(grid: &Grid, values: &[f64]) -> Self {
        let rows = if grid.dim() == 1 {
            vec![CubicSpline::along_axis(grid, 0, values.to_vec())]
        } else {
            let n1 = grid.points(1);
            values
                .chunks(n1)
                .map(|row| CubicSpline::along_axis(grid, 1, row.to_vec()))
                .collect()
        };
        Self {
            grid: grid.clone(),
            rows,
        }
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        if self.grid.dim() == 1 {
            return self.rows[0].eval(q[0]);
        }
        let col: Vec<f64> = self.rows.iter().map(|r| r.eval(q[1])).collect();
        CubicSpline::along_axis(&self.grid, 0, col).eval(q[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use std::f64::consts::PI;

    #[test]
    fn interpolates_knots_exactly() {
        let v: Vec<f64> = (0..12).map(|i| (i as f64 * 0.4).sin()).collect();
        for periodic in [true, false] {
            let s = CubicSpline::new(1.0, 0.5, v.clone(), periodic);
            for (j, want) in v.iter().enumerate() {
                assert!((s.eval(1.0 + 0.5 * j as f64) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn periodic_spline_is_fourth_order() {
        let err = |n: usize| {
            let h = 2.0 * PI / n as f64;
            let v = (0..n).map(|j| (j as f64 * h).sin()).collect();
            let s = CubicSpline::new(0.0, h, v, true);
            (0..997)
                .map(|k| {
                    let x = k as f64 * 0.0063;
                    (s.eval(x) - x.sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn tensor_spline_reproduces_smooth_fields() {
        let g = Grid::plane((0.0, 2.0 * PI, 48), (0.0, 2.0 * PI, 40), Boundary::Periodic).unwrap();
        let vals: Vec<f64> = (0..g.len())
            .map(|i| {
                let q = g.node(i);
                q[0].sin() * q[1].cos()
            })
            .collect();
        let s = GridSpline::new(&g, &vals);
        let q = [1.234, 4.321];
        assert!((s.eval(&q) - q[0].sin() * q[1].cos()).abs() < 1e-5);
    }
}
