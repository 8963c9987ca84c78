//! Discrete differential operators and quadrature.
//!
//! Periodic grids differentiate spectrally; box grids use second-order central
//! differences with one-sided second-order stencils at the edges. Quantities
//! that exist only away from wavefunction nodes (the unwrapped action, `1/ψ`
//! terms) go through [`masked_derivative`], a local stencil that never reads
//! masked nodes and never wraps across a periodic seam.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::Result;
use crate::fft;
use crate::field::{ComplexField, RealField};
use crate::grid::{Grid, Metric};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Derivative of order 1 or 2 along `axis` using the grid's scheme.
pub fn derivative(values: &[Complex64], grid: &Grid, axis: usize, order: u8) -> Vec<Complex64> {
    debug_assert!(order == 1 || order == 2);
    if grid.is_periodic() {
        let mut spec = values.to_vec();
        fft::transform_axis(&mut spec, grid, axis, false);
        let k = fft::wavenumbers(grid, axis);
        let n = grid.points(axis);
        let stride = grid.stride(axis);
        for (idx, z) in spec.iter_mut().enumerate() {
            let j = (idx / stride) % n;
            let kj = k[j];
            *z *= match order {
                1 if n % 2 == 0 && j == n / 2 => c(0.0),
                1 => Complex64::new(0.0, kj),
                _ => c(-kj * kj),
            };
        }
        fft::transform_axis(&mut spec, grid, axis, true);
        spec
    } else {
        let h = grid.spacing(axis);
        let mut out = vec![c(0.0); values.len()];
        for_each_line(grid, axis, |line| {
            let f = |i: usize| values[line[i]];
            let n = line.len();
            for i in 0..n {
                out[line[i]] = match order {
                    1 => {
                        if i == 0 {
                            (f(0) * -3.0 + f(1) * 4.0 - f(2)) / (2.0 * h)
                        } else if i == n - 1 {
                            (f(n - 1) * 3.0 - f(n - 2) * 4.0 + f(n - 3)) / (2.0 * h)
                        } else {
                            (f(i + 1) - f(i - 1)) / (2.0 * h)
                        }
                    }
                    _ => {
                        if i == 0 {
                            (f(0) * 2.0 - f(1) * 5.0 + f(2) * 4.0 - f(3)) / (h * h)
                        } else if i == n - 1 {
                            (f(n - 1) * 2.0 - f(n - 2) * 5.0 + f(n - 3) * 4.0 - f(n - 4)) / (h * h)
                        } else {
                            (f(i + 1) - f(i) * 2.0 + f(i - 1)) / (h * h)
                        }
                    }
                };
            }
        });
        out
    }
}

/// `Σ_i g_ii ∂²f/∂q_i²`.
pub fn laplacian_values(values: &[Complex64], grid: &Grid, metric: &Metric) -> Vec<Complex64> {
    if grid.is_periodic() {
        let mut spec = values.to_vec();
        fft::forward(&mut spec, grid);
        let symbol = laplacian_symbol(grid, metric);
        spec.iter_mut().zip(&symbol).for_each(|(z, s)| *z *= s);
        fft::inverse(&mut spec, grid);
        spec
    } else {
        let mut out = vec![c(0.0); values.len()];
        for a in 0..grid.dim() {
            let d2 = derivative(values, grid, a, 2);
            let g = metric.g(a);
            out.iter_mut().zip(&d2).for_each(|(o, d)| *o += d * g);
        }
        out
    }
}

/// Fourier symbol `-Σ g_i k_i²` of the weighted Laplacian on a periodic grid.
pub fn laplacian_symbol(grid: &Grid, metric: &Metric) -> Vec<f64> {
    let ks: Vec<Vec<f64>> = (0..grid.dim()).map(|a| fft::wavenumbers(grid, a)).collect();
    (0..grid.len())
        .map(|idx| {
            let ij = grid.unravel(idx);
            -(0..grid.dim())
                .map(|a| metric.g(a) * ks[a][ij[a]] * ks[a][ij[a]])
                .sum::<f64>()
        })
        .collect()
}

pub(crate) fn derivative_real(values: &[f64], grid: &Grid, axis: usize, order: u8) -> Vec<f64> {
    let z: Vec<Complex64> = values.iter().map(|&v| c(v)).collect();
    derivative(&z, grid, axis, order).into_iter().map(|z| z.re).collect()
}

pub(crate) fn laplacian_real(values: &[f64], grid: &Grid, metric: &Metric) -> Vec<f64> {
    let z: Vec<Complex64> = values.iter().map(|&v| c(v)).collect();
    laplacian_values(&z, grid, metric).into_iter().map(|z| z.re).collect()
}

/// Call `f` with the flat indices of every 1D line along `axis`.
pub(crate) fn for_each_line(grid: &Grid, axis: usize, mut f: impl FnMut(&[usize])) {
    let n = grid.points(axis);
    let stride = grid.stride(axis);
    let outer = grid.len() / (n * stride);
    let mut line = vec![0usize; n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for (k, l) in line.iter_mut().enumerate() {
                *l = base + k * stride;
            }
            f(&line);
        }
    }
}

/// Fields that can be differentiated on their grid.
pub trait Differentiable: Sized {
    fn gradient(&self, axis: usize) -> Result<Self>;
    fn laplacian(&self, metric: &Metric) -> Result<Self>;
}

impl Differentiable for ComplexField {
    fn gradient(&self, axis: usize) -> Result<Self> {
        self.grid().check_axis(axis)?;
        let d = derivative(self.values(), self.grid(), axis, 1);
        Ok(ComplexField::from_parts(self.grid().clone(), d, self.time()))
    }

    fn laplacian(&self, metric: &Metric) -> Result<Self> {
        metric.check_grid(self.grid())?;
        let d = laplacian_values(self.values(), self.grid(), metric);
        Ok(ComplexField::from_parts(self.grid().clone(), d, self.time()))
    }
}

impl Differentiable for RealField {
    fn gradient(&self, axis: usize) -> Result<Self> {
        self.grid().check_axis(axis)?;
        match self.mask() {
            None => RealField::new(
                self.grid().clone(),
                derivative_real(self.values(), self.grid(), axis, 1),
                self.units(),
            ),
            Some(mask) => masked_real(self, mask, |v, m| {
                masked_derivative(v, m, self.grid(), axis, 1)
            }),
        }
    }

    fn laplacian(&self, metric: &Metric) -> Result<Self> {
        metric.check_grid(self.grid())?;
        match self.mask() {
            None => RealField::new(
                self.grid().clone(),
                laplacian_real(self.values(), self.grid(), metric),
                self.units(),
            ),
            Some(mask) => masked_real(self, mask, |v, m| masked_laplacian(v, m, self.grid(), metric)),
        }
    }
}

fn masked_real(
    f: &RealField,
    mask: &[bool],
    op: impl Fn(&[f64], &[bool]) -> Vec<Option<f64>>,
) -> Result<RealField> {
    let d = op(f.values(), mask);
    let new_mask: Vec<bool> = d.iter().map(|v| v.is_none()).collect();
    let vals = d.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    RealField::masked(f.grid().clone(), vals, f.units(), new_mask)
}

/// Discrete first derivative along `axis`.
pub fn gradient<F: Differentiable>(f: &F, axis: usize) -> Result<F> {
    f.gradient(axis)
}

/// `Σ_i g_ii ∂²f/∂q_i²` with the grid's differentiation scheme.
pub fn laplacian<F: Differentiable>(f: &F, metric: &Metric) -> Result<F> {
    f.laplacian(metric)
}

/// Quadrature of `conj(f)·g` over the grid.
pub fn inner_product(f: &ComplexField, g: &ComplexField) -> Result<Complex64> {
    f.check_same_grid(g)?;
    Ok(f.grid()
        .weights()
        .iter()
        .zip(f.values().iter().zip(g.values()))
        .map(|(w, (a, b))| a.conj() * b * *w)
        .sum())
}

/// Quadrature of real node values.
pub fn integrate(values: &[f64], grid: &Grid) -> f64 {
    grid.weights().iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Quadrature restricted to nodes where `keep` is true.
pub fn integrate_where(values: &[f64], grid: &Grid, keep: impl Fn(usize) -> bool) -> f64 {
    grid.weights()
        .iter()
        .zip(values)
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, (w, v))| w * v)
        .sum()
}

/// Values that support linear stencils.
pub trait StencilValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T> StencilValue for T where T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

/// Local derivative that only reads unmasked nodes.
///
/// Uses the fourth-order centred stencil when the five nodes are available,
/// falling back to the three-point centred and then one-sided second-order
/// stencils. Returns `None` where no stencil fits or the node itself is masked.
pub fn masked_derivative<T: StencilValue>(
    values: &[T],
    mask: &[bool],
    grid: &Grid,
    axis: usize,
    order: u8,
) -> Vec<Option<T>> {
    let h = grid.spacing(axis);
    let mut out = vec![None; values.len()];
    for_each_line(grid, axis, |line| {
        let n = line.len() as isize;
        let ok = |j: isize| j >= 0 && j < n && !mask[line[j as usize]];
        let f = |j: isize| values[line[j as usize]];
        for i in 0..n {
            if !ok(i) {
                continue;
            }
            let all = |offs: &[isize]| offs.iter().all(|o| ok(i + o));
            let v = if order == 1 {
                if all(&[-2, -1, 1, 2]) {
                    Some((f(i - 2) - f(i + 2) + (f(i + 1) - f(i - 1)) * 8.0) * (1.0 / (12.0 * h)))
                } else if all(&[-1, 1]) {
                    Some((f(i + 1) - f(i - 1)) * (0.5 / h))
                } else if all(&[1, 2]) {
                    Some((f(i + 1) * 4.0 - f(i) * 3.0 - f(i + 2)) * (0.5 / h))
                } else if all(&[-1, -2]) {
                    Some((f(i) * 3.0 - f(i - 1) * 4.0 + f(i - 2)) * (0.5 / h))
                } else {
                    None
                }
            } else if all(&[-2, -1, 1, 2]) {
                Some(
                    ((f(i + 1) + f(i - 1)) * 16.0 - (f(i + 2) + f(i - 2)) - f(i) * 30.0)
                        * (1.0 / (12.0 * h * h)),
                )
            } else if all(&[-1, 1]) {
                Some((f(i + 1) + f(i - 1) - f(i) * 2.0) * (1.0 / (h * h)))
            } else if all(&[1, 2, 3]) {
                Some((f(i) * 2.0 - f(i + 1) * 5.0 + f(i + 2) * 4.0 - f(i + 3)) * (1.0 / (h * h)))
            } else if all(&[-1, -2, -3]) {
                Some((f(i) * 2.0 - f(i - 1) * 5.0 + f(i - 2) * 4.0 - f(i - 3)) * (1.0 / (h * h)))
            } else {
                None
            };
            out[line[i as usize]] = v;
        }
    });
    out
}

/// `Σ_i g_ii ∂²f/∂q_i²` through [`masked_derivative`].
pub fn masked_laplacian(values: &[f64], mask: &[bool], grid: &Grid, metric: &Metric) -> Vec<Option<f64>> {
    let mut acc: Vec<Option<f64>> = vec![Some(0.0); values.len()];
    for a in 0..grid.dim() {
        let d = masked_derivative(values, mask, grid, a, 2);
        for (o, v) in acc.iter_mut().zip(d) {
            *o = match (*o, v) {
                (Some(x), Some(y)) => Some(x + metric.g(a) * y),
                _ => None,
            };
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::Error;
    use std::f64::consts::PI;

    fn real(grid: &Grid, f: impl Fn(f64) -> f64) -> RealField {
        RealField::from_fn(grid, crate::field::Units::Dimensionless, |q| f(q[0]))
    }

    #[test]
    fn spectral_gradient_of_sine() {
        let g = Grid::line(0.0, 2.0 * PI, 128, Boundary::Periodic).unwrap();
        let d = gradient(&real(&g, f64::sin), 0).unwrap();
        let err = d
            .values()
            .iter()
            .zip(g.coords(0))
            .map(|(v, x)| (v - x.cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "err {err}");
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        for b in [Boundary::Periodic, Boundary::Box] {
            let g = Grid::line(-1.0, 1.0, 32, b).unwrap();
            let d = gradient(&real(&g, |_| 3.5), 0).unwrap();
            assert!(d.values().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn box_gradient_is_exact_for_quadratics() {
        let g = Grid::line(-1.0, 2.0, 41, Boundary::Box).unwrap();
        let d = gradient(&real(&g, |x| x * x), 0).unwrap();
        for (v, x) in d.values().iter().zip(g.coords(0)) {
            assert!((v - 2.0 * x).abs() < 1e-11);
        }
    }

    #[test]
    fn box_gradient_is_second_order() {
        // x³ is the lowest power where the centred stencil is inexact: error = h².
        let err = |n: usize| {
            let g = Grid::line(0.0, 1.0, n, Boundary::Box).unwrap();
            let d = gradient(&real(&g, |x| x.powi(3)), 0).unwrap();
            (1..n - 1)
                .map(|i| (d.values()[i] - 3.0 * g.coord(0, i).powi(2)).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(41) / err(81);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn laplacian_cases() {
        let g = Grid::line(0.0, 2.0 * PI, 64, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let l = laplacian(&real(&g, f64::sin), &m).unwrap();
        for (v, x) in l.values().iter().zip(g.coords(0)) {
            assert!((v + x.sin()).abs() < 1e-10);
        }
        let b = Grid::line(-2.0, 2.0, 33, Boundary::Box).unwrap();
        let lin = laplacian(&real(&b, |x| 3.0 * x - 1.0), &m).unwrap();
        assert!(lin.values()[1..32].iter().all(|v| v.abs() < 1e-10));
        let m2 = Metric::new(&[2.0], 1.0).unwrap();
        let quad = laplacian(&real(&b, |x| x * x), &m2).unwrap();
        assert!(quad.values()[1..32].iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn axis_out_of_range() {
        let g = Grid::line(0.0, 1.0, 8, Boundary::Box).unwrap();
        assert_eq!(
            gradient(&real(&g, |x| x), 1).unwrap_err(),
            Error::AxisOutOfRange { axis: 1, dim: 1 }
        );
    }

    #[test]
    fn masked_stencils_skip_masked_nodes() {
        let g = Grid::line(0.0, 1.0, 11, Boundary::Periodic).unwrap();
        let x = g.coords(0);
        let f: Vec<f64> = x.iter().map(|x| x * x).collect();
        let mut mask = vec![false; 11];
        mask[5] = true;
        let d = masked_derivative(&f, &mask, &g, 0, 1);
        assert!(d[5].is_none());
        for (i, v) in d.iter().enumerate() {
            if let Some(v) = v {
                assert!((v - 2.0 * x[i]).abs() < 1e-12, "node {i}");
            }
        }
        let d2 = masked_derivative(&f, &mask, &g, 0, 2);
        assert!(d2.iter().flatten().all(|v| (v - 2.0).abs() < 1e-9));
    }

    #[test]
    fn two_dimensional_laplacian() {
        let g = Grid::plane((0.0, 2.0 * PI, 32), (0.0, 2.0 * PI, 16), Boundary::Periodic).unwrap();
        let m = Metric::new(&[1.0, 0.5], 1.0).unwrap();
        let f = RealField::from_fn(&g, crate::field::Units::Dimensionless, |q| q[0].sin() * (2.0 * q[1]).cos());
        let l = laplacian(&f, &m).unwrap();
        for (idx, v) in l.values().iter().enumerate() {
            let q = g.node(idx);
            let want = -(1.0 + 2.0 * 4.0) * q[0].sin() * (2.0 * q[1]).cos();
            assert!((v - want).abs() < 1e-9);
        }
    }
}
