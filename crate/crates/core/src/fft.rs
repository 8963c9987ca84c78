//! Axis-wise FFTs on flat row-major buffers.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::grid::Grid;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place transform along `axis`. The inverse is normalized by `1/n`.
pub fn transform_axis(data: &mut [Complex64], grid: &Grid, axis: usize, inverse: bool) {
    let n = grid.points(axis);
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    let stride = grid.stride(axis);
    if stride == 1 {
        fft.process(data);
    } else {
        let outer = data.len() / (n * stride);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[base + k * stride];
                }
                fft.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
    if inverse {
        let s = 1.0 / n as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

pub fn forward(data: &mut [Complex64], grid: &Grid) {
    for a in 0..grid.dim() {
        transform_axis(data, grid, a, false);
    }
}

pub fn inverse(data: &mut [Complex64], grid: &Grid) {
    for a in 0..grid.dim() {
        transform_axis(data, grid, a, true);
    }
}

/// Angular wavenumbers in FFT order for a periodic axis.
pub fn wavenumbers(grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.points(axis);
    let dk = 2.0 * std::f64::consts::PI / grid.length(axis);
    (0..n)
        .map(|j| {
            let j = j as i64;
            let m = if j < (n as i64 + 1) / 2 { j } else { j - n as i64 };
            m as f64 * dk
        })
        .collect()
}

/// Wavenumber of every flat node along `axis` (broadcast over the other axis).
pub fn wavenumber_field(grid: &Grid, axis: usize) -> Vec<f64> {
    let k = wavenumbers(grid, axis);
    (0..grid.len()).map(|idx| k[grid.unravel(idx)[axis]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn roundtrip_2d() {
        let g = Grid::plane((0.0, 1.0, 8), (0.0, 2.0, 12), Boundary::Periodic).unwrap();
        let orig: Vec<Complex64> = (0..g.len())
            .map(|i| Complex64::new(i as f64 * 0.3, (i as f64).sin()))
            .collect();
        let mut d = orig.clone();
        forward(&mut d, &g);
        inverse(&mut d, &g);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn wavenumber_layout() {
        let g = Grid::line(0.0, 2.0 * std::f64::consts::PI, 8, Boundary::Periodic).unwrap();
        assert_eq!(wavenumbers(&g, 0), vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }
}
