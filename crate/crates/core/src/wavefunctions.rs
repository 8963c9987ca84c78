//! Closed-form wavefunctions used as initial states and test oracles.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{Grid, Metric};

fn check_len(grid: &Grid, name: &str, v: &[f64]) -> Result<()> {
    if v.len() != grid.dim() {
        return Err(Error::InvalidInput(format!(
            "{name} has {} entries for a {}-dimensional grid",
            v.len(),
            grid.dim()
        )));
    }
    Ok(())
}

/// Freely evolving Gaussian packet.
///
/// `sigma2` is the initial position variance of `|ψ|²` per axis, `center` and
/// `momentum` the packet's initial mean position and momentum. At `t = 0` this
/// is `(2πσ²)^{-1/4} exp(-(x-x₀)²/4σ² + ip₀x/ħ)`.
pub fn free_gaussian(
    grid: &Grid,
    metric: &Metric,
    center: &[f64],
    sigma2: &[f64],
    momentum: &[f64],
    t: f64,
) -> Result<ComplexField> {
    check_len(grid, "center", center)?;
    check_len(grid, "sigma2", sigma2)?;
    check_len(grid, "momentum", momentum)?;
    metric.check_grid(grid)?;
    if sigma2.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidInput("Gaussian variance must be positive".into()));
    }
    let hbar = metric.hbar();
    Ok(ComplexField::from_fn(grid, t, |q| {
        let mut z = Complex64::new(1.0, 0.0);
        for a in 0..grid.dim() {
            let s0 = sigma2[a].sqrt();
            let m = metric.mass(a);
            let v = momentum[a] / m;
            let alpha = Complex64::new(s0, hbar * t / (2.0 * m * s0));
            let d = q[a] - center[a] - v * t;
            let energy = momentum[a] * momentum[a] / (2.0 * m);
            let phase = (momentum[a] * q[a] - energy * t) / hbar;
            z *= (2.0 * PI).powf(-0.25) / alpha.sqrt()
                * (-(d * d) / (4.0 * s0 * alpha) + Complex64::new(0.0, phase)).exp();
        }
        z
    }))
}

/// Normalized 1D oscillator eigenfunction values `φ_n(ξ)` for dimensionless `ξ`,
/// without the `(mω/ħ)^{1/4}` length factor.
fn hermite_function(n: usize, xi: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    for k in 0..n {
        let next = (2.0 / (k as f64 + 1.0)).sqrt() * xi * cur - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Oscillator eigenstate with quantum numbers `n` (one per axis), including the
/// stationary phase `exp(-iEt/ħ)`.
pub fn oscillator_eigenstate(grid: &Grid, metric: &Metric, omega: f64, n: &[usize], t: f64) -> Result<ComplexField> {
    metric.check_grid(grid)?;
    if n.len() != grid.dim() {
        return Err(Error::InvalidInput("one quantum number per axis required".into()));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidInput(format!("ω must be positive, got {omega}")));
    }
    let hbar = metric.hbar();
    let energy: f64 = n.iter().map(|&k| hbar * omega * (k as f64 + 0.5)).sum();
    let phase = Complex64::from_polar(1.0, -energy * t / hbar);
    Ok(ComplexField::from_fn(grid, t, |q| {
        let mut v = 1.0;
        for a in 0..grid.dim() {
            let s = (metric.mass(a) * omega / hbar).sqrt();
            v *= s.sqrt() * hermite_function(n[a], s * q[a]);
        }
        phase * v
    }))
}

/// Oscillator energy `ħω Σ(n_i + ½)`.
pub fn oscillator_energy(metric: &Metric, omega: f64, n: &[usize]) -> f64 {
    n.iter().map(|&k| metric.hbar() * omega * (k as f64 + 0.5)).sum()
}

/// Coherent state of the oscillator released from rest at displacement `amplitude`.
///
/// The packet centre follows `x_c = a cos ωt`, `p_c = -mωa sin ωt`; the global
/// phase is the exact one generated by the Schrödinger evolution.
pub fn coherent_state(grid: &Grid, metric: &Metric, omega: f64, amplitude: &[f64], t: f64) -> Result<ComplexField> {
    metric.check_grid(grid)?;
    check_len(grid, "amplitude", amplitude)?;
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidInput(format!("ω must be positive, got {omega}")));
    }
    let hbar = metric.hbar();
    Ok(ComplexField::from_fn(grid, t, |q| {
        let mut z = Complex64::new(1.0, 0.0);
        for a in 0..grid.dim() {
            let m = metric.mass(a);
            let xc = amplitude[a] * (omega * t).cos();
            let pc = -m * omega * amplitude[a] * (omega * t).sin();
            let norm = (m * omega / (PI * hbar)).powf(0.25);
            let d = q[a] - xc;
            let re = -m * omega * d * d / (2.0 * hbar);
            let im = (pc * q[a] - 0.5 * hbar * omega * t - 0.5 * pc * xc) / hbar;
            z *= norm * Complex64::new(re, im).exp();
        }
        z
    }))
}

/// Plane wave `exp(i(p·q − Et)/ħ)` normalized to unit norm over the grid volume.
pub fn plane_wave(grid: &Grid, metric: &Metric, momentum: &[f64], t: f64) -> Result<ComplexField> {
    metric.check_grid(grid)?;
    check_len(grid, "momentum", momentum)?;
    let hbar = metric.hbar();
    let energy: f64 = momentum.iter().enumerate().map(|(a, p)| 0.5 * metric.g(a) * p * p).sum();
    let volume: f64 = (0..grid.dim()).map(|a| grid.length(a)).product();
    let amp = volume.sqrt().recip();
    Ok(ComplexField::from_fn(grid, t, |q| {
        let s: f64 = (0..grid.dim()).map(|a| momentum[a] * q[a]).sum::<f64>() - energy * t;
        Complex64::from_polar(amp, s / hbar)
    }))
}

/// Momentum on the periodic wavenumber lattice closest to `p` along `axis`.
pub fn lattice_momentum(grid: &Grid, metric: &Metric, axis: usize, p: f64) -> f64 {
    let dk = 2.0 * PI / grid.length(axis);
    let hbar = metric.hbar();
    (p / (hbar * dk)).round() * hbar * dk
}

/// Infinite-well eigenstate `√(2/L) sin(nπ(x − a)/L)` per axis, `n ≥ 1`.
pub fn box_eigenstate(grid: &Grid, metric: &Metric, n: &[usize], t: f64) -> Result<ComplexField> {
    metric.check_grid(grid)?;
    if n.len() != grid.dim() || n.contains(&0) {
        return Err(Error::InvalidInput("one quantum number n ≥ 1 per axis required".into()));
    }
    let hbar = metric.hbar();
    let energy = box_energy(grid, metric, n);
    let phase = Complex64::from_polar(1.0, -energy * t / hbar);
    Ok(ComplexField::from_fn(grid, t, |q| {
        let mut v = 1.0;
        for a in 0..grid.dim() {
            let ax = grid.axes()[a];
            let l = ax.max - ax.min;
            v *= (2.0 / l).sqrt() * (n[a] as f64 * PI * (q[a] - ax.min) / l).sin();
        }
        phase * v
    }))
}

/// `Σ ħ²n²π²/(2mL²)` for a well spanning the grid extent.
pub fn box_energy(grid: &Grid, metric: &Metric, n: &[usize]) -> f64 {
    (0..grid.dim())
        .map(|a| {
            let l = grid.length(a);
            let k = n[a] as f64 * PI * metric.hbar() / l;
            0.5 * metric.g(a) * k * k
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::inner_product;
    use crate::grid::Boundary;

    fn line() -> Grid {
        Grid::line(-12.0, 12.0, 512, Boundary::Periodic).unwrap()
    }

    #[test]
    fn gaussian_is_normalized_and_spreads() {
        let g = line();
        let m = Metric::natural(1);
        for t in [0.0, 0.7, 2.0] {
            let psi = free_gaussian(&g, &m, &[0.3], &[0.5], &[0.4], t).unwrap();
            assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenstates_are_orthonormal() {
        let g = line();
        let m = Metric::natural(1);
        let s: Vec<_> = (0..4).map(|n| oscillator_eigenstate(&g, &m, 1.0, &[n], 0.0).unwrap()).collect();
        for i in 0..4 {
            for j in 0..4 {
                let ip = inner_product(&s[i], &s[j]).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).norm() < 1e-10, "{i} {j} {ip}");
            }
        }
    }

    #[test]
    fn coherent_state_at_zero_is_displaced_ground_state() {
        let g = line();
        let m = Metric::natural(1);
        let c = coherent_state(&g, &m, 1.0, &[0.0], 0.0).unwrap();
        let e = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap();
        for (a, b) in c.values().iter().zip(e.values()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn plane_wave_uses_lattice_momentum() {
        let g = Grid::line(0.0, 10.0, 64, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let p = lattice_momentum(&g, &m, 0, 1.0);
        assert!((p - 2.0 * PI * 2.0 / 10.0).abs() < 1e-14);
        let psi = plane_wave(&g, &m, &[p], 0.0).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_parameters_are_rejected() {
        let g = line();
        let m = Metric::natural(1);
        assert!(free_gaussian(&g, &m, &[0.0, 1.0], &[1.0], &[0.0], 0.0).is_err());
        assert!(free_gaussian(&g, &m, &[0.0], &[-1.0], &[0.0], 0.0).is_err());
        assert!(box_eigenstate(&g, &m, &[0], 0.0).is_err());
    }
}
