//! Position and momentum moments, `⟨Q⟩`, and the uncertainty identity
//! `⟨(Δp)²⟩ = 2m⟨Q⟩` for real states.

use num_complex::Complex64;
use serde::Serialize;

use crate::diff::derivative;
use crate::error::{Error, Result};
use crate::fft;
use crate::field::ComplexField;
use crate::grid::Metric;
use crate::polar::PsiCalculus;

/// Tolerance on `max |∇S|` below which a state counts as real.
pub const REAL_STATE_TOL: f64 = 1e-6;
/// Tolerance of the asserted identity and of the Heisenberg floor.
pub const IDENTITY_TOL: f64 = 1e-6;
/// Edge density (relative to the peak) below which a periodic state counts as localized.
pub const LOCALIZED_EDGE: f64 = 1e-8;

/// Per-axis moments of a normalized state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub time: f64,
    pub mean_x: Vec<f64>,
    pub mean_x2: Vec<f64>,
    pub var_x: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub mean_p2: Vec<f64>,
    pub var_p: Vec<f64>,
    /// `var_x · var_p` per axis.
    pub product: Vec<f64>,
    /// `⟨Q⟩ = ∫Q|ψ|² dV`.
    pub mean_q: f64,
    /// Contribution `(ħ²/2) g_a ∫(∂_a A)² dV` of each axis to `⟨Q⟩`.
    pub q_by_axis: Vec<f64>,
    /// `⟨p²⟩` from the wavenumber-space second moment (periodic grids only).
    pub mean_p2_spectral: Option<Vec<f64>>,
}

pub fn moments(psi: &ComplexField, metric: &Metric) -> Result<MomentReport> {
    if !psi.is_normalized() {
        return Err(Error::NotNormalized { norm: psi.norm_sqr() });
    }
    let grid = psi.grid();
    let calc = PsiCalculus::new(psi, metric)?;
    let w = grid.weights();
    let hbar = metric.hbar();
    let dim = grid.dim();
    let rho = psi.density();
    let mut r = MomentReport {
        time: psi.time(),
        mean_x: vec![0.0; dim],
        mean_x2: vec![0.0; dim],
        var_x: vec![0.0; dim],
        mean_p: vec![0.0; dim],
        mean_p2: vec![0.0; dim],
        var_p: vec![0.0; dim],
        product: vec![0.0; dim],
        mean_q: 0.0,
        q_by_axis: vec![0.0; dim],
        mean_p2_spectral: None,
    };
    for a in 0..dim {
        let mut mx = 0.0;
        let mut mx2 = 0.0;
        let mut mp = 0.0;
        let mut mp2 = 0.0;
        let mut qa = 0.0;
        for i in 0..grid.len() {
            let x = grid.node(i)[a];
            let z = psi.values()[i];
            let dz = calc.d1[a][i];
            mx += w[i] * rho[i] * x;
            mx2 += w[i] * rho[i] * x * x;
            mp += w[i] * hbar * (z.conj() * dz).im;
            mp2 += w[i] * hbar * hbar * dz.norm_sqr();
            qa += w[i] * calc.grad_a_sq_axis(a, i);
        }
        r.mean_x[a] = mx;
        r.mean_x2[a] = mx2;
        r.var_x[a] = (mx2 - mx * mx).max(0.0);
        r.mean_p[a] = mp;
        r.mean_p2[a] = mp2;
        r.var_p[a] = (mp2 - mp * mp).max(0.0);
        r.product[a] = r.var_x[a] * r.var_p[a];
        r.q_by_axis[a] = 0.5 * hbar * hbar * metric.g(a) * qa;
    }
    r.mean_q = r.q_by_axis.iter().sum();
    if grid.is_periodic() {
        let mut spec = psi.values().to_vec();
        fft::forward(&mut spec, grid);
        let scale = grid.cell_volume() / grid.len() as f64;
        r.mean_p2_spectral = Some(
            (0..dim)
                .map(|a| {
                    let k = fft::wavenumber_field(grid, a);
                    scale * hbar * hbar * spec.iter().zip(&k).map(|(z, k)| k * k * z.norm_sqr()).sum::<f64>()
                })
                .collect(),
        );
    }
    Ok(r)
}

/// How the identity `var_p = 2m⟨Q⟩` was treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityStatus {
    /// Real state: the identity is asserted.
    Asserted,
    /// Complex state: the gap is reported only.
    Reported,
    /// Not localized (plane-wave-like): neither identity nor inequality is asserted.
    NonNormalizableLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyReport {
    pub moments: MomentReport,
    /// `var_p − 2m⟨Q⟩` per axis.
    pub gap: Vec<f64>,
    /// `var_x · 2m⟨Q⟩` per axis.
    pub product_q: Vec<f64>,
    /// `ħ²/4`.
    pub floor: f64,
    /// `max |∇S|` over unmasked nodes.
    pub max_grad_s: f64,
    pub real_state: bool,
    pub localized: bool,
    pub status: IdentityStatus,
    /// Whether the identity holds; `None` unless asserted.
    pub identity_holds: Option<bool>,
    /// Whether both products clear the floor; `None` for non-localized states.
    pub inequality_holds: Option<bool>,
}

impl UncertaintyReport {
    /// False only when an asserted check failed.
    pub fn passed(&self) -> bool {
        self.identity_holds.unwrap_or(true) && self.inequality_holds.unwrap_or(true)
    }
}

/// Compare `var_p` with `2m⟨Q⟩` and both products with `ħ²/4`.
pub fn uncertainty_identity(psi: &ComplexField, metric: &Metric) -> Result<UncertaintyReport> {
    let m = moments(psi, metric)?;
    let grid = psi.grid();
    let calc = PsiCalculus::new(psi, metric)?;
    let dim = grid.dim();
    let max_grad_s = (0..grid.len())
        .filter(|&i| !calc.mask[i])
        .flat_map(|i| (0..dim).map(move |a| (a, i)))
        .map(|(a, i)| calc.grad_s(a, i).abs())
        .fold(0.0, f64::max);
    let real_state = max_grad_s <= REAL_STATE_TOL;
    let localized = if grid.is_periodic() {
        let rho = psi.density();
        let peak = rho.iter().copied().fold(0.0, f64::max);
        let edge = (0..grid.len())
            .filter(|&i| {
                let ij = grid.unravel(i);
                (0..dim).any(|a| ij[a] == 0 || ij[a] == grid.points(a) - 1)
            })
            .map(|i| rho[i])
            .fold(0.0, f64::max);
        edge <= LOCALIZED_EDGE * peak
    } else {
        true
    };
    let two_m_q: Vec<f64> = (0..dim).map(|a| 2.0 * metric.mass(a) * m.q_by_axis[a]).collect();
    let gap: Vec<f64> = (0..dim).map(|a| m.var_p[a] - two_m_q[a]).collect();
    let product_q: Vec<f64> = (0..dim).map(|a| m.var_x[a] * two_m_q[a]).collect();
    let hbar = metric.hbar();
    let floor = 0.25 * hbar * hbar;
    let status = if !localized {
        IdentityStatus::NonNormalizableLimit
    } else if real_state {
        IdentityStatus::Asserted
    } else {
        IdentityStatus::Reported
    };
    let identity_holds = (status == IdentityStatus::Asserted).then(|| gap.iter().all(|g| g.abs() <= IDENTITY_TOL));
    let inequality_holds = localized.then(|| {
        m.product
            .iter()
            .chain(&product_q)
            .all(|p| *p >= floor - IDENTITY_TOL)
    });
    Ok(UncertaintyReport {
        moments: m,
        gap,
        product_q,
        floor,
        max_grad_s,
        real_state,
        localized,
        status,
        identity_holds,
        inequality_holds,
    })
}

/// `e^{i p₀·q/ħ} ψ`.
pub fn boost(psi: &ComplexField, metric: &Metric, momentum: &[f64]) -> Result<ComplexField> {
    let grid = psi.grid();
    if momentum.len() != grid.dim() {
        return Err(Error::InvalidInput("boost momentum has the wrong dimension".into()));
    }
    let hbar = metric.hbar();
    let values = psi
        .values()
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let q = grid.node(i);
            let phase: f64 = momentum.iter().enumerate().map(|(a, p)| p * q[a]).sum::<f64>() / hbar;
            z * Complex64::from_polar(1.0, phase)
        })
        .collect();
    ComplexField::new(grid.clone(), values, psi.time())
}

/// `⟨p⟩` along `axis` from the derivative operator alone (no moments bookkeeping).
pub fn mean_momentum(psi: &ComplexField, metric: &Metric, axis: usize) -> Result<f64> {
    let grid = psi.grid();
    grid.check_axis(axis)?;
    let d = derivative(psi.values(), grid, axis, 1);
    let w = grid.weights();
    Ok(metric.hbar()
        * psi
            .values()
            .iter()
            .zip(&d)
            .zip(&w)
            .map(|((z, dz), w)| w * (z.conj() * dz).im)
            .sum::<f64>())
}
