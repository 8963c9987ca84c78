//! Amplitude/action decomposition, the quantum potential and the Bohm system.
//!
//! Every quantity involving derivatives of `S` or `A` is evaluated through
//! identities in `ψ` and its (spectral or finite-difference) derivatives:
//!
//! * `∂S = ħ Im(ψ̄∂ψ)/|ψ|²`
//! * `ΔS = ħ Im(Δψ/ψ − Σ g (∂ψ/ψ)²)`
//! * `ΔA/A = Re(Δψ/ψ) + Σ g (∂S)²/ħ²`
//!
//! so that `ψ`, which is smooth and periodic where the grid is, is the only
//! field ever differentiated spectrally. The unwrapped `S` itself is only
//! differentiated by the masked local stencils of [`crate::diff`].

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diff::{derivative, masked_derivative, masked_laplacian};
use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::field::{ComplexField, PolarField, RealField, Units};
use crate::grid::{Grid, Metric};
use crate::potential::Potential;

/// Split `ψ` into `A = |ψ|` and an unwrapped action `S`.
///
/// Unwrapping walks each connected unmasked component breadth-first from its
/// largest-amplitude node (the global maximum first), never stepping across
/// masked nodes or a periodic seam. `S` at the starting node is its principal
/// value in `(−πħ, πħ]`.
pub fn decompose(psi: &ComplexField, metric: &Metric) -> Result<PolarField> {
    let grid = psi.grid();
    metric.check_grid(grid)?;
    let hbar = metric.hbar();
    if psi.max_abs() == 0.0 {
        return Err(Error::AllMasked);
    }
    let values = psi.values();
    let mask = psi.node_mask();
    let amplitude: Vec<f64> = values.iter().map(|z| z.norm()).collect();
    let mut action: Vec<f64> = values.iter().map(|z| hbar * z.arg()).collect();

    let mut order: Vec<usize> = (0..grid.len()).filter(|&i| !mask[i]).collect();
    order.sort_by(|&a, &b| amplitude[b].total_cmp(&amplitude[a]).then(a.cmp(&b)));
    let mut seen = mask.clone();
    let mut queue = VecDeque::new();
    for &start in &order {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        while let Some(cur) = queue.pop_front() {
            for nb in grid.neighbors(cur) {
                if seen[nb] {
                    continue;
                }
                seen[nb] = true;
                let step = (values[nb] * values[cur].conj()).arg();
                action[nb] = action[cur] + hbar * step;
                queue.push_back(nb);
            }
        }
    }
    Ok(PolarField {
        grid: grid.clone(),
        amplitude,
        action,
        mask,
        hbar,
        time: psi.time(),
    })
}

/// `A·exp(iS/ħ)`.
pub fn recompose(polar: &PolarField) -> ComplexField {
    let values = polar
        .amplitude
        .iter()
        .zip(&polar.action)
        .map(|(a, s)| Complex64::from_polar(*a, s / polar.hbar))
        .collect();
    ComplexField::from_parts(polar.grid.clone(), values, polar.time)
}

/// Which nodes enter a residual norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Region {
    #[default]
    All,
    /// Smallest set of highest-density nodes holding this fraction of the probability.
    Mass(f64),
    /// Nodes with `|q_i| ≤ r` on every axis.
    Within(f64),
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Region::Mass(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::InvalidInput(format!("mass fraction must lie in (0, 1], got {f}")))
            }
            Region::Within(r) if !(r > 0.0 && r.is_finite()) => {
                Err(Error::InvalidInput(format!("region radius must be positive, got {r}")))
            }
            _ => Ok(()),
        }
    }

    /// Nodes selected on `grid` for the density `psi`.
    pub fn select(&self, psi: &ComplexField) -> Vec<bool> {
        let grid = psi.grid();
        match *self {
            Region::All => vec![true; grid.len()],
            Region::Within(r) => (0..grid.len())
                .map(|i| {
                    let q = grid.node(i);
                    (0..grid.dim()).all(|a| q[a].abs() <= r)
                })
                .collect(),
            Region::Mass(frac) => mass_region(psi, frac),
        }
    }
}

/// Highest-density node set reaching `frac` of the total probability.
pub fn mass_region(psi: &ComplexField, frac: f64) -> Vec<bool> {
    let grid = psi.grid();
    let w = grid.weights();
    let p = psi.density();
    let total: f64 = p.iter().zip(&w).map(|(p, w)| p * w).sum();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut keep = vec![false; grid.len()];
    let mut acc = 0.0;
    for i in order {
        if acc >= frac * total {
            break;
        }
        keep[i] = true;
        acc += p[i] * w[i];
    }
    keep
}

/// Norms of a pointwise residual over the nodes where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    /// `sqrt(∫ r² dV)` over evaluated nodes (root-mean-square over time for series).
    pub l2: f64,
    pub linf: f64,
    /// Share of grid nodes excluded by the node mask.
    pub masked_fraction: f64,
    /// Evaluation times and the sup norm at each.
    pub times: Vec<f64>,
    pub linf_by_time: Vec<f64>,
}

impl ResidualReport {
    fn accumulate(name: &str) -> ReportBuilder {
        ReportBuilder {
            name: name.to_string(),
            sq: 0.0,
            linf: 0.0,
            masked: 0.0,
            times: Vec::new(),
            linf_by_time: Vec::new(),
        }
    }

    /// Report of one field of values (`None` on excluded nodes).
    pub fn from_values(name: &str, grid: &Grid, values: &[Option<f64>], node_mask: &[bool], time: f64) -> Self {
        let mut b = Self::accumulate(name);
        b.add(grid, values, node_mask, time);
        b.finish()
    }
}

struct ReportBuilder {
    name: String,
    sq: f64,
    linf: f64,
    masked: f64,
    times: Vec<f64>,
    linf_by_time: Vec<f64>,
}

impl ReportBuilder {
    fn add(&mut self, grid: &Grid, values: &[Option<f64>], node_mask: &[bool], time: f64) {
        let w = grid.weights();
        let mut sup = 0.0f64;
        for (i, v) in values.iter().enumerate() {
            if let Some(r) = v {
                self.sq += w[i] * r * r;
                sup = sup.max(r.abs());
            }
        }
        self.linf = self.linf.max(sup);
        self.masked += node_mask.iter().filter(|m| **m).count() as f64 / node_mask.len() as f64;
        self.times.push(time);
        self.linf_by_time.push(sup);
    }

    fn finish(self) -> ResidualReport {
        let n = self.times.len().max(1) as f64;
        ResidualReport {
            name: self.name,
            l2: (self.sq / n).sqrt(),
            linf: self.linf,
            masked_fraction: self.masked / n,
            times: self.times,
            linf_by_time: self.linf_by_time,
        }
    }
}

/// `ψ` with its first and second derivatives along every axis.
pub(crate) struct PsiCalculus<'a> {
    pub grid: &'a Grid,
    pub metric: &'a Metric,
    pub psi: &'a [Complex64],
    pub mask: Vec<bool>,
    pub d1: Vec<Vec<Complex64>>,
    pub d2: Vec<Vec<Complex64>>,
}

impl<'a> PsiCalculus<'a> {
    pub fn new(field: &'a ComplexField, metric: &'a Metric) -> Result<Self> {
        let grid = field.grid();
        metric.check_grid(grid)?;
        if field.max_abs() == 0.0 {
            return Err(Error::AllMasked);
        }
        let psi = field.values();
        let d1 = (0..grid.dim()).map(|a| derivative(psi, grid, a, 1)).collect();
        let d2 = (0..grid.dim()).map(|a| derivative(psi, grid, a, 2)).collect();
        let mut mask = field.node_mask();
        for (i, m) in mask.iter_mut().enumerate() {
            *m |= grid.is_wall(i);
        }
        Ok(Self {
            grid,
            metric,
            psi,
            mask,
            d1,
            d2,
        })
    }

    fn hbar(&self) -> f64 {
        self.metric.hbar()
    }

    pub fn density(&self, i: usize) -> f64 {
        self.psi[i].norm_sqr()
    }

    /// `∂ψ/ψ` along `a`.
    pub fn log_derivative(&self, a: usize, i: usize) -> Complex64 {
        self.d1[a][i] / self.psi[i]
    }

    pub fn grad_s(&self, a: usize, i: usize) -> f64 {
        self.hbar() * (self.psi[i].conj() * self.d1[a][i]).im / self.density(i)
    }

    /// `ΔS` with the metric weights.
    pub fn lap_s(&self, i: usize) -> f64 {
        let z: Complex64 = (0..self.grid.dim())
            .map(|a| {
                let r = self.log_derivative(a, i);
                (self.d2[a][i] / self.psi[i] - r * r) * self.metric.g(a)
            })
            .sum();
        self.hbar() * z.im
    }

    /// `ΔA/A` with the metric weights.
    pub fn lap_a_over_a(&self, i: usize) -> f64 {
        let h = self.hbar();
        (0..self.grid.dim())
            .map(|a| {
                let s = self.grad_s(a, i) / h;
                self.metric.g(a) * ((self.d2[a][i] / self.psi[i]).re + s * s)
            })
            .sum()
    }

    pub fn quantum_potential(&self, i: usize) -> f64 {
        let h = self.hbar();
        -0.5 * h * h * self.lap_a_over_a(i)
    }

    /// `½ Σ g (∂S)²`
    pub fn kinetic(&self, i: usize) -> f64 {
        0.5 * (0..self.grid.dim())
            .map(|a| self.metric.g(a) * self.grad_s(a, i).powi(2))
            .sum::<f64>()
    }

    /// `∇·j = ħ Σ g Im(ψ̄∂²ψ)`.
    pub fn div_current(&self, i: usize) -> f64 {
        self.hbar()
            * (0..self.grid.dim())
                .map(|a| self.metric.g(a) * (self.psi[i].conj() * self.d2[a][i]).im)
                .sum::<f64>()
    }

    pub fn grad_p(&self, a: usize, i: usize) -> f64 {
        2.0 * (self.psi[i].conj() * self.d1[a][i]).re
    }

    /// `ΔP = Σ g (2Re(ψ̄∂²ψ) + 2|∂ψ|²)`.
    pub fn lap_p(&self, i: usize) -> f64 {
        (0..self.grid.dim())
            .map(|a| self.metric.g(a) * 2.0 * ((self.psi[i].conj() * self.d2[a][i]).re + self.d1[a][i].norm_sqr()))
            .sum()
    }

    /// `(∂_a A)²`: `Re(ψ̄∂ψ)²/|ψ|²` off-mask, `|∂ψ|²` on masked nodes.
    pub fn grad_a_sq_axis(&self, a: usize, i: usize) -> f64 {
        if self.mask[i] {
            self.d1[a][i].norm_sqr()
        } else {
            (self.psi[i].conj() * self.d1[a][i]).re.powi(2) / self.density(i)
        }
    }

    /// `Σ g (∂A)²`.
    pub fn grad_a_sq(&self, i: usize) -> f64 {
        (0..self.grid.dim())
            .map(|a| self.metric.g(a) * self.grad_a_sq_axis(a, i))
            .sum()
    }
}

/// `Q = −(ħ²/2) Σ g ∂²A/∂q² / A` off-mask.
pub fn quantum_potential(polar: &PolarField, metric: &Metric) -> Result<RealField> {
    let psi = recompose(polar);
    quantum_potential_psi(&psi, metric)
}

/// [`quantum_potential`] evaluated directly from `ψ`.
pub fn quantum_potential_psi(psi: &ComplexField, metric: &Metric) -> Result<RealField> {
    let calc = PsiCalculus::new(psi, metric)?;
    if calc.mask.iter().all(|m| *m) {
        return Err(Error::AllMasked);
    }
    let q = (0..psi.grid().len())
        .map(|i| if calc.mask[i] { 0.0 } else { calc.quantum_potential(i) })
        .collect();
    RealField::masked(psi.grid().clone(), q, Units::Energy, calc.mask.clone())
}

/// Velocity field `v_i = g_ii ∂S/∂q_i` per axis, masked at nodes.
pub fn bohm_velocity(polar: &PolarField, metric: &Metric) -> Result<Vec<RealField>> {
    let psi = recompose(polar);
    let calc = PsiCalculus::new(&psi, metric)?;
    if calc.mask.iter().all(|m| *m) {
        return Err(Error::AllMasked);
    }
    (0..psi.grid().dim())
        .map(|a| {
            let v = (0..psi.grid().len())
                .map(|i| if calc.mask[i] { 0.0 } else { metric.g(a) * calc.grad_s(a, i) })
                .collect();
            RealField::masked(psi.grid().clone(), v, Units::Velocity, calc.mask.clone())
        })
        .collect()
}

fn require_slices(series: &TimeSeries) -> Result<()> {
    if series.len() < 3 {
        return Err(Error::TooFewSlices {
            needed: 3,
            got: series.len(),
        });
    }
    Ok(())
}

/// `∂S/∂t` at slice `k` by centred differencing of the phase, unwrapped in time.
fn phase_rate(series: &TimeSeries, k: usize, i: usize, hbar: f64) -> f64 {
    let f = series.frames();
    let dt = series.interval();
    hbar * (f[k + 1].values()[i] * f[k - 1].values()[i].conj()).arg() / (2.0 * dt)
}

/// Nodes masked at any of slices `k−1, k, k+1`.
fn joint_mask(series: &TimeSeries, k: usize, base: &[bool]) -> Vec<bool> {
    let f = series.frames();
    let before = f[k - 1].node_mask();
    let after = f[k + 1].node_mask();
    base.iter()
        .zip(before.iter().zip(&after))
        .map(|(a, (b, c))| *a || *b || *c)
        .collect()
}

/// Continuity checks in both forms plus the amplitude transport condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// `∂P/∂t + ∇·(P g∇S)`
    pub full: ResidualReport,
    /// `∂P/∂t + g∇P·∇S`
    pub reduced: ResidualReport,
    /// `∂A/∂t + g∇A·∇S`
    pub amplitude_transport: ResidualReport,
    /// Sup over off-mask nodes of `|(full − reduced) − P Σg ∂²S|`.
    pub identity_gap: f64,
    /// Sup of `|P Σg ∂²S|`, the size of the term dropped by the reduced form.
    pub divergence_term: f64,
}

/// Continuity residuals at the interior stored times of `series`.
pub fn continuity_residual(series: &TimeSeries, metric: &Metric, region: Region) -> Result<ContinuityReport> {
    require_slices(series)?;
    region.validate()?;
    let grid = series.grid();
    let frames = series.frames();
    let dt = series.interval();
    let mut full = ResidualReport::accumulate("continuity_full");
    let mut reduced = ResidualReport::accumulate("continuity_reduced");
    let mut transport = ResidualReport::accumulate("amplitude_transport");
    let mut identity_gap = 0.0f64;
    let mut divergence_term = 0.0f64;
    for k in 1..series.len() - 1 {
        let calc = PsiCalculus::new(&frames[k], metric)?;
        let mask = joint_mask(series, k, &calc.mask);
        let keep = region.select(&frames[k]);
        let mut rf = vec![None; grid.len()];
        let mut rr = vec![None; grid.len()];
        let mut ra = vec![None; grid.len()];
        for i in 0..grid.len() {
            if grid.is_wall(i) || !keep[i] {
                continue;
            }
            let pp = frames[k + 1].values()[i].norm_sqr();
            let pm = frames[k - 1].values()[i].norm_sqr();
            let dp_dt = (pp - pm) / (2.0 * dt);
            let f = dp_dt + calc.div_current(i);
            rf[i] = Some(f);
            if mask[i] {
                continue;
            }
            let transport_term: f64 = (0..grid.dim())
                .map(|a| metric.g(a) * calc.grad_p(a, i) * calc.grad_s(a, i))
                .sum();
            let r = dp_dt + transport_term;
            rr[i] = Some(r);
            let p_lap_s = calc.density(i) * calc.lap_s(i);
            identity_gap = identity_gap.max(((f - r) - p_lap_s).abs());
            divergence_term = divergence_term.max(p_lap_s.abs());
            let da_dt = (pp.sqrt() - pm.sqrt()) / (2.0 * dt);
            let a = calc.density(i).sqrt();
            ra[i] = Some(da_dt + 0.5 * transport_term / a);
        }
        let t = frames[k].time();
        full.add(grid, &rf, &mask, t);
        reduced.add(grid, &rr, &mask, t);
        transport.add(grid, &ra, &mask, t);
    }
    Ok(ContinuityReport {
        full: full.finish(),
        reduced: reduced.finish(),
        amplitude_transport: transport.finish(),
        identity_gap,
        divergence_term,
    })
}

/// Quantum Hamilton–Jacobi residual in amplitude and density forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QhjReport {
    /// `∂S/∂t + ½g(∇S)² + U + Q` with `Q` from `ΔA/A`.
    pub amplitude_form: ResidualReport,
    /// The same with `Q = −(ħ²/4)Σg[∂²P/P − ½(∂P)²/P²]`.
    pub density_form: ResidualReport,
    /// Sup of the difference between the two expressions for `Q`.
    pub form_gap: f64,
}

pub fn qhj_residual(series: &TimeSeries, potential: &Potential, metric: &Metric, region: Region) -> Result<QhjReport> {
    require_slices(series)?;
    region.validate()?;
    let grid = series.grid();
    let frames = series.frames();
    let hbar = metric.hbar();
    let mut amp = ResidualReport::accumulate("qhj_amplitude");
    let mut dens = ResidualReport::accumulate("qhj_density");
    let mut form_gap = 0.0f64;
    for k in 1..series.len() - 1 {
        let calc = PsiCalculus::new(&frames[k], metric)?;
        let mask = joint_mask(series, k, &calc.mask);
        let keep = region.select(&frames[k]);
        let u = potential.sample(grid, frames[k].time(), metric)?;
        let mut ra = vec![None; grid.len()];
        let mut rd = vec![None; grid.len()];
        for i in 0..grid.len() {
            if mask[i] || !keep[i] {
                continue;
            }
            let base = phase_rate(series, k, i, hbar) + calc.kinetic(i) + u[i];
            let qa = calc.quantum_potential(i);
            let p = calc.density(i);
            let grad_p_sq: f64 = (0..grid.dim())
                .map(|a| metric.g(a) * calc.grad_p(a, i).powi(2))
                .sum();
            let qd = -0.25 * hbar * hbar * (calc.lap_p(i) / p - 0.5 * grad_p_sq / (p * p));
            ra[i] = Some(base + qa);
            rd[i] = Some(base + qd);
            form_gap = form_gap.max((qa - qd).abs());
        }
        let t = frames[k].time();
        amp.add(grid, &ra, &mask, t);
        dens.add(grid, &rd, &mask, t);
    }
    Ok(QhjReport {
        amplitude_form: amp.finish(),
        density_form: dens.finish(),
        form_gap,
    })
}

/// `Q` recovered from the energy balance at one interior stored time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBalance {
    pub time: f64,
    /// `Q = −∂S/∂t − U − ½Σg(∂S)²`, masked at nodes.
    pub q: RealField,
    /// `½Σg(∂S)²` minus its expression through `ψ` and `A` derivatives
    /// (with the cross term `(i/k)(1/A)Σg∂A∂S`).
    pub kinetic_identity: ResidualReport,
    /// The same identity with the cross term written as `ik/(2k²A²)Σg∂A∂S`.
    pub kinetic_identity_as_printed: ResidualReport,
}

pub fn q_from_energy_balance(series: &TimeSeries, potential: &Potential, metric: &Metric) -> Result<Vec<EnergyBalance>> {
    require_slices(series)?;
    let grid = series.grid();
    let frames = series.frames();
    let hbar = metric.hbar();
    let k_wave = 1.0 / hbar;
    let i_unit = Complex64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(series.len() - 2);
    for k in 1..series.len() - 1 {
        let calc = PsiCalculus::new(&frames[k], metric)?;
        let mask = joint_mask(series, k, &calc.mask);
        let u = potential.sample(grid, frames[k].time(), metric)?;
        let mut q = vec![0.0; grid.len()];
        let mut id = vec![None; grid.len()];
        let mut id_printed = vec![None; grid.len()];
        for i in 0..grid.len() {
            if mask[i] {
                continue;
            }
            let t_kin = calc.kinetic(i);
            q[i] = -phase_rate(series, k, i, hbar) - u[i] - t_kin;
            let a = calc.density(i).sqrt();
            let mut psi_term = Complex64::new(0.0, 0.0);
            let mut a_term = 0.0;
            let mut cross = 0.0;
            for ax in 0..grid.dim() {
                let g = metric.g(ax);
                let r = calc.log_derivative(ax, i);
                let da = r.re * a;
                psi_term += r * r * g;
                a_term += g * da * da;
                cross += g * da * calc.grad_s(ax, i);
            }
            let common = -psi_term / (2.0 * k_wave * k_wave) + a_term / (2.0 * k_wave * k_wave * a * a);
            let rhs = common + i_unit / k_wave * cross / a;
            let rhs_printed = common + i_unit * k_wave / (2.0 * k_wave * k_wave * a * a) * cross;
            id[i] = Some((rhs - t_kin).norm());
            id_printed[i] = Some((rhs_printed - t_kin).norm());
        }
        let time = frames[k].time();
        out.push(EnergyBalance {
            time,
            q: RealField::masked(grid.clone(), q, Units::Energy, mask.clone())?,
            kinetic_identity: ResidualReport::from_values("kinetic_identity", grid, &id, &mask, time),
            kinetic_identity_as_printed: ResidualReport::from_values(
                "kinetic_identity_as_printed",
                grid,
                &id_printed,
                &mask,
                time,
            ),
        });
    }
    Ok(out)
}

/// `J = ∫Q|ψ|² dV`, evaluated as `(ħ²/2) Σ g ∫(∂A)² dV`.
pub fn perturbation_action(psi: &ComplexField, metric: &Metric) -> Result<f64> {
    if !psi.is_normalized() {
        return Err(Error::NotNormalized { norm: psi.norm_sqr() });
    }
    let calc = PsiCalculus::new(psi, metric)?;
    let w = psi.grid().weights();
    let h = metric.hbar();
    Ok(0.5 * h * h * (0..psi.grid().len()).map(|i| w[i] * calc.grad_a_sq(i)).sum::<f64>())
}

/// Trial families for the perturbation-action sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialFamily {
    /// Real Gaussians of position variance `σ²` (the swept parameter) centred at `center`.
    GaussianVariance { center: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: f64,
    pub j: f64,
    /// Closed form where the family has one.
    pub analytic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub max_abs_error: Option<f64>,
    /// Parameters between which the finite-difference slope `dJ/dθ` changes sign.
    pub stationary_brackets: Vec<(f64, f64)>,
}

/// Evaluate `J` over a one-parameter trial family (1D grids).
pub fn perturbation_action_sweep(
    family: &TrialFamily,
    parameters: &[f64],
    grid: &Grid,
    metric: &Metric,
) -> Result<SweepReport> {
    metric.check_grid(grid)?;
    if grid.dim() != 1 {
        return Err(Error::InvalidInput("trial families are one-dimensional".into()));
    }
    let mut points = Vec::with_capacity(parameters.len());
    for &s2 in parameters {
        let TrialFamily::GaussianVariance { center } = family;
        let psi = crate::wavefunctions::free_gaussian(grid, metric, &[*center], &[s2], &[0.0], 0.0)?.normalized()?;
        let j = perturbation_action(&psi, metric)?;
        let h = metric.hbar();
        points.push(SweepPoint {
            parameter: s2,
            j,
            analytic: Some(h * h * metric.g(0) / (8.0 * s2)),
        });
    }
    let max_abs_error = points
        .iter()
        .filter_map(|p| p.analytic.map(|a| (a - p.j).abs()))
        .reduce(f64::max);
    let slopes: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1].j - w[0].j) / (w[1].parameter - w[0].parameter))
        .collect();
    let stationary_brackets = slopes
        .windows(2)
        .zip(points.windows(3))
        .filter(|(s, _)| s[0].signum() != s[1].signum())
        .map(|(_, p)| (p[0].parameter, p[2].parameter))
        .collect();
    Ok(SweepReport {
        points,
        max_abs_error,
        stationary_brackets,
    })
}

/// Evaluation of `Σ∂_i[g((1/ψ)∂ψ − (1/A)∂A)]` and its relation to `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChetaevPsiReport {
    /// Magnitude of the expression over the nodes where it could be evaluated.
    pub residual: ResidualReport,
    /// Sup of `|expression − (i/ħ)L|`, with `L` the masked Laplacian of the decomposed `S`.
    pub identity_residual: f64,
    pub expression: Vec<Option<Complex64>>,
    pub l: RealField,
}

pub fn chetaev_condition_psi(psi: &ComplexField, metric: &Metric) -> Result<ChetaevPsiReport> {
    let grid = psi.grid();
    let polar = decompose(psi, metric)?;
    let mut mask = polar.mask.clone();
    for (i, m) in mask.iter_mut().enumerate() {
        *m |= grid.is_wall(i);
    }
    if mask.iter().all(|m| *m) {
        return Err(Error::AllMasked);
    }
    // (1/ψ)∂ψ and (1/A)∂A as derivatives of ln ψ = ln A + iS/ħ and ln A
    let hbar = metric.hbar();
    let ln_a: Vec<f64> = polar.amplitude.iter().map(|a| if *a > 0.0 { a.ln() } else { 0.0 }).collect();
    let ln_psi: Vec<Complex64> = ln_a
        .iter()
        .zip(&polar.action)
        .map(|(l, s)| Complex64::new(*l, s / hbar))
        .collect();
    let mut expression: Vec<Option<Complex64>> = vec![Some(Complex64::new(0.0, 0.0)); grid.len()];
    for a in 0..grid.dim() {
        let d_psi = masked_derivative(&ln_psi, &mask, grid, a, 1);
        let d_a = masked_derivative(&ln_a, &mask, grid, a, 1);
        let w: Vec<Complex64> = d_psi
            .iter()
            .zip(&d_a)
            .map(|(p, q)| match (p, q) {
                (Some(p), Some(q)) => (p - q) * metric.g(a),
                _ => Complex64::new(0.0, 0.0),
            })
            .collect();
        let w_mask: Vec<bool> = d_psi.iter().map(|p| p.is_none()).collect();
        let dw = masked_derivative(&w, &w_mask, grid, a, 1);
        for (e, d) in expression.iter_mut().zip(dw) {
            *e = match (*e, d) {
                (Some(x), Some(y)) => Some(x + y),
                _ => None,
            };
        }
    }
    let l_vals = masked_laplacian(&polar.action, &mask, grid, metric);
    let i_over_hbar = Complex64::new(0.0, 1.0 / metric.hbar());
    let mut identity_residual = 0.0f64;
    for (e, l) in expression.iter_mut().zip(&l_vals) {
        match (*e, l) {
            (Some(x), Some(l)) => identity_residual = identity_residual.max((x - i_over_hbar * *l).norm()),
            _ => *e = None,
        }
    }
    let mags: Vec<Option<f64>> = expression.iter().map(|e| e.map(|z| z.norm())).collect();
    let l_mask: Vec<bool> = l_vals.iter().map(|v| v.is_none()).collect();
    let l = RealField::masked(
        grid.clone(),
        l_vals.iter().map(|v| v.unwrap_or(0.0)).collect(),
        Units::InverseTime,
        l_mask,
    )?;
    Ok(ChetaevPsiReport {
        residual: ResidualReport::from_values("chetaev_psi", grid, &mags, &mask, psi.time()),
        identity_residual,
        expression,
        l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, EvolverConfig, Scheme};
    use crate::grid::Boundary;
    use crate::wavefunctions::{coherent_state, free_gaussian, lattice_momentum, oscillator_eigenstate, plane_wave};
    use std::f64::consts::PI;

    fn line(n: usize, l: f64) -> Grid {
        Grid::line(-l, l, n, Boundary::Periodic).unwrap()
    }

    #[test]
    fn plane_wave_action_is_linear() {
        let g = Grid::line(0.0, 2.0 * PI, 64, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi = plane_wave(&g, &m, &[3.0], 0.0).unwrap();
        let p = decompose(&psi, &m).unwrap();
        let a0 = p.amplitude()[0];
        assert!(p.amplitude().iter().all(|a| (a - a0).abs() < 1e-14));
        for w in p.action().windows(2) {
            assert!((w[1] - w[0] - 3.0 * g.spacing(0)).abs() < 1e-12);
        }
        let q = quantum_potential(&p, &m).unwrap();
        assert!(q.iter_valid().all(|(_, v)| v.abs() < 1e-9));
        let v = bohm_velocity(&p, &m).unwrap();
        assert!(v[0].iter_valid().all(|(_, v)| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn excited_state_masks_its_node() {
        let g = Grid::line(-8.0, 8.0, 129, Boundary::Box).unwrap();
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[1], 0.0).unwrap();
        let p = decompose(&psi, &m).unwrap();
        assert!(p.mask()[64]);
        let back = recompose(&p);
        for i in 0..g.len() {
            if !p.mask()[i] {
                let z = psi.values()[i];
                assert!((back.values()[i] - z).norm() <= 1e-10 * z.norm());
            }
        }
    }

    #[test]
    fn zero_field_is_all_masked() {
        let g = line(32, 5.0);
        let m = Metric::natural(1);
        assert_eq!(decompose(&ComplexField::zeros(&g, 0.0), &m), Err(Error::AllMasked));
    }

    #[test]
    fn ground_state_energy_balance() {
        let g = line(256, 12.0);
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap();
        let q = quantum_potential_psi(&psi, &m).unwrap();
        for (i, v) in q.iter_valid() {
            let x = g.node(i)[0];
            if x.abs() <= 4.0 {
                assert!((v + 0.5 * x * x - 0.5).abs() < 1e-5, "x = {x}");
            }
        }
        assert!((perturbation_action(&psi, &m).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn gaussian_mean_quantum_potential() {
        let g = line(512, 20.0);
        let m = Metric::natural(1);
        for s2 in [0.25, 0.5, 2.0, 4.0] {
            let psi = free_gaussian(&g, &m, &[0.0], &[s2], &[0.0], 0.0).unwrap();
            let j = perturbation_action(&psi, &m).unwrap();
            assert!((j - 1.0 / (8.0 * s2)).abs() < 1e-8, "σ² = {s2}: {j}");
            let q = quantum_potential_psi(&psi, &m).unwrap();
            let w = g.weights();
            let mean: f64 = q.iter_valid().map(|(i, v)| v * psi.values()[i].norm_sqr() * w[i]).sum();
            assert!((mean - j).abs() < 1e-6);
        }
    }

    #[test]
    fn perturbation_action_rejects_unnormalized() {
        let g = line(64, 8.0);
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap().scale(Complex64::new(1.1, 0.0));
        assert!(matches!(perturbation_action(&psi, &m), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn coherent_state_velocity_is_uniform() {
        let g = line(256, 12.0);
        let m = Metric::natural(1);
        let t = 1.1;
        let psi = coherent_state(&g, &m, 1.0, &[2.0], t).unwrap();
        let v = bohm_velocity(&decompose(&psi, &m).unwrap(), &m).unwrap();
        let want = -2.0 * t.sin();
        for (i, vi) in v[0].iter_valid() {
            if g.node(i)[0].abs() < 6.0 {
                assert!((vi - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn series_checks_need_three_slices() {
        let g = line(64, 8.0);
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap();
        let s = TimeSeries::new(vec![psi.clone(), psi.with_time(0.1)]).unwrap();
        assert!(matches!(
            continuity_residual(&s, &m, Region::All),
            Err(Error::TooFewSlices { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn stationary_state_residuals_vanish() {
        let g = line(256, 12.0);
        let m = Metric::natural(1);
        let u = Potential::harmonic(1.0).unwrap();
        let frames = (0..5)
            .map(|k| oscillator_eigenstate(&g, &m, 1.0, &[0], 0.1 * k as f64).unwrap())
            .collect();
        let s = TimeSeries::new(frames).unwrap();
        let c = continuity_residual(&s, &m, Region::All).unwrap();
        assert!(c.full.linf < 1e-6 && c.reduced.linf < 1e-6);
        let q = qhj_residual(&s, &u, &m, Region::Within(4.0)).unwrap();
        assert!(q.amplitude_form.linf < 1e-5 && q.density_form.linf < 1e-5, "{q:?}");
        let eb = q_from_energy_balance(&s, &u, &m).unwrap();
        let qp = quantum_potential_psi(&s.frames()[1], &m).unwrap();
        for (i, v) in eb[0].q.iter_valid() {
            if g.node(i)[0].abs() <= 4.0 {
                assert!((v - qp.values()[i]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn plane_wave_qhj_and_identity() {
        let g = Grid::line(0.0, 2.0 * PI, 64, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let p = lattice_momentum(&g, &m, 0, 2.0);
        let frames = (0..3).map(|k| plane_wave(&g, &m, &[p], 0.05 * k as f64).unwrap()).collect();
        let s = TimeSeries::new(frames).unwrap();
        let q = qhj_residual(&s, &Potential::free(), &m, Region::All).unwrap();
        assert!(q.amplitude_form.linf < 1e-8);
        let eb = q_from_energy_balance(&s, &Potential::free(), &m).unwrap();
        assert!(eb[0].q.iter_valid().all(|(_, v)| v.abs() < 1e-8));
        assert!(eb[0].kinetic_identity.linf < 1e-8);
        let c = chetaev_condition_psi(&s.frames()[1], &m).unwrap();
        assert!(c.residual.linf < 1e-8 && c.identity_residual < 1e-8);
    }

    #[test]
    fn spreading_gaussian_drops_the_divergence_term() {
        let g = line(512, 30.0);
        let m = Metric::natural(1);
        let psi0 = free_gaussian(&g, &m, &[0.0], &[1.0], &[0.0], 0.0).unwrap();
        let cfg = EvolverConfig::new(0.002, Scheme::SplitStepSpectral, 2.0, 1).unwrap();
        let s = evolve(&psi0, &Potential::free(), &m, &cfg).unwrap();
        let c = continuity_residual(&s, &m, Region::All).unwrap();
        assert!(c.identity_gap < 1e-8 * c.divergence_term.max(1.0));
        assert!(c.reduced.linf > 100.0 * c.full.linf);
        assert!(c.full.linf < 1e-4 * c.divergence_term, "{} {}", c.full.linf, c.divergence_term);
        let t = s.frames()[500].time();
        let exact = free_gaussian(&g, &m, &[0.0], &[1.0], &[0.0], t).unwrap();
        let eq = chetaev_condition_psi(&exact, &m).unwrap();
        assert!(eq.identity_residual < 1e-10, "{}", eq.identity_residual);
        // S = x² t / (2(t² + τ²)) + …, τ = 2mσ₀²/ħ
        let want = t / (t * t + 4.0);
        for (i, l) in eq.l.iter_valid() {
            if g.node(i)[0].abs() < 8.0 {
                assert!((l - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sweep_matches_closed_form() {
        let g = line(1024, 40.0);
        let m = Metric::natural(1);
        let params: Vec<f64> = (0..9).map(|k| 0.25 * 2f64.powf(k as f64 / 2.0)).collect();
        let r = perturbation_action_sweep(&TrialFamily::GaussianVariance { center: 0.0 }, &params, &g, &m).unwrap();
        assert!(r.max_abs_error.unwrap() < 1e-5);
        assert!(r.stationary_brackets.is_empty());
    }

    #[test]
    fn mass_region_reaches_fraction() {
        let g = line(256, 10.0);
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap();
        let keep = mass_region(&psi, 0.8);
        let w = g.weights();
        let mass: f64 = (0..g.len()).filter(|&i| keep[i]).map(|i| w[i] * psi.values()[i].norm_sqr()).sum();
        assert!((0.8..0.85).contains(&mass));
        assert!(Region::Mass(1.5).validate().is_err());
    }
}
