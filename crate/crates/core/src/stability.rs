//! Classical Hamiltonian flow, its linearization along a trajectory, and
//! the stability indicators built from it.
//!
//! Exponents are reported in the modern convention `Λ = limsup (1/t) ln‖u‖`;
//! Lyapunov's characteristic numbers are `λ = −Λ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diff::masked_laplacian;
use crate::error::{Error, Result};
use crate::field::{ClassicalState, PolarField, RealField, Units, VariationalState};
use crate::grid::Metric;
use crate::potential::Potential;

/// `H(q, p) = ½ Σ g_ii p_i² + U(q, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSystem {
    metric: Metric,
    potential: Potential,
}

impl HamiltonianSystem {
    pub fn new(metric: Metric, potential: Potential) -> Result<Self> {
        if let Some(crate::potential::PotentialKind::Linear { force }) = potential.kind() {
            if force.len() != metric.dim() {
                return Err(Error::InvalidInput("linear force has the wrong dimension".into()));
            }
        }
        Ok(Self { metric, potential })
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn energy(&self, s: &ClassicalState) -> f64 {
        let kin: f64 = s.p.iter().enumerate().map(|(a, p)| 0.5 * self.metric.g(a) * p * p).sum();
        kin + self.potential.value(&s.q, s.t, &self.metric)
    }

    fn hessian(&self, q: &[f64; 2], t: f64) -> [[f64; 2]; 2] {
        self.potential.hessian(&q[..self.dim()], t, &self.metric)
    }

    fn gradient(&self, q: &[f64; 2], t: f64) -> [f64; 2] {
        self.potential.gradient(&q[..self.dim()], t, &self.metric)
    }

    fn check_state(&self, s: &ClassicalState) -> Result<()> {
        if s.dim() != self.dim() || !s.is_finite() {
            return Err(Error::InvalidInput(format!(
                "state of dimension {} does not fit a {}-dimensional system",
                s.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

// Forest–Ruth-like PEFRL coefficients (Omelyan, Mryglod, Folk).
const PEFRL_XI: f64 = 0.178_617_895_844_809_1;
const PEFRL_LAMBDA: f64 = -0.212_341_831_062_605_4;
const PEFRL_CHI: f64 = -0.066_264_582_669_818_49;
const DRIFTS: [f64; 5] = [
    PEFRL_XI,
    PEFRL_CHI,
    1.0 - 2.0 * (PEFRL_CHI + PEFRL_XI),
    PEFRL_CHI,
    PEFRL_XI,
];
const KICKS: [f64; 4] = [
    0.5 - PEFRL_LAMBDA,
    PEFRL_LAMBDA,
    PEFRL_LAMBDA,
    0.5 - PEFRL_LAMBDA,
];

/// Tangent vector `(ξ, η)` with Kahan compensation terms for its updates.
#[derive(Debug, Clone, Copy, Default)]
struct Tangent {
    xi: [f64; 2],
    eta: [f64; 2],
    c_xi: [f64; 2],
    c_eta: [f64; 2],
}

impl Tangent {
    fn new(v: &VariationalState) -> Self {
        let mut t = Self::default();
        t.xi[..v.dim()].copy_from_slice(&v.xi);
        t.eta[..v.dim()].copy_from_slice(&v.eta);
        t
    }

    fn components(&self) -> [f64; 4] {
        [self.xi[0], self.xi[1], self.eta[0], self.eta[1]]
    }

    fn norm(&self) -> f64 {
        self.components().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn dot(&self, other: &Tangent) -> f64 {
        self.components().iter().zip(other.components()).map(|(a, b)| a * b).sum()
    }

    /// `self −= c·other`, dropping compensation.
    fn subtract(&mut self, c: f64, other: &Tangent) {
        for a in 0..2 {
            self.xi[a] -= c * other.xi[a];
            self.eta[a] -= c * other.eta[a];
        }
        self.c_xi = [0.0; 2];
        self.c_eta = [0.0; 2];
    }

    fn scale(&mut self, s: f64) {
        for a in 0..2 {
            self.xi[a] *= s;
            self.eta[a] *= s;
        }
        self.c_xi = [0.0; 2];
        self.c_eta = [0.0; 2];
    }
}

fn kahan_add(x: &mut f64, c: &mut f64, inc: f64) {
    let y = inc - *c;
    let t = *x + y;
    *c = (t - *x) - y;
    *x = t;
}

/// One PEFRL step of the base point together with its exact tangent map
/// applied to every vector in `tangents`.
fn step(sys: &HamiltonianSystem, q: &mut [f64; 2], p: &mut [f64; 2], t: f64, dt: f64, tangents: &mut [Tangent]) {
    let n = sys.dim();
    let mut tau = t;
    for s in 0..5 {
        let c = DRIFTS[s] * dt;
        for a in 0..n {
            let g = sys.metric.g(a);
            q[a] += c * g * p[a];
            for v in tangents.iter_mut() {
                let inc = c * g * v.eta[a];
                kahan_add(&mut v.xi[a], &mut v.c_xi[a], inc);
            }
        }
        tau += c;
        if s < 4 {
            let d = KICKS[s] * dt;
            let grad = sys.gradient(q, tau);
            for a in 0..n {
                p[a] -= d * grad[a];
            }
            if !tangents.is_empty() {
                let h = sys.hessian(q, tau);
                for v in tangents.iter_mut() {
                    for a in 0..n {
                        let f: f64 = (0..n).map(|b| h[a][b] * v.xi[b]).sum();
                        kahan_add(&mut v.eta[a], &mut v.c_eta[a], -d * f);
                    }
                }
            }
        }
    }
}

/// A phase-space trajectory sampled at every integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<ClassicalState>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn energies(&self, sys: &HamiltonianSystem) -> Vec<f64> {
        self.states.iter().map(|s| sys.energy(s)).collect()
    }

    /// Largest `|H(t) − H(0)|`.
    pub fn energy_drift(&self, sys: &HamiltonianSystem) -> f64 {
        let e = self.energies(sys);
        e.iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max)
    }

    fn packed(&self, k: usize) -> ([f64; 2], [f64; 2]) {
        let s = &self.states[k];
        let mut q = [0.0; 2];
        let mut p = [0.0; 2];
        q[..s.dim()].copy_from_slice(&s.q);
        p[..s.dim()].copy_from_slice(&s.p);
        (q, p)
    }
}

fn whole_steps(span: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(span.is_finite() && span >= 0.0) {
        return Err(Error::InvalidInput(format!("t_final must not precede the initial time (span {span})")));
    }
    let steps = (span / dt).round();
    if (steps * dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::InvalidInput(format!("span {span} is not a whole number of steps {dt}")));
    }
    Ok(steps as usize)
}

/// Integrate Hamilton's equations with the fourth-order symplectic PEFRL scheme.
pub fn integrate_hamiltonian(sys: &HamiltonianSystem, s0: &ClassicalState, dt: f64, t_final: f64) -> Result<Trajectory> {
    sys.check_state(s0)?;
    let steps = whole_steps(t_final - s0.t, dt)?;
    let n = sys.dim();
    let mut q = [0.0; 2];
    let mut p = [0.0; 2];
    q[..n].copy_from_slice(&s0.q);
    p[..n].copy_from_slice(&s0.p);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(s0.clone());
    for k in 0..steps {
        let t = s0.t + k as f64 * dt;
        step(sys, &mut q, &mut p, t, dt, &mut []);
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        states.push(ClassicalState {
            q: q[..n].to_vec(),
            p: p[..n].to_vec(),
            t: s0.t + (k + 1) as f64 * dt,
        });
    }
    Ok(Trajectory { dt, states })
}

/// Solutions of the variational equations along a base trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalTrajectory {
    pub states: Vec<VariationalState>,
}

impl VariationalTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
}

fn check_start(base: &Trajectory, t: f64) -> Result<()> {
    let t0 = base.states.first().map(|s| s.t).ok_or(Error::TooFewSlices { needed: 1, got: 0 })?;
    if (t - t0).abs() > 1e-12 * t0.abs().max(1.0) {
        return Err(Error::TimeMismatch);
    }
    Ok(())
}

/// Propagate `(ξ, η)` with the tangent map of the integrator that produced `base`:
/// `dξ/dt = gη`, `dη/dt = −∇²U ξ`.
pub fn integrate_variational(
    sys: &HamiltonianSystem,
    base: &Trajectory,
    v0: &VariationalState,
) -> Result<VariationalTrajectory> {
    if v0.dim() != sys.dim() {
        return Err(Error::InvalidInput("variation dimension differs from the system".into()));
    }
    check_start(base, v0.t)?;
    let n = sys.dim();
    let mut tangent = [Tangent::new(v0)];
    let mut states = Vec::with_capacity(base.len());
    states.push(v0.clone());
    for k in 0..base.len() - 1 {
        let (mut q, mut p) = base.packed(k);
        step(sys, &mut q, &mut p, base.states[k].t, base.dt, &mut tangent);
        let Tangent { xi, eta, .. } = tangent[0];
        if xi.iter().chain(&eta).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        states.push(VariationalState {
            xi: xi[..n].to_vec(),
            eta: eta[..n].to_vec(),
            t: base.states[k + 1].t,
        });
    }
    Ok(VariationalTrajectory { states })
}

/// `Σ_s (ξ_s η′_s − η_s ξ′_s)`.
pub fn pairing(u: &VariationalState, v: &VariationalState) -> f64 {
    (0..u.dim()).map(|s| difference_of_products(u.xi[s], v.eta[s], u.eta[s], v.xi[s])).sum()
}

/// `ab − cd` with one rounding error (Kahan's fused-multiply-add form).
fn difference_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let cd = c * d;
    let err = (-c).mul_add(d, cd);
    a.mul_add(b, -cd) + err
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `max_t |C(t) − C(0)|`.
    pub drift: f64,
}

/// The bilinear invariant of two variational solutions over time.
pub fn poincare_invariant(u: &VariationalTrajectory, v: &VariationalTrajectory) -> Result<PoincareSeries> {
    if u.states.len() != v.states.len() || u.states.is_empty() {
        return Err(Error::TimeMismatch);
    }
    let mut times = Vec::with_capacity(u.states.len());
    let mut values = Vec::with_capacity(u.states.len());
    for (a, b) in u.states.iter().zip(&v.states) {
        if a.dim() != b.dim() {
            return Err(Error::InvalidInput("variations of different dimension".into()));
        }
        if (a.t - b.t).abs() > 1e-12 * a.t.abs().max(1.0) {
            return Err(Error::TimeMismatch);
        }
        times.push(a.t);
        values.push(pairing(a, b));
    }
    let drift = values.iter().map(|c| (c - values[0]).abs()).fold(0.0, f64::max);
    Ok(PoincareSeries { times, values, drift })
}

/// Least-squares slope of `y(t)` over `window`, with the RMS fit residual.
pub fn fit_slope(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 - 1e-12 && **t <= window.1 + 1e-12)
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 2 {
        return Err(Error::TooFewSlices { needed: 2, got: pts.len() });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sty / stt;
    let rms = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mt)).powi(2)).sum::<f64>() / n).sqrt();
    Ok((slope, rms))
}

fn resolve_window(times: &[f64], window: Option<(f64, f64)>) -> Result<(f64, f64)> {
    let t0 = times[0];
    let t_end = *times.last().expect("non-empty");
    match window {
        None => Ok((0.5 * (t0 + t_end), t_end)),
        Some((start, end)) => {
            let slack = 1e-9 * t_end.abs().max(1.0);
            if !(start < end && start >= t0 - slack && end <= t_end + slack) {
                return Err(Error::FitWindow { start, end, t_end });
            }
            Ok((start, end))
        }
    }
}

pub const DEFAULT_EXPONENT_TOLERANCE: f64 = 1e-2;
const RENORMALIZE_ABOVE: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentReport {
    /// Spectrum from repeated Gram–Schmidt of the propagated basis, descending.
    pub exponents: Vec<f64>,
    /// `λ_k = −Λ_k`.
    pub characteristic_numbers: Vec<f64>,
    pub fit_residuals: Vec<f64>,
    /// Growth rate of each basis solution propagated on its own.
    pub individual: Vec<f64>,
    pub individual_residuals: Vec<f64>,
    pub fit_window: (f64, f64),
    pub tolerance: f64,
    /// Determinant of the pairing matrix of the initial basis.
    pub pairing_determinant: f64,
    /// `Λ_k + Λ_{2n−1−k}` for the paired ends of the spectrum.
    pub pair_sums: Vec<f64>,
    /// Every pair satisfies `λ + λ′ ≤ 0` within twice the tolerance.
    pub pairing_inequality_holds: bool,
    /// All exponents vanish within the tolerance.
    pub stable: bool,
}

/// Exponents of the variational equations along `base` for a basis of `2n`
/// solutions. `fit_window` defaults to the last half of the run.
pub fn characteristic_numbers(
    sys: &HamiltonianSystem,
    base: &Trajectory,
    basis: &[VariationalState],
    fit_window: Option<(f64, f64)>,
    tolerance: f64,
) -> Result<ExponentReport> {
    let n = sys.dim();
    if basis.len() != 2 * n {
        return Err(Error::InvalidInput(format!("expected {} basis solutions, got {}", 2 * n, basis.len())));
    }
    if base.len() < 3 {
        return Err(Error::TooFewSlices { needed: 3, got: base.len() });
    }
    for v in basis {
        if v.dim() != n {
            return Err(Error::InvalidInput("variation dimension differs from the system".into()));
        }
        check_start(base, v.t)?;
    }
    let omega = DMatrix::from_fn(2 * n, 2 * n, |i, j| pairing(&basis[i], &basis[j]));
    let det = omega.determinant();
    let scale: f64 = basis.iter().map(|v| v.norm().powi(2)).product();
    if scale == 0.0 || det.abs() <= 1e-12 * scale {
        return Err(Error::SingularPairing { det });
    }
    let times = base.times();
    let window = resolve_window(&times, fit_window)?;

    let m = 2 * n;
    let mut qr: Vec<Tangent> = basis.iter().map(Tangent::new).collect();
    let mut solo = qr.clone();
    let mut qr_log = vec![vec![0.0; base.len()]; m];
    let mut solo_log = vec![vec![0.0; base.len()]; m];
    let mut solo_offset: Vec<f64> = vec![0.0; m];
    let orthonormalize = |vs: &mut [Tangent], logs: &mut [f64]| {
        for k in 0..vs.len() {
            for j in 0..k {
                let bj = vs[j];
                let c = bj.dot(&vs[k]);
                vs[k].subtract(c, &bj);
            }
            let r = vs[k].norm();
            logs[k] += r.ln();
            vs[k].scale(1.0 / r);
        }
    };
    let mut acc = vec![0.0; m];
    orthonormalize(&mut qr, &mut acc);
    for k in 0..m {
        qr_log[k][0] = acc[k];
        solo_log[k][0] = solo[k].norm().ln();
    }
    for step_idx in 0..base.len() - 1 {
        let (mut q, mut p) = base.packed(step_idx);
        step(sys, &mut q, &mut p, base.states[step_idx].t, base.dt, &mut qr);
        let (mut q, mut p) = base.packed(step_idx);
        step(sys, &mut q, &mut p, base.states[step_idx].t, base.dt, &mut solo);
        orthonormalize(&mut qr, &mut acc);
        for k in 0..m {
            if !acc[k].is_finite() {
                return Err(Error::NonFinite { step: step_idx + 1 });
            }
            qr_log[k][step_idx + 1] = acc[k];
            let r = solo[k].norm();
            if !r.is_finite() {
                return Err(Error::NonFinite { step: step_idx + 1 });
            }
            solo_log[k][step_idx + 1] = solo_offset[k] + r.ln();
            if r > RENORMALIZE_ABOVE {
                solo_offset[k] += r.ln();
                solo[k].scale(1.0 / r);
            }
        }
    }
    let mut exponents = Vec::with_capacity(m);
    let mut fit_residuals = Vec::with_capacity(m);
    let mut individual = Vec::with_capacity(m);
    let mut individual_residuals = Vec::with_capacity(m);
    for k in 0..m {
        let (s, r) = fit_slope(&times, &qr_log[k], window)?;
        exponents.push(s);
        fit_residuals.push(r);
        let (s, r) = fit_slope(&times, &solo_log[k], window)?;
        individual.push(s);
        individual_residuals.push(r);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| exponents[*b].total_cmp(&exponents[*a]));
    let exponents: Vec<f64> = order.iter().map(|&k| exponents[k]).collect();
    let fit_residuals: Vec<f64> = order.iter().map(|&k| fit_residuals[k]).collect();
    let pair_sums: Vec<f64> = (0..n).map(|k| exponents[k] + exponents[m - 1 - k]).collect();
    Ok(ExponentReport {
        characteristic_numbers: exponents.iter().map(|l| -l).collect(),
        pairing_inequality_holds: pair_sums.iter().all(|s| -s <= 2.0 * tolerance),
        stable: exponents.iter().all(|l| l.abs() <= tolerance),
        exponents,
        fit_residuals,
        individual,
        individual_residuals,
        fit_window: window,
        tolerance,
        pairing_determinant: det,
        pair_sums,
    })
}

/// Canonical basis `e_1 … e_2n` at time `t`.
pub fn canonical_basis(n: usize, t: f64) -> Vec<VariationalState> {
    (0..2 * n)
        .map(|k| {
            let mut xi = vec![0.0; n];
            let mut eta = vec![0.0; n];
            if k < n {
                xi[k] = 1.0;
            } else {
                eta[k - n] = 1.0;
            }
            VariationalState { xi, eta, t }
        })
        .collect()
}

/// Closed-form one-dimensional actions solving the classical Hamilton–Jacobi equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionKind {
    /// `S = αq − α²t/(2m)` for a free particle.
    Plane { alpha: f64 },
    /// `S = m(q − β)²/(2t)` for a free particle, `t > 0`.
    Focusing { beta: f64 },
    /// `S = −Et + ∫₀^q √(2m(E − ½mω²x²)) dx`, clipped to `|q| ≤ 0.95 q_turn`.
    Oscillator { energy: f64, omega: f64 },
    /// Zero-energy outgoing branch `S = ½mωq²` of the inverted oscillator; `L ≡ ω`.
    Separatrix { omega: f64 },
}

pub const TURNING_POINT_CLIP: f64 = 0.95;
const HJ_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionField {
    kind: ActionKind,
    mass: f64,
}

impl ActionField {
    /// Build the action and check the Hamilton–Jacobi equation on sample points.
    pub fn new(kind: ActionKind, mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
        }
        let bad = |what: &str, v: f64| Err(Error::InvalidInput(format!("{what} must be finite and positive, got {v}")));
        match kind {
            ActionKind::Plane { alpha } if !alpha.is_finite() => return bad("alpha", alpha),
            ActionKind::Focusing { beta } if !beta.is_finite() => return bad("beta", beta),
            ActionKind::Oscillator { energy, .. } if !(energy.is_finite() && energy > 0.0) => {
                return bad("energy", energy)
            }
            ActionKind::Oscillator { omega, .. } | ActionKind::Separatrix { omega } if !(omega.is_finite() && omega > 0.0) => {
                return bad("omega", omega)
            }
            _ => {}
        }
        let field = Self { kind, mass };
        let reach = match kind {
            ActionKind::Oscillator { .. } => 0.9 * field.turning_point(),
            _ => 3.0,
        };
        for i in 0..=12 {
            let q = -reach + 2.0 * reach * i as f64 / 12.0;
            for t in [0.5, 1.0, 2.5] {
                let r = field.hj_residual(q, t)?;
                let scale = field.ds_dt(q, t)?.abs() + field.potential_value(q).abs() + 1.0;
                if r > HJ_TOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "{} action violates the Hamilton–Jacobi equation at q={q}, t={t}: {r:e}",
                        field.name()
                    )));
                }
            }
        }
        Ok(field)
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ActionKind::Plane { .. } => "plane",
            ActionKind::Focusing { .. } => "focusing",
            ActionKind::Oscillator { .. } => "oscillator",
            ActionKind::Separatrix { .. } => "separatrix",
        }
    }

    /// The potential whose Hamilton–Jacobi equation this action solves.
    pub fn potential(&self) -> Potential {
        match self.kind {
            ActionKind::Plane { .. } | ActionKind::Focusing { .. } => Potential::free(),
            ActionKind::Oscillator { omega, .. } => Potential::harmonic(omega).expect("validated"),
            ActionKind::Separatrix { omega } => Potential::inverted_harmonic(omega).expect("validated"),
        }
    }

    pub fn metric(&self) -> Metric {
        Metric::new(&[self.mass], 1.0).expect("validated")
    }

    fn potential_value(&self, q: f64) -> f64 {
        self.potential().value(&[q], 0.0, &self.metric())
    }

    /// Classical turning point of the oscillator action (infinite otherwise).
    pub fn turning_point(&self) -> f64 {
        match self.kind {
            ActionKind::Oscillator { energy, omega } => (2.0 * energy / (self.mass * omega * omega)).sqrt(),
            _ => f64::INFINITY,
        }
    }

    pub fn contains(&self, q: f64, t: f64) -> bool {
        q.is_finite()
            && t.is_finite()
            && match self.kind {
                ActionKind::Focusing { .. } => t > 0.0,
                ActionKind::Oscillator { .. } => q.abs() <= TURNING_POINT_CLIP * self.turning_point(),
                _ => true,
            }
    }

    fn check(&self, q: f64, t: f64) -> Result<()> {
        if self.contains(q, t) {
            Ok(())
        } else {
            Err(Error::ValidityDomain { action: self.name(), time: t })
        }
    }

    pub fn s(&self, q: f64, t: f64) -> Result<f64> {
        self.check(q, t)?;
        let m = self.mass;
        Ok(match self.kind {
            ActionKind::Plane { alpha } => alpha * q - alpha * alpha * t / (2.0 * m),
            ActionKind::Focusing { beta } => m * (q - beta).powi(2) / (2.0 * t),
            ActionKind::Oscillator { energy, omega } => {
                let a = self.turning_point();
                -energy * t + 0.5 * m * omega * (q * (a * a - q * q).sqrt() + a * a * (q / a).asin())
            }
            ActionKind::Separatrix { omega } => 0.5 * m * omega * q * q,
        })
    }

    pub fn ds_dq(&self, q: f64, t: f64) -> Result<f64> {
        self.check(q, t)?;
        let m = self.mass;
        Ok(match self.kind {
            ActionKind::Plane { alpha } => alpha,
            ActionKind::Focusing { beta } => m * (q - beta) / t,
            ActionKind::Oscillator { omega, .. } => {
                let a = self.turning_point();
                m * omega * (a * a - q * q).sqrt()
            }
            ActionKind::Separatrix { omega } => m * omega * q,
        })
    }

    pub fn d2s_dq2(&self, q: f64, t: f64) -> Result<f64> {
        self.check(q, t)?;
        let m = self.mass;
        Ok(match self.kind {
            ActionKind::Plane { .. } => 0.0,
            ActionKind::Focusing { .. } => m / t,
            ActionKind::Oscillator { omega, .. } => {
                let a = self.turning_point();
                -m * omega * q / (a * a - q * q).sqrt()
            }
            ActionKind::Separatrix { omega } => m * omega,
        })
    }

    pub fn ds_dt(&self, q: f64, t: f64) -> Result<f64> {
        self.check(q, t)?;
        let m = self.mass;
        Ok(match self.kind {
            ActionKind::Plane { alpha } => -alpha * alpha / (2.0 * m),
            ActionKind::Focusing { beta } => -m * (q - beta).powi(2) / (2.0 * t * t),
            ActionKind::Oscillator { energy, .. } => -energy,
            ActionKind::Separatrix { .. } => 0.0,
        })
    }

    /// `|∂S/∂t + ½g(∂S/∂q)² + U|`.
    pub fn hj_residual(&self, q: f64, t: f64) -> Result<f64> {
        let p = self.ds_dq(q, t)?;
        Ok((self.ds_dt(q, t)? + 0.5 * p * p / self.mass + self.potential_value(q)).abs())
    }

    /// `L = ∂/∂q (g ∂S/∂q)` from the exact second derivative.
    pub fn l_value(&self, q: f64, t: f64) -> Result<f64> {
        Ok(self.d2s_dq2(q, t)? / self.mass)
    }
}

/// `L` at each `(q, t)` of an analytic action.
pub fn l_functional_points(action: &ActionField, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    points.iter().map(|&(q, t)| action.l_value(q, t)).collect()
}

/// `L = Σ ∂_i(g_ii ∂_i S)` of a decomposed field, masked where `S` is not
/// differentiable (nodes and walls).
pub fn l_functional_grid(polar: &PolarField, metric: &Metric) -> Result<RealField> {
    let grid = polar.grid();
    metric.check_grid(grid)?;
    let mask: Vec<bool> = polar
        .mask()
        .iter()
        .enumerate()
        .map(|(i, m)| *m || grid.is_wall(i))
        .collect();
    if mask.iter().all(|m| *m) {
        return Err(Error::AllMasked);
    }
    let vals = masked_laplacian(polar.action(), &mask, grid, metric);
    let out_mask: Vec<bool> = vals.iter().map(|v| v.is_none()).collect();
    RealField::masked(
        grid.clone(),
        vals.iter().map(|v| v.unwrap_or(0.0)).collect(),
        Units::InverseTime,
        out_mask,
    )
}

/// Position at `θ ∈ [0, 1]` of step `k` by cubic Hermite interpolation with `q̇ = g p`.
fn hermite_position(base: &Trajectory, k: usize, theta: f64, g: f64) -> f64 {
    let (a, b) = (&base.states[k], &base.states[k + 1]);
    let h = base.dt;
    let (q0, q1, v0, v1) = (a.q[0], b.q[0], g * a.p[0], g * b.p[0]);
    let t2 = theta * theta;
    let t3 = t2 * theta;
    (2.0 * t3 - 3.0 * t2 + 1.0) * q0 + (t3 - 2.0 * t2 + theta) * h * v0 + (-2.0 * t3 + 3.0 * t2) * q1 + (t3 - t2) * h * v1
}

fn check_one_dimensional(action: &ActionField, base: &Trajectory) -> Result<()> {
    if base.states.iter().any(|s| s.dim() != 1) {
        return Err(Error::InvalidInput(format!("the {} action is one-dimensional", action.name())));
    }
    if base.len() < 2 {
        return Err(Error::TooFewSlices { needed: 2, got: base.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedReport {
    pub times: Vec<f64>,
    /// `ξ` from `dξ/dt = ξ ∂_q(g ∂_q S)`.
    pub xi: Vec<f64>,
    /// `η = (∂²S/∂q²) ξ`.
    pub eta: Vec<f64>,
    /// The full variational flow started at `(ξ₀, η(ξ₀))`.
    pub full_xi: Vec<f64>,
    pub full_eta: Vec<f64>,
    pub max_xi_deviation: f64,
    pub max_eta_deviation: f64,
    /// `max |p − ∂S/∂q|` along the base; zero when the base is a characteristic of `S`.
    pub base_momentum_mismatch: f64,
}

/// Integrate the variation restricted to perturbations of the integration
/// constants of `action`, and compare with the full variational flow.
pub fn reduced_variational(action: &ActionField, base: &Trajectory, xi0: f64) -> Result<ReducedReport> {
    check_one_dimensional(action, base)?;
    let g = 1.0 / action.mass();
    let times = base.times();
    let mut mismatch = 0.0f64;
    for s in &base.states {
        mismatch = mismatch.max((s.p[0] - action.ds_dq(s.q[0], s.t)?).abs());
    }
    let rate = |q: f64, t: f64| action.l_value(q, t);
    let mut xi = Vec::with_capacity(base.len());
    let mut x = xi0;
    xi.push(x);
    for k in 0..base.len() - 1 {
        let (t0, h) = (times[k], base.dt);
        let qm = hermite_position(base, k, 0.5, g);
        let r0 = rate(base.states[k].q[0], t0)?;
        let rm = rate(qm, t0 + 0.5 * h)?;
        let r1 = rate(base.states[k + 1].q[0], t0 + h)?;
        let k1 = r0 * x;
        let k2 = rm * (x + 0.5 * h * k1);
        let k3 = rm * (x + 0.5 * h * k2);
        let k4 = r1 * (x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !x.is_finite() {
            return Err(Error::NonFinite { step: k + 1 });
        }
        xi.push(x);
    }
    let eta: Vec<f64> = base
        .states
        .iter()
        .zip(&xi)
        .map(|(s, x)| Ok(action.d2s_dq2(s.q[0], s.t)? * x))
        .collect::<Result<_>>()?;
    let sys = HamiltonianSystem::new(action.metric(), action.potential())?;
    let v0 = VariationalState::new(vec![xi0], vec![eta[0]], times[0])?;
    let full = integrate_variational(&sys, base, &v0)?;
    let full_xi: Vec<f64> = full.states.iter().map(|v| v.xi[0]).collect();
    let full_eta: Vec<f64> = full.states.iter().map(|v| v.eta[0]).collect();
    let dev = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(ReducedReport {
        max_xi_deviation: dev(&xi, &full_xi),
        max_eta_deviation: dev(&eta, &full_eta),
        times,
        xi,
        eta,
        full_xi,
        full_eta,
        base_momentum_mismatch: mismatch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpIntegralReport {
    pub times: Vec<f64>,
    /// `L` along the base.
    pub l: Vec<f64>,
    /// `ln F(t) = ∫_{t₀}^{t} L dt′`.
    pub log_f: Vec<f64>,
    /// Modern exponent of `F`.
    pub exponent: f64,
    pub fit_window: (f64, f64),
    pub fit_residual: f64,
    /// Set when the base left the validity domain and the series was cut there.
    pub truncated_at: Option<f64>,
}

impl ExpIntegralReport {
    pub fn is_stable(&self, tolerance: f64) -> bool {
        self.exponent.abs() <= tolerance
    }
}

/// `F(t) = exp ∫ L dt` along `base` (Simpson per step, midpoints by Hermite
/// interpolation) and its exponent from a log fit over `fit_window`
/// (default: last half of the usable run).
pub fn exp_integral_characteristic(
    action: &ActionField,
    base: &Trajectory,
    fit_window: Option<(f64, f64)>,
) -> Result<ExpIntegralReport> {
    check_one_dimensional(action, base)?;
    let g = 1.0 / action.mass();
    let s0 = &base.states[0];
    let mut times = vec![s0.t];
    let mut l = vec![action.l_value(s0.q[0], s0.t)?];
    let mut log_f = vec![0.0];
    let mut truncated_at = None;
    for k in 0..base.len() - 1 {
        let h = base.dt;
        let t = base.states[k].t;
        let next = &base.states[k + 1];
        let mid = action.l_value(hermite_position(base, k, 0.5, g), t + 0.5 * h);
        let end = action.l_value(next.q[0], next.t);
        match (mid, end) {
            (Ok(lm), Ok(l1)) => {
                let inc = h / 6.0 * (l[k] + 4.0 * lm + l1);
                log_f.push(log_f[k] + inc);
                l.push(l1);
                times.push(next.t);
            }
            _ => {
                truncated_at = Some(t);
                break;
            }
        }
    }
    if times.len() < 3 {
        return Err(Error::ValidityDomain {
            action: action.name(),
            time: times[times.len() - 1],
        });
    }
    let window = resolve_window(&times, fit_window)?;
    let (exponent, fit_residual) = fit_slope(&times, &log_f, window)?;
    Ok(ExpIntegralReport {
        times,
        l,
        log_f,
        exponent,
        fit_window: window,
        fit_residual,
        truncated_at,
    })
}
