//! Schrödinger evolution and the stationary eigenproblem.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diff::{inner_product, laplacian_symbol, laplacian_values};
use crate::error::{Error, Result};
use crate::fft;
use crate::field::ComplexField;
use crate::grid::{Grid, Metric};
use crate::linalg::solve_tridiagonal;
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Strang splitting with the exact kinetic propagator in Fourier space.
    SplitStepSpectral,
    /// Crank–Nicolson with second-order differences and ψ = 0 walls.
    CrankNicolson,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::SplitStepSpectral => "split_step_spectral",
            Scheme::CrankNicolson => "crank_nicolson",
        }
    }
}

/// `t_final` may lie before the initial time; the run then steps backward with `|dt|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolverConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub t_final: f64,
    pub store_every: usize,
}

impl EvolverConfig {
    pub fn new(dt: f64, scheme: Scheme, t_final: f64, store_every: usize) -> Result<Self> {
        let cfg = Self {
            dt,
            scheme,
            t_final,
            store_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.t_final.is_finite() {
            return Err(Error::InvalidInput("t_final must be finite".into()));
        }
        if self.store_every == 0 {
            return Err(Error::InvalidInput("store_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps from `t0` to `t_final`; the span must be a whole number of
    /// steps and of store intervals.
    pub fn steps_from(&self, t0: f64) -> Result<usize> {
        self.validate()?;
        let span = (self.t_final - t0).abs();
        let n = (span / self.dt).round();
        if (n * self.dt - span).abs() > 1e-9 * span.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "time span {span} is not a whole number of steps dt = {}",
                self.dt
            )));
        }
        let n = n as usize;
        if n % self.store_every != 0 {
            return Err(Error::InvalidInput(format!(
                "{n} steps are not a multiple of store_every = {}",
                self.store_every
            )));
        }
        Ok(n)
    }
}

/// Uniformly spaced snapshots of one evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    frames: Vec<ComplexField>,
}

impl TimeSeries {
    pub fn new(frames: Vec<ComplexField>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::InvalidInput("empty time series".into()));
        };
        for f in &frames[1..] {
            first.check_same_grid(f)?;
        }
        if frames.len() > 2 {
            let dt = frames[1].time() - frames[0].time();
            let uniform = frames
                .windows(2)
                .all(|w| ((w[1].time() - w[0].time()) - dt).abs() <= 1e-9 * dt.abs().max(1e-300));
            if !uniform || dt == 0.0 {
                return Err(Error::InvalidInput("snapshots must be uniformly spaced in time".into()));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[ComplexField] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.frames[0].grid()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time()).collect()
    }

    /// Signed spacing between snapshots (zero for a single frame).
    pub fn interval(&self) -> f64 {
        if self.frames.len() < 2 {
            0.0
        } else {
            self.frames[1].time() - self.frames[0].time()
        }
    }

    pub fn last(&self) -> &ComplexField {
        self.frames.last().expect("series is never empty")
    }

    pub fn into_frames(self) -> Vec<ComplexField> {
        self.frames
    }
}

/// `Hψ = −(ħ²/2) Σ g_ii ∂²ψ/∂q_i² + U(q, t)ψ` with the grid's differentiation scheme.
pub fn hamiltonian_apply(psi: &ComplexField, potential: &Potential, metric: &Metric) -> Result<ComplexField> {
    metric.check_grid(psi.grid())?;
    let grid = psi.grid();
    let u = potential.sample(grid, psi.time(), metric)?;
    let lap = laplacian_values(psi.values(), grid, metric);
    let k = -0.5 * metric.hbar() * metric.hbar();
    let out = psi
        .values()
        .iter()
        .zip(&lap)
        .zip(&u)
        .map(|((p, l), u)| l * k + p * u)
        .collect();
    ComplexField::new(grid.clone(), out, psi.time())
}

/// `⟨ψ, Hψ⟩` (real part).
pub fn energy(psi: &ComplexField, potential: &Potential, metric: &Metric) -> Result<f64> {
    let h = hamiltonian_apply(psi, potential, metric)?;
    Ok(inner_product(psi, &h)?.re)
}

/// Integrate `iħ∂ψ/∂t = Hψ` and return the stored snapshots, starting with `psi0`.
pub fn evolve(psi0: &ComplexField, potential: &Potential, metric: &Metric, cfg: &EvolverConfig) -> Result<TimeSeries> {
    let grid = psi0.grid();
    metric.check_grid(grid)?;
    if !psi0.is_normalized() {
        return Err(Error::NotNormalized { norm: psi0.norm_sqr() });
    }
    let scheme_ok = match cfg.scheme {
        Scheme::SplitStepSpectral => grid.is_periodic(),
        Scheme::CrankNicolson => !grid.is_periodic(),
    };
    if !scheme_ok {
        return Err(Error::SchemeMismatch {
            scheme: cfg.scheme.name(),
            boundary: grid.boundary().name(),
        });
    }
    let t0 = psi0.time();
    let nsteps = cfg.steps_from(t0)?;
    let dt = if cfg.t_final < t0 { -cfg.dt } else { cfg.dt };
    let mut stepper: Box<dyn Stepper> = match cfg.scheme {
        Scheme::SplitStepSpectral => Box::new(SplitStep::new(grid, potential, metric, dt)?),
        Scheme::CrankNicolson => Box::new(CrankNicolson::new(grid, potential, metric, dt)?),
    };
    let mut psi = psi0.values().to_vec();
    if !grid.is_periodic() {
        for (i, z) in psi.iter_mut().enumerate() {
            if grid.is_wall(i) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }
    let mut frames = Vec::with_capacity(nsteps / cfg.store_every + 1);
    frames.push(ComplexField::from_parts(grid.clone(), psi.clone(), t0));
    for step in 1..=nsteps {
        let t = t0 + (step - 1) as f64 * dt;
        stepper.step(&mut psi, t)?;
        if psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite { step });
        }
        if step % cfg.store_every == 0 {
            frames.push(ComplexField::from_parts(grid.clone(), psi.clone(), t0 + step as f64 * dt));
        }
    }
    TimeSeries::new(frames)
}

trait Stepper {
    /// Advance from `t` to `t + dt` in place.
    fn step(&mut self, psi: &mut [Complex64], t: f64) -> Result<()>;
}

struct SplitStep<'a> {
    grid: Grid,
    potential: &'a Potential,
    metric: Metric,
    dt: f64,
    kinetic: Vec<Complex64>,
    half_potential: Option<Vec<Complex64>>,
}

impl<'a> SplitStep<'a> {
    fn new(grid: &Grid, potential: &'a Potential, metric: &Metric, dt: f64) -> Result<Self> {
        let hbar = metric.hbar();
        let kinetic = laplacian_symbol(grid, metric)
            .into_iter()
            .map(|s| Complex64::from_polar(1.0, 0.5 * hbar * dt * s))
            .collect();
        let half_potential = if potential.is_time_dependent() {
            None
        } else {
            Some(Self::potential_phase(grid, potential, metric, dt, 0.0)?)
        };
        Ok(Self {
            grid: grid.clone(),
            potential,
            metric: metric.clone(),
            dt,
            kinetic,
            half_potential,
        })
    }

    fn potential_phase(grid: &Grid, potential: &Potential, metric: &Metric, dt: f64, t: f64) -> Result<Vec<Complex64>> {
        let hbar = metric.hbar();
        Ok(potential
            .sample(grid, t, metric)?
            .into_iter()
            .map(|u| Complex64::from_polar(1.0, -0.5 * u * dt / hbar))
            .collect())
    }
}

impl Stepper for SplitStep<'_> {
    fn step(&mut self, psi: &mut [Complex64], t: f64) -> Result<()> {
        let owned;
        let half = match &self.half_potential {
            Some(h) => h,
            None => {
                owned = Self::potential_phase(&self.grid, self.potential, &self.metric, self.dt, t + 0.5 * self.dt)?;
                &owned
            }
        };
        psi.iter_mut().zip(half).for_each(|(z, p)| *z *= p);
        fft::forward(psi, &self.grid);
        psi.iter_mut().zip(&self.kinetic).for_each(|(z, p)| *z *= p);
        fft::inverse(psi, &self.grid);
        psi.iter_mut().zip(half).for_each(|(z, p)| *z *= p);
        Ok(())
    }
}

/// Second-order finite-difference Hamiltonian on the interior nodes of a box grid.
struct BoxOperator {
    grid: Grid,
    interior: Vec<usize>,
    /// Position of each grid node in `interior`, `None` on walls.
    slot: Vec<Option<usize>>,
    /// `-ħ²g_a/(2h_a²)` coupling per axis.
    coupling: Vec<f64>,
}

impl BoxOperator {
    fn new(grid: &Grid, metric: &Metric) -> Self {
        let interior: Vec<usize> = (0..grid.len()).filter(|&i| !grid.is_wall(i)).collect();
        let mut slot = vec![None; grid.len()];
        for (k, &i) in interior.iter().enumerate() {
            slot[i] = Some(k);
        }
        let hbar = metric.hbar();
        let coupling = (0..grid.dim())
            .map(|a| -0.5 * hbar * hbar * metric.g(a) / grid.spacing(a).powi(2))
            .collect();
        Self {
            grid: grid.clone(),
            interior,
            slot,
            coupling,
        }
    }

    /// `H v` on interior vectors, with `u` the potential at interior nodes.
    fn apply(&self, v: &[Complex64], u: &[f64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = v.iter().zip(u).map(|(z, u)| z * *u).collect();
        for (k, &i) in self.interior.iter().enumerate() {
            let ij = self.grid.unravel(i);
            for (a, &c) in self.coupling.iter().enumerate() {
                let mut acc = v[k] * (-2.0);
                for d in [-1isize, 1] {
                    let mut nb = ij;
                    nb[a] = (nb[a] as isize + d) as usize;
                    if let Some(s) = self.slot[self.grid.ravel(nb)] {
                        acc += v[s];
                    }
                }
                out[k] += acc * c;
            }
        }
        out
    }
}

struct CrankNicolson<'a> {
    op: BoxOperator,
    potential: &'a Potential,
    metric: Metric,
    /// `dt / 2ħ`
    a: f64,
    dt: f64,
    fixed_u: Option<Vec<f64>>,
}

impl<'a> CrankNicolson<'a> {
    fn new(grid: &Grid, potential: &'a Potential, metric: &Metric, dt: f64) -> Result<Self> {
        let op = BoxOperator::new(grid, metric);
        let fixed_u = if potential.is_time_dependent() {
            None
        } else {
            Some(Self::interior_potential(&op, potential, metric, 0.0)?)
        };
        Ok(Self {
            op,
            potential,
            metric: metric.clone(),
            a: dt / (2.0 * metric.hbar()),
            dt,
            fixed_u,
        })
    }

    fn interior_potential(op: &BoxOperator, potential: &Potential, metric: &Metric, t: f64) -> Result<Vec<f64>> {
        let u = potential.sample(&op.grid, t, metric)?;
        Ok(op.interior.iter().map(|&i| u[i]).collect())
    }

    fn solve_1d(&self, rhs: &[Complex64], u: &[f64]) -> Vec<Complex64> {
        let ia = Complex64::new(0.0, self.a);
        let c = self.op.coupling[0];
        let n = rhs.len();
        let diag: Vec<Complex64> = u.iter().map(|u| 1.0 + ia * (u - 2.0 * c)).collect();
        let off = vec![ia * c; n];
        solve_tridiagonal(&off, &diag, &off, rhs)
    }

    /// Conjugate gradients on the normal equations `(1 + a²H²)x = (1 − iaH)b`.
    fn solve_cg(&self, rhs: &[Complex64], u: &[f64], guess: &[Complex64]) -> Result<Vec<Complex64>> {
        let ia = Complex64::new(0.0, self.a);
        let a2 = self.a * self.a;
        let normal = |v: &[Complex64]| -> Vec<Complex64> {
            let hv = self.op.apply(v, u);
            let hhv = self.op.apply(&hv, u);
            v.iter().zip(&hhv).map(|(x, y)| x + y * a2).collect()
        };
        let hb = self.op.apply(rhs, u);
        let b: Vec<Complex64> = rhs.iter().zip(&hb).map(|(x, y)| x - ia * y).collect();
        let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 { x.iter().zip(y).map(|(a, b)| a.conj() * b).sum() };
        let bnorm = dot(&b, &b).re.sqrt();
        let mut x = guess.to_vec();
        let ax = normal(&x);
        let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r).re;
        let tol = 1e-14 * bnorm.max(1e-300);
        for _ in 0..(10 * rhs.len()).max(100) {
            if rr.sqrt() <= tol {
                return Ok(x);
            }
            let ap = normal(&p);
            let alpha = rr / dot(&p, &ap).re;
            x.iter_mut().zip(&p).for_each(|(x, p)| *x += p * alpha);
            r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= a * alpha);
            let rr_new = dot(&r, &r).re;
            let beta = rr_new / rr;
            p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + *p * beta);
            rr = rr_new;
        }
        Err(Error::NonConvergence {
            max_residual: rr.sqrt() / bnorm,
        })
    }
}

impl Stepper for CrankNicolson<'_> {
    fn step(&mut self, psi: &mut [Complex64], t: f64) -> Result<()> {
        let owned;
        let u = match &self.fixed_u {
            Some(u) => u,
            None => {
                owned = Self::interior_potential(&self.op, self.potential, &self.metric, t + 0.5 * self.dt)?;
                &owned
            }
        };
        let v: Vec<Complex64> = self.op.interior.iter().map(|&i| psi[i]).collect();
        let hv = self.op.apply(&v, u);
        let ia = Complex64::new(0.0, self.a);
        let rhs: Vec<Complex64> = v.iter().zip(&hv).map(|(x, h)| x - ia * h).collect();
        let next = if self.op.grid.dim() == 1 {
            self.solve_1d(&rhs, u)
        } else {
            self.solve_cg(&rhs, u, &v)?
        };
        for (&i, z) in self.op.interior.iter().zip(next) {
            psi[i] = z;
        }
        Ok(())
    }
}

/// Discretization of the kinetic operator used by [`solve_stationary_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticMethod {
    /// Sine discrete-variable representation: exact for the free well, spectrally
    /// accurate for smooth potentials.
    #[default]
    SineDvr,
    /// Three-point second differences, as used by Crank–Nicolson.
    FiniteDifference,
}

/// Lowest eigenpairs of the discrete Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub states: Vec<ComplexField>,
    pub residuals: Vec<f64>,
}

/// Lowest `n_states` eigenpairs on a box grid with the default kinetic method.
pub fn solve_stationary(potential: &Potential, metric: &Metric, grid: &Grid, n_states: usize) -> Result<Spectrum> {
    solve_stationary_with(potential, metric, grid, n_states, KineticMethod::default())
}

pub fn solve_stationary_with(
    potential: &Potential,
    metric: &Metric,
    grid: &Grid,
    n_states: usize,
    method: KineticMethod,
) -> Result<Spectrum> {
    metric.check_grid(grid)?;
    if grid.is_periodic() {
        return Err(Error::SchemeMismatch {
            scheme: "eigensolver",
            boundary: grid.boundary().name(),
        });
    }
    if potential.is_time_dependent() {
        return Err(Error::InvalidInput("stationary states need a time-independent potential".into()));
    }
    let h = StationaryOperator::new(grid, potential, metric, method)?;
    if n_states == 0 {
        return Err(Error::InvalidInput("n_states must be at least 1".into()));
    }
    if n_states > h.len() {
        return Err(Error::TooManyStates {
            requested: n_states,
            available: h.len(),
        });
    }
    let tol = 1e-9 * h.scale();
    let (energies, vectors) = if grid.dim() == 1 {
        dense_lowest(&h, n_states)?
    } else {
        lanczos_lowest(&h, n_states, tol)?
    };
    let (energies, vectors) = canonicalize(energies, vectors, tol);
    let dv = grid.cell_volume();
    let mut states = Vec::with_capacity(n_states);
    let mut residuals = Vec::with_capacity(n_states);
    for (e, v) in energies.iter().zip(&vectors) {
        let hv = h.apply(v);
        let res = hv.iter().zip(v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
        residuals.push(res);
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (&i, x) in h.interior.iter().zip(v) {
            values[i] = Complex64::new(x / dv.sqrt(), 0.0);
        }
        states.push(ComplexField::from_parts(grid.clone(), values, 0.0));
    }
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > 1e3 * tol {
        return Err(Error::NonConvergence { max_residual: worst });
    }
    Ok(Spectrum {
        energies,
        states,
        residuals,
    })
}

/// Real symmetric Hamiltonian on interior nodes, kinetic part separable per axis.
struct StationaryOperator {
    interior: Vec<usize>,
    shape: Vec<usize>,
    kinetic: Vec<DMatrix<f64>>,
    u: Vec<f64>,
}

impl StationaryOperator {
    fn new(grid: &Grid, potential: &Potential, metric: &Metric, method: KineticMethod) -> Result<Self> {
        let interior: Vec<usize> = (0..grid.len()).filter(|&i| !grid.is_wall(i)).collect();
        let shape: Vec<usize> = (0..grid.dim()).map(|a| grid.points(a) - 2).collect();
        let hbar = metric.hbar();
        let kinetic = (0..grid.dim())
            .map(|a| {
                let m = shape[a];
                let pref = 0.5 * hbar * hbar * metric.g(a);
                match method {
                    KineticMethod::FiniteDifference => {
                        let c = pref / grid.spacing(a).powi(2);
                        DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
                            0 => 2.0 * c,
                            1 => -c,
                            _ => 0.0,
                        })
                    }
                    KineticMethod::SineDvr => {
                        let n = (m + 1) as f64;
                        let l = grid.length(a);
                        let c = pref * std::f64::consts::PI.powi(2) / (2.0 * l * l);
                        let s2 = |x: f64| x.sin().powi(2).recip();
                        let arg = std::f64::consts::PI / (2.0 * n);
                        DMatrix::from_fn(m, m, |i, j| {
                            let (i, j) = ((i + 1) as f64, (j + 1) as f64);
                            if i == j {
                                c * ((2.0 * n * n + 1.0) / 3.0 - s2(2.0 * arg * i))
                            } else {
                                let sign = if ((i - j) as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                                c * sign * (s2(arg * (i - j)) - s2(arg * (i + j)))
                            }
                        })
                    }
                }
            })
            .collect();
        let all = potential.sample(grid, 0.0, metric)?;
        let u = interior.iter().map(|&i| all[i]).collect();
        Ok(Self {
            interior,
            shape,
            kinetic,
            u,
        })
    }

    fn len(&self) -> usize {
        self.interior.len()
    }

    /// Rough spectral scale used to set residual tolerances.
    fn scale(&self) -> f64 {
        let t: f64 = self.kinetic.iter().map(|k| k.diagonal().max()).sum();
        let u = self.u.iter().fold(0.0f64, |m, u| m.max(u.abs()));
        (t + u).max(1.0)
    }

    fn dense(&self) -> DMatrix<f64> {
        debug_assert_eq!(self.shape.len(), 1);
        let mut m = self.kinetic[0].clone();
        for (i, u) in self.u.iter().enumerate() {
            m[(i, i)] += u;
        }
        m
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().zip(&self.u).map(|(a, b)| a * b).collect();
        if self.shape.len() == 1 {
            let k = &self.kinetic[0];
            for (i, o) in out.iter_mut().enumerate() {
                *o += (0..v.len()).map(|j| k[(i, j)] * v[j]).sum::<f64>();
            }
            return out;
        }
        let (nx, ny) = (self.shape[0], self.shape[1]);
        let (kx, ky) = (&self.kinetic[0], &self.kinetic[1]);
        for i in 0..nx {
            for j in 0..ny {
                let mut acc = 0.0;
                for jj in 0..ny {
                    acc += ky[(j, jj)] * v[i * ny + jj];
                }
                for ii in 0..nx {
                    acc += kx[(i, ii)] * v[ii * ny + j];
                }
                out[i * ny + j] += acc;
            }
        }
        out
    }
}

fn dense_lowest(h: &StationaryOperator, n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let eig = SymmetricEigen::try_new(h.dense(), 1e-14, 10_000).ok_or(Error::NonConvergence {
        max_residual: f64::INFINITY,
    })?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order[..n].iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order[..n].iter().map(|&k| eig.eigenvectors.column(k).iter().copied().collect()).collect();
    Ok((energies, vectors))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(x, q)| *x -= c * q);
        }
    }
}

/// Lowest eigenpair of `h` restricted to the complement of `locked`, by Lanczos
/// with full reorthogonalization and a growing Krylov space.
fn lanczos_bottom(h: &StationaryOperator, locked: &[Vec<f64>], tol: f64, seed: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dim = h.len();
    let room = dim - locked.len();
    let mut m = room.min(120);
    loop {
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.5 * (seed + 1.37 * i as f64).sin()).collect();
        orthogonalize(&mut v, locked);
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        for k in 0..m {
            let mut w = h.apply(&v);
            alpha.push(dot(&w, &v));
            q.push(v);
            orthogonalize(&mut w, locked);
            orthogonalize(&mut w, &q);
            let b = dot(&w, &w).sqrt();
            beta.push(b);
            if k + 1 == m || b < 1e-10 * h.scale() {
                break;
            }
            // a small β would amplify round-off along the locked vectors
            v = w.into_iter().map(|x| x / b).collect();
            orthogonalize(&mut v, locked);
            orthogonalize(&mut v, &q);
            let nv = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= nv);
        }
        let k = q.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i.abs_diff(j) == 1 {
                beta[i.min(j)]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::try_new(t, 1e-15, 10_000).ok_or(Error::NonConvergence {
            max_residual: f64::INFINITY,
        })?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let bl = beta[k - 1];
        let mut energies = Vec::new();
        let mut vectors = Vec::new();
        for &c in &order {
            let y = eig.eigenvectors.column(c);
            if (bl * y[k - 1]).abs() > tol {
                break;
            }
            let mut x = vec![0.0; dim];
            for (qi, yi) in q.iter().zip(y.iter()) {
                x.iter_mut().zip(qi).for_each(|(x, q)| *x += yi * q);
            }
            let nx = dot(&x, &x).sqrt();
            x.iter_mut().for_each(|v| *v /= nx);
            energies.push(eig.eigenvalues[c]);
            vectors.push(x);
        }
        if !energies.is_empty() {
            return Ok((energies, vectors));
        }
        if m >= room {
            return Err(Error::NonConvergence {
                max_residual: order
                    .first()
                    .map(|&c| (bl * eig.eigenvectors.column(c)[k - 1]).abs())
                    .unwrap_or(f64::INFINITY),
            });
        }
        m = (2 * m).min(room);
    }
}

/// Lowest `n` eigenpairs by repeated deflated Lanczos runs. Each run locks the
/// converged bottom of the remaining spectrum; a final run confirms nothing
/// (in particular no missed degenerate partner) lies below the highest locked level.
fn lanczos_lowest(h: &StationaryOperator, n: usize, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut energies: Vec<f64> = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let mut seed = 0.3;
    let cluster_tol = 1e-7 * h.scale();
    loop {
        if vectors.len() >= h.len() {
            break;
        }
        let (e, v) = lanczos_bottom(h, &vectors, tol, seed)?;
        seed += 0.71;
        let top = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if energies.len() >= n && e[0] > top + cluster_tol {
            break;
        }
        for (ei, vi) in e.into_iter().zip(v) {
            if energies.len() >= n && ei > top + cluster_tol {
                break;
            }
            let mut vi = vi;
            orthogonalize(&mut vi, &vectors);
            let nv = dot(&vi, &vi).sqrt();
            vi.iter_mut().for_each(|x| *x /= nv);
            energies.push(ei);
            vectors.push(vi);
        }
    }
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let energies: Vec<f64> = order.iter().map(|&k| energies[k]).collect();
    let vectors: Vec<Vec<f64>> = order.iter().map(|&k| vectors[k].clone()).collect();
    // keep whole degenerate clusters until canonicalization, then truncate
    let (mut energies, mut vectors) = canonicalize(energies, vectors, cluster_tol);
    energies.truncate(n);
    vectors.truncate(n);
    Ok((energies, vectors))
}

/// Deterministic basis choice: degenerate clusters are re-spanned by
/// Gram–Schmidt on their projections of the unit vectors taken in grid-index
/// order; every vector gets a positive first significant component.
fn canonicalize(energies: Vec<f64>, vectors: Vec<Vec<f64>>, tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut out_v: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    let mut start = 0;
    while start < energies.len() {
        let mut end = start + 1;
        while end < energies.len() && (energies[end] - energies[end - 1]).abs() <= tol {
            end += 1;
        }
        let cluster = &vectors[start..end];
        if cluster.len() == 1 {
            out_v.push(cluster[0].clone());
        } else {
            let dim = cluster[0].len();
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for i in 0..dim {
                if basis.len() == cluster.len() {
                    break;
                }
                let mut p = vec![0.0; dim];
                for c in cluster {
                    p.iter_mut().zip(c).for_each(|(x, ci)| *x += c[i] * ci);
                }
                orthogonalize(&mut p, &basis);
                let np = dot(&p, &p).sqrt();
                if np > 1e-6 {
                    p.iter_mut().for_each(|x| *x /= np);
                    basis.push(p);
                }
            }
            out_v.extend(basis);
        }
        start = end;
    }
    for v in &mut out_v {
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-3 * vmax) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    (energies, out_v)
}

/// Result of re-solving on a box of doubled extent with the same spacing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxArtifactReport {
    pub energies: Vec<f64>,
    pub energies_doubled: Vec<f64>,
    /// `(E(2L) − E(L)) / L` per state.
    pub slopes: Vec<f64>,
    pub threshold: f64,
    pub flagged: bool,
}

/// Flag levels that move when the box grows: bound states converge under
/// L-doubling, box-quantized continuum levels do not.
pub fn box_artifact_check(
    potential: &Potential,
    metric: &Metric,
    grid: &Grid,
    n_states: usize,
    threshold: f64,
) -> Result<BoxArtifactReport> {
    let small = solve_stationary(potential, metric, grid, n_states)?;
    let axes = grid
        .axes()
        .iter()
        .map(|a| {
            let c = 0.5 * (a.min + a.max);
            let half = a.max - a.min;
            crate::grid::Axis {
                min: c - half,
                max: c + half,
                points: 2 * a.points - 1,
            }
        })
        .collect();
    let big_grid = Grid::new(axes, grid.boundary())?;
    let big = solve_stationary(potential, metric, &big_grid, n_states)?;
    let l = grid.length(0);
    let slopes: Vec<f64> = small
        .energies
        .iter()
        .zip(&big.energies)
        .map(|(a, b)| (b - a) / l)
        .collect();
    let flagged = slopes.iter().any(|s| s.abs() > threshold);
    Ok(BoxArtifactReport {
        energies: small.energies,
        energies_doubled: big.energies,
        slopes,
        threshold,
        flagged,
    })
}

/// Independent three-point reference spectrum (unit mass, ħ = 1).
#[cfg(test)]
fn fd_reference(grid: &Grid, u: &[f64], n: usize) -> Vec<f64> {
    let m = grid.points(0) - 2;
    let h = grid.spacing(0);
    let mut mat = DMatrix::zeros(m, m);
    for i in 0..m {
        mat[(i, i)] = 1.0 / (h * h) + u[i + 1];
        if i + 1 < m {
            mat[(i, i + 1)] = -0.5 / (h * h);
            mat[(i + 1, i)] = -0.5 / (h * h);
        }
    }
    let e = SymmetricEigen::new(mat).eigenvalues;
    let mut v: Vec<f64> = e.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v.truncate(n);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::wavefunctions::{coherent_state, free_gaussian, oscillator_eigenstate, plane_wave};
    use std::f64::consts::PI;

    fn ho() -> Potential {
        Potential::harmonic(1.0).unwrap()
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(EvolverConfig::new(0.0, Scheme::CrankNicolson, 1.0, 1).is_err());
        assert!(EvolverConfig::new(0.1, Scheme::CrankNicolson, 1.0, 0).is_err());
        let cfg = EvolverConfig::new(0.1, Scheme::CrankNicolson, 1.0, 3).unwrap();
        assert!(cfg.steps_from(0.0).is_err());
        let cfg = EvolverConfig::new(0.3, Scheme::CrankNicolson, 1.0, 1).unwrap();
        assert!(cfg.steps_from(0.0).is_err());
    }

    #[test]
    fn scheme_must_match_boundary() {
        let g = Grid::line(-8.0, 8.0, 64, Boundary::Box).unwrap();
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap().normalized().unwrap();
        let cfg = EvolverConfig::new(0.1, Scheme::SplitStepSpectral, 1.0, 1).unwrap();
        assert!(matches!(evolve(&psi, &ho(), &m, &cfg), Err(Error::SchemeMismatch { .. })));
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let g = Grid::line(-8.0, 8.0, 64, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap().scale(Complex64::new(2.0, 0.0));
        let cfg = EvolverConfig::new(0.1, Scheme::SplitStepSpectral, 1.0, 1).unwrap();
        assert!(matches!(evolve(&psi, &ho(), &m, &cfg), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn free_plane_wave_is_exact() {
        let g = Grid::line(0.0, 2.0 * PI, 64, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi0 = plane_wave(&g, &m, &[3.0], 0.0).unwrap();
        let cfg = EvolverConfig::new(0.01, Scheme::SplitStepSpectral, 1.0, 100).unwrap();
        let s = evolve(&psi0, &Potential::free(), &m, &cfg).unwrap();
        let want = plane_wave(&g, &m, &[3.0], 1.0).unwrap();
        for (a, b) in s.last().values().iter().zip(want.values()) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn hamiltonian_on_ground_state() {
        let g = Grid::line(-10.0, 10.0, 256, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap();
        let h = hamiltonian_apply(&psi, &ho(), &m).unwrap();
        for (a, b) in h.values().iter().zip(psi.values()) {
            assert!((a - b * 0.5).norm() < 1e-6);
        }
        let z = hamiltonian_apply(&ComplexField::zeros(&g, 0.0), &ho(), &m).unwrap();
        assert!(z.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn ground_state_is_stationary_under_both_schemes() {
        let m = Metric::natural(1);
        let period = 2.0 * PI;
        let cfg_pairs = [
            (Grid::line(-10.0, 10.0, 256, Boundary::Periodic).unwrap(), Scheme::SplitStepSpectral),
            (Grid::line(-10.0, 10.0, 801, Boundary::Box).unwrap(), Scheme::CrankNicolson),
        ];
        for (g, scheme) in cfg_pairs {
            let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap().normalized().unwrap();
            let cfg = EvolverConfig::new(period / 2000.0, scheme, period, 2000).unwrap();
            let s = evolve(&psi, &ho(), &m, &cfg).unwrap();
            let end = s.last();
            for (a, b) in end.values().iter().zip(psi.values()) {
                assert!((a.norm() - b.norm()).abs() < 1e-6, "{scheme:?}");
            }
            assert!((end.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn time_reversal_returns_initial_state() {
        let g = Grid::line(-10.0, 10.0, 256, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi0 = coherent_state(&g, &m, 1.0, &[1.5], 0.0).unwrap().normalized().unwrap();
        let fwd = EvolverConfig::new(0.01, Scheme::SplitStepSpectral, 2.0, 200).unwrap();
        let s = evolve(&psi0, &ho(), &m, &fwd).unwrap();
        let back = EvolverConfig::new(0.01, Scheme::SplitStepSpectral, 0.0, 200).unwrap();
        let r = evolve(s.last(), &ho(), &m, &back).unwrap();
        assert!(r.last().time().abs() < 1e-12);
        for (a, b) in r.last().values().iter().zip(psi0.values()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn free_gaussian_follows_analytic_solution() {
        let g = Grid::line(-40.0, 40.0, 1024, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi0 = free_gaussian(&g, &m, &[0.0], &[1.0], &[0.5], 0.0).unwrap();
        let cfg = EvolverConfig::new(0.05, Scheme::SplitStepSpectral, 6.0, 120).unwrap();
        let s = evolve(&psi0, &Potential::free(), &m, &cfg).unwrap();
        let want = free_gaussian(&g, &m, &[0.0], &[1.0], &[0.5], 6.0).unwrap();
        for (a, b) in s.last().values().iter().zip(want.values()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn spectrum_of_the_oscillator() {
        let g = Grid::line(-10.0, 10.0, 400, Boundary::Box).unwrap();
        let m = Metric::natural(1);
        let s = solve_stationary(&ho(), &m, &g, 3).unwrap();
        for (n, e) in s.energies.iter().enumerate() {
            assert!((e - (n as f64 + 0.5)).abs() < 1e-4, "E{n} = {e}");
        }
        for i in 0..3 {
            for j in 0..3 {
                let ip = inner_product(&s.states[i], &s.states[j]).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn finite_difference_spectrum_matches_reference() {
        let g = Grid::line(-10.0, 10.0, 200, Boundary::Box).unwrap();
        let m = Metric::natural(1);
        let s = solve_stationary_with(&ho(), &m, &g, 4, KineticMethod::FiniteDifference).unwrap();
        let u = ho().sample(&g, 0.0, &m).unwrap();
        let want = fd_reference(&g, &u, 4);
        for (a, b) in s.energies.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn infinite_well_is_exact_with_sine_dvr() {
        let g = Grid::line(0.0, PI, 101, Boundary::Box).unwrap();
        let m = Metric::natural(1);
        let s = solve_stationary(&Potential::free(), &m, &g, 3).unwrap();
        for (n, e) in s.energies.iter().enumerate() {
            let k = (n + 1) as f64;
            assert!((e - 0.5 * k * k).abs() < 1e-9);
        }
    }

    #[test]
    fn eigensolver_errors() {
        let m = Metric::natural(1);
        let g = Grid::line(0.0, 1.0, 10, Boundary::Box).unwrap();
        assert!(matches!(
            solve_stationary(&ho(), &m, &g, 9),
            Err(Error::TooManyStates { requested: 9, available: 8 })
        ));
        let p = Grid::line(0.0, 1.0, 10, Boundary::Periodic).unwrap();
        assert!(solve_stationary(&ho(), &m, &p, 1).is_err());
    }

    #[test]
    fn two_dimensional_oscillator_has_degenerate_levels() {
        let g = Grid::plane((-7.0, 7.0, 40), (-7.0, 7.0, 40), Boundary::Box).unwrap();
        let m = Metric::natural(2);
        let s = solve_stationary(&ho(), &m, &g, 6).unwrap();
        let want = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0];
        for (e, w) in s.energies.iter().zip(want) {
            assert!((e - w).abs() < 1e-6, "{:?}", s.energies);
        }
        for i in 0..6 {
            for j in 0..6 {
                let ip = inner_product(&s.states[i], &s.states[j]).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn inverted_oscillator_levels_are_box_artifacts() {
        let g = Grid::line(-8.0, 8.0, 161, Boundary::Box).unwrap();
        let m = Metric::natural(1);
        let inv = Potential::inverted_harmonic(1.0).unwrap();
        let r = box_artifact_check(&inv, &m, &g, 3, 1e-3).unwrap();
        assert!(r.flagged);
        let r = box_artifact_check(&ho(), &m, &g, 3, 1e-3).unwrap();
        assert!(!r.flagged, "{:?}", r.slopes);
    }
}
