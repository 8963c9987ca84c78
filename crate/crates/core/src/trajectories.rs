//! Bohmian trajectory ensembles transported by `v = g∇S` and their
//! comparison with `|ψ|²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::grid::{Grid, Metric};
use crate::interp::GridSpline;
use crate::polar::PsiCalculus;

/// How initial positions are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "positions", rename_all = "snake_case")]
pub enum SamplingLaw {
    /// From `|ψ₀|²`: a node by its quadrature mass, then uniformly within its cell.
    Density,
    /// Uniform over the grid extent.
    Uniform,
    /// Given starting points.
    Explicit(Vec<Vec<f64>>),
}

impl SamplingLaw {
    pub fn name(&self) -> &'static str {
        match self {
            SamplingLaw::Density => "density",
            SamplingLaw::Uniform => "uniform",
            SamplingLaw::Explicit(_) => "explicit",
        }
    }
}

pub const DEFAULT_SUBSTEPS: usize = 4;

/// Positions of every trajectory at every stored time of the driving series.
///
/// On periodic grids positions are unwrapped (they may leave the fundamental
/// cell); velocities are evaluated at the folded position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub grid: Grid,
    pub seed: u64,
    pub sampling: SamplingLaw,
    pub times: Vec<f64>,
    /// `positions[k][j]` is trajectory `j` at `times[k]`; unused axes are zero.
    pub positions: Vec<Vec<[f64; 2]>>,
}

impl TrajectoryEnsemble {
    pub fn n_traj(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }
}

/// Draw `n` starting points for `law` on the first frame of `series`.
pub fn sample_positions(series: &TimeSeries, law: &SamplingLaw, n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    let psi = &series.frames()[0];
    let grid = psi.grid();
    let dim = grid.dim();
    let rng_for = |j: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        rng
    };
    match law {
        SamplingLaw::Explicit(points) => points
            .iter()
            .map(|p| {
                if p.len() != dim {
                    return Err(Error::InvalidInput(format!("starting point {p:?} has wrong dimension")));
                }
                if !grid.contains(p) {
                    return Err(Error::InvalidInput(format!("starting point {p:?} lies outside the grid")));
                }
                let mut q = [0.0; 2];
                q[..dim].copy_from_slice(p);
                Ok(q)
            })
            .collect(),
        SamplingLaw::Uniform => Ok((0..n)
            .map(|j| {
                let mut rng = rng_for(j);
                let mut q = [0.0; 2];
                for (a, ax) in grid.axes().iter().enumerate() {
                    q[a] = ax.min + rng.random::<f64>() * (ax.max - ax.min);
                }
                q
            })
            .collect()),
        SamplingLaw::Density => {
            let w = grid.weights();
            let mut cdf = Vec::with_capacity(grid.len());
            let mut acc = 0.0;
            for (wi, z) in w.iter().zip(psi.values()) {
                acc += wi * z.norm_sqr();
                cdf.push(acc);
            }
            if acc <= 0.0 {
                return Err(Error::AllMasked);
            }
            Ok((0..n)
                .map(|j| {
                    let mut rng = rng_for(j);
                    let u = rng.random::<f64>() * acc;
                    let node = cdf.partition_point(|c| *c <= u).min(grid.len() - 1);
                    let centre = grid.node(node);
                    let mut q = [0.0; 2];
                    for (a, ax) in grid.axes().iter().enumerate() {
                        let h = grid.spacing(a);
                        let x = centre[a] + (rng.random::<f64>() - 0.5) * h;
                        q[a] = if grid.is_periodic() { x } else { x.clamp(ax.min, ax.max) };
                    }
                    q
                })
                .collect())
        }
    }
}

/// Velocity field of one frame on all nodes, masked nodes filled from the
/// nearest unmasked node (breadth-first over lattice neighbours).
fn velocity_splines(frame: &crate::field::ComplexField, metric: &Metric) -> Result<(Vec<GridSpline>, Vec<f64>)> {
    let calc = PsiCalculus::new(frame, metric)?;
    let grid = frame.grid();
    let n = grid.len();
    let mut fields = Vec::with_capacity(grid.dim());
    let mut vmax = Vec::with_capacity(grid.dim());
    let source: Vec<usize> = (0..n).filter(|&i| !calc.mask[i]).collect();
    if source.is_empty() {
        return Err(Error::AllMasked);
    }
    let mut nearest: Vec<Option<usize>> = vec![None; n];
    let mut queue = std::collections::VecDeque::new();
    for &s in &source {
        nearest[s] = Some(s);
        queue.push_back(s);
    }
    while let Some(cur) = queue.pop_front() {
        for nb in grid.neighbors(cur) {
            if nearest[nb].is_none() {
                nearest[nb] = nearest[cur];
                queue.push_back(nb);
            }
        }
    }
    for a in 0..grid.dim() {
        let g = metric.g(a);
        let own: Vec<f64> = (0..n)
            .map(|i| if calc.mask[i] { 0.0 } else { g * calc.grad_s(a, i) })
            .collect();
        vmax.push(source.iter().map(|&i| own[i].abs()).fold(0.0, f64::max));
        let filled: Vec<f64> = (0..n).map(|i| own[nearest[i].expect("grid is connected")]).collect();
        fields.push(GridSpline::new(grid, &filled));
    }
    Ok((fields, vmax))
}

/// Integrate `dq/dt = v(q, t)` for an ensemble with the default number of substeps.
pub fn integrate_trajectories(
    series: &TimeSeries,
    metric: &Metric,
    sampling: &SamplingLaw,
    n_traj: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    integrate_trajectories_with(series, metric, sampling, n_traj, seed, DEFAULT_SUBSTEPS)
}

/// As [`integrate_trajectories`], with `substeps` RK4 steps per stored interval.
/// Velocities are cubic splines in space and linear in time between stored frames.
pub fn integrate_trajectories_with(
    series: &TimeSeries,
    metric: &Metric,
    sampling: &SamplingLaw,
    n_traj: usize,
    seed: u64,
    substeps: usize,
) -> Result<TrajectoryEnsemble> {
    let grid = series.grid().clone();
    metric.check_grid(&grid)?;
    if substeps == 0 {
        return Err(Error::InvalidInput("substeps must be at least 1".into()));
    }
    let start = sample_positions(series, sampling, n_traj, seed)?;
    let dt = series.interval();
    let mut splines = Vec::with_capacity(series.len());
    for frame in series.frames() {
        let (s, vmax) = velocity_splines(frame, metric)?;
        for (a, v) in vmax.iter().enumerate() {
            let reach = dt.abs() * v;
            let limit = 4.0 * grid.spacing(a);
            if reach >= limit {
                return Err(Error::SamplingGuard { reach, limit });
            }
        }
        splines.push(s);
    }
    let times = series.times();
    let dim = grid.dim();
    let velocity = |k: usize, theta: f64, q: &[f64; 2]| -> [f64; 2] {
        let mut x = *q;
        if grid.is_periodic() {
            for (a, xa) in x.iter_mut().enumerate().take(dim) {
                *xa = grid.wrap(a, *xa);
            }
        }
        let mut v = [0.0; 2];
        for (a, va) in v.iter_mut().enumerate().take(dim) {
            let v0 = splines[k][a].eval(&x[..dim]);
            *va = if theta == 0.0 {
                v0
            } else {
                (1.0 - theta) * v0 + theta * splines[k + 1][a].eval(&x[..dim])
            };
        }
        v
    };
    let tracks: Vec<Result<Vec<[f64; 2]>>> = start
        .par_iter()
        .enumerate()
        .map(|(id, q0)| {
            let mut q = *q0;
            let mut track = Vec::with_capacity(times.len());
            track.push(q);
            let h = dt / substeps as f64;
            for k in 0..times.len() - 1 {
                for s in 0..substeps {
                    let th = s as f64 / substeps as f64;
                    let dth = 1.0 / substeps as f64;
                    let add = |q: &[f64; 2], v: &[f64; 2], c: f64| [q[0] + c * v[0], q[1] + c * v[1]];
                    let k1 = velocity(k, th, &q);
                    let k2 = velocity(k, th + 0.5 * dth, &add(&q, &k1, 0.5 * h));
                    let k3 = velocity(k, th + 0.5 * dth, &add(&q, &k2, 0.5 * h));
                    let k4 = velocity(k, th + dth, &add(&q, &k3, h));
                    for a in 0..dim {
                        q[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                    }
                    let t = times[k] + (s + 1) as f64 * h;
                    if q.iter().any(|x| !x.is_finite()) || (!grid.is_periodic() && !grid.contains(&q[..dim])) {
                        return Err(Error::TrajectoryExit { id, time: t });
                    }
                }
                track.push(q);
            }
            Ok(track)
        })
        .collect();
    let tracks: Vec<Vec<[f64; 2]>> = tracks.into_iter().collect::<Result<_>>()?;
    let positions = (0..times.len())
        .map(|k| tracks.iter().map(|t| t[k]).collect())
        .collect();
    Ok(TrajectoryEnsemble {
        grid,
        seed,
        sampling: sampling.clone(),
        times,
        positions,
    })
}

/// Histogram bins of width `2h` per axis: node cells `[x_i − h/2, x_i + h/2)`
/// grouped in consecutive pairs (clipped to the extent on box grids).
fn bin_of(grid: &Grid, q: &[f64; 2]) -> usize {
    let mut idx = 0;
    for a in 0..grid.dim() {
        let ax = grid.axes()[a];
        let h = grid.spacing(a);
        let n = ax.points;
        let u = q[a] - ax.min + 0.5 * h;
        let cell = if grid.is_periodic() {
            ((u.rem_euclid(grid.length(a)) / h).floor() as usize).min(n - 1)
        } else {
            ((u / h).floor().max(0.0) as usize).min(n - 1)
        };
        idx = idx * n.div_ceil(2) + cell / 2;
    }
    idx
}

fn bin_count(grid: &Grid) -> usize {
    (0..grid.dim()).map(|a| grid.points(a).div_ceil(2)).product()
}

/// L1 distance between the ensemble histogram and `|ψ(t)|²` at every stored time.
pub fn equivariance_check(ensemble: &TrajectoryEnsemble, series: &TimeSeries) -> Result<Vec<f64>> {
    if &ensemble.grid != series.grid() {
        return Err(Error::GridMismatch);
    }
    let times = series.times();
    if times.len() != ensemble.times.len()
        || times
            .iter()
            .zip(&ensemble.times)
            .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(Error::TimeMismatch);
    }
    let grid = series.grid();
    let n = ensemble.n_traj();
    if n == 0 {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let w = grid.weights();
    let nbins = bin_count(grid);
    Ok(series
        .frames()
        .iter()
        .zip(&ensemble.positions)
        .map(|(frame, pos)| {
            let mut mass = vec![0.0; nbins];
            let mut total = 0.0;
            for i in 0..grid.len() {
                let m = w[i] * frame.values()[i].norm_sqr();
                mass[bin_of(grid, &grid.node(i))] += m;
                total += m;
            }
            let mut counts = vec![0.0; nbins];
            for q in pos {
                counts[bin_of(grid, q)] += 1.0 / n as f64;
            }
            mass.iter().zip(&counts).map(|(m, c)| (m / total - c).abs()).sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, EvolverConfig, Scheme};
    use crate::grid::Boundary;
    use crate::potential::Potential;
    use crate::wavefunctions::{coherent_state, lattice_momentum, oscillator_eigenstate, plane_wave};
    use std::f64::consts::PI;

    #[test]
    fn plane_wave_trajectories_are_straight() {
        let g = Grid::line(0.0, 2.0 * PI, 64, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let p = lattice_momentum(&g, &m, 0, 2.0);
        let frames = (0..11).map(|k| plane_wave(&g, &m, &[p], 0.05 * k as f64).unwrap()).collect();
        let s = TimeSeries::new(frames).unwrap();
        let e = integrate_trajectories(&s, &m, &SamplingLaw::Uniform, 20, 3).unwrap();
        for (k, t) in e.times.iter().enumerate() {
            for j in 0..20 {
                assert!((e.positions[k][j][0] - e.positions[0][j][0] - p * t).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let g = Grid::line(-8.0, 8.0, 128, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap();
        let s = TimeSeries::new(vec![psi]).unwrap();
        let a = sample_positions(&s, &SamplingLaw::Density, 100, 7).unwrap();
        let b = sample_positions(&s, &SamplingLaw::Density, 100, 7).unwrap();
        let c = sample_positions(&s, &SamplingLaw::Density, 100, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mean: f64 = a.iter().map(|q| q[0]).sum::<f64>() / 100.0;
        assert!(mean.abs() < 0.3);
    }

    #[test]
    fn explicit_points_outside_are_rejected() {
        let g = Grid::line(-8.0, 8.0, 128, Boundary::Box).unwrap();
        let m = Metric::natural(1);
        let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap();
        let s = TimeSeries::new(vec![psi]).unwrap();
        assert!(sample_positions(&s, &SamplingLaw::Explicit(vec![vec![9.0]]), 1, 0).is_err());
    }

    #[test]
    fn coarse_storage_violates_the_guard() {
        let g = Grid::line(0.0, 2.0 * PI, 64, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let frames = (0..3).map(|k| plane_wave(&g, &m, &[5.0], 1.0 * k as f64).unwrap()).collect();
        let s = TimeSeries::new(frames).unwrap();
        assert!(matches!(
            integrate_trajectories(&s, &m, &SamplingLaw::Uniform, 4, 0),
            Err(Error::SamplingGuard { .. })
        ));
    }

    #[test]
    fn leaving_a_box_is_an_error() {
        let g = Grid::line(-6.0, 6.0, 121, Boundary::Box).unwrap();
        let m = Metric::natural(1);
        let frames = (0..201).map(|k| plane_wave(&g, &m, &[3.0], 0.01 * k as f64).unwrap()).collect();
        let s = TimeSeries::new(frames).unwrap();
        let r = integrate_trajectories(&s, &m, &SamplingLaw::Explicit(vec![vec![1.0]]), 1, 0);
        match r {
            Err(Error::TrajectoryExit { id: 0, time }) => assert!((time - 5.0 / 3.0).abs() < 0.05, "{time}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coherent_state_is_rigidly_transported_and_equivariant() {
        let g = Grid::line(-10.0, 10.0, 256, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let ho = Potential::harmonic(1.0).unwrap();
        let psi0 = coherent_state(&g, &m, 1.0, &[2.0], 0.0).unwrap().normalized().unwrap();
        let cfg = EvolverConfig::new(2.0 * PI / 1000.0, Scheme::SplitStepSpectral, 2.0 * PI, 5).unwrap();
        let s = evolve(&psi0, &ho, &m, &cfg).unwrap();
        let e = integrate_trajectories(&s, &m, &SamplingLaw::Density, 2000, 1).unwrap();
        for (k, t) in e.times.iter().enumerate() {
            for j in 0..50 {
                let want = e.positions[0][j][0] + 2.0 * (t.cos() - 1.0);
                assert!((e.positions[k][j][0] - want).abs() < 1e-3);
            }
        }
        let d = equivariance_check(&e, &s).unwrap();
        assert!(d.iter().all(|x| *x < 0.15), "{d:?}");
    }

    #[test]
    fn single_trajectory_distance_is_large() {
        let g = Grid::line(-8.0, 8.0, 128, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let frames = (0..3)
            .map(|k| oscillator_eigenstate(&g, &m, 1.0, &[0], 0.1 * k as f64).unwrap())
            .collect();
        let s = TimeSeries::new(frames).unwrap();
        let e = integrate_trajectories(&s, &m, &SamplingLaw::Explicit(vec![vec![0.0]]), 1, 0).unwrap();
        assert!(e.positions.iter().all(|p| p[0][0].abs() < 1e-12));
        let d = equivariance_check(&e, &s).unwrap();
        assert!(d.iter().all(|x| *x > 1.5 && *x <= 2.0));
    }
}
