use chetaev_core::dynamics::{evolve, EvolverConfig, Scheme};
use chetaev_core::polar::{chetaev_condition_psi, decompose};
use chetaev_core::stability::{l_functional_grid, ActionField, ActionKind};
use chetaev_core::trajectories::{equivariance_check, integrate_trajectories, SamplingLaw};
use chetaev_core::wavefunctions::free_gaussian;
use chetaev_core::{Boundary, Grid, Metric, Potential};

#[test]
fn grid_l_of_a_spreading_gaussian_matches_the_focusing_rate() {
    let g = Grid::line(-20.0, 20.0, 512, Boundary::Periodic).unwrap();
    let m = Metric::natural(1);
    let t = 1.5;
    let psi = free_gaussian(&g, &m, &[0.0], &[1.0], &[0.0], t).unwrap();
    let l = l_functional_grid(&decompose(&psi, &m).unwrap(), &m).unwrap();
    // S = x²t/(2(t²+4)) + f(t) for σ0² = 1, so L = t/(t²+4)
    let want = t / (t * t + 4.0);
    for (i, v) in l.iter_valid() {
        if g.node(i)[0].abs() < 8.0 {
            assert!((v - want).abs() < 1e-6, "x={} L={v}", g.node(i)[0]);
        }
    }
    let psi_side = chetaev_condition_psi(&psi, &m).unwrap();
    assert!(psi_side.identity_residual < 1e-8);
}

#[test]
fn large_time_gaussian_l_approaches_the_focusing_action() {
    let focus = ActionField::new(ActionKind::Focusing { beta: 0.0 }, 1.0).unwrap();
    let t = 40.0;
    let exact_gaussian = t / (t * t + 4.0);
    assert!((focus.l_value(0.0, t).unwrap() - exact_gaussian).abs() < 1e-4);
}

#[test]
fn evolved_gaussian_stays_equivariant() {
    let g = Grid::line(-15.0, 15.0, 256, Boundary::Periodic).unwrap();
    let m = Metric::natural(1);
    let psi0 = free_gaussian(&g, &m, &[0.0], &[1.0], &[0.5], 0.0).unwrap().normalized().unwrap();
    let cfg = EvolverConfig::new(0.01, Scheme::SplitStepSpectral, 2.0, 10).unwrap();
    let s = evolve(&psi0, &Potential::free(), &m, &cfg).unwrap();
    let e = integrate_trajectories(&s, &m, &SamplingLaw::Density, 5000, 11).unwrap();
    let d = equivariance_check(&e, &s).unwrap();
    assert!(d.iter().all(|x| *x < 0.08), "{d:?}");
}
