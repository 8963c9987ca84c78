use chetaev_core::diff::{gradient, inner_product};
use chetaev_core::dynamics::{evolve, EvolverConfig, Scheme};
use chetaev_core::observables::{boost, moments, uncertainty_identity};
use chetaev_core::polar::{decompose, recompose};
use chetaev_core::stability::{
    integrate_hamiltonian, integrate_variational, poincare_invariant, HamiltonianSystem,
};
use chetaev_core::wavefunctions::{coherent_state, free_gaussian, lattice_momentum, oscillator_eigenstate};
use chetaev_core::{Boundary, ClassicalState, ComplexField, Grid, Metric, Potential, VariationalState};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn periodic() -> Grid {
    Grid::line(-10.0, 10.0, 128, Boundary::Periodic).unwrap()
}

fn trig_field(g: &Grid, coeffs: &[(f64, f64)]) -> ComplexField {
    let l = g.length(0);
    ComplexField::from_fn(g, 0.0, |q| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let th = 2.0 * PI * (k as f64) * q[0] / l;
                Complex64::new(a * th.cos(), b * th.sin())
            })
            .sum()
    })
}

fn superposition(g: &Grid, m: &Metric, coeffs: &[(f64, f64)]) -> ComplexField {
    let mut acc = ComplexField::zeros(g, 0.0);
    for (n, (re, im)) in coeffs.iter().enumerate() {
        let phi = oscillator_eigenstate(g, m, 1.0, &[n], 0.0).unwrap();
        for (a, b) in acc.values_mut().iter_mut().zip(phi.values()) {
            *a += b * Complex64::new(*re, *im);
        }
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradient_is_linear(
        c1 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 6),
        c2 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 6),
        a in -3.0f64..3.0,
        box_grid in any::<bool>(),
    ) {
        let g = if box_grid { Grid::line(-10.0, 10.0, 129, Boundary::Box).unwrap() } else { periodic() };
        let (f, h) = (trig_field(&g, &c1), trig_field(&g, &c2));
        let mut sum = ComplexField::zeros(&g, 0.0);
        for (i, z) in sum.values_mut().iter_mut().enumerate() {
            *z = f.values()[i] * a + h.values()[i];
        }
        let (df, dh, ds) = (gradient(&f, 0).unwrap(), gradient(&h, 0).unwrap(), gradient(&sum, 0).unwrap());
        for i in 0..g.len() {
            let want = df.values()[i] * a + dh.values()[i];
            prop_assert!((ds.values()[i] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn summation_by_parts_on_periodic_grids(
        c1 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8),
        c2 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8),
    ) {
        let g = periodic();
        let (f, h) = (trig_field(&g, &c1), trig_field(&g, &c2));
        let lhs = inner_product(&gradient(&f, 0).unwrap(), &h).unwrap();
        let rhs = -inner_product(&f, &gradient(&h, 0).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn polar_roundtrip(coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..5)) {
        let m = Metric::natural(1);
        let psi = superposition(&periodic(), &m, &coeffs);
        prop_assume!(psi.max_abs() > 1e-3);
        let back = recompose(&decompose(&psi, &m).unwrap());
        for (a, b) in back.values().iter().zip(psi.values()) {
            prop_assert!((a - b).norm() <= 1e-12 * psi.max_abs());
        }
    }

    #[test]
    fn galilean_boost(p in -2.0f64..2.0, coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..4)) {
        let g = Grid::line(-12.0, 12.0, 256, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi = superposition(&g, &m, &coeffs);
        prop_assume!(psi.norm_sqr() > 1e-3);
        let psi = psi.normalized().unwrap();
        let p0 = lattice_momentum(&g, &m, 0, p);
        let (r0, r1) = (moments(&psi, &m).unwrap(), moments(&boost(&psi, &m, &[p0]).unwrap(), &m).unwrap());
        prop_assert!((r1.mean_p[0] - r0.mean_p[0] - p0).abs() < 1e-8);
        prop_assert!((r1.var_p[0] - r0.var_p[0]).abs() < 1e-8);
        prop_assert!((r1.mean_q - r0.mean_q).abs() < 1e-8);
    }

    #[test]
    fn heisenberg_floor(coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6)) {
        let g = Grid::line(-12.0, 12.0, 256, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi = superposition(&g, &m, &coeffs);
        prop_assume!(psi.norm_sqr() > 1e-3);
        let u = uncertainty_identity(&psi.normalized().unwrap(), &m).unwrap();
        prop_assert!(u.localized);
        prop_assert!(u.moments.product[0] >= 0.25 - 1e-6);
        prop_assert!(u.product_q[0] >= 0.25 - 1e-6);
        if u.real_state {
            prop_assert!(u.gap[0].abs() <= 1e-6);
        }
    }

    #[test]
    fn split_step_is_unitary(a in -2.0f64..2.0, w in 0.5f64..2.0) {
        let g = Grid::line(-12.0, 12.0, 128, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi = coherent_state(&g, &m, 1.0, &[a], 0.0).unwrap().normalized().unwrap();
        let cfg = EvolverConfig::new(0.01, Scheme::SplitStepSpectral, 1.0, 10).unwrap();
        let s = evolve(&psi, &Potential::harmonic(w).unwrap(), &m, &cfg).unwrap();
        for f in s.frames() {
            prop_assert!((f.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symplectic_pairing_is_conserved(
        xi in prop::collection::vec(-1.0f64..1.0, 4),
        q0 in -1.0f64..1.0,
        p0 in -1.0f64..1.0,
        omega in 0.3f64..1.5,
        inverted in any::<bool>(),
    ) {
        let pot = if inverted { Potential::inverted_harmonic(omega) } else { Potential::harmonic(omega) }.unwrap();
        let sys = HamiltonianSystem::new(Metric::natural(1), pot).unwrap();
        let tr = integrate_hamiltonian(&sys, &ClassicalState::new(vec![q0], vec![p0], 0.0).unwrap(), 0.005, 5.0).unwrap();
        let u = integrate_variational(&sys, &tr, &VariationalState::new(vec![xi[0]], vec![xi[1]], 0.0).unwrap()).unwrap();
        let v = integrate_variational(&sys, &tr, &VariationalState::new(vec![xi[2]], vec![xi[3]], 0.0).unwrap()).unwrap();
        let c = poincare_invariant(&u, &v).unwrap();
        prop_assert!(c.drift <= 1e-9, "drift {}", c.drift);
    }

    #[test]
    fn free_gaussian_decomposes_with_smooth_action(
        x0 in -2.0f64..2.0,
        s2 in 0.5f64..2.0,
        p in -1.5f64..1.5,
        t in 0.0f64..2.0,
    ) {
        let g = Grid::line(-20.0, 20.0, 256, Boundary::Periodic).unwrap();
        let m = Metric::natural(1);
        let psi = free_gaussian(&g, &m, &[x0], &[s2], &[p], t).unwrap();
        let polar = decompose(&psi, &m).unwrap();
        let s = polar.action();
        for i in 1..g.len() {
            if !polar.mask()[i] && !polar.mask()[i - 1] {
                prop_assert!((s[i] - s[i - 1]).abs() < PI);
            }
        }
    }
}
