//! Acceptance checks with pinned tolerances. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use chetaev_core::dynamics::{evolve, solve_stationary, EvolverConfig, Scheme, TimeSeries};
use chetaev_core::observables::uncertainty_identity;
use chetaev_core::polar::{
    chetaev_condition_psi, continuity_residual, mass_region, perturbation_action_sweep, q_from_energy_balance,
    qhj_residual, quantum_potential_psi, Region, TrialFamily,
};
use chetaev_core::stability::{
    canonical_basis, characteristic_numbers, exp_integral_characteristic, integrate_hamiltonian,
    integrate_variational, l_functional_points, poincare_invariant, ActionField, ActionKind, HamiltonianSystem,
};
use chetaev_core::trajectories::{equivariance_check, integrate_trajectories_with, SamplingLaw};
use chetaev_core::wavefunctions::{box_eigenstate, coherent_state, free_gaussian, oscillator_eigenstate};
use chetaev_core::{Boundary, ClassicalState, ComplexField, Grid, Metric, Potential, PotentialKind};
use chetaev_runner::{load, run, RunOptions, RunStatus};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn series(psi: &ComplexField, pot: &Potential, dt: f64, t_final: f64, store: usize) -> TimeSeries {
    let cfg = EvolverConfig::new(dt, Scheme::SplitStepSpectral, t_final, store).unwrap();
    evolve(psi, pot, &Metric::natural(1), &cfg).unwrap()
}

fn oscillator() -> Potential {
    Potential::harmonic(1.0).unwrap()
}

fn spectrum() -> Outcome {
    let start = Instant::now();
    let m = Metric::natural(1);
    let ho = solve_stationary(&oscillator(), &m, &Grid::line(-10.0, 10.0, 400, Boundary::Box).unwrap(), 3).unwrap();
    let ho_err = ho
        .energies
        .iter()
        .enumerate()
        .map(|(n, e)| (e - (n as f64 + 0.5)).abs())
        .fold(0.0, f64::max);
    let well = Grid::line(0.0, PI, 512, Boundary::Box).unwrap();
    let w = solve_stationary(&Potential::new(PotentialKind::BoxWell).unwrap(), &m, &well, 1).unwrap();
    let w_err = (w.energies[0] - 0.5).abs();
    let secs = start.elapsed().as_secs_f64();
    ensure(
        ho_err <= 1e-4 && w_err <= 1e-3 && secs < 5.0,
        format!("oscillator err {ho_err:.2e}, well err {w_err:.2e}, {secs:.2}s"),
    )
}

fn balance_deviation(s: &TimeSeries, pot: &Potential) -> f64 {
    let m = Metric::natural(1);
    let mut worst = 0.0f64;
    for eb in q_from_energy_balance(s, pot, &m).unwrap() {
        let frame = s.frames().iter().find(|f| (f.time() - eb.time).abs() < 1e-9).unwrap();
        let direct = quantum_potential_psi(frame, &m).unwrap();
        let region = mass_region(frame, 0.8);
        for i in 0..region.len() {
            if region[i] && !direct.is_masked(i) && !eb.q.is_masked(i) {
                worst = worst.max((direct.values()[i] - eb.q.values()[i]).abs());
            }
        }
    }
    worst
}

fn q_energy_balance() -> Outcome {
    let m = Metric::natural(1);
    let wide = Grid::line(-30.0, 30.0, 256, Boundary::Periodic).unwrap();
    let gauss = free_gaussian(&wide, &m, &[0.0], &[1.0], &[0.0], 0.0).unwrap();
    let narrow = Grid::line(-10.0, 10.0, 256, Boundary::Periodic).unwrap();
    let ground = oscillator_eigenstate(&narrow, &m, 1.0, &[0], 0.0).unwrap();
    let cases = [("gaussian", gauss, Potential::free()), ("ground", ground, oscillator())];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, psi, pot) in &cases {
        let coarse = balance_deviation(&series(psi, pot, 0.025, 1.0, 1), pot);
        let fine = balance_deviation(&series(psi, pot, 0.0125, 1.0, 1), pot);
        let ratio = coarse / fine;
        ok &= coarse <= 1e-4 && fine <= 1e-4 && (3.0..=5.0).contains(&ratio);
        detail.push(format!("{name} {coarse:.2e} -> {fine:.2e} (ratio {ratio:.2})"));
    }
    ensure(ok, detail.join(", "))
}

fn stationary_balance() -> Outcome {
    let m = Metric::natural(1);
    let g = Grid::line(-10.0, 10.0, 256, Boundary::Periodic).unwrap();
    let psi = oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap();
    let q = quantum_potential_psi(&psi, &m).unwrap();
    let u = oscillator().sample(&g, 0.0, &m).unwrap();
    let worst = (0..g.len())
        .filter(|&i| g.node(i)[0].abs() <= 4.0 && !q.is_masked(i))
        .map(|i| (u[i] + q.values()[i] - 0.5).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-5, format!("max |U + Q - E0| on |x| <= 4: {worst:.2e}"))
}

fn bohm_residuals() -> Outcome {
    let m = Metric::natural(1);
    let mut cont = Vec::new();
    let mut qhj = Vec::new();
    let mut gap = 0.0f64;
    for (n, dt) in [(128, 0.02), (256, 0.01), (512, 0.005)] {
        let g = Grid::line(-10.0, 10.0, n, Boundary::Periodic).unwrap();
        let psi = coherent_state(&g, &m, 1.0, &[2.0], 0.0).unwrap();
        let s = series(&psi, &oscillator(), dt, 1.0, 1);
        let c = continuity_residual(&s, &m, Region::Mass(0.8)).unwrap();
        cont.push(c.full.linf);
        gap = gap.max(c.identity_gap);
        qhj.push(qhj_residual(&s, &oscillator(), &m, Region::Mass(0.8)).unwrap().amplitude_form.linf);
    }
    let ratios = |v: &[f64]| [v[0] / v[1], v[1] / v[2]];
    let (rc, rq) = (ratios(&cont), ratios(&qhj));
    let ok = rc.iter().chain(&rq).all(|r| (3.0..=5.0).contains(r)) && gap <= 1e-8;
    ensure(
        ok,
        format!(
            "continuity ratios {:.2}/{:.2}, qhj ratios {:.2}/{:.2}, identity gap {gap:.1e}",
            rc[0], rc[1], rq[0], rq[1]
        ),
    )
}

fn equivariance() -> Outcome {
    let start = Instant::now();
    let m = Metric::natural(1);
    let g = Grid::line(-10.0, 10.0, 256, Boundary::Periodic).unwrap();
    let psi = coherent_state(&g, &m, 1.0, &[2.0], 0.0).unwrap();
    let s = series(&psi, &oscillator(), 2.0 * PI / 1600.0, 2.0 * PI, 1);
    let ens = integrate_trajectories_with(&s, &m, &SamplingLaw::Density, 10_000, 7, 1).unwrap();
    let d = equivariance_check(&ens, &s).unwrap();
    let max = d.iter().copied().fold(0.0, f64::max);
    let growth = max - d[0];
    let secs = start.elapsed().as_secs_f64();
    ensure(
        max <= 0.05 && growth <= 0.01 && secs < 30.0,
        format!("max L1 {max:.4}, growth {growth:.4}, {secs:.1}s"),
    )
}

fn uncertainty() -> Outcome {
    let m = Metric::natural(1);
    let g = Grid::line(-12.0, 12.0, 256, Boundary::Periodic).unwrap();
    let ground = uncertainty_identity(&oscillator_eigenstate(&g, &m, 1.0, &[0], 0.0).unwrap(), &m).unwrap();
    let mut ok = (ground.product_q[0] - 0.25).abs() <= 1e-6 && ground.gap[0].abs() <= 1e-6;
    let mut worst_gap = 0.0f64;
    let well = Grid::line(0.0, PI, 512, Boundary::Box).unwrap();
    let mut real: Vec<ComplexField> = (0..6).map(|n| oscillator_eigenstate(&g, &m, 1.0, &[n], 0.0).unwrap()).collect();
    real.extend((1..4).map(|n| box_eigenstate(&well, &m, &[n], 0.0).unwrap()));
    for psi in &real {
        let r = uncertainty_identity(psi, &m).unwrap();
        ok &= r.real_state && r.identity_holds == Some(true);
        worst_gap = worst_gap.max(r.gap[0].abs());
    }
    let mut localized: Vec<ComplexField> = Vec::new();
    for a in [-1.5, 0.0, 0.7, 2.0] {
        localized.push(coherent_state(&g, &m, 1.0, &[a], 0.0).unwrap().normalized().unwrap());
    }
    for (x0, s2, p) in [(0.0, 0.3, 0.0), (1.0, 2.0, 1.2), (-2.0, 0.8, -0.5)] {
        localized.push(free_gaussian(&g, &m, &[x0], &[s2], &[p], 0.5).unwrap().normalized().unwrap());
    }
    let mut floor = f64::INFINITY;
    for psi in &localized {
        let r = uncertainty_identity(psi, &m).unwrap();
        ok &= r.localized && r.inequality_holds == Some(true);
        floor = floor.min(r.moments.product[0].min(r.product_q[0]));
    }
    ok &= floor >= 0.25 - 1e-6 && worst_gap <= 1e-6;
    ensure(
        ok,
        format!(
            "ground var_x*2m<Q> {:.9}, real-state gap {worst_gap:.1e}, min localized product {floor:.6}",
            ground.product_q[0]
        ),
    )
}

fn poincare() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, pot, q0) in [
        ("oscillator", oscillator(), 1.0),
        ("inverted", Potential::inverted_harmonic(1.0).unwrap(), 0.001),
    ] {
        let sys = HamiltonianSystem::new(Metric::natural(1), pot).unwrap();
        let base = integrate_hamiltonian(&sys, &ClassicalState::new(vec![q0], vec![0.0], 0.0).unwrap(), 5e-4, 5.0).unwrap();
        let basis = canonical_basis(1, 0.0);
        let u = integrate_variational(&sys, &base, &basis[0]).unwrap();
        let v = integrate_variational(&sys, &base, &basis[1]).unwrap();
        let drift = poincare_invariant(&u, &v).unwrap().drift;
        ok &= drift <= 1e-8 && base.len() > 10_000;
        detail.push(format!("{name} drift {drift:.1e} over {} steps", base.len() - 1));
    }
    ensure(ok, detail.join(", "))
}

fn exponents_for(pot: Potential, q0: f64, p0: f64, t_final: f64, tol: f64) -> chetaev_core::stability::ExponentReport {
    let sys = HamiltonianSystem::new(Metric::natural(1), pot).unwrap();
    let base = integrate_hamiltonian(&sys, &ClassicalState::new(vec![q0], vec![p0], 0.0).unwrap(), 0.01, t_final).unwrap();
    characteristic_numbers(&sys, &base, &canonical_basis(1, 0.0), None, tol).unwrap()
}

fn exponents() -> Outcome {
    let ho = exponents_for(oscillator(), 1.0, 0.0, 1000.0, 1e-3);
    let inv = exponents_for(Potential::inverted_harmonic(1.0).unwrap(), 0.001, 0.0, 40.0, 0.01);
    let free = exponents_for(Potential::free(), 0.0, 1.0, 1000.0, 0.01);
    let ho_max = ho.exponents.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let free_max = free.exponents.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let (hi, lo) = (inv.exponents[0], inv.exponents[1]);
    let ok = ho_max <= 1e-3
        && ho.stable
        && (hi - 1.0).abs() <= 0.01
        && (lo + 1.0).abs() <= 0.01
        && inv.pairing_inequality_holds
        && !inv.stable
        && free.stable
        && free_max <= free.tolerance;
    ensure(
        ok,
        format!("oscillator max {ho_max:.1e}, inverted {hi:.6}/{lo:.6}, free max {free_max:.1e}"),
    )
}

fn base_for(af: &ActionField, q0: f64, t0: f64, dt: f64, t_final: f64) -> chetaev_core::stability::Trajectory {
    let sys = HamiltonianSystem::new(af.metric(), af.potential()).unwrap();
    let s0 = ClassicalState::new(vec![q0], vec![af.ds_dq(q0, t0).unwrap()], t0).unwrap();
    integrate_hamiltonian(&sys, &s0, dt, t_final).unwrap()
}

fn chetaev_action() -> Outcome {
    let plane = ActionField::new(ActionKind::Plane { alpha: 1.3 }, 1.0).unwrap();
    let pts: Vec<(f64, f64)> = (0..20).map(|k| (-5.0 + 0.5 * k as f64, 0.1 * k as f64)).collect();
    let plane_max = l_functional_points(&plane, &pts).unwrap().iter().map(|l| l.abs()).fold(0.0, f64::max);

    let focus = ActionField::new(ActionKind::Focusing { beta: 0.0 }, 1.0).unwrap();
    let fpts: Vec<(f64, f64)> = pts.iter().map(|(q, t)| (*q, t + 0.5)).collect();
    let l_err = l_functional_points(&focus, &fpts)
        .unwrap()
        .iter()
        .zip(&fpts)
        .map(|(l, (_, t))| (l - 1.0 / t).abs())
        .fold(0.0, f64::max);
    let f = exp_integral_characteristic(&focus, &base_for(&focus, 1.0, 1.0, 0.01, 1000.0), None).unwrap();
    let log_err = f
        .times
        .iter()
        .zip(&f.log_f)
        .map(|(t, lf)| (lf - t.ln()).abs())
        .fold(0.0, f64::max);

    let c = 0.7;
    let sep = ActionField::new(ActionKind::Separatrix { omega: c }, 1.0).unwrap();
    let lf = exp_integral_characteristic(&sep, &base_for(&sep, 1.0, 0.0, 0.01, 20.0), None).unwrap();
    let rel = (lf.exponent - c).abs() / c;

    let ok = plane_max == 0.0
        && l_err <= 1e-12
        && log_err <= 1e-6
        && f.is_stable(chetaev_core::stability::DEFAULT_EXPONENT_TOLERANCE)
        && rel <= 0.01;
    ensure(
        ok,
        format!(
            "plane max |L| {plane_max:.1e}, focusing |L - 1/t| {l_err:.1e}, |ln F - ln(t/t0)| {log_err:.1e}, exponent {:.1e}, L = {c}: exponent {:.6}",
            f.exponent, lf.exponent
        ),
    )
}

fn chetaev_identity() -> Outcome {
    let m = Metric::natural(1);
    let g = Grid::line(-30.0, 30.0, 256, Boundary::Periodic).unwrap();
    let psi = free_gaussian(&g, &m, &[0.0], &[1.0], &[0.0], 0.0).unwrap();
    let s = series(&psi, &Potential::free(), 0.05, 1.0, 1);
    let worst = s
        .frames()
        .iter()
        .map(|f| chetaev_condition_psi(f, &m).unwrap().identity_residual)
        .fold(0.0, f64::max);
    ensure(worst <= 1e-6, format!("max identity residual over {} frames: {worst:.1e}", s.len()))
}

fn sweep() -> Outcome {
    let m = Metric::natural(1);
    let g = Grid::line(-20.0, 20.0, 512, Boundary::Periodic).unwrap();
    let params: Vec<f64> = (0..16).map(|k| 0.25 * 16f64.powf(k as f64 / 15.0)).collect();
    let r = perturbation_action_sweep(&TrialFamily::GaussianVariance { center: 0.0 }, &params, &g, &m).unwrap();
    let err = r.max_abs_error.unwrap();
    ensure(err <= 1e-5, format!("max |J - hbar^2/(8 m sigma^2)| {err:.1e} over {} widths", params.len()))
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let cfg = load("ho-coherent").unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let opts = |p: &Path| RunOptions {
        out_root: p.to_path_buf(),
        quiet: true,
    };
    let ra = run(&cfg, &opts(a.path())).unwrap();
    let rb = run(&cfg, &opts(b.path())).unwrap();
    let files = csv_files(&ra.dir);
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| fs::read(ra.dir.join(f)).ok() != fs::read(rb.dir.join(f)).ok())
        .collect();
    let ok = ra.status == RunStatus::Passed && files == csv_files(&rb.dir) && differing.is_empty();
    ensure(ok, format!("{} CSV files compared, {} differ, status {:?}", files.len(), differing.len(), ra.status))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("spectrum", spectrum),
        ("q-energy-balance", q_energy_balance),
        ("stationary-balance", stationary_balance),
        ("bohm-residuals", bohm_residuals),
        ("equivariance", equivariance),
        ("uncertainty", uncertainty),
        ("poincare-invariant", poincare),
        ("exponents", exponents),
        ("chetaev-action", chetaev_action),
        ("chetaev-identity", chetaev_identity),
        ("perturbation-sweep", sweep),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
