"""Quick end-to-end check of the chetaev_lab extension module.

Run after `pip install --no-build-isolation -e .` from the repository root.
"""

import sys
import tempfile

import chetaev_lab as lab


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    m = lab.Metric()
    ho = lab.Potential.harmonic(1.0)

    energies, states = lab.solve_stationary(ho, m, lab.Grid(-10, 10, 400, "box"), 3)
    assert all(close(e, n + 0.5, 1e-4) for n, e in enumerate(energies)), energies
    assert len(states) == 3

    g = lab.Grid(-10, 10, 256)
    ground = lab.State.oscillator(g, m, 0)
    q = lab.quantum_potential(ground, m)
    xs = g.coords()
    worst = max(
        abs(ho.value(x, m) + qi - 0.5) for x, qi in zip(xs, q) if qi is not None and abs(x) <= 4
    )
    assert worst < 1e-5, worst

    u = lab.uncertainty(ground, m)
    assert u["passed"] and close(u["product_q"], 0.25, 1e-6), u

    psi = lab.State.coherent(g, m, 2.0)
    series = lab.evolve(psi, ho, m, dt=0.01, t_final=1.0)
    assert len(series) == 101
    assert close(series.frame(100).norm_sqr(), 1.0, 1e-10)
    c = lab.continuity_residual(series, m, mass_fraction=0.8)
    assert c["identity_gap"] < 1e-8, c
    d = lab.equivariance(series, m, n_traj=2000, seed=1)
    assert len(d) == len(series) and max(d) < 0.2, max(d)

    r = lab.exponents(lab.Potential.inverted_harmonic(1.0), m, 0.001, 0.0, 0.01, 40.0)
    assert close(r["exponents"][0], 1.0, 0.01) and not r["stable"], r

    sweep = lab.gaussian_width_sweep(lab.Grid(-20, 20, 512), m, [0.5, 1.0, 2.0])
    assert all(close(j, 1 / (8 * s2), 1e-5) for s2, j in sweep), sweep

    free = lab.evolve(lab.State.gaussian(lab.Grid(-30, 30, 256), m), lab.Potential.free(), m, 0.05, 1.0)
    assert lab.chetaev_identity(free.frame(len(free) - 1), m) < 1e-6

    ids = [i for i, _ in lab.list_scenarios()]
    assert "ho-coherent" in ids
    with tempfile.TemporaryDirectory() as out:
        status, run_dir = lab.run_scenario("sweep-gaussian-width", out)
        assert status == "passed", (status, run_dir)

    try:
        lab.Grid(0, 1, 4)
    except ValueError as e:
        assert "points" in str(e), e
    else:
        raise AssertionError("a 4-point grid was accepted")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
