//! Built-in scenario catalog.

pub struct Scenario {
    pub id: &'static str,
    pub description: &'static str,
    pub config: &'static str,
}

pub const SCENARIOS: &[Scenario] = &[
    Scenario {
        id: "ho-ground",
        description: "oscillator ground state: spectrum, U + Q = E, Bohm residuals, uncertainty identity",
        config: "\
[system]
potential = harmonic
omega = 1

[grid]
min = -10
max = 10
points = 256
boundary = periodic

[initial]
state = oscillator
n = 0

[evolution]
dt = 0.005
t_final = 1
store_every = 1

[analysis]
operations = spectrum, quantum_potential, stationary_balance, continuity, qhj, chetaev, moments, uncertainty
n_states = 3
spectrum_tol = 1e-4
q_tol = 1e-4
balance_window = 4
balance_tol = 1e-5
continuity_tol = 1e-6
qhj_tol = 1e-5
chetaev_tol = 1e-4

[output]
directory = ho-ground
",
    },
    Scenario {
        id: "ho-excited",
        description: "first excited oscillator state: node masking, Q balance, uncertainty identity",
        config: "\
[system]
potential = harmonic
omega = 1

[grid]
min = -10
max = 10
points = 256
boundary = periodic

[initial]
state = oscillator
n = 1

[evolution]
dt = 0.005
t_final = 1
store_every = 1

[analysis]
operations = quantum_potential, stationary_balance, continuity, qhj, moments, uncertainty
q_tol = 1e-4
balance_window = 4
balance_tol = 1e-5
continuity_tol = 1e-6
qhj_tol = 1e-5

[output]
directory = ho-excited
",
    },
    Scenario {
        id: "ho-coherent",
        description: "coherent state over one period: Bohm residuals and 10^4 equivariant trajectories",
        config: "\
[system]
potential = harmonic
omega = 1

[grid]
min = -10
max = 10
points = 256
boundary = periodic

[initial]
state = coherent
amplitude = 2

[evolution]
dt = 0.003926990816987241
t_final = 6.283185307179586
store_every = 1

[analysis]
operations = quantum_potential, continuity, qhj, trajectories, moments, uncertainty
seed = 7
q_tol = 1e-4
continuity_tol = 1e-4
qhj_tol = 1e-4
n_traj = 10000
substeps = 1
equivariance_tol = 0.05
growth_tol = 0.01

[output]
directory = ho-coherent
",
    },
    Scenario {
        id: "free-gaussian",
        description: "spreading free Gaussian: dispersion law, Q from energy balance, Chetaev identity",
        config: "\
[system]
potential = free

[grid]
min = -30
max = 30
points = 256
boundary = periodic

[initial]
state = gaussian
center = 0
variance = 1
momentum = 0

[evolution]
dt = 0.05
t_final = 1
store_every = 1

[analysis]
operations = dispersion, quantum_potential, continuity, qhj, chetaev, moments, uncertainty
dispersion_tol = 1e-3
q_tol = 1e-4
continuity_tol = 1e-3
qhj_tol = 1e-3
chetaev_tol = 1e-6

[output]
directory = free-gaussian
",
    },
    Scenario {
        id: "free-plane",
        description: "plane wave: Q = 0, straight trajectories, non-normalizable uncertainty case",
        config: "\
[system]
potential = free

[grid]
min = -10
max = 10
points = 128
boundary = periodic

[initial]
state = plane_wave
momentum = 1

[evolution]
dt = 0.01
t_final = 1
store_every = 1

[analysis]
operations = quantum_potential, continuity, qhj, chetaev, trajectories, moments, uncertainty
q_tol = 1e-8
continuity_tol = 1e-8
qhj_tol = 1e-8
chetaev_tol = 1e-8
n_traj = 100
sampling = uniform

[output]
directory = free-plane
",
    },
    Scenario {
        id: "inverted-ho",
        description: "inverted oscillator: box artifacts, Poincare invariant, exponents +-omega",
        config: "\
[system]
potential = inverted_harmonic
omega = 1

[grid]
min = -20
max = 20
points = 512
boundary = periodic

[initial]
state = gaussian
center = 0
variance = 0.5

[evolution]
dt = 0.005
t_final = 1
store_every = 10

[analysis]
operations = box_artifact, moments, uncertainty, classical, exponents
artifact_states = 3
artifact_threshold = 1e-3
q0 = 0.001
p0 = 0
classical_dt = 0.0005
classical_t_final = 5
energy_tol = 1e-8
poincare_tol = 1e-8
exponent_dt = 0.01
exponent_t_final = 40
exponent_tol = 0.01
expect_stable = false

[output]
directory = inverted-ho
",
    },
    Scenario {
        id: "box-well",
        description: "infinite well on [0, pi]: spectrum n^2/2 and the stationary balance",
        config: "\
[system]
potential = box_well

[grid]
min = 0
max = 3.141592653589793
points = 512
boundary = box

[initial]
state = box_eigenstate
n = 1

[evolution]
dt = 0.001
t_final = 0.1
store_every = 10

[analysis]
operations = spectrum, quantum_potential, stationary_balance, moments, uncertainty
n_states = 3
spectrum_tol = 1e-3
q_tol = 1e-4
balance_window = 1
balance_tol = 1e-5

[output]
directory = box-well
",
    },
    Scenario {
        id: "chetaev-classical-ho",
        description: "classical oscillator: energy, Poincare invariant, zero exponents, oscillator action",
        config: "\
[system]
potential = harmonic
omega = 1

[grid]
min = -10
max = 10
points = 256
boundary = periodic

[initial]
state = oscillator
n = 0

[evolution]
t_final = 0

[analysis]
operations = quantum_potential, moments, uncertainty, classical, exponents, action
q0 = 1
p0 = 0
classical_dt = 0.001
classical_t_final = 10
energy_tol = 1e-8
poincare_tol = 1e-9
exponent_dt = 0.01
exponent_t_final = 1000
exponent_tol = 1e-3
expect_stable = true
action = oscillator
energy = 0.5
action_q0 = 0
action_t0 = 0
action_dt = 0.001
action_t_final = 1.2
reduced_tol = 1e-4

[output]
directory = chetaev-classical-ho
",
    },
    Scenario {
        id: "chetaev-focusing",
        description: "free focusing action: L = 1/t, exp of its integral grows like t, zero exponents",
        config: "\
[system]
potential = free

[grid]
min = -20
max = 20
points = 512
boundary = periodic

[initial]
state = gaussian
center = 0
variance = 1

[evolution]
t_final = 0

[analysis]
operations = quantum_potential, chetaev, moments, uncertainty, exponents, action
chetaev_tol = 1e-6
q0 = 0
p0 = 1
classical_dt = 0.01
classical_t_final = 1000
exponent_tol = 0.01
expect_stable = true
action = focusing
beta = 0
action_q0 = 1
action_t0 = 1
action_dt = 0.01
action_t_final = 1000
reduced_tol = 1e-6
action_expect_stable = true

[output]
directory = chetaev-focusing
",
    },
    Scenario {
        id: "sweep-gaussian-width",
        description: "perturbation action J over Gaussian widths 0.25..4 against hbar^2/(8 m sigma^2)",
        config: "\
[system]
potential = free

[grid]
min = -20
max = 20
points = 512
boundary = periodic

[initial]
state = gaussian
center = 0
variance = 1

[evolution]
t_final = 0

[analysis]
operations = sweep, quantum_potential, moments, uncertainty
sweep_min = 0.25
sweep_max = 4
sweep_points = 16
sweep_tol = 1e-5

[output]
directory = sweep-gaussian-width
",
    },
];

pub fn find(id: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.id == id)
}

pub fn ids() -> Vec<&'static str> {
    SCENARIOS.iter().map(|s| s.id).collect()
}
