//! INI scenario configuration: parsing, validation and canonical rendering.

use std::collections::BTreeMap;
use std::fmt;

use chetaev_core::dynamics::{EvolverConfig, KineticMethod, Scheme};
use chetaev_core::grid::MIN_POINTS;
use chetaev_core::stability::ActionKind;
use chetaev_core::trajectories::SamplingLaw;
use chetaev_core::{Axis, Boundary, Grid, Metric, PotentialKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

/// Every problem found in one pass over a configuration.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub potential: PotentialKind,
    pub mass: Vec<f64>,
    pub hbar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub points: Vec<usize>,
    pub boundary: Boundary,
}

impl GridConfig {
    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn build(&self) -> chetaev_core::Result<Grid> {
        let axes = (0..self.dim())
            .map(|a| Axis {
                min: self.min[a],
                max: self.max[a],
                points: self.points[a],
            })
            .collect();
        Grid::new(axes, self.boundary)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialConfig {
    Gaussian {
        center: Vec<f64>,
        variance: Vec<f64>,
        momentum: Vec<f64>,
    },
    Oscillator { n: Vec<usize>, omega: f64 },
    Coherent { amplitude: Vec<f64>, omega: f64 },
    PlaneWave { momentum: Vec<f64> },
    BoxEigenstate { n: Vec<usize> },
    /// `index`-th state (from 0) of the configured potential on the box grid.
    Stationary { index: usize, kinetic: KineticMethod },
}

impl InitialConfig {
    pub fn name(&self) -> &'static str {
        match self {
            InitialConfig::Gaussian { .. } => "gaussian",
            InitialConfig::Oscillator { .. } => "oscillator",
            InitialConfig::Coherent { .. } => "coherent",
            InitialConfig::PlaneWave { .. } => "plane_wave",
            InitialConfig::BoxEigenstate { .. } => "box_eigenstate",
            InitialConfig::Stationary { .. } => "stationary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    pub store_every: usize,
}

impl EvolutionConfig {
    pub fn evolver(&self) -> chetaev_core::Result<EvolverConfig> {
        EvolverConfig::new(self.dt, self.scheme, self.t_final, self.store_every)
    }
}

/// Analyses, listed in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operation {
    Spectrum,
    BoxArtifact,
    QuantumPotential,
    StationaryBalance,
    Continuity,
    Qhj,
    Chetaev,
    Trajectories,
    Moments,
    Uncertainty,
    Dispersion,
    Classical,
    Exponents,
    Action,
    Sweep,
}

impl Operation {
    pub const ALL: [Operation; 15] = [
        Operation::Spectrum,
        Operation::BoxArtifact,
        Operation::QuantumPotential,
        Operation::StationaryBalance,
        Operation::Continuity,
        Operation::Qhj,
        Operation::Chetaev,
        Operation::Trajectories,
        Operation::Moments,
        Operation::Uncertainty,
        Operation::Dispersion,
        Operation::Classical,
        Operation::Exponents,
        Operation::Action,
        Operation::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operation::Spectrum => "spectrum",
            Operation::BoxArtifact => "box_artifact",
            Operation::QuantumPotential => "quantum_potential",
            Operation::StationaryBalance => "stationary_balance",
            Operation::Continuity => "continuity",
            Operation::Qhj => "qhj",
            Operation::Chetaev => "chetaev",
            Operation::Trajectories => "trajectories",
            Operation::Moments => "moments",
            Operation::Uncertainty => "uncertainty",
            Operation::Dispersion => "dispersion",
            Operation::Classical => "classical",
            Operation::Exponents => "exponents",
            Operation::Action => "action",
            Operation::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }

    /// Needs more than one time slice; skipped when evolution is.
    pub fn is_dynamic(self) -> bool {
        matches!(
            self,
            Operation::Continuity | Operation::Qhj | Operation::Trajectories | Operation::Dispersion
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumParams {
    pub n_states: usize,
    pub tol: f64,
    pub kinetic: KineticMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactParams {
    pub n_states: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryParams {
    pub n_traj: usize,
    pub sampling: SamplingLaw,
    pub substeps: usize,
    pub equivariance_tol: f64,
    pub growth_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalParams {
    pub q0: Vec<f64>,
    pub p0: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub energy_tol: f64,
    pub poincare_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentParams {
    pub dt: f64,
    pub t_final: f64,
    pub tol: f64,
    pub fit_window: Option<(f64, f64)>,
    pub expect_stable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionParams {
    pub kind: ActionKind,
    pub q0: f64,
    pub t0: f64,
    pub dt: f64,
    pub t_final: f64,
    pub xi0: f64,
    pub reduced_tol: f64,
    pub expect_stable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepParams {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub operations: Vec<Operation>,
    pub seed: u64,
    /// Probability mass of the comparison region for Q and the Bohm residuals.
    pub region_mass: Option<f64>,
    pub spectrum: Option<SpectrumParams>,
    pub box_artifact: Option<ArtifactParams>,
    pub q_tol: Option<f64>,
    /// `(window, tol)`: `|x − ⟨x⟩| ≤ window`.
    pub balance: Option<(f64, f64)>,
    pub continuity_tol: Option<f64>,
    pub qhj_tol: Option<f64>,
    pub chetaev_tol: Option<f64>,
    pub trajectories: Option<TrajectoryParams>,
    pub dispersion_tol: Option<f64>,
    pub classical: Option<ClassicalParams>,
    pub exponents: Option<ExponentParams>,
    pub action: Option<ActionParams>,
    pub sweep: Option<SweepParams>,
}

impl AnalysisConfig {
    pub fn has(&self, op: Operation) -> bool {
        self.operations.contains(&op)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Snapshots {
    None,
    Ends,
    All,
}

impl Snapshots {
    fn name(self) -> &'static str {
        match self {
            Snapshots::None => "none",
            Snapshots::Ends => "ends",
            Snapshots::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    /// Run directory, relative to the output root.
    pub directory: String,
    pub snapshots: Snapshots,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub evolution: EvolutionConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn metric(&self) -> chetaev_core::Result<Metric> {
        Metric::new(&self.system.mass, self.system.hbar)
    }
}

const SECTIONS: [&str; 6] = ["system", "grid", "initial", "evolution", "analysis", "output"];

struct Entry {
    value: String,
    line: usize,
    column: usize,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        column: None,
        message: message.into(),
    }
}

/// Split text into sections of `key → entry`, recording syntax errors.
fn tokenize(text: &str, errors: &mut Vec<ConfigError>) -> BTreeMap<String, (usize, BTreeMap<String, Entry>)> {
    let mut sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                errors.push(ConfigError {
                    line: Some(line),
                    column: Some(indent + trimmed.chars().count() + 1),
                    message: "expected `]` to close the section header".into(),
                });
                current = None;
                continue;
            };
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                errors.push(ConfigError {
                    line: Some(line),
                    column: Some(indent + 2),
                    message: format!("unknown section [{name}]; expected one of {}", SECTIONS.join(", ")),
                });
                current = None;
                continue;
            }
            if sections.contains_key(&name) {
                errors.push(err(line, format!("section [{name}] appears twice")));
            }
            sections.entry(name.clone()).or_insert((line, BTreeMap::new()));
            current = Some(name);
            continue;
        }
        let Some(eq) = content.find('=') else {
            errors.push(ConfigError {
                line: Some(line),
                column: Some(indent + 1),
                message: "expected `key = value` or a `[section]` header".into(),
            });
            continue;
        };
        let key = content[..eq].trim();
        let value = content[eq + 1..].trim();
        if key.is_empty() {
            errors.push(ConfigError {
                line: Some(line),
                column: Some(eq + 1),
                message: "missing key before `=`".into(),
            });
            continue;
        }
        if let Some(bad) = key.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')) {
            errors.push(ConfigError {
                line: Some(line),
                column: Some(indent + bad + 1),
                message: format!("invalid character in key `{key}`"),
            });
            continue;
        }
        let Some(section) = &current else {
            errors.push(err(line, format!("key `{key}` outside of any known section")));
            continue;
        };
        let column = eq + 2 + (content[eq + 1..].len() - content[eq + 1..].trim_start().len());
        let entries = &mut sections.get_mut(section).expect("inserted").1;
        if entries.contains_key(key) {
            errors.push(err(line, format!("duplicate key `{key}` in [{section}]")));
            continue;
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
                column,
            },
        );
    }
    sections
}

/// Typed access to one section; consumed keys are removed, leftovers are errors.
struct Reader<'a> {
    section: &'static str,
    entries: BTreeMap<String, Entry>,
    errors: &'a mut Vec<ConfigError>,
}

impl<'a> Reader<'a> {
    fn raw(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn invalid(&mut self, e: &Entry, key: &str, what: &str) {
        self.errors.push(ConfigError {
            line: Some(e.line),
            column: Some(e.column),
            message: format!("[{}] {key}: {what}, got `{}`", self.section, e.value),
        });
    }

    fn out_of_range(&mut self, e: &Entry, message: String) {
        self.errors.push(ConfigError {
            line: Some(e.line),
            column: Some(e.column),
            message: format!("[{}] {message}", self.section),
        });
    }

    fn missing(&mut self, key: &str) {
        self.errors.push(ConfigError {
            line: None,
            column: None,
            message: format!("[{}] missing required key `{key}`", self.section),
        });
    }

    fn parse<T>(&mut self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Option<(T, Entry)> {
        let e = self.raw(key)?;
        match f(&e.value) {
            Some(v) => Some((v, e)),
            None => {
                self.invalid(&e, key, what);
                None
            }
        }
    }

    fn f64_checked(&mut self, key: &str, default: Option<f64>, check: fn(f64) -> bool, what: &str) -> f64 {
        match self.parse(key, "expected a number", |s| s.parse::<f64>().ok().filter(|v| v.is_finite())) {
            Some((v, e)) => {
                if !check(v) {
                    self.out_of_range(&e, format!("{key} must be {what}, got {v}"));
                }
                v
            }
            None => {
                if default.is_none() && !self.errors.iter().any(|e| e.message.contains(&format!("] {key}:"))) {
                    self.missing(key);
                }
                default.unwrap_or(1.0)
            }
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        self.f64_checked(key, Some(default), |_| true, "finite")
    }

    fn positive(&mut self, key: &str, default: Option<f64>) -> f64 {
        self.f64_checked(key, default, |v| v > 0.0, "positive")
    }

    fn non_negative(&mut self, key: &str, default: Option<f64>) -> f64 {
        self.f64_checked(key, default, |v| v >= 0.0, "non-negative")
    }

    fn opt_f64(&mut self, key: &str) -> Option<f64> {
        self.parse(key, "expected a number", |s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .map(|(v, _)| v)
    }

    fn usize_min(&mut self, key: &str, default: usize, min: usize) -> usize {
        match self.parse(key, "expected a non-negative integer", |s| s.parse::<usize>().ok()) {
            Some((v, e)) => {
                if v < min {
                    self.out_of_range(&e, format!("{key} ≥ {min} required, got {v}"));
                }
                v
            }
            None => default,
        }
    }

    fn u64(&mut self, key: &str, default: u64) -> u64 {
        self.parse(key, "expected a non-negative integer", |s| s.parse::<u64>().ok())
            .map_or(default, |(v, _)| v)
    }

    fn bool_opt(&mut self, key: &str) -> Option<bool> {
        self.parse(key, "expected `true` or `false`", |s| match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
        .map(|(v, _)| v)
    }

    fn word(&mut self, key: &str) -> Option<(String, Entry)> {
        let e = self.raw(key)?;
        Some((e.value.clone(), e))
    }

    fn list<T>(&mut self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Option<(Vec<T>, Entry)> {
        self.parse(key, what, |s| s.split(',').map(|x| f(x.trim())).collect::<Option<Vec<T>>>())
    }

    fn f64_list(&mut self, key: &str, dim: usize, default: Option<Vec<f64>>) -> Vec<f64> {
        let fallback = default.clone().unwrap_or_else(|| vec![0.0; dim]);
        match self.list(key, "expected comma-separated numbers", |s| {
            s.parse::<f64>().ok().filter(|v| v.is_finite())
        }) {
            Some((v, e)) => self.broadcast(v, &e, key, dim).unwrap_or(fallback),
            None => {
                if default.is_none() && !self.errors.iter().any(|e| e.message.contains(&format!("] {key}:"))) {
                    self.missing(key);
                }
                fallback
            }
        }
    }

    fn usize_list(&mut self, key: &str, dim: usize, default: Option<Vec<usize>>) -> Vec<usize> {
        let fallback = default.clone().unwrap_or_else(|| vec![0; dim]);
        match self.list(key, "expected comma-separated non-negative integers", |s| s.parse::<usize>().ok()) {
            Some((v, e)) => self.broadcast(v, &e, key, dim).unwrap_or(fallback),
            None => {
                if default.is_none() && !self.errors.iter().any(|e| e.message.contains(&format!("] {key}:"))) {
                    self.missing(key);
                }
                fallback
            }
        }
    }

    fn broadcast<T: Clone>(&mut self, v: Vec<T>, e: &Entry, key: &str, dim: usize) -> Option<Vec<T>> {
        if v.len() == dim {
            Some(v)
        } else if v.len() == 1 {
            Some(vec![v[0].clone(); dim])
        } else {
            self.out_of_range(e, format!("{key} needs 1 or {dim} values, got {}", v.len()));
            None
        }
    }

    fn finish(mut self, hint: impl Fn(&str) -> Option<String>) {
        let leftovers = std::mem::take(&mut self.entries);
        for (key, e) in leftovers {
            let message = match hint(&key) {
                Some(h) => format!("[{}] key `{key}` {h}", self.section),
                None => format!("[{}] unknown key `{key}`", self.section),
            };
            self.errors.push(ConfigError {
                line: Some(e.line),
                column: Some(1),
                message,
            });
        }
    }
}

/// Keys of [analysis] and the operations that enable them.
const ANALYSIS_KEYS: &[(&str, &[Operation])] = &[
    (
        "region_mass",
        &[Operation::QuantumPotential, Operation::Continuity, Operation::Qhj],
    ),
    ("n_states", &[Operation::Spectrum]),
    ("spectrum_tol", &[Operation::Spectrum]),
    ("kinetic", &[Operation::Spectrum]),
    ("artifact_states", &[Operation::BoxArtifact]),
    ("artifact_threshold", &[Operation::BoxArtifact]),
    ("q_tol", &[Operation::QuantumPotential]),
    ("balance_window", &[Operation::StationaryBalance]),
    ("balance_tol", &[Operation::StationaryBalance]),
    ("continuity_tol", &[Operation::Continuity]),
    ("qhj_tol", &[Operation::Qhj]),
    ("chetaev_tol", &[Operation::Chetaev]),
    ("n_traj", &[Operation::Trajectories]),
    ("sampling", &[Operation::Trajectories]),
    ("substeps", &[Operation::Trajectories]),
    ("equivariance_tol", &[Operation::Trajectories]),
    ("growth_tol", &[Operation::Trajectories]),
    ("dispersion_tol", &[Operation::Dispersion]),
    ("q0", &[Operation::Classical, Operation::Exponents]),
    ("p0", &[Operation::Classical, Operation::Exponents]),
    ("classical_dt", &[Operation::Classical, Operation::Exponents]),
    ("classical_t_final", &[Operation::Classical, Operation::Exponents]),
    ("energy_tol", &[Operation::Classical]),
    ("poincare_tol", &[Operation::Classical]),
    ("exponent_dt", &[Operation::Exponents]),
    ("exponent_t_final", &[Operation::Exponents]),
    ("exponent_tol", &[Operation::Exponents]),
    ("fit_start", &[Operation::Exponents]),
    ("fit_end", &[Operation::Exponents]),
    ("expect_stable", &[Operation::Exponents]),
    ("action", &[Operation::Action]),
    ("alpha", &[Operation::Action]),
    ("beta", &[Operation::Action]),
    ("energy", &[Operation::Action]),
    ("action_omega", &[Operation::Action]),
    ("action_q0", &[Operation::Action]),
    ("action_t0", &[Operation::Action]),
    ("action_dt", &[Operation::Action]),
    ("action_t_final", &[Operation::Action]),
    ("xi0", &[Operation::Action]),
    ("reduced_tol", &[Operation::Action]),
    ("action_expect_stable", &[Operation::Action]),
    ("sweep_min", &[Operation::Sweep]),
    ("sweep_max", &[Operation::Sweep]),
    ("sweep_points", &[Operation::Sweep]),
    ("sweep_tol", &[Operation::Sweep]),
];

fn section<'a>(
    sections: &mut BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
    name: &'static str,
    errors: &'a mut Vec<ConfigError>,
) -> Reader<'a> {
    let entries = sections.remove(name).map(|(_, e)| e).unwrap_or_default();
    Reader {
        section: name,
        entries,
        errors,
    }
}

fn parse_system(r: &mut Reader, dim: usize) -> SystemConfig {
    let potential = match r.word("potential") {
        None => {
            r.missing("potential");
            PotentialKind::Free
        }
        Some((w, e)) => match w.as_str() {
            "harmonic" => PotentialKind::Harmonic {
                omega: r.positive("omega", Some(1.0)),
            },
            "inverted_harmonic" => PotentialKind::InvertedHarmonic {
                omega: r.positive("omega", Some(1.0)),
            },
            "free" => PotentialKind::Free,
            "box_well" => PotentialKind::BoxWell,
            "linear" => PotentialKind::Linear {
                force: r.f64_list("force", dim, None),
            },
            "driven_harmonic" => {
                if dim != 1 {
                    r.out_of_range(&e, "driven_harmonic is one-dimensional".into());
                }
                PotentialKind::DrivenHarmonic {
                    omega: r.positive("omega", Some(1.0)),
                    amplitude: r.f64("amplitude", 0.0),
                    frequency: r.f64("frequency", 1.0),
                }
            }
            _ => {
                r.invalid(
                    &e,
                    "potential",
                    "expected harmonic, inverted_harmonic, free, box_well, linear or driven_harmonic",
                );
                PotentialKind::Free
            }
        },
    };
    let mass = r.f64_list("mass", dim, Some(vec![1.0; dim]));
    if let Some(m) = mass.iter().find(|m| **m <= 0.0) {
        r.errors.push(ConfigError {
            line: None,
            column: None,
            message: format!("[system] mass must be positive, got {m}"),
        });
    }
    let hbar = r.positive("hbar", Some(1.0));
    SystemConfig { potential, mass, hbar }
}

fn parse_grid(r: &mut Reader) -> GridConfig {
    let dim = r.usize_min("dim", 1, 1);
    let dim = if dim > 2 {
        r.errors.push(ConfigError {
            line: None,
            column: None,
            message: format!("[grid] dim must be 1 or 2, got {dim}"),
        });
        1
    } else {
        dim
    };
    let min = r.f64_list("min", dim, None);
    let max = r.f64_list("max", dim, None);
    let points = match r.list("points", "expected comma-separated integers", |s| s.parse::<usize>().ok()) {
        Some((v, e)) => {
            let v = r.broadcast(v, &e, "points", dim).unwrap_or_else(|| vec![MIN_POINTS; dim]);
            if let Some(p) = v.iter().find(|p| **p < MIN_POINTS) {
                r.out_of_range(&e, format!("points ≥ {MIN_POINTS} required, got {p}"));
            }
            v
        }
        None => {
            if !r.errors.iter().any(|e| e.message.contains("] points:")) {
                r.missing("points");
            }
            vec![MIN_POINTS; dim]
        }
    };
    for a in 0..dim {
        if max[a] <= min[a] {
            r.errors.push(ConfigError {
                line: None,
                column: None,
                message: format!("[grid] axis {a}: max {} must exceed min {}", max[a], min[a]),
            });
        }
    }
    let boundary = match r.word("boundary") {
        None => Boundary::Periodic,
        Some((w, e)) => match w.as_str() {
            "periodic" => Boundary::Periodic,
            "box" => Boundary::Box,
            _ => {
                r.invalid(&e, "boundary", "expected periodic or box");
                Boundary::Periodic
            }
        },
    };
    GridConfig {
        min,
        max,
        points,
        boundary,
    }
}

fn system_omega(p: &PotentialKind) -> Option<f64> {
    match p {
        PotentialKind::Harmonic { omega } | PotentialKind::DrivenHarmonic { omega, .. } => Some(*omega),
        _ => None,
    }
}

fn parse_kinetic(r: &mut Reader, key: &str) -> KineticMethod {
    match r.word(key) {
        None => KineticMethod::SineDvr,
        Some((w, e)) => match w.as_str() {
            "sine_dvr" => KineticMethod::SineDvr,
            "finite_difference" => KineticMethod::FiniteDifference,
            _ => {
                r.invalid(&e, key, "expected sine_dvr or finite_difference");
                KineticMethod::SineDvr
            }
        },
    }
}

fn parse_initial(r: &mut Reader, dim: usize, system: &SystemConfig, grid: &GridConfig) -> InitialConfig {
    let omega_for = |r: &mut Reader| match (r.opt_f64("omega"), system_omega(&system.potential)) {
        (Some(w), _) if w > 0.0 => w,
        (Some(w), _) => {
            r.errors.push(ConfigError {
                line: None,
                column: None,
                message: format!("[initial] omega must be positive, got {w}"),
            });
            1.0
        }
        (None, Some(w)) => w,
        (None, None) => {
            r.missing("omega");
            1.0
        }
    };
    let Some((state, e)) = r.word("state") else {
        r.missing("state");
        return InitialConfig::Gaussian {
            center: vec![0.0; dim],
            variance: vec![1.0; dim],
            momentum: vec![0.0; dim],
        };
    };
    match state.as_str() {
        "gaussian" => {
            let center = r.f64_list("center", dim, Some(vec![0.0; dim]));
            let variance = r.f64_list("variance", dim, Some(vec![1.0; dim]));
            if variance.iter().any(|v| *v <= 0.0) {
                r.errors.push(ConfigError {
                    line: None,
                    column: None,
                    message: "[initial] variance must be positive".into(),
                });
            }
            InitialConfig::Gaussian {
                center,
                variance,
                momentum: r.f64_list("momentum", dim, Some(vec![0.0; dim])),
            }
        }
        "oscillator" => InitialConfig::Oscillator {
            n: r.usize_list("n", dim, Some(vec![0; dim])),
            omega: omega_for(r),
        },
        "coherent" => InitialConfig::Coherent {
            amplitude: r.f64_list("amplitude", dim, None),
            omega: omega_for(r),
        },
        "plane_wave" => InitialConfig::PlaneWave {
            momentum: r.f64_list("momentum", dim, None),
        },
        "box_eigenstate" => {
            let n = r.usize_list("n", dim, Some(vec![1; dim]));
            if n.contains(&0) {
                r.out_of_range(&e, "box_eigenstate quantum numbers start at 1".into());
            }
            if grid.boundary != Boundary::Box {
                r.out_of_range(&e, "box_eigenstate requires boundary = box".into());
            }
            InitialConfig::BoxEigenstate { n }
        }
        "stationary" => {
            if grid.boundary != Boundary::Box {
                r.out_of_range(&e, "stationary requires boundary = box".into());
            }
            InitialConfig::Stationary {
                index: r.usize_min("index", 0, 0),
                kinetic: parse_kinetic(r, "kinetic"),
            }
        }
        _ => {
            r.invalid(
                &e,
                "state",
                "expected gaussian, oscillator, coherent, plane_wave, box_eigenstate or stationary",
            );
            InitialConfig::Gaussian {
                center: vec![0.0; dim],
                variance: vec![1.0; dim],
                momentum: vec![0.0; dim],
            }
        }
    }
}

fn parse_evolution(r: &mut Reader, boundary: Boundary) -> EvolutionConfig {
    let default_scheme = match boundary {
        Boundary::Periodic => Scheme::SplitStepSpectral,
        Boundary::Box => Scheme::CrankNicolson,
    };
    let scheme = match r.word("scheme") {
        None => default_scheme,
        Some((w, e)) => match w.as_str() {
            "split_step" => Scheme::SplitStepSpectral,
            "crank_nicolson" => Scheme::CrankNicolson,
            _ => {
                r.invalid(&e, "scheme", "expected split_step or crank_nicolson");
                default_scheme
            }
        },
    };
    if scheme != default_scheme {
        r.errors.push(ConfigError {
            line: None,
            column: None,
            message: format!(
                "[evolution] scheme {} is not available on a {} grid",
                scheme_name(scheme),
                boundary.name()
            ),
        });
    }
    let dt = r.positive("dt", Some(0.01));
    let t_final = r.non_negative("t_final", Some(0.0));
    let store_every = r.usize_min("store_every", 1, 1);
    let cfg = EvolutionConfig {
        scheme,
        dt,
        t_final,
        store_every,
    };
    if t_final > 0.0 && dt > 0.0 && store_every > 0 {
        if let Err(e) = cfg.evolver().and_then(|c| c.steps_from(0.0)) {
            r.errors.push(ConfigError {
                line: None,
                column: None,
                message: format!("[evolution] {e}"),
            });
        }
    }
    cfg
}

pub(crate) fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::SplitStepSpectral => "split_step",
        Scheme::CrankNicolson => "crank_nicolson",
    }
}

fn parse_action_kind(r: &mut Reader, system: &SystemConfig) -> ActionKind {
    let Some((w, e)) = r.word("action") else {
        r.missing("action");
        return ActionKind::Plane { alpha: 0.0 };
    };
    let omega_default = match system.potential {
        PotentialKind::Harmonic { omega } | PotentialKind::InvertedHarmonic { omega } => Some(omega),
        _ => None,
    };
    match w.as_str() {
        "plane" => ActionKind::Plane {
            alpha: r.f64("alpha", 1.0),
        },
        "focusing" => ActionKind::Focusing {
            beta: r.f64("beta", 0.0),
        },
        "oscillator" => ActionKind::Oscillator {
            energy: r.positive("energy", Some(0.5)),
            omega: r.positive("action_omega", omega_default.or(Some(1.0))),
        },
        "separatrix" => ActionKind::Separatrix {
            omega: r.positive("action_omega", omega_default.or(Some(1.0))),
        },
        _ => {
            r.invalid(&e, "action", "expected plane, focusing, oscillator or separatrix");
            ActionKind::Plane { alpha: 0.0 }
        }
    }
}

fn parse_analysis(
    r: &mut Reader,
    system: &SystemConfig,
    grid: &GridConfig,
    initial: &InitialConfig,
) -> AnalysisConfig {
    let dim = grid.dim();
    let mut operations = Vec::new();
    if let Some((w, e)) = r.word("operations") {
        for name in w.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match Operation::parse(name) {
                Some(op) if operations.contains(&op) => {
                    r.out_of_range(&e, format!("operation `{name}` listed twice"));
                }
                Some(op) => operations.push(op),
                None => {
                    let names: Vec<&str> = Operation::ALL.iter().map(|o| o.name()).collect();
                    r.out_of_range(&e, format!("unknown operation `{name}`; expected one of {}", names.join(", ")));
                }
            }
        }
    }
    operations.sort();
    let has = |op: Operation| operations.contains(&op);
    let seed = r.u64("seed", 0);
    let one_d = |r: &mut Reader, op: Operation| {
        if dim != 1 {
            r.errors.push(ConfigError {
                line: None,
                column: None,
                message: format!("[analysis] operation `{}` is one-dimensional", op.name()),
            });
        }
    };
    let tol = |r: &mut Reader, key: &str, default: f64| r.positive(key, Some(default));

    let region_mass = (has(Operation::QuantumPotential) || has(Operation::Continuity) || has(Operation::Qhj))
        .then(|| r.f64_checked("region_mass", Some(0.8), |v| v > 0.0 && v <= 1.0, "in (0, 1]"));
    let spectrum = has(Operation::Spectrum).then(|| SpectrumParams {
        n_states: r.usize_min("n_states", 3, 1),
        tol: tol(r, "spectrum_tol", 1e-4),
        kinetic: parse_kinetic(r, "kinetic"),
    });
    let box_artifact = has(Operation::BoxArtifact).then(|| ArtifactParams {
        n_states: r.usize_min("artifact_states", 3, 1),
        threshold: tol(r, "artifact_threshold", 1e-3),
    });
    if (has(Operation::Spectrum) || has(Operation::BoxArtifact)) && matches!(system.potential, PotentialKind::DrivenHarmonic { .. }) {
        r.errors.push(ConfigError {
            line: None,
            column: None,
            message: "[analysis] stationary states need a time-independent potential".into(),
        });
    }
    let q_tol = has(Operation::QuantumPotential).then(|| tol(r, "q_tol", 1e-4));
    let balance = has(Operation::StationaryBalance).then(|| (tol(r, "balance_window", 4.0), tol(r, "balance_tol", 1e-5)));
    let continuity_tol = has(Operation::Continuity).then(|| tol(r, "continuity_tol", 1e-3));
    let qhj_tol = has(Operation::Qhj).then(|| tol(r, "qhj_tol", 1e-3));
    let chetaev_tol = has(Operation::Chetaev).then(|| tol(r, "chetaev_tol", 1e-6));
    let trajectories = has(Operation::Trajectories).then(|| {
        let sampling = match r.word("sampling") {
            None => SamplingLaw::Density,
            Some((w, e)) => match w.as_str() {
                "density" => SamplingLaw::Density,
                "uniform" => SamplingLaw::Uniform,
                _ => {
                    r.invalid(&e, "sampling", "expected density or uniform");
                    SamplingLaw::Density
                }
            },
        };
        TrajectoryParams {
            n_traj: r.usize_min("n_traj", 1000, 1),
            sampling,
            substeps: r.usize_min("substeps", chetaev_core::trajectories::DEFAULT_SUBSTEPS, 1),
            equivariance_tol: tol(r, "equivariance_tol", 0.05),
            growth_tol: tol(r, "growth_tol", 0.01),
        }
    });
    let dispersion_tol = has(Operation::Dispersion).then(|| {
        one_d(r, Operation::Dispersion);
        if !matches!(initial, InitialConfig::Gaussian { .. }) || system.potential != PotentialKind::Free {
            r.errors.push(ConfigError {
                line: None,
                column: None,
                message: "[analysis] dispersion needs a gaussian initial state and potential = free".into(),
            });
        }
        tol(r, "dispersion_tol", 1e-3)
    });
    let classical = (has(Operation::Classical) || has(Operation::Exponents)).then(|| {
        let mut p = ClassicalParams {
            q0: r.f64_list("q0", dim, Some(vec![1.0; dim])),
            p0: r.f64_list("p0", dim, Some(vec![0.0; dim])),
            dt: tol(r, "classical_dt", 0.01),
            t_final: tol(r, "classical_t_final", 10.0),
            energy_tol: 1e-8,
            poincare_tol: 1e-8,
        };
        if has(Operation::Classical) {
            p.energy_tol = tol(r, "energy_tol", 1e-8);
            p.poincare_tol = tol(r, "poincare_tol", 1e-8);
        }
        p
    });
    let exponents = has(Operation::Exponents).then(|| {
        let c = classical.as_ref().expect("enabled with exponents");
        let fit_start = r.opt_f64("fit_start");
        let fit_end = r.opt_f64("fit_end");
        let fit_window = match (fit_start, fit_end) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => {
                r.errors.push(ConfigError {
                    line: None,
                    column: None,
                    message: "[analysis] fit_start and fit_end must be given together".into(),
                });
                None
            }
        };
        ExponentParams {
            dt: tol(r, "exponent_dt", c.dt),
            t_final: tol(r, "exponent_t_final", c.t_final),
            tol: tol(r, "exponent_tol", chetaev_core::stability::DEFAULT_EXPONENT_TOLERANCE),
            fit_window,
            expect_stable: r.bool_opt("expect_stable"),
        }
    });
    let action = has(Operation::Action).then(|| {
        one_d(r, Operation::Action);
        let kind = parse_action_kind(r, system);
        let t0_default = if matches!(kind, ActionKind::Focusing { .. }) { 1.0 } else { 0.0 };
        ActionParams {
            kind,
            q0: r.f64("action_q0", 0.0),
            t0: r.f64("action_t0", t0_default),
            dt: tol(r, "action_dt", 0.01),
            t_final: r.f64("action_t_final", t0_default + 10.0),
            xi0: r.f64("xi0", 1.0),
            reduced_tol: tol(r, "reduced_tol", 1e-4),
            expect_stable: r.bool_opt("action_expect_stable"),
        }
    });
    let sweep = has(Operation::Sweep).then(|| {
        one_d(r, Operation::Sweep);
        let p = SweepParams {
            min: tol(r, "sweep_min", 0.25),
            max: tol(r, "sweep_max", 4.0),
            points: r.usize_min("sweep_points", 16, 2),
            tol: tol(r, "sweep_tol", 1e-5),
        };
        if p.max <= p.min {
            r.errors.push(ConfigError {
                line: None,
                column: None,
                message: "[analysis] sweep_max must exceed sweep_min".into(),
            });
        }
        p
    });
    AnalysisConfig {
        operations,
        seed,
        region_mass,
        spectrum,
        box_artifact,
        q_tol,
        balance,
        continuity_tol,
        qhj_tol,
        chetaev_tol,
        trajectories,
        dispersion_tol,
        classical,
        exponents,
        action,
        sweep,
    }
}

fn parse_output(r: &mut Reader) -> OutputConfig {
    let directory = match r.word("directory") {
        None => "run".to_string(),
        Some((w, e)) => {
            let bad = w.is_empty()
                || w.starts_with('/')
                || w.split(['/', '\\']).any(|c| c == "..")
                || w.contains(|c: char| c.is_control());
            if bad {
                r.invalid(&e, "directory", "expected a relative path without `..`");
            }
            w
        }
    };
    let snapshots = match r.word("snapshots") {
        None => Snapshots::Ends,
        Some((w, e)) => match w.as_str() {
            "none" => Snapshots::None,
            "ends" => Snapshots::Ends,
            "all" => Snapshots::All,
            _ => {
                r.invalid(&e, "snapshots", "expected none, ends or all");
                Snapshots::Ends
            }
        },
    };
    OutputConfig { directory, snapshots }
}

/// Parse and validate a configuration, reporting every error found.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut sections = tokenize(text, &mut errors);
    for required in ["system", "grid", "initial"] {
        if !sections.contains_key(required) {
            errors.push(ConfigError {
                line: None,
                column: None,
                message: format!("missing section [{required}]"),
            });
        }
    }
    let mut r = section(&mut sections, "grid", &mut errors);
    let grid = parse_grid(&mut r);
    r.finish(|_| None);
    let dim = grid.dim();
    let mut r = section(&mut sections, "system", &mut errors);
    let system = parse_system(&mut r, dim);
    r.finish(|k| {
        ["omega", "force", "amplitude", "frequency"]
            .contains(&k)
            .then(|| "is not used by the selected potential".to_string())
    });
    let mut r = section(&mut sections, "initial", &mut errors);
    let initial = parse_initial(&mut r, dim, &system, &grid);
    r.finish(|k| {
        ["center", "variance", "momentum", "n", "omega", "amplitude", "index", "kinetic"]
            .contains(&k)
            .then(|| "is not used by the selected state".to_string())
    });
    let mut r = section(&mut sections, "evolution", &mut errors);
    let evolution = parse_evolution(&mut r, grid.boundary);
    r.finish(|_| None);
    let mut r = section(&mut sections, "analysis", &mut errors);
    let analysis = parse_analysis(&mut r, &system, &grid, &initial);
    r.finish(|k| {
        ANALYSIS_KEYS.iter().find(|(name, _)| *name == k).map(|(_, ops)| {
            let names: Vec<&str> = ops.iter().map(|o| o.name()).collect();
            format!("requires operation {}", names.join(" or "))
        })
    });
    let mut r = section(&mut sections, "output", &mut errors);
    let output = parse_output(&mut r);
    r.finish(|_| None);

    let config = ScenarioConfig {
        system,
        grid,
        initial,
        evolution,
        analysis,
        output,
    };
    if errors.is_empty() {
        cross_check(&config, &mut errors);
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        errors.sort_by_key(|e| (e.line.unwrap_or(usize::MAX), e.column.unwrap_or(0)));
        Err(ConfigErrors(errors))
    }
}

/// Checks that need the assembled configuration.
fn cross_check(c: &ScenarioConfig, errors: &mut Vec<ConfigError>) {
    let mut push = |m: String| {
        errors.push(ConfigError {
            line: None,
            column: None,
            message: m,
        })
    };
    if let Err(e) = c.grid.build() {
        push(format!("[grid] {e}"));
    }
    if let PotentialKind::Linear { force } = &c.system.potential {
        if force.len() != c.grid.dim() {
            push("[system] force needs one value per axis".into());
        }
    }
    if c.system.potential == PotentialKind::BoxWell && c.grid.boundary != Boundary::Box {
        push("[system] box_well requires boundary = box".into());
    }
    if let Some(cl) = &c.analysis.classical {
        if cl.q0.len() != c.grid.dim() || cl.p0.len() != c.grid.dim() {
            push("[analysis] q0 and p0 need one value per axis".into());
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn kinetic_name(k: KineticMethod) -> &'static str {
    match k {
        KineticMethod::SineDvr => "sine_dvr",
        KineticMethod::FiniteDifference => "finite_difference",
    }
}

impl ScenarioConfig {
    /// Canonical INI text with every default filled in; parses back to `self`.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        s.push_str("[system]\n");
        match &self.system.potential {
            PotentialKind::Harmonic { omega } => {
                kv(&mut s, "potential", "harmonic".into());
                kv(&mut s, "omega", omega.to_string());
            }
            PotentialKind::InvertedHarmonic { omega } => {
                kv(&mut s, "potential", "inverted_harmonic".into());
                kv(&mut s, "omega", omega.to_string());
            }
            PotentialKind::Free => kv(&mut s, "potential", "free".into()),
            PotentialKind::BoxWell => kv(&mut s, "potential", "box_well".into()),
            PotentialKind::Linear { force } => {
                kv(&mut s, "potential", "linear".into());
                kv(&mut s, "force", list(force));
            }
            PotentialKind::DrivenHarmonic {
                omega,
                amplitude,
                frequency,
            } => {
                kv(&mut s, "potential", "driven_harmonic".into());
                kv(&mut s, "omega", omega.to_string());
                kv(&mut s, "amplitude", amplitude.to_string());
                kv(&mut s, "frequency", frequency.to_string());
            }
        }
        kv(&mut s, "mass", list(&self.system.mass));
        kv(&mut s, "hbar", self.system.hbar.to_string());

        s.push_str("\n[grid]\n");
        kv(&mut s, "dim", self.grid.dim().to_string());
        kv(&mut s, "min", list(&self.grid.min));
        kv(&mut s, "max", list(&self.grid.max));
        kv(&mut s, "points", list(&self.grid.points));
        kv(&mut s, "boundary", self.grid.boundary.name().into());

        s.push_str("\n[initial]\n");
        kv(&mut s, "state", self.initial.name().into());
        match &self.initial {
            InitialConfig::Gaussian {
                center,
                variance,
                momentum,
            } => {
                kv(&mut s, "center", list(center));
                kv(&mut s, "variance", list(variance));
                kv(&mut s, "momentum", list(momentum));
            }
            InitialConfig::Oscillator { n, omega } => {
                kv(&mut s, "n", list(n));
                kv(&mut s, "omega", omega.to_string());
            }
            InitialConfig::Coherent { amplitude, omega } => {
                kv(&mut s, "amplitude", list(amplitude));
                kv(&mut s, "omega", omega.to_string());
            }
            InitialConfig::PlaneWave { momentum } => kv(&mut s, "momentum", list(momentum)),
            InitialConfig::BoxEigenstate { n } => kv(&mut s, "n", list(n)),
            InitialConfig::Stationary { index, kinetic } => {
                kv(&mut s, "index", index.to_string());
                kv(&mut s, "kinetic", kinetic_name(*kinetic).into());
            }
        }

        s.push_str("\n[evolution]\n");
        kv(&mut s, "scheme", scheme_name(self.evolution.scheme).into());
        kv(&mut s, "dt", self.evolution.dt.to_string());
        kv(&mut s, "t_final", self.evolution.t_final.to_string());
        kv(&mut s, "store_every", self.evolution.store_every.to_string());

        let a = &self.analysis;
        s.push_str("\n[analysis]\n");
        kv(
            &mut s,
            "operations",
            a.operations.iter().map(|o| o.name()).collect::<Vec<_>>().join(", "),
        );
        kv(&mut s, "seed", a.seed.to_string());
        if let Some(v) = a.region_mass {
            kv(&mut s, "region_mass", v.to_string());
        }
        if let Some(p) = &a.spectrum {
            kv(&mut s, "n_states", p.n_states.to_string());
            kv(&mut s, "spectrum_tol", p.tol.to_string());
            kv(&mut s, "kinetic", kinetic_name(p.kinetic).into());
        }
        if let Some(p) = &a.box_artifact {
            kv(&mut s, "artifact_states", p.n_states.to_string());
            kv(&mut s, "artifact_threshold", p.threshold.to_string());
        }
        if let Some(v) = a.q_tol {
            kv(&mut s, "q_tol", v.to_string());
        }
        if let Some((w, t)) = a.balance {
            kv(&mut s, "balance_window", w.to_string());
            kv(&mut s, "balance_tol", t.to_string());
        }
        if let Some(v) = a.continuity_tol {
            kv(&mut s, "continuity_tol", v.to_string());
        }
        if let Some(v) = a.qhj_tol {
            kv(&mut s, "qhj_tol", v.to_string());
        }
        if let Some(v) = a.chetaev_tol {
            kv(&mut s, "chetaev_tol", v.to_string());
        }
        if let Some(p) = &a.trajectories {
            kv(&mut s, "n_traj", p.n_traj.to_string());
            kv(&mut s, "sampling", p.sampling.name().into());
            kv(&mut s, "substeps", p.substeps.to_string());
            kv(&mut s, "equivariance_tol", p.equivariance_tol.to_string());
            kv(&mut s, "growth_tol", p.growth_tol.to_string());
        }
        if let Some(v) = a.dispersion_tol {
            kv(&mut s, "dispersion_tol", v.to_string());
        }
        if let Some(p) = &a.classical {
            kv(&mut s, "q0", list(&p.q0));
            kv(&mut s, "p0", list(&p.p0));
            kv(&mut s, "classical_dt", p.dt.to_string());
            kv(&mut s, "classical_t_final", p.t_final.to_string());
            if a.has(Operation::Classical) {
                kv(&mut s, "energy_tol", p.energy_tol.to_string());
                kv(&mut s, "poincare_tol", p.poincare_tol.to_string());
            }
        }
        if let Some(p) = &a.exponents {
            kv(&mut s, "exponent_dt", p.dt.to_string());
            kv(&mut s, "exponent_t_final", p.t_final.to_string());
            kv(&mut s, "exponent_tol", p.tol.to_string());
            if let Some((a, b)) = p.fit_window {
                kv(&mut s, "fit_start", a.to_string());
                kv(&mut s, "fit_end", b.to_string());
            }
            if let Some(b) = p.expect_stable {
                kv(&mut s, "expect_stable", b.to_string());
            }
        }
        if let Some(p) = &a.action {
            match p.kind {
                ActionKind::Plane { alpha } => {
                    kv(&mut s, "action", "plane".into());
                    kv(&mut s, "alpha", alpha.to_string());
                }
                ActionKind::Focusing { beta } => {
                    kv(&mut s, "action", "focusing".into());
                    kv(&mut s, "beta", beta.to_string());
                }
                ActionKind::Oscillator { energy, omega } => {
                    kv(&mut s, "action", "oscillator".into());
                    kv(&mut s, "energy", energy.to_string());
                    kv(&mut s, "action_omega", omega.to_string());
                }
                ActionKind::Separatrix { omega } => {
                    kv(&mut s, "action", "separatrix".into());
                    kv(&mut s, "action_omega", omega.to_string());
                }
            }
            kv(&mut s, "action_q0", p.q0.to_string());
            kv(&mut s, "action_t0", p.t0.to_string());
            kv(&mut s, "action_dt", p.dt.to_string());
            kv(&mut s, "action_t_final", p.t_final.to_string());
            kv(&mut s, "xi0", p.xi0.to_string());
            kv(&mut s, "reduced_tol", p.reduced_tol.to_string());
            if let Some(b) = p.expect_stable {
                kv(&mut s, "action_expect_stable", b.to_string());
            }
        }
        if let Some(p) = &a.sweep {
            kv(&mut s, "sweep_min", p.min.to_string());
            kv(&mut s, "sweep_max", p.max.to_string());
            kv(&mut s, "sweep_points", p.points.to_string());
            kv(&mut s, "sweep_tol", p.tol.to_string());
        }

        s.push_str("\n[output]\n");
        kv(&mut s, "directory", self.output.directory.clone());
        kv(&mut s, "snapshots", self.output.snapshots.name().into());
        s
    }
}
