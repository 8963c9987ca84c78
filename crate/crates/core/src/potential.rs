//! External potentials `U(q, t)` shared by the quantum and classical modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::grid::{Grid, Metric};
use crate::interp::GridSpline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `Σ ½ m_i ω² q_i²`
    Harmonic { omega: f64 },
    Free,
    /// `-Σ ½ m_i ω² q_i²`
    InvertedHarmonic { omega: f64 },
    /// Zero inside; the walls come from a box grid.
    BoxWell,
    /// `-Σ F_i q_i`
    Linear { force: Vec<f64> },
    /// `½ m ω² q₀² − F₀ q₀ sin(Ω t)`
    DrivenHarmonic { omega: f64, amplitude: f64, frequency: f64 },
}

#[derive(Debug, Clone)]
pub enum Potential {
    Analytic(PotentialKind),
    Tabulated { field: RealField, spline: GridSpline },
}

impl PartialEq for Potential {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Potential::Analytic(a), Potential::Analytic(b)) => a == b,
            (Potential::Tabulated { field: a, .. }, Potential::Tabulated { field: b, .. }) => a == b,
            _ => false,
        }
    }
}

const FD_STEP: f64 = 1e-4;

impl Potential {
    pub fn harmonic(omega: f64) -> Result<Self> {
        Self::new(PotentialKind::Harmonic { omega })
    }

    pub fn free() -> Self {
        Potential::Analytic(PotentialKind::Free)
    }

    pub fn inverted_harmonic(omega: f64) -> Result<Self> {
        Self::new(PotentialKind::InvertedHarmonic { omega })
    }

    pub fn new(kind: PotentialKind) -> Result<Self> {
        match &kind {
            PotentialKind::Harmonic { omega }
            | PotentialKind::InvertedHarmonic { omega }
            | PotentialKind::DrivenHarmonic { omega, .. } => {
                if !(omega.is_finite() && *omega > 0.0) {
                    return Err(Error::InvalidInput(format!("ω must be positive, got {omega}")));
                }
            }
            PotentialKind::Linear { force } => {
                if force.is_empty() || force.iter().any(|f| !f.is_finite()) {
                    return Err(Error::InvalidInput("linear force must be finite".into()));
                }
            }
            PotentialKind::Free | PotentialKind::BoxWell => {}
        }
        if let PotentialKind::DrivenHarmonic { amplitude, frequency, .. } = &kind {
            if !(amplitude.is_finite() && frequency.is_finite()) {
                return Err(Error::InvalidInput("drive parameters must be finite".into()));
            }
        }
        Ok(Potential::Analytic(kind))
    }

    /// Time-independent potential sampled on a grid; evaluated off-grid by cubic splines.
    pub fn tabulated(field: RealField) -> Result<Self> {
        if field.mask().is_some() {
            return Err(Error::InvalidInput("tabulated potential must not be masked".into()));
        }
        let spline = GridSpline::new(field.grid(), field.values());
        Ok(Potential::Tabulated { field, spline })
    }

    pub fn kind(&self) -> Option<&PotentialKind> {
        match self {
            Potential::Analytic(k) => Some(k),
            Potential::Tabulated { .. } => None,
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Potential::Analytic(PotentialKind::DrivenHarmonic { .. }))
    }

    pub fn value(&self, q: &[f64], t: f64, metric: &Metric) -> f64 {
        match self {
            Potential::Analytic(kind) => match kind {
                PotentialKind::Harmonic { omega } => q
                    .iter()
                    .enumerate()
                    .map(|(a, x)| 0.5 * metric.mass(a) * omega * omega * x * x)
                    .sum(),
                PotentialKind::InvertedHarmonic { omega } => -q
                    .iter()
                    .enumerate()
                    .map(|(a, x)| 0.5 * metric.mass(a) * omega * omega * x * x)
                    .sum::<f64>(),
                PotentialKind::Free | PotentialKind::BoxWell => 0.0,
                PotentialKind::Linear { force } => -q.iter().zip(force).map(|(x, f)| x * f).sum::<f64>(),
                PotentialKind::DrivenHarmonic { omega, amplitude, frequency } => {
                    0.5 * metric.mass(0) * omega * omega * q[0] * q[0] - amplitude * q[0] * (frequency * t).sin()
                }
            },
            Potential::Tabulated { spline, .. } => spline.eval(q),
        }
    }

    /// `∂U/∂q_i`.
    pub fn gradient(&self, q: &[f64], t: f64, metric: &Metric) -> [f64; 2] {
        let mut g = [0.0; 2];
        match self {
            Potential::Analytic(kind) => {
                for (a, ga) in g.iter_mut().enumerate().take(q.len()) {
                    *ga = match kind {
                        PotentialKind::Harmonic { omega } => metric.mass(a) * omega * omega * q[a],
                        PotentialKind::InvertedHarmonic { omega } => -metric.mass(a) * omega * omega * q[a],
                        PotentialKind::Free | PotentialKind::BoxWell => 0.0,
                        PotentialKind::Linear { force } => -force[a],
                        PotentialKind::DrivenHarmonic { omega, amplitude, frequency } => {
                            if a == 0 {
                                metric.mass(0) * omega * omega * q[0] - amplitude * (frequency * t).sin()
                            } else {
                                0.0
                            }
                        }
                    };
                }
            }
            Potential::Tabulated { field, .. } => {
                for (a, ga) in g.iter_mut().enumerate().take(q.len()) {
                    let d = FD_STEP * field.grid().spacing(a);
                    let mut qp = q.to_vec();
                    let mut qm = q.to_vec();
                    qp[a] += d;
                    qm[a] -= d;
                    *ga = (self.value(&qp, t, metric) - self.value(&qm, t, metric)) / (2.0 * d);
                }
            }
        }
        g
    }

    /// Symmetric Hessian `∂²U/∂q_i∂q_j`.
    pub fn hessian(&self, q: &[f64], t: f64, metric: &Metric) -> [[f64; 2]; 2] {
        let n = q.len();
        let mut h = [[0.0; 2]; 2];
        match self {
            Potential::Analytic(kind) => {
                for (a, row) in h.iter_mut().enumerate().take(n) {
                    row[a] = match kind {
                        PotentialKind::Harmonic { omega } => metric.mass(a) * omega * omega,
                        PotentialKind::InvertedHarmonic { omega } => -metric.mass(a) * omega * omega,
                        PotentialKind::DrivenHarmonic { omega, .. } if a == 0 => metric.mass(0) * omega * omega,
                        _ => 0.0,
                    };
                }
            }
            Potential::Tabulated { field, .. } => {
                for a in 0..n {
                    for b in a..n {
                        let da = FD_STEP * field.grid().spacing(a) * 10.0;
                        let db = FD_STEP * field.grid().spacing(b) * 10.0;
                        let shifted = |sa: f64, sb: f64| {
                            let mut x = q.to_vec();
                            x[a] += sa * da;
                            x[b] += sb * db;
                            self.value(&x, t, metric)
                        };
                        let v = (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0)
                            + shifted(-1.0, -1.0))
                            / (4.0 * da * db);
                        h[a][b] = v;
                        h[b][a] = v;
                    }
                }
            }
        }
        h
    }

    /// Node values at time `t`.
    pub fn sample(&self, grid: &Grid, t: f64, metric: &Metric) -> Result<Vec<f64>> {
        metric.check_grid(grid)?;
        if let Potential::Tabulated { field, .. } = self {
            if field.grid() != grid {
                return Err(Error::GridMismatch);
            }
            return Ok(field.values().to_vec());
        }
        let vals: Vec<f64> = (0..grid.len())
            .map(|i| {
                let q = grid.node(i);
                self.value(&q[..grid.dim()], t, metric)
            })
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("potential is not finite on the grid".into()));
        }
        Ok(vals)
    }
}
