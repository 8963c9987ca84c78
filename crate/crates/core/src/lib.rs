//! Numerical laboratory relating Chetaev's stability condition for Hamiltonian
//! motion to the Schrödinger equation and Bohm's quantum potential.
//!
//! The crate is organized in layers: [`grid`], [`field`] and [`diff`] provide
//! lattices, fields and discrete operators; [`dynamics`] solves the
//! Schrödinger equation; [`polar`] performs the amplitude/action split and
//! evaluates the Bohm system; [`trajectories`] transports particle ensembles
//! along the Bohm velocity; [`stability`] integrates classical flows and
//! their variations; [`observables`] computes moments and the uncertainty
//! identity.

pub mod diff;
pub mod dynamics;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod interp;
pub mod linalg;
pub mod observables;
pub mod polar;
pub mod potential;
pub mod stability;
pub mod trajectories;
pub mod wavefunctions;

pub use error::{Error, Result};
pub use field::{ClassicalState, ComplexField, PolarField, RealField, Units, VariationalState};
pub use grid::{Axis, Boundary, Grid, Metric};
pub use potential::{Potential, PotentialKind};
