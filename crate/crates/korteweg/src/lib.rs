//! Numerical laboratory for the high-friction relaxation limit of the
//! Euler-Korteweg and Navier-Stokes-Korteweg systems on the 1-D torus.
//!
//! The crate integrates the scaled augmented systems, their shared
//! Cahn-Hilliard-type equilibrium flow, and evaluates the relative-entropy
//! distance and its dissipation budget between the two, so that the
//! stability bounds `Psi(t) <= C (Psi(0) + eps^4)` (inviscid) and
//! `Psi(t) <= C (Psi(0) + eps^4 + nu eps)` (viscous) can be measured in
//! epsilon sweeps.

pub mod config;
pub mod constitutive;
pub mod entropy;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod relax;
pub mod report;
pub mod sweep;

pub use config::{ExperimentConfig, Model};
pub use constitutive::{FluidParams, LameMode};
pub use error::{Error, Result};
pub use grid::{Field, TorusGrid};
