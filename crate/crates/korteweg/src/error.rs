//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad parameter ranges, unknown config keys,
    /// inadmissible Lame coefficients.
    #[error("configuration error: {0}")]
    Config(String),

    /// A pointwise constitutive law was called outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation at a singular point (e.g. rho = 0 with a negative
    /// power-law exponent). The solvers enforce a density floor, so this
    /// signals a bug upstream rather than a physical vacuum state.
    #[error("singular input: {0}")]
    SingularInput(String),

    /// The density dropped below the configured floor. No clipping is
    /// performed; the run aborts so that energy accounting stays honest.
    #[error("density floor violated at t = {t:.6e}: min rho = {min_rho:.6e} < floor {floor:.6e}")]
    FloorViolation { t: f64, min_rho: f64, floor: f64 },

    /// NaN or infinity showed up in a state field.
    #[error("non-finite values detected at t = {t:.6e} in field '{field}'")]
    NonFinite { t: f64, field: &'static str },

    /// A numerical procedure failed its own accuracy control
    /// (e.g. the Richardson check on a directional derivative).
    #[error("numerical accuracy: {0}")]
    Accuracy(String),

    /// Mismatched grids, times, or otherwise inconsistent arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// Two redundant evaluations of the same quantity disagreed beyond
    /// tolerance.
    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Io { .. } => 2,
            Error::FloorViolation { .. }
            | Error::NonFinite { .. }
            | Error::Accuracy(_)
            | Error::Consistency(_)
            | Error::Domain(_)
            | Error::SingularInput(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
