//! Error types shared by the solver modules.

use std::path::PathBuf;

use thiserror::Error;

/// Failures raised by the numerical kernels and drivers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration for `{key}`: {message}")]
    InvalidConfig { key: String, message: String },

    /// The depth fell to (or below) the positivity threshold.
    #[error(
        "nonpositive depth h = {h:e} at cell ({i}, {j}): the water depth is zero, \
         which is not physically meaningful"
    )]
    NonPositiveDepth { h: f64, i: isize, j: isize },

    #[error("CFL violation: max Courant number {courant:.4} exceeds 1 (dt = {dt:e})")]
    CflViolation { courant: f64, dt: f64 },

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("source step time step {dt:e} exceeds the viscous stability bound {bound:e}")]
    SourceStepTooLarge { dt: f64, bound: f64 },

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("Poisson solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    PoissonNotConverged { residual: f64, iterations: usize },

    #[error("step {step} (t = {t:e}) failed{}: {source}", snapshot_note(.snapshot))]
    StepFailed {
        step: usize,
        t: f64,
        snapshot: Option<PathBuf>,
        #[source]
        source: Box<SolverError>,
    },

    #[error("convergence study aborted at N = {n}: {source}")]
    LevelFailed {
        n: usize,
        #[source]
        source: Box<SolverError>,
    },

    #[error("malformed field dump {path}: {message}")]
    MalformedDump { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn snapshot_note(snapshot: &Option<PathBuf>) -> String {
    match snapshot {
        Some(p) => format!(" (field snapshot written to {})", p.display()),
        None => String::new(),
    }
}

impl SolverError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SolverError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        SolverError::InvalidConfig {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SolverError>;
