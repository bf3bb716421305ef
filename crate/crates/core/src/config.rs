//! Run configuration: grid, physics, time stepping and scheme choices.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::grid::Grid;
use crate::params::PhysParams;

/// Wave limiter applied to the second-order correction waves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Limiter {
    /// Unlimited (Lax-Wendroff) corrections.
    None,
    Minmod,
    #[default]
    Mc,
    Superbee,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// A(dt) then B(dt).
    Godunov,
    /// A(dt/2), B(dt), A(dt/2).
    #[default]
    Strang,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Periodic,
    #[default]
    SolidWall,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStepping {
    /// Fixed step in seconds (or model time units).
    Fixed(f64),
    /// Adaptive step targeting this Courant number.
    Cfl(f64),
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, { $($name:literal => $val:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = SolverError;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($val),)+
                    other => Err(SolverError::config(
                        $what,
                        format!("unknown value `{other}` (expected one of: {})", [$($name),+].join(", ")),
                    )),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self { $(v if *v == $val => $name,)+ _ => unreachable!() };
                f.write_str(name)
            }
        }
    };
}

keyword_enum!(Limiter, "limiter", {
    "none" => Limiter::None,
    "minmod" => Limiter::Minmod,
    "mc" => Limiter::Mc,
    "superbee" => Limiter::Superbee,
});

keyword_enum!(Splitting, "splitting", {
    "godunov" => Splitting::Godunov,
    "strang" => Splitting::Strang,
});

keyword_enum!(BoundaryKind, "boundary", {
    "periodic" => BoundaryKind::Periodic,
    "solid_wall" => BoundaryKind::SolidWall,
});

/// Everything needed to advance a shallow-water state from 0 to `t_end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: Grid,
    pub params: PhysParams,
    pub stepping: TimeStepping,
    pub t_end: f64,
    pub splitting: Splitting,
    pub limiter: Limiter,
    pub boundary: BoundaryKind,
    /// Harten-Hyman entropy fix in the Riemann solver.
    #[serde(default)]
    pub entropy_fix: bool,
    /// Invoke output hooks (and record diagnostics in fixed mode) every this many steps.
    pub output_every: usize,
    pub seed: u64,
    /// Directory that receives a field dump when a step fails.
    #[serde(default)]
    pub failure_dump_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        Grid::new(
            self.grid.nx,
            self.grid.ny,
            self.grid.dx,
            self.grid.dy,
            self.grid.x0,
            self.grid.y0,
        )?;
        self.params.validate()?;
        match self.stepping {
            TimeStepping::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                return Err(SolverError::config("dt", "time step must be positive"));
            }
            TimeStepping::Cfl(c) if !(c > 0.0 && c <= 1.0) => {
                return Err(SolverError::config("cfl", "CFL target must lie in (0, 1]"));
            }
            _ => {}
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(SolverError::config("t_end", "final time must be positive"));
        }
        if self.output_every == 0 {
            return Err(SolverError::config("output_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// Validated grid of a run configuration.
pub fn build_grid(config: &RunConfig) -> Result<Grid> {
    config.validate()?;
    Ok(config.grid)
}
