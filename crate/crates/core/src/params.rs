//! Physical coefficients of the momentum equations and the forcing selector.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::verification::AnsatzParams;

/// Wind-stress forcing `F^u = -tau0 / (rho H0) cos(2 pi y / L)`, `F^v = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindForcing {
    /// Wind stress amplitude (N/m^2).
    pub tau0: f64,
    /// Upper-layer density (kg/m^3).
    pub rho: f64,
    /// Reference layer depth (m).
    pub h0: f64,
    /// North-south basin length (m).
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Forcing {
    #[default]
    None,
    Wind(WindForcing),
    Manufactured(AnsatzParams),
}

/// Coefficients of the source terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysParams {
    /// Reduced gravity (m/s^2).
    pub g_r: f64,
    /// Coriolis parameter at `beta_origin` (1/s).
    pub f0: f64,
    /// Meridional Coriolis gradient (1/(m s)).
    pub beta: f64,
    /// Kinematic viscosity (m^2/s).
    pub nu: f64,
    /// y coordinate at which the Coriolis parameter equals `f0`.
    #[serde(default)]
    pub beta_origin: f64,
    #[serde(default)]
    pub forcing: Forcing,
}

impl PhysParams {
    /// Inviscid, non-rotating, unforced parameters.
    pub fn hyperbolic_only(g_r: f64) -> Self {
        PhysParams {
            g_r,
            f0: 0.0,
            beta: 0.0,
            nu: 0.0,
            beta_origin: 0.0,
            forcing: Forcing::None,
        }
    }

    /// Coriolis parameter `f0 + beta (y - beta_origin)`.
    #[inline]
    pub fn coriolis(&self, y: f64) -> f64 {
        self.f0 + self.beta * (y - self.beta_origin)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g_r > 0.0 && self.g_r.is_finite()) {
            return Err(SolverError::config("g_r", "reduced gravity must be positive"));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(SolverError::config("nu", "viscosity must be non-negative"));
        }
        if !self.f0.is_finite() || !self.beta.is_finite() || !self.beta_origin.is_finite() {
            return Err(SolverError::config("f0", "Coriolis coefficients must be finite"));
        }
        match self.forcing {
            Forcing::None => {}
            Forcing::Wind(w) => {
                if !(w.rho > 0.0) {
                    return Err(SolverError::config("rho", "density must be positive"));
                }
                if !(w.h0 > 0.0) {
                    return Err(SolverError::config("h0", "reference depth must be positive"));
                }
                if !(w.length > 0.0) {
                    return Err(SolverError::config("length", "basin length must be positive"));
                }
            }
            Forcing::Manufactured(p) => p.validate()?,
        }
        Ok(())
    }
}
