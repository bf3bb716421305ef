//! Fractional-step finite-volume solver for the reduced-gravity shallow-water
//! equations on a beta plane.
//!
//! Each time step splits the system into a homogeneous conservation law,
//! advanced by a Roe-based wave-propagation method with transverse corrections,
//! and a source-term problem (Coriolis, viscosity, forcing) with frozen depth,
//! advanced by Heun's RK2 method.

pub mod boundary;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gyre;
pub mod io;
pub mod limiter;
pub mod params;
pub mod riemann;
pub mod source;
pub mod splitting;
pub mod tracer;
pub mod verification;
pub mod wave_propagation;

pub use config::{BoundaryKind, Limiter, RunConfig, Splitting, TimeStepping};
pub use error::{Result, SolverError};
pub use grid::{Conserved, ConservedField, Field, Grid, Primitive, ScalarField};
pub use params::{Forcing, PhysParams, WindForcing};

pub mod grid;
