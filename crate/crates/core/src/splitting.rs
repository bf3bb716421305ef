//! Fractional-step time integration.
//!
//! Problem A is the homogeneous conservation law (wave propagation), problem B
//! the momentum source terms with frozen depth (Heun RK2). Godunov splitting
//! applies A(dt) then B(dt); Strang splitting applies A(dt/2), B(dt), A(dt/2)
//! in every step.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary::fill_ghosts;
use crate::config::{BoundaryKind, Limiter, RunConfig, Splitting, TimeStepping};
use crate::error::{Result, SolverError};
use crate::grid::{ConservedField, Grid};
use crate::io::FieldDump;
use crate::params::PhysParams;
use crate::source::{rk2_advance, viscous_dt_bound};
use crate::wave_propagation::{stable_dt, HyperbolicSolver, HyperbolicStepReport};

/// Diagnostics of one committed step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    /// Largest characteristic speed `|u| + sqrt(g_r h)`.
    pub max_speed: f64,
    pub max_courant: f64,
    pub energy_proxy: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "step,t,dt,mass,max_speed,max_courant,energy_proxy";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.step, self.t, self.dt, self.mass, self.max_speed, self.max_courant, self.energy_proxy
        )
    }
}

pub fn records_to_csv(records: &[StepRecord]) -> String {
    let mut s = String::from(StepRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

pub fn write_records_csv(path: &Path, records: &[StepRecord]) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).map_err(|e| SolverError::io(p, e))?;
    }
    fs::write(path, records_to_csv(records)).map_err(|e| SolverError::io(path, e))
}

/// Per-step summary of the hyperbolic sub-steps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub max_speed: f64,
    pub max_courant: f64,
}

impl StepStats {
    fn absorb(&mut self, r: HyperbolicStepReport) {
        self.max_speed = self.max_speed.max(r.max_speed);
        self.max_courant = self.max_courant.max(r.max_courant);
    }
}

/// Split-step integrator bound to one grid.
#[derive(Debug)]
pub struct Simulation {
    pub params: PhysParams,
    pub boundary: BoundaryKind,
    pub splitting: Splitting,
    hyper: HyperbolicSolver,
}

impl Simulation {
    pub fn new(
        grid: Grid,
        params: PhysParams,
        limiter: Limiter,
        boundary: BoundaryKind,
        splitting: Splitting,
        entropy_fix: bool,
    ) -> Self {
        Simulation {
            params,
            boundary,
            splitting,
            hyper: HyperbolicSolver::new(grid, params.g_r, limiter, entropy_fix, boundary),
        }
    }

    pub fn from_config(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::new(
            config.grid,
            config.params,
            config.limiter,
            config.boundary,
            config.splitting,
            config.entropy_fix,
        ))
    }

    pub fn grid(&self) -> &Grid {
        self.hyper.grid()
    }

    /// Problem A over `dt` with fresh ghost cells.
    pub fn hyperbolic_substep(&mut self, q: &mut ConservedField, dt: f64) -> Result<HyperbolicStepReport> {
        fill_ghosts(q, self.boundary);
        self.hyper.step_in_place(q, dt)
    }

    /// Problem B from `t` to `t + dt`.
    pub fn source_substep(&self, q: &mut ConservedField, dt: f64, t: f64) -> Result<()> {
        rk2_advance(q, dt, &self.params, self.boundary, t)
    }

    pub fn advance_godunov(&mut self, q: &mut ConservedField, t: f64, dt: f64) -> Result<StepStats> {
        let mut stats = StepStats::default();
        stats.absorb(self.hyperbolic_substep(q, dt)?);
        self.source_substep(q, dt, t)?;
        Ok(stats)
    }

    pub fn advance_strang(&mut self, q: &mut ConservedField, t: f64, dt: f64) -> Result<StepStats> {
        let mut stats = StepStats::default();
        stats.absorb(self.hyperbolic_substep(q, 0.5 * dt)?);
        self.source_substep(q, dt, t)?;
        stats.absorb(self.hyperbolic_substep(q, 0.5 * dt)?);
        Ok(stats)
    }

    /// One step with the configured splitting. Ghost cells are refreshed on exit.
    pub fn advance(&mut self, q: &mut ConservedField, t: f64, dt: f64) -> Result<StepStats> {
        let stats = match self.splitting {
            Splitting::Godunov => self.advance_godunov(q, t, dt)?,
            Splitting::Strang => self.advance_strang(q, t, dt)?,
        };
        fill_ghosts(q, self.boundary);
        Ok(stats)
    }

    pub fn record(&self, q: &ConservedField, step: usize, t: f64, dt: f64, stats: StepStats) -> StepRecord {
        StepRecord {
            step,
            t,
            dt,
            mass: q.mass(),
            max_speed: stats.max_speed,
            max_courant: stats.max_courant,
            energy_proxy: q.energy_proxy(self.params.g_r),
        }
    }
}

/// Final state and recorded diagnostics of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub state: ConservedField,
    pub t: f64,
    pub steps: usize,
    pub records: Vec<StepRecord>,
}

/// Number of steps of size `dt` needed to reach `t_end`, treating ratios within
/// round-off of an integer as exact.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    let ratio = t_end / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest.max(1.0) as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Largest step allowed by the CFL target and the viscous bound.
pub fn adaptive_dt(q: &ConservedField, params: &PhysParams, splitting: Splitting, cfl: f64) -> Result<f64> {
    // the Strang half-steps may use twice the single-step size
    let factor = match splitting {
        Splitting::Strang => 2.0,
        Splitting::Godunov => 1.0,
    };
    let g = q.grid();
    let hyper = factor * stable_dt(q, params.g_r, cfl)?;
    let visc = viscous_dt_bound(g.dx, g.dy, params.nu);
    let dt = hyper.min(visc);
    if !dt.is_finite() {
        return Err(SolverError::config("cfl", "no finite stable step: the state is at rest without viscosity"));
    }
    Ok(dt)
}

/// Integrate `initial` to `config.t_end`.
///
/// `hook` is called with every recorded step: every `output_every` steps and at
/// the final step for fixed stepping, every step for adaptive stepping. On a
/// failed step the pre-step state is written to `failure_dump_dir` (when set)
/// and the error is wrapped with the step index and that path.
pub fn run(
    config: &RunConfig,
    initial: ConservedField,
    mut hook: impl FnMut(&StepRecord, &ConservedField) -> Result<()>,
) -> Result<RunOutput> {
    let mut sim = Simulation::from_config(config)?;
    if *initial.grid() != config.grid {
        return Err(SolverError::InvalidGrid("initial field grid differs from the configured grid".into()));
    }
    let mut q = initial;
    q.check_positive()?;
    fill_ghosts(&mut q, config.boundary);

    let t_end = config.t_end;
    let fixed = match config.stepping {
        TimeStepping::Fixed(dt) => Some((dt, step_count(t_end, dt))),
        TimeStepping::Cfl(_) => None,
    };
    let mut records = Vec::new();
    let mut t = 0.0;
    let mut step = 0usize;
    loop {
        let (dt, last) = match (fixed, config.stepping) {
            (Some((dt, n)), _) => {
                if step + 1 == n {
                    (t_end - t, true)
                } else {
                    (dt, false)
                }
            }
            (None, TimeStepping::Cfl(c)) => {
                let dt = adaptive_dt(&q, &config.params, config.splitting, c)
                    .map_err(|e| wrap_failure(e, step + 1, t, None))?;
                if t + dt >= t_end * (1.0 - 1e-12) {
                    (t_end - t, true)
                } else {
                    (dt, false)
                }
            }
            (None, TimeStepping::Fixed(_)) => unreachable!(),
        };

        let snapshot = config.failure_dump_dir.as_ref().map(|_| q.clone());
        let stats = match sim.advance(&mut q, t, dt) {
            Ok(s) => s,
            Err(e) => {
                let path = match (&config.failure_dump_dir, &snapshot) {
                    (Some(dir), Some(s)) => dump_failure(dir, step + 1, t, s).ok(),
                    _ => None,
                };
                return Err(wrap_failure(e, step + 1, t, path));
            }
        };
        step += 1;
        t = match fixed {
            Some((dt0, _)) if !last => step as f64 * dt0,
            _ if last => t_end,
            _ => t + dt,
        };

        let due = fixed.is_none() || step % config.output_every == 0 || last;
        if due {
            let rec = sim.record(&q, step, t, dt, stats);
            hook(&rec, &q)?;
            records.push(rec);
        }
        if last {
            break;
        }
    }
    Ok(RunOutput {
        state: q,
        t,
        steps: step,
        records,
    })
}

fn wrap_failure(e: SolverError, step: usize, t: f64, snapshot: Option<PathBuf>) -> SolverError {
    SolverError::StepFailed {
        step,
        t,
        snapshot,
        source: Box::new(e),
    }
}

fn dump_failure(dir: &Path, step: usize, t: f64, q: &ConservedField) -> Result<PathBuf> {
    let path = dir.join(format!("failure_step{step:08}.csv"));
    FieldDump::conserved(q, t).write_csv(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Conserved, Field};

    fn rest_config(stepping: TimeStepping, t_end: f64) -> RunConfig {
        RunConfig {
            grid: Grid::over_domain(6, 5, 0.0, 0.0, 1.0, 1.0).unwrap(),
            params: PhysParams::hyperbolic_only(1.0),
            stepping,
            t_end,
            splitting: Splitting::Strang,
            limiter: Limiter::Mc,
            boundary: BoundaryKind::SolidWall,
            entropy_fix: false,
            output_every: 1,
            seed: 0,
            failure_dump_dir: None,
        }
    }

    fn rest(g: Grid) -> ConservedField {
        Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(2.0, 0.0, 0.0))
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(1.0, 0.025), 40);
        assert_eq!(step_count(0.3, 0.1), 3);
        assert_eq!(step_count(1.0, 0.3), 4);
        assert_eq!(step_count(0.1, 0.03), 4);
    }

    #[test]
    fn fixed_steps_land_on_t_end() {
        let c = rest_config(TimeStepping::Fixed(0.01), 0.03);
        let out = run(&c, rest(c.grid), |_, _| Ok(())).unwrap();
        assert_eq!(out.steps, 3);
        assert_eq!(out.t, 0.03);
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.state.interior_values(), rest(c.grid).interior_values());
        assert!(out.records.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn fixed_step_clip() {
        let c = rest_config(TimeStepping::Fixed(0.03), 0.1);
        let out = run(&c, rest(c.grid), |_, _| Ok(())).unwrap();
        assert_eq!(out.steps, 4);
        let last = out.records.last().unwrap();
        assert_eq!(last.t, 0.1);
        assert!((last.dt - 0.01).abs() < 1e-15);
    }

    #[test]
    fn adaptive_clip() {
        let mut c = rest_config(TimeStepping::Cfl(0.5), 0.37);
        c.grid = Grid::over_domain(8, 8, 0.0, 0.0, 1.0, 1.0).unwrap();
        let q = Field::from_fn(c.grid, Conserved::ZERO, |x, _| Conserved::new(1.0 + 0.1 * x, 0.0, 0.0));
        let out = run(&c, q, |_, _| Ok(())).unwrap();
        let recs = &out.records;
        let last = recs.last().unwrap();
        assert_eq!(last.t, 0.37);
        assert!((last.dt - (0.37 - recs[recs.len() - 2].t)).abs() < 1e-15);
        assert!(recs.iter().all(|r| r.max_courant <= 0.5 + 1e-12));
    }

    #[test]
    fn output_every_and_hook() {
        let mut c = rest_config(TimeStepping::Fixed(0.01), 0.1);
        c.output_every = 4;
        let mut seen = Vec::new();
        let out = run(&c, rest(c.grid), |r, _| {
            seen.push(r.step);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![4, 8, 10]);
        assert_eq!(out.records.len(), 3);
    }

    #[test]
    fn godunov_equals_strang_on_uniform_state() {
        let g = Grid::over_domain(4, 4, 0.0, 0.0, 1.0, 1.0).unwrap();
        let params = PhysParams {
            f0: 1.0,
            ..PhysParams::hyperbolic_only(1.0)
        };
        let q0 = Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(1.0, 0.2, -0.1));
        let run_with = |s: Splitting| {
            let mut sim = Simulation::new(g, params, Limiter::Mc, BoundaryKind::Periodic, s, false);
            let mut q = q0.clone();
            sim.advance(&mut q, 0.0, 0.05).unwrap();
            q.interior_values()
        };
        assert_eq!(run_with(Splitting::Godunov), run_with(Splitting::Strang));
    }

    #[test]
    fn failure_is_reported_with_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = rest_config(TimeStepping::Fixed(10.0), 30.0);
        c.failure_dump_dir = Some(dir.path().to_path_buf());
        let err = run(&c, rest(c.grid), |_, _| Ok(())).unwrap_err();
        match err {
            SolverError::StepFailed { step, snapshot, source, .. } => {
                assert_eq!(step, 1);
                assert!(matches!(*source, SolverError::CflViolation { .. }));
                let p = snapshot.expect("snapshot written");
                assert!(p.exists());
                assert_eq!(FieldDump::read_csv(&p).unwrap().column("h").unwrap()[0], 2.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn records_csv() {
        let r = StepRecord {
            step: 1,
            t: 0.5,
            dt: 0.5,
            mass: 2.0,
            max_speed: 1.0,
            max_courant: 0.1,
            energy_proxy: 3.0,
        };
        let s = records_to_csv(&[r]);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some(StepRecord::CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("1,5.0000000000000000e-1,"));
    }
}
