//! Wind-driven double gyre in a closed rectangular basin on a beta plane.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary::fill_ghost_solid_wall;
use crate::config::{BoundaryKind, Limiter, RunConfig, Splitting, TimeStepping};
use crate::error::{Result, SolverError};
use crate::grid::{Conserved, ConservedField, Field, Grid, ScalarField};
use crate::io::{day_label, FieldDump};
use crate::params::{Forcing, PhysParams, WindForcing};
use crate::splitting::{run, RunOutput, StepRecord};

pub const DAY: f64 = 86_400.0;
pub const YEAR: f64 = 365.0 * DAY;

/// Basin and model parameters. Lengths in m, times in s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GyreSetup {
    pub f0: f64,
    pub beta: f64,
    pub tau0: f64,
    pub nu: f64,
    pub rho: f64,
    pub g_r: f64,
    pub h0: f64,
    /// East-west extent.
    pub width: f64,
    /// North-south extent.
    pub length: f64,
    /// Latitude coordinate where `f = f0`; 0 is the southern wall.
    #[serde(default)]
    pub beta_origin: f64,
}

impl Default for GyreSetup {
    fn default() -> Self {
        GyreSetup {
            f0: 5.0e-5,
            beta: 1.875e-11,
            tau0: 0.11,
            nu: 300.0,
            rho: 1000.0,
            g_r: 0.03,
            h0: 500.0,
            width: 1.0e6,
            length: 2.0e6,
            beta_origin: 0.0,
        }
    }
}

impl GyreSetup {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("f0", self.f0),
            ("tau0", self.tau0),
            ("rho", self.rho),
            ("g_r", self.g_r),
            ("h0", self.h0),
            ("width", self.width),
            ("length", self.length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::config(key, "must be positive"));
            }
        }
        if !(self.beta >= 0.0 && self.nu >= 0.0) {
            return Err(SolverError::config("beta", "beta and nu must be non-negative"));
        }
        Ok(())
    }

    pub fn wind(&self) -> WindForcing {
        WindForcing {
            tau0: self.tau0,
            rho: self.rho,
            h0: self.h0,
            length: self.length,
        }
    }

    pub fn phys_params(&self) -> PhysParams {
        PhysParams {
            g_r: self.g_r,
            f0: self.f0,
            beta: self.beta,
            nu: self.nu,
            beta_origin: self.beta_origin,
            forcing: Forcing::Wind(self.wind()),
        }
    }

    /// Square cells of side `dx`; the basin must hold a whole number of them.
    pub fn grid(&self, dx: f64) -> Result<Grid> {
        let count = |extent: f64, what: &str| -> Result<usize> {
            let n = (extent / dx).round();
            if !(n >= 1.0) || ((n * dx - extent).abs() > 1e-9 * extent) {
                return Err(SolverError::config(
                    "dx",
                    format!("{dx} m does not divide the basin {what} {extent} m"),
                ));
            }
            Ok(n as usize)
        };
        let nx = count(self.width, "width")?;
        let ny = count(self.length, "length")?;
        Grid::over_domain(nx, ny, 0.0, 0.0, self.width, self.length)
    }

    /// Deformation radius `sqrt(g_r H0) / f(y)`.
    pub fn rossby_radius(&self, y: f64) -> Result<f64> {
        let f = self.f0 + self.beta * (y - self.beta_origin);
        if !(f > 0.0) {
            return Err(SolverError::config("f0", format!("Coriolis parameter {f:e} is not positive at y = {y}")));
        }
        Ok((self.g_r * self.h0).sqrt() / f)
    }

    /// Smallest deformation radius over the basin.
    pub fn min_rossby_radius(&self) -> Result<f64> {
        let a = self.rossby_radius(0.0)?;
        let b = self.rossby_radius(self.length)?;
        Ok(a.min(b))
    }

    /// Resting layer of depth `H0`.
    pub fn init_rest(&self, grid: Grid) -> ConservedField {
        let mut q = Field::filled(grid, Conserved::new(self.h0, 0.0, 0.0));
        fill_ghost_solid_wall(&mut q);
        q
    }
}

/// Finest grid spacing that resolves the deformation radius in this basin.
pub const RESOLVING_DX: f64 = 20e3;

pub fn height_anomaly(q: &ConservedField, h0: f64) -> ScalarField {
    q.map(|s| s.h - h0)
}

/// Whether the stream function integrates velocity or layer transport.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    /// `lap psi = dv/dx - du/dy` (m^2/s).
    #[default]
    Velocity,
    /// `lap psi = d(hv)/dx - d(hu)/dy` (m^3/s).
    Transport,
}

/// Cell-centered relative vorticity (or transport curl) by centered
/// differences; `q` must carry solid-wall ghost cells.
pub fn vorticity(q: &ConservedField, kind: StreamKind) -> Result<ScalarField> {
    let g = *q.grid();
    let comp = |i: isize, j: isize| -> Result<(f64, f64)> {
        match kind {
            StreamKind::Velocity => {
                let p = q.primitive(i, j)?;
                Ok((p.u, p.v))
            }
            StreamKind::Transport => {
                let s = q.get(i, j);
                Ok((s.hu, s.hv))
            }
        }
    };
    let mut z = ScalarField::filled(g, 0.0);
    for (i, j) in g.interior() {
        let dvdx = (comp(i + 1, j)?.1 - comp(i - 1, j)?.1) / (2.0 * g.dx);
        let dudy = (comp(i, j + 1)?.0 - comp(i, j - 1)?.0) / (2.0 * g.dy);
        z.set(i, j, dvdx - dudy);
    }
    Ok(z)
}

/// Result of a Poisson solve.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFunction {
    pub psi: ScalarField,
    /// `||b - A psi|| / ||b||` (0 when `b = 0`).
    pub residual: f64,
    pub iterations: usize,
}

impl StreamFunction {
    pub fn range(&self) -> (f64, f64) {
        let g = *self.psi.grid();
        g.interior().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (i, j)| {
            let v = self.psi.get(i, j);
            (lo.min(v), hi.max(v))
        })
    }
}

/// Apply the five-point Laplacian with `psi = 0` on the cell faces of the
/// boundary (odd reflection), to interior values stored row-major.
fn dirichlet_laplacian(x: &[f64], nx: usize, ny: usize, rdx2: f64, rdy2: f64, out: &mut [f64]) {
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let c = x[k];
            let w = if i > 0 { x[k - 1] } else { -c };
            let e = if i + 1 < nx { x[k + 1] } else { -c };
            let s = if j > 0 { x[k - nx] } else { -c };
            let n = if j + 1 < ny { x[k + nx] } else { -c };
            out[k] = (w - 2.0 * c + e) * rdx2 + (s - 2.0 * c + n) * rdy2;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `lap psi = rhs` with homogeneous Dirichlet walls by conjugate
/// gradients on `-lap`, which is symmetric positive definite.
pub fn solve_poisson(rhs: &ScalarField, tol: f64, max_iter: usize) -> Result<StreamFunction> {
    let g = *rhs.grid();
    let (nx, ny) = (g.nx, g.ny);
    let (rdx2, rdy2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let b: Vec<f64> = rhs.interior_values().iter().map(|v| -v).collect();
    let bnorm = dot(&b, &b).sqrt();
    let mut psi = ScalarField::filled(g, 0.0);
    if bnorm == 0.0 {
        return Ok(StreamFunction {
            psi,
            residual: 0.0,
            iterations: 0,
        });
    }

    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter && rr.sqrt() > tol * bnorm {
        dirichlet_laplacian(&p, nx, ny, rdx2, rdy2, &mut ap);
        ap.iter_mut().for_each(|v| *v = -*v);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        iterations += 1;
    }

    // true residual, not the recurrence
    dirichlet_laplacian(&x, nx, ny, rdx2, rdy2, &mut ap);
    let res: f64 = ap.iter().zip(&b).map(|(a, bb)| (bb + a) * (bb + a)).sum::<f64>().sqrt() / bnorm;
    if res > tol {
        return Err(SolverError::PoissonNotConverged {
            residual: res,
            iterations,
        });
    }
    psi.set_interior(&x)?;
    Ok(StreamFunction {
        psi,
        residual: res,
        iterations,
    })
}

/// Poisson tolerance used for snapshot stream functions.
pub const PSI_TOL: f64 = 1e-8;

/// Stream function of `q` (solid-wall ghosts are filled on a copy).
pub fn stream_function(q: &ConservedField, kind: StreamKind) -> Result<StreamFunction> {
    let mut q = q.clone();
    fill_ghost_solid_wall(&mut q);
    let z = vorticity(&q, kind)?;
    let g = q.grid();
    solve_poisson(&z, PSI_TOL, 20 * (g.nx + g.ny) * (g.nx.max(g.ny)) + 1000)
}

/// Location facts about the height anomaly used to recognise a double gyre
/// with western intensification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GyreDiagnostics {
    pub extremum: f64,
    pub extremum_x: f64,
    pub extremum_y: f64,
    /// Distance of the `|h - H0|` extremum from the western wall.
    pub west_distance: f64,
    /// Mean anomaly of the southern and northern halves.
    pub south_mean: f64,
    pub north_mean: f64,
}

impl GyreDiagnostics {
    pub fn western_intensified(&self, within: f64) -> bool {
        self.west_distance <= within
    }

    /// The two halves carry anomalies of opposite sign.
    pub fn sign_split(&self) -> bool {
        self.south_mean * self.north_mean < 0.0
    }
}

pub fn gyre_diagnostics(q: &ConservedField, setup: &GyreSetup) -> GyreDiagnostics {
    let g = *q.grid();
    let mid = g.y0 + 0.5 * g.height();
    let mut best = (0.0f64, 0.0, 0.0, 0.0);
    let (mut south, mut ns, mut north, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for (i, j) in g.interior() {
        let a = q.get(i, j).h - setup.h0;
        let (x, y) = g.center(i, j);
        if a.abs() > best.0.abs() {
            best = (a, x, y, x - g.x0);
        }
        if y < mid {
            south += a;
            ns += 1;
        } else {
            north += a;
            nn += 1;
        }
    }
    GyreDiagnostics {
        extremum: best.0,
        extremum_x: best.1,
        extremum_y: best.2,
        west_distance: best.3,
        south_mean: south / ns.max(1) as f64,
        north_mean: north / nn.max(1) as f64,
    }
}

/// A gyre experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GyreRun {
    pub setup: GyreSetup,
    pub dx: f64,
    pub dt: f64,
    /// Adaptive stepping at this Courant target instead of the fixed `dt`.
    #[serde(default)]
    pub cfl: Option<f64>,
    pub t_end: f64,
    pub splitting: Splitting,
    pub limiter: Limiter,
    /// Snapshot cadence in seconds.
    pub snapshot_every: f64,
    pub stream: StreamKind,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl GyreRun {
    pub fn new(dx: f64, dt: f64, t_end: f64) -> Self {
        GyreRun {
            setup: GyreSetup::default(),
            dx,
            dt,
            cfl: None,
            t_end,
            splitting: Splitting::Strang,
            limiter: Limiter::Mc,
            snapshot_every: 30.0 * DAY,
            stream: StreamKind::Velocity,
            out_dir: None,
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        self.setup.validate()?;
        if !(self.snapshot_every > 0.0 && self.snapshot_every.is_finite()) {
            return Err(SolverError::config("snapshot_every", "must be positive"));
        }
        let grid = self.setup.grid(self.dx)?;
        let every = (self.snapshot_every / self.dt).round().max(1.0) as usize;
        let config = RunConfig {
            grid,
            params: self.setup.phys_params(),
            stepping: match self.cfl {
                Some(c) => TimeStepping::Cfl(c),
                None => TimeStepping::Fixed(self.dt),
            },
            t_end: self.t_end,
            splitting: self.splitting,
            limiter: self.limiter,
            boundary: BoundaryKind::SolidWall,
            entropy_fix: false,
            output_every: every,
            seed: 0,
            failure_dump_dir: self.out_dir.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// What was written for one snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotInfo {
    pub step: usize,
    pub t: f64,
    pub psi_range: (f64, f64),
    pub psi_transport_range: (f64, f64),
    pub psi_residual: f64,
    pub diagnostics: GyreDiagnostics,
    pub csv: Option<PathBuf>,
    pub vtk: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct GyreOutput {
    pub run: RunOutput,
    pub snapshots: Vec<SnapshotInfo>,
}

/// Snapshot dump: `x, y, h_anom, u, v, psi`.
pub fn snapshot_dump(q: &ConservedField, psi: &StreamFunction, h0: f64, t: f64) -> Result<FieldDump> {
    let g = *q.grid();
    let mut anom = Vec::with_capacity(g.nx * g.ny);
    let mut u = Vec::with_capacity(g.nx * g.ny);
    let mut v = Vec::with_capacity(g.nx * g.ny);
    for (i, j) in g.interior() {
        let p = q.primitive(i, j)?;
        anom.push(p.h - h0);
        u.push(p.u);
        v.push(p.v);
    }
    FieldDump::new(g, t)
        .with("h_anom", anom)?
        .with("u", u)?
        .with("v", v)?
        .with("psi", psi.psi.interior_values())
}

/// Spin up from `initial` (rest when `None`), taking a snapshot every
/// `snapshot_every` seconds and at the end. Snapshots are written under
/// `out_dir` when it is set.
pub fn run_gyre(
    run_spec: &GyreRun,
    initial: Option<ConservedField>,
    mut on_record: impl FnMut(&StepRecord),
) -> Result<GyreOutput> {
    let config = run_spec.run_config()?;
    let q0 = initial.unwrap_or_else(|| run_spec.setup.init_rest(config.grid));
    let mut snapshots = Vec::new();
    let out_dir = run_spec.out_dir.as_deref();
    let mut next = run_spec.snapshot_every;
    let out = run(&config, q0, |rec, q| {
        on_record(rec);
        let last = rec.t >= run_spec.t_end;
        if last || rec.t >= next * (1.0 - 1e-9) {
            snapshots.push(take_snapshot(run_spec, q, rec, out_dir)?);
            while next <= rec.t * (1.0 + 1e-9) {
                next += run_spec.snapshot_every;
            }
        }
        Ok(())
    })?;
    Ok(GyreOutput { run: out, snapshots })
}

fn take_snapshot(run_spec: &GyreRun, q: &ConservedField, rec: &StepRecord, out_dir: Option<&Path>) -> Result<SnapshotInfo> {
    let velocity = stream_function(q, StreamKind::Velocity)?;
    let transport = stream_function(q, StreamKind::Transport)?;
    let chosen = match run_spec.stream {
        StreamKind::Velocity => &velocity,
        StreamKind::Transport => &transport,
    };
    let (mut csv, mut vtk) = (None, None);
    if let Some(dir) = out_dir {
        let dump = snapshot_dump(q, chosen, run_spec.setup.h0, rec.t)?;
        let stem = format!("gyre_{}", day_label(rec.t));
        let c = dir.join(format!("{stem}.csv"));
        let v = dir.join(format!("{stem}.vtk"));
        dump.write_csv(&c)?;
        dump.write_vtk(&v, &format!("double gyre t = {:.3} days", rec.t / DAY))?;
        csv = Some(c);
        vtk = Some(v);
    }
    Ok(SnapshotInfo {
        step: rec.step,
        t: rec.t,
        psi_range: velocity.range(),
        psi_transport_range: transport.range(),
        psi_residual: velocity.residual.max(transport.residual),
        diagnostics: gyre_diagnostics(q, &run_spec.setup),
        csv,
        vtk,
    })
}
