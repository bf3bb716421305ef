//! Passive tracer: the color equation `C_t + u . grad C = 0` in
//! non-conservative form, advected with face velocities averaged from the
//! adjacent cell-centered velocities.
//!
//! Each step runs an x sweep then a y sweep. A sweep uses the wave-propagation
//! form for a scalar: at face `i-1/2` the wave is `W = C_i - C_{i-1}` moving at
//! the face velocity `s`, and the limited correction flux is
//! `0.5 |s| (1 - dt/dx |s|) phi(theta) W`. With a TVD limiter the update can
//! be written as `C_i - A (C_i - C_{i-1}) + B (C_{i+1} - C_i)` with
//! `A, B >= 0` and `A + B <= |nu_left| + |nu_right|`, so a face Courant number
//! of at most 1/2 keeps every new value inside the range of its neighbours.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::fill_scalar_ghosts;
use crate::config::{BoundaryKind, Limiter};
use crate::error::{Result, SolverError};
use crate::grid::{ConservedField, Grid, ScalarField, DEPTH_FLOOR, NGHOST};
use crate::limiter::apply_limiter;
use crate::splitting::Simulation;

pub type TracerField = ScalarField;

/// Face-normal velocities: `u` on x-faces (`ny` rows of `nx + 1`), `v` on
/// y-faces (`ny + 1` rows of `nx`). Face `k` of a row lies between cells `k`
/// and `k + 1` in 1-based cell numbering, so face 0 is the low boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeVelocities {
    pub nx: usize,
    pub ny: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl EdgeVelocities {
    /// `u` at the face between cells `(i, j)` and `(i + 1, j)`, `i in 0..=nx`.
    pub fn u_face(&self, i: usize, j: usize) -> f64 {
        self.u[(j - 1) * (self.nx + 1) + i]
    }

    /// `v` at the face between cells `(i, j)` and `(i, j + 1)`, `j in 0..=ny`.
    pub fn v_face(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.nx + (i - 1)]
    }

    pub fn max_courant(&self, grid: &Grid, dt: f64) -> f64 {
        let cu = self.u.iter().fold(0.0f64, |m, s| m.max(s.abs())) * dt / grid.dx;
        let cv = self.v.iter().fold(0.0f64, |m, s| m.max(s.abs())) * dt / grid.dy;
        cu.max(cv)
    }
}

/// Arithmetic means of adjacent cell velocities; `q` must have filled ghosts.
pub fn edge_velocities(q: &ConservedField) -> Result<EdgeVelocities> {
    let g = *q.grid();
    let (nx, ny) = (g.nx as isize, g.ny as isize);
    let vel = |i: isize, j: isize| -> Result<(f64, f64)> {
        let s = q.get(i, j);
        if !(s.h > DEPTH_FLOOR) {
            return Err(SolverError::NonPositiveDepth { h: s.h, i, j });
        }
        Ok((s.hu / s.h, s.hv / s.h))
    };
    let mut u = Vec::with_capacity(g.ny * (g.nx + 1));
    for j in 1..=ny {
        for i in 0..=nx {
            u.push(0.5 * (vel(i, j)?.0 + vel(i + 1, j)?.0));
        }
    }
    let mut v = Vec::with_capacity((g.ny + 1) * g.nx);
    for j in 0..=ny {
        for i in 1..=nx {
            v.push(0.5 * (vel(i, j)?.1 + vel(i, j + 1)?.1));
        }
    }
    Ok(EdgeVelocities {
        nx: g.nx,
        ny: g.ny,
        u,
        v,
    })
}

/// One-dimensional limited color-equation update of a line of cells.
///
/// `c` holds the line including `NGHOST` ghost cells at each end; `s[k]` is
/// the velocity at the face between interior cells `k` and `k + 1` (1-based),
/// so `s.len() = n + 1`. Writes interior updates into `out`.
fn sweep_line(c: &[f64], s: &[f64], nu_scale: f64, limiter: Limiter, out: &mut [f64]) {
    let n = s.len() - 1;
    debug_assert_eq!(c.len(), n + 2 * NGHOST);
    // wave at face k sits between storage cells k + 1 and k + 2
    let wave = |k: isize| -> f64 {
        let a = (k + NGHOST as isize - 1) as usize;
        c[a + 1] - c[a]
    };
    let mut corr = vec![0.0; n + 1];
    for k in 0..=n {
        let sk = s[k];
        let w = wave(k as isize);
        if sk == 0.0 || w == 0.0 {
            continue;
        }
        let upwind = if sk > 0.0 { wave(k as isize - 1) } else { wave(k as isize + 1) };
        let phi = apply_limiter(upwind / w, limiter);
        let nu = sk.abs() * nu_scale;
        corr[k] = 0.5 * sk.abs() * (1.0 - nu) * phi * w;
    }
    for i in 0..n {
        let (sl, sr) = (s[i], s[i + 1]);
        let (wl, wr) = (wave(i as isize), wave(i as isize + 1));
        let fluct = sl.max(0.0) * wl + sr.min(0.0) * wr;
        out[i] = c[i + NGHOST] - nu_scale * (fluct + (corr[i + 1] - corr[i]));
    }
}

/// Advance `c` by `dt` (x sweep then y sweep). Ghost cells are refilled here.
pub fn step_tracer(
    c: &mut TracerField,
    vel: &EdgeVelocities,
    dt: f64,
    limiter: Limiter,
    boundary: BoundaryKind,
) -> Result<f64> {
    let g = *c.grid();
    if vel.nx != g.nx || vel.ny != g.ny {
        return Err(SolverError::ShapeMismatch {
            expected: g.nx * g.ny,
            actual: vel.nx * vel.ny,
        });
    }
    let courant = vel.max_courant(&g, dt);
    if courant > 1.0 {
        return Err(SolverError::CflViolation { courant, dt });
    }
    let (nx, ny) = (g.nx, g.ny);
    let sx = g.sx();

    // x sweep, one row per task
    fill_scalar_ghosts(c, boundary);
    let rows: Vec<Vec<f64>> = (1..=ny)
        .into_par_iter()
        .map(|j| {
            let start = g.idx(1 - NGHOST as isize, j as isize);
            let line = &c.raw()[start..start + sx];
            let s = &vel.u[(j - 1) * (nx + 1)..j * (nx + 1)];
            let mut out = vec![0.0; nx];
            sweep_line(line, s, dt / g.dx, limiter, &mut out);
            out
        })
        .collect();
    for (j, row) in rows.iter().enumerate() {
        for (i, val) in row.iter().enumerate() {
            c.set(i as isize + 1, j as isize + 1, *val);
        }
    }

    // y sweep, one column per task
    fill_scalar_ghosts(c, boundary);
    let cols: Vec<Vec<f64>> = (1..=nx)
        .into_par_iter()
        .map(|i| {
            let line: Vec<f64> = (1 - NGHOST as isize..=(ny + NGHOST) as isize)
                .map(|j| c.get(i as isize, j))
                .collect();
            let s: Vec<f64> = (0..=ny).map(|j| vel.v[j * nx + (i - 1)]).collect();
            let mut out = vec![0.0; ny];
            sweep_line(&line, &s, dt / g.dy, limiter, &mut out);
            out
        })
        .collect();
    for (i, col) in cols.iter().enumerate() {
        for (j, val) in col.iter().enumerate() {
            c.set(i as isize + 1, j as isize + 1, *val);
        }
    }
    fill_scalar_ghosts(c, boundary);
    Ok(courant)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleSpec {
    pub xc: f64,
    pub yc: f64,
    pub r: f64,
}

impl CircleSpec {
    /// Closed-disk membership.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.xc, y - self.yc);
        (dx * dx + dy * dy).sqrt() <= self.r
    }
}

/// Two 150 km circles centered at (500, 500) km and (500, 1500) km.
pub fn default_circles() -> [CircleSpec; 2] {
    [
        CircleSpec {
            xc: 500e3,
            yc: 500e3,
            r: 150e3,
        },
        CircleSpec {
            xc: 500e3,
            yc: 1500e3,
            r: 150e3,
        },
    ]
}

/// Marginal distribution of the initial concentration inside the circles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDistribution {
    /// Uniform on (0, 1].
    #[default]
    Uniform,
    /// Normal(0.5, 0.25) restricted to (0, 1] by rejection.
    TruncatedGaussian,
}

/// Random concentration inside the circles, zero elsewhere.
///
/// Cells are visited row by row (x fastest) and one draw is taken per inside
/// cell from a ChaCha8 stream seeded with `seed`, so fields reproduce across
/// platforms.
pub fn init_concentration(grid: Grid, circles: &[CircleSpec], seed: u64, dist: InitialDistribution) -> TracerField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.5, 0.25).expect("valid normal parameters");
    let mut c = ScalarField::filled(grid, 0.0);
    for (i, j) in grid.interior() {
        let (x, y) = grid.center(i, j);
        if circles.iter().any(|k| k.contains(x, y)) {
            let v = match dist {
                InitialDistribution::Uniform => 1.0 - rng.random::<f64>(),
                InitialDistribution::TruncatedGaussian => loop {
                    let z: f64 = normal.sample(&mut rng);
                    if z > 0.0 && z <= 1.0 {
                        break z;
                    }
                },
            };
            c.set(i, j, v);
        }
    }
    c
}

/// Concentration-weighted centroid; `None` when the field is identically zero.
pub fn centroid(c: &TracerField) -> Option<(f64, f64)> {
    let g = *c.grid();
    let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
    for (i, j) in g.interior() {
        let w = c.get(i, j);
        let (x, y) = g.center(i, j);
        m += w;
        mx += w * x;
        my += w * y;
    }
    (m > 0.0).then(|| (mx / m, my / m))
}

/// `(min, max)` over interior cells.
pub fn interior_range(c: &TracerField) -> (f64, f64) {
    c.grid().interior().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (i, j)| {
        let v = c.get(i, j);
        (lo.min(v), hi.max(v))
    })
}

/// Sum of `C h dx dy`, the tracer inventory carried by the layer.
pub fn inventory(c: &TracerField, q: &ConservedField) -> f64 {
    let g = *c.grid();
    g.interior().map(|(i, j)| c.get(i, j) * q.get(i, j).h).sum::<f64>() * g.cell_area()
}

/// Per-step tracer diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracerRecord {
    pub step: usize,
    pub t: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub courant: f64,
}

#[derive(Clone, Debug)]
pub struct CoupledOutput {
    pub state: ConservedField,
    pub tracer: TracerField,
    pub t: f64,
    pub records: Vec<TracerRecord>,
}

/// Advance the shallow-water state and the tracer together for `steps` steps.
///
/// Each step first advances `q` by the fractional-step method, then advects
/// `c` with face velocities of the updated state. `on_step` sees every
/// committed step.
pub fn run_coupled(
    sim: &mut Simulation,
    q0: ConservedField,
    c0: TracerField,
    dt: f64,
    steps: usize,
    limiter: Limiter,
    mut on_step: impl FnMut(&TracerRecord, &ConservedField, &TracerField) -> Result<()>,
) -> Result<CoupledOutput> {
    if q0.grid() != c0.grid() || q0.grid() != sim.grid() {
        return Err(SolverError::InvalidGrid("tracer, state and solver grids differ".into()));
    }
    let boundary = sim.boundary;
    let mut q = q0;
    let mut c = c0;
    crate::boundary::fill_ghosts(&mut q, boundary);
    fill_scalar_ghosts(&mut c, boundary);
    let mut records = Vec::with_capacity(steps);
    let mut t = 0.0;
    for step in 1..=steps {
        sim.advance(&mut q, t, dt).map_err(|e| SolverError::StepFailed {
            step,
            t,
            snapshot: None,
            source: Box::new(e),
        })?;
        let vel = edge_velocities(&q)?;
        let courant = step_tracer(&mut c, &vel, dt, limiter, boundary)?;
        t = step as f64 * dt;
        let (c_min, c_max) = interior_range(&c);
        let rec = TracerRecord {
            step,
            t,
            c_min,
            c_max,
            courant,
        };
        on_step(&rec, &q, &c)?;
        records.push(rec);
    }
    Ok(CoupledOutput {
        state: q,
        tracer: c,
        t,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::fill_ghosts;
    use crate::grid::{Conserved, Field};

    fn flow(g: Grid, u: impl Fn(f64, f64) -> f64, v: impl Fn(f64, f64) -> f64, kind: BoundaryKind) -> ConservedField {
        let mut q = Field::from_fn(g, Conserved::ZERO, |x, y| Conserved::new(2.0, 2.0 * u(x, y), 2.0 * v(x, y)));
        fill_ghosts(&mut q, kind);
        q
    }

    #[test]
    fn edge_velocity_examples() {
        let g = Grid::over_domain(4, 3, 0.0, 0.0, 4.0, 3.0).unwrap();
        let q = flow(g, |_, _| 1.0, |_, _| 0.0, BoundaryKind::Periodic);
        let e = edge_velocities(&q).unwrap();
        assert!(e.u.iter().all(|&s| s == 1.0));

        let q = flow(g, |x, _| 0.2 * (x + 0.5), |_, _| 0.0, BoundaryKind::SolidWall);
        let e = edge_velocities(&q).unwrap();
        // cells 1 and 2 have U = 0.2 and 0.4
        assert!((e.u_face(1, 2) - 0.3).abs() < 1e-15);
        assert_eq!(e.u_face(0, 2), 0.0);
        assert_eq!(e.u_face(4, 2), 0.0);
        assert_eq!(e.v_face(2, 0), 0.0);
    }

    #[test]
    fn zero_velocity_keeps_field() {
        let g = Grid::over_domain(5, 5, 0.0, 0.0, 1.0, 1.0).unwrap();
        let q = flow(g, |_, _| 0.0, |_, _| 0.0, BoundaryKind::SolidWall);
        let mut c = init_concentration(g, &[CircleSpec { xc: 0.5, yc: 0.5, r: 0.3 }], 3, InitialDistribution::Uniform);
        let before = c.interior_values();
        let e = edge_velocities(&q).unwrap();
        step_tracer(&mut c, &e, 0.1, Limiter::Mc, BoundaryKind::SolidWall).unwrap();
        assert_eq!(c.interior_values(), before);
    }

    #[test]
    fn courant_violation() {
        let g = Grid::over_domain(4, 4, 0.0, 0.0, 1.0, 1.0).unwrap();
        let q = flow(g, |_, _| 1.0, |_, _| 0.0, BoundaryKind::Periodic);
        let e = edge_velocities(&q).unwrap();
        let mut c = ScalarField::filled(g, 0.0);
        assert!(matches!(
            step_tracer(&mut c, &e, 0.5, Limiter::Mc, BoundaryKind::Periodic),
            Err(SolverError::CflViolation { .. })
        ));
    }

    fn translation_error(n: usize) -> f64 {
        let g = Grid::over_domain(n, 1, 0.0, 0.0, 1.0, 1.0 / n as f64).unwrap();
        let tau = std::f64::consts::TAU;
        let q = flow(g, |_, _| 1.0, |_, _| 0.0, BoundaryKind::Periodic);
        let e = edge_velocities(&q).unwrap();
        let mut c = ScalarField::from_fn(g, 0.0, |x, _| (tau * x).sin());
        let dt = 0.4 / n as f64;
        let steps = (0.5 / dt).round() as usize;
        for _ in 0..steps {
            step_tracer(&mut c, &e, dt, Limiter::None, BoundaryKind::Periodic).unwrap();
        }
        let t = steps as f64 * dt;
        let err: f64 = g
            .interior()
            .map(|(i, j)| (c.get(i, j) - (tau * (g.xc(i) - t)).sin()).powi(2))
            .sum::<f64>()
            / n as f64;
        err.sqrt()
    }

    #[test]
    fn translation_is_second_order() {
        let (a, b) = (translation_error(40), translation_error(80));
        let order = (a / b).log2();
        assert!(order > 1.8 && order < 2.3, "order {order}");
    }

    #[test]
    fn step_profile_keeps_range() {
        let g = Grid::over_domain(40, 40, 0.0, 0.0, 1.0, 1.0).unwrap();
        let tau = std::f64::consts::TAU;
        let q = flow(
            g,
            |x, y| (tau * x).sin() * (tau * y).cos() * 0.7 + 0.3,
            |x, y| -(tau * x).cos() * (tau * y).sin() * 0.7,
            BoundaryKind::Periodic,
        );
        let e = edge_velocities(&q).unwrap();
        let dt = 0.45 * g.dx;
        let mut c = ScalarField::from_fn(g, 0.0, |x, y| if (x - 0.4).abs() < 0.2 && (y - 0.5).abs() < 0.25 { 0.8 } else { 0.1 });
        for lim in [Limiter::Mc, Limiter::Minmod, Limiter::Superbee] {
            let mut c = c.clone();
            for _ in 0..60 {
                step_tracer(&mut c, &e, dt, lim, BoundaryKind::Periodic).unwrap();
                let (lo, hi) = interior_range(&c);
                assert!(lo >= 0.1 - 1e-13 && hi <= 0.8 + 1e-13, "{lim}: {lo} {hi}");
            }
        }
        step_tracer(&mut c, &e, dt, Limiter::Mc, BoundaryKind::Periodic).unwrap();
    }

    #[test]
    fn init_counts_and_reproducibility() {
        let g = Grid::over_domain(100, 200, 0.0, 0.0, 1.0e6, 2.0e6).unwrap();
        let circles = default_circles();
        let a = init_concentration(g, &circles, 11, InitialDistribution::Uniform);
        let b = init_concentration(g, &circles, 11, InitialDistribution::Uniform);
        assert_eq!(a, b);
        let expected = std::f64::consts::PI * 150e3 * 150e3 / (g.dx * g.dy);
        for circle in circles {
            let inside = g
                .interior()
                .filter(|&(i, j)| {
                    let (x, y) = g.center(i, j);
                    circle.contains(x, y)
                })
                .count();
            assert!((inside as f64 - expected).abs() < 2.0 * std::f64::consts::PI * 15.0, "{inside}");
            assert!(g.interior().all(|(i, j)| {
                let (x, y) = g.center(i, j);
                let v = a.get(i, j);
                if circles.iter().any(|k| k.contains(x, y)) {
                    v > 0.0 && v <= 1.0
                } else {
                    v == 0.0
                }
            }));
        }
        let gauss = init_concentration(g, &circles, 11, InitialDistribution::TruncatedGaussian);
        assert!(gauss.raw().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_ne!(gauss, a);
    }

    #[test]
    fn closed_disk_boundary() {
        let c = CircleSpec { xc: 0.0, yc: 0.0, r: 5.0 };
        assert!(c.contains(3.0, 4.0));
        assert!(!c.contains(3.0, 4.000001));
    }

    #[test]
    fn centroid_of_point_mass() {
        let g = Grid::over_domain(4, 4, 0.0, 0.0, 4.0, 4.0).unwrap();
        let mut c = ScalarField::filled(g, 0.0);
        assert_eq!(centroid(&c), None);
        c.set(2, 3, 0.5);
        assert_eq!(centroid(&c), Some((1.5, 2.5)));
    }
}
