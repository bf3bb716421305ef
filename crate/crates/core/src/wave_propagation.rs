//! Unsplit wave-propagation step for the homogeneous shallow-water system.
//!
//! One step applies
//!
//! ```text
//! Q_ij -= dt/dx (A+dQ_{i-1/2,j} + A-dQ_{i+1/2,j}) + dt/dy (B+dQ_{i,j-1/2} + B-dQ_{i,j+1/2})
//!       + dt/dx (F_{i+1/2,j} - F_{i-1/2,j})       + dt/dy (G_{i,j+1/2} - G_{i,j-1/2})
//! ```
//!
//! where the correction fluxes `F`, `G` hold the limited second-order wave
//! corrections plus the transverse propagation of the normal fluctuations
//! (each `A±dQ` split into up- and down-going parts with the Roe-linearized
//! `B`, and vice versa).
//!
//! The y sweep is the x sweep run on a transposed copy of the field with the
//! momentum components exchanged, so the scheme commutes with transposition
//! bitwise. Rows are processed independently and the result does not depend on
//! the number of rayon workers.
//!
//! Transverse contributions are not added on solid-wall faces: the ghost
//! states negate both momenta, which is not a symmetry of the transverse
//! problem, and without this the wall faces would carry a small mass flux.

use rayon::prelude::*;

use crate::config::{BoundaryKind, Limiter};
use crate::error::{Result, SolverError};
use crate::grid::{Conserved, ConservedField, Grid, DEPTH_FLOOR, NGHOST};
use crate::limiter::apply_limiter;
use crate::riemann::{solve_x_unchecked, split_x};

/// Diagnostics of one hyperbolic step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperbolicStepReport {
    /// `dt * max(|s|/dx, |s|/dy)` over the interfaces that touch interior cells.
    pub max_courant: f64,
    pub max_speed: f64,
    pub limiter_used: Limiter,
}

#[derive(Clone, Copy, Debug, Default)]
struct Interface {
    waves: [Conserved; 3],
    speeds: [f64; 3],
    amdq: Conserved,
    apdq: Conserved,
    /// Cross-direction split of `amdq`: (down-going, up-going).
    am_cross: (Conserved, Conserved),
    /// Cross-direction split of `apdq`.
    ap_cross: (Conserved, Conserved),
}

impl Interface {
    #[inline]
    fn solve(ql: Conserved, qr: Conserved, g_r: f64, entropy_fix: bool) -> Self {
        let (wd, roe) = solve_x_unchecked(ql, qr, g_r, entropy_fix);
        let roe_t = roe.swap_xy();
        let cross = |d: Conserved| {
            let (m, p) = split_x(d.swap_xy(), &roe_t);
            (m.swap_xy(), p.swap_xy())
        };
        Interface {
            waves: wd.waves,
            speeds: wd.speeds,
            amdq: wd.fluct_minus,
            apdq: wd.fluct_plus,
            am_cross: cross(wd.fluct_minus),
            ap_cross: cross(wd.fluct_plus),
        }
    }
}

/// Per-direction work arrays, laid out in that direction's frame: rows run
/// across the sweep direction, interface `k` sits between cells `k - 1` and `k`.
#[derive(Debug, Default)]
struct Sweep {
    ncol: usize,
    nrow: usize,
    ifaces: Vec<Interface>,
    flux: Vec<Conserved>,
    incr: Vec<Conserved>,
}

impl Sweep {
    fn new(ncol: usize, nrow: usize) -> Self {
        Sweep {
            ncol,
            nrow,
            ifaces: vec![Interface::default(); ncol * nrow],
            flux: vec![Conserved::ZERO; ncol * nrow],
            incr: vec![Conserved::ZERO; ncol * nrow],
        }
    }

    fn riemann_phase(&mut self, data: &[Conserved], g_r: f64, entropy_fix: bool) {
        let (ncol, nrow) = (self.ncol, self.nrow);
        self.ifaces
            .par_chunks_mut(ncol)
            .enumerate()
            .for_each(|(r, row)| {
                if r == 0 || r + 1 == nrow {
                    return;
                }
                let cells = &data[r * ncol..(r + 1) * ncol];
                for k in 1..ncol {
                    row[k] = Interface::solve(cells[k - 1], cells[k], g_r, entropy_fix);
                }
            });
    }
}

/// Face fluxes and cell increments for one frame; returns (max Courant, max speed).
fn correction_phase(
    own_ifaces: &[Interface],
    flux: &mut [Conserved],
    incr: &mut [Conserved],
    other: &[Interface],
    geometry: FrameGeometry,
) -> (f64, f64) {
    let FrameGeometry {
        ncol,
        nrow,
        dtd,
        dtd_other,
        limiter,
        walls,
    } = geometry;
    let other_ncol = nrow;
    let lo = NGHOST;
    let hi_face = ncol - NGHOST;
    let hi_row = nrow - NGHOST;

    flux.par_chunks_mut(ncol)
        .zip(incr.par_chunks_mut(ncol))
        .enumerate()
        .map(|(r, (frow, irow))| {
            if r < lo || r >= hi_row {
                return (0.0f64, 0.0f64);
            }
            let own = &own_ifaces[r * ncol..(r + 1) * ncol];
            let mut courant: f64 = 0.0;
            let mut speed: f64 = 0.0;
            for k in lo..=hi_face {
                let iface = &own[k];
                let mut corr = Conserved::ZERO;
                for p in 0..3 {
                    let s = iface.speeds[p];
                    let a = s.abs();
                    speed = speed.max(a);
                    courant = courant.max(a * dtd);
                    if a == 0.0 {
                        continue;
                    }
                    let w = iface.waves[p];
                    let phi = match limiter {
                        Limiter::None => 1.0,
                        _ => {
                            let norm = w.dot(w);
                            if norm == 0.0 {
                                continue;
                            }
                            let up = if s > 0.0 { k - 1 } else { k + 1 };
                            apply_limiter(own[up].waves[p].dot(w) / norm, limiter)
                        }
                    };
                    corr += w * (0.5 * a * (1.0 - dtd * a) * phi);
                }

                let wall_face = walls && (k == lo || k == hi_face);
                if !wall_face {
                    // other-frame cells (k - 1, r) and (k, r); their incoming
                    // fluctuations arrive through other-frame interfaces r and r + 1
                    let below = &other[(k - 1) * other_ncol..k * other_ncol];
                    let above = &other[k * other_ncol..(k + 1) * other_ncol];
                    let cross = (below[r].ap_cross.1 + below[r + 1].am_cross.1)
                        + (above[r].ap_cross.0 + above[r + 1].am_cross.0);
                    corr -= cross.swap_xy() * (0.5 * dtd_other);
                }
                frow[k] = corr;
            }
            for c in lo..hi_face {
                let fluct = own[c].apdq + own[c + 1].amdq;
                let diff = frow[c + 1] - frow[c];
                irow[c] = (fluct + diff) * dtd;
            }
            (courant, speed)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

#[derive(Clone, Copy, Debug)]
struct FrameGeometry {
    ncol: usize,
    nrow: usize,
    dtd: f64,
    dtd_other: f64,
    limiter: Limiter,
    walls: bool,
}

/// Reusable workspace for hyperbolic steps on a fixed grid.
#[derive(Debug)]
pub struct HyperbolicSolver {
    grid: Grid,
    pub g_r: f64,
    pub limiter: Limiter,
    pub entropy_fix: bool,
    pub boundary: BoundaryKind,
    x: Sweep,
    y: Sweep,
}

impl HyperbolicSolver {
    pub fn new(grid: Grid, g_r: f64, limiter: Limiter, entropy_fix: bool, boundary: BoundaryKind) -> Self {
        HyperbolicSolver {
            grid,
            g_r,
            limiter,
            entropy_fix,
            boundary,
            x: Sweep::new(grid.sx(), grid.sy()),
            y: Sweep::new(grid.sy(), grid.sx()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Advance `q` (ghosts filled) by `dt`; ghost cells of the result are stale.
    pub fn step(&mut self, q: &ConservedField, dt: f64) -> Result<(ConservedField, HyperbolicStepReport)> {
        let mut out = q.clone();
        let report = self.step_in_place(&mut out, dt)?;
        Ok((out, report))
    }

    /// In-place variant of [`step`](Self::step). Depth and CFL failures leave `q`
    /// untouched; a non-finite result is reported after the update.
    pub fn step_in_place(&mut self, q: &mut ConservedField, dt: f64) -> Result<HyperbolicStepReport> {
        let grid = self.grid;
        if *q.grid() != grid {
            return Err(SolverError::InvalidGrid("field grid differs from solver grid".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::config("dt", "time step must be positive"));
        }
        check_depths(q)?;

        let qt = q.transpose_swap();
        self.x.riemann_phase(q.raw(), self.g_r, self.entropy_fix);
        self.y.riemann_phase(qt.raw(), self.g_r, self.entropy_fix);

        let walls = self.boundary == BoundaryKind::SolidWall;
        let gx = FrameGeometry {
            ncol: grid.sx(),
            nrow: grid.sy(),
            dtd: dt / grid.dx,
            dtd_other: dt / grid.dy,
            limiter: self.limiter,
            walls,
        };
        let gy = FrameGeometry {
            ncol: grid.sy(),
            nrow: grid.sx(),
            dtd: dt / grid.dy,
            dtd_other: dt / grid.dx,
            limiter: self.limiter,
            walls,
        };
        let (cx, sx) = correction_phase(&self.x.ifaces, &mut self.x.flux, &mut self.x.incr, &self.y.ifaces, gx);
        let (cy, sy) = correction_phase(&self.y.ifaces, &mut self.y.flux, &mut self.y.incr, &self.x.ifaces, gy);
        let max_courant = cx.max(cy);
        if max_courant > 1.0 {
            return Err(SolverError::CflViolation {
                courant: max_courant,
                dt,
            });
        }

        let (ncol, nrow) = (grid.sx(), grid.sy());
        let ix = &self.x.incr;
        let iy = &self.y.incr;
        let data = q.raw_mut();
        data.par_chunks_mut(ncol).enumerate().for_each(|(r, row)| {
            if r < NGHOST || r >= nrow - NGHOST {
                return;
            }
            for c in NGHOST..ncol - NGHOST {
                row[c] -= ix[r * ncol + c] + iy[c * nrow + r].swap_xy();
            }
        });

        for (i, j) in grid.interior() {
            if !q.get(i, j).is_finite() {
                return Err(SolverError::Instability(format!(
                    "non-finite state at cell ({i}, {j}) after hyperbolic step"
                )));
            }
        }
        Ok(HyperbolicStepReport {
            max_courant,
            max_speed: sx.max(sy),
            limiter_used: self.limiter,
        })
    }
}

fn check_depths(q: &ConservedField) -> Result<()> {
    let g = *q.grid();
    // interior first so the reported cell is a real one
    for (i, j) in g.interior() {
        let h = q.get(i, j).h;
        if !(h > DEPTH_FLOOR) {
            return Err(SolverError::NonPositiveDepth { h, i, j });
        }
    }
    if let Some(k) = q.raw().iter().position(|s| !(s.h > DEPTH_FLOOR)) {
        let (r, c) = (k / g.sx(), k % g.sx());
        return Err(SolverError::NonPositiveDepth {
            h: q.raw()[k].h,
            i: c as isize + 1 - NGHOST as isize,
            j: r as isize + 1 - NGHOST as isize,
        });
    }
    Ok(())
}

/// One hyperbolic step with a throwaway workspace.
pub fn step_hyperbolic(
    q: &ConservedField,
    dt: f64,
    g_r: f64,
    limiter: Limiter,
    boundary: BoundaryKind,
) -> Result<(ConservedField, HyperbolicStepReport)> {
    HyperbolicSolver::new(*q.grid(), g_r, limiter, false, boundary).step(q, dt)
}

/// Largest characteristic speeds `(max |u| + c, max |v| + c)` over interior cells.
pub fn max_wave_speed(q: &ConservedField, g_r: f64) -> Result<(f64, f64)> {
    let mut sx: f64 = 0.0;
    let mut sy: f64 = 0.0;
    for (i, j) in q.grid().interior() {
        let p = q.primitive(i, j)?;
        let c = (g_r * p.h).sqrt();
        sx = sx.max(p.u.abs() + c);
        sy = sy.max(p.v.abs() + c);
    }
    Ok((sx, sy))
}

/// `cfl / (s_x/dx + s_y/dy)`; `+inf` when nothing moves.
pub fn stable_dt_from_speeds(sx: f64, sy: f64, grid: &Grid, cfl_target: f64) -> f64 {
    let rate = sx / grid.dx + sy / grid.dy;
    if rate > 0.0 {
        cfl_target / rate
    } else {
        f64::INFINITY
    }
}

pub fn stable_dt(q: &ConservedField, g_r: f64, cfl_target: f64) -> Result<f64> {
    if !(cfl_target > 0.0 && cfl_target <= 1.0) {
        return Err(SolverError::config("cfl", "CFL target must lie in (0, 1]"));
    }
    let (sx, sy) = max_wave_speed(q, g_r)?;
    Ok(stable_dt_from_speeds(sx, sy, q.grid(), cfl_target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::fill_ghosts;
    use crate::grid::Field;

    fn grid(nx: usize, ny: usize) -> Grid {
        Grid::over_domain(nx, ny, 0.0, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn uniform_state_is_fixed_point() {
        for kind in [BoundaryKind::Periodic, BoundaryKind::SolidWall] {
            let g = grid(8, 6);
            let mut q = Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(2.0, 0.0, 0.0));
            fill_ghosts(&mut q, kind);
            let (out, rep) = step_hyperbolic(&q, 0.01, 1.0, Limiter::Mc, kind).unwrap();
            assert_eq!(out.interior_values(), q.interior_values());
            assert!(rep.max_courant > 0.0);
        }
        // uniform flow is also a fixed point with periodic wrap
        let g = grid(8, 6);
        let mut q = Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(2.0, 0.6, -0.4));
        fill_ghosts(&mut q, BoundaryKind::Periodic);
        let (out, _) = step_hyperbolic(&q, 0.01, 1.0, Limiter::None, BoundaryKind::Periodic).unwrap();
        assert_eq!(out.interior_values(), q.interior_values());
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = grid(8, 8);
        let mut q = Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(1.0, 0.0, 0.0));
        fill_ghosts(&mut q, BoundaryKind::Periodic);
        let err = step_hyperbolic(&q, 0.2, 1.0, Limiter::None, BoundaryKind::Periodic).unwrap_err();
        assert!(matches!(err, SolverError::CflViolation { .. }));
    }

    #[test]
    fn dry_cell_is_rejected() {
        let g = grid(4, 4);
        let mut q = Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(1.0, 0.0, 0.0));
        q.set(2, 3, Conserved::new(0.0, 0.0, 0.0));
        fill_ghosts(&mut q, BoundaryKind::Periodic);
        let err = step_hyperbolic(&q, 0.01, 1.0, Limiter::None, BoundaryKind::Periodic).unwrap_err();
        assert!(matches!(err, SolverError::NonPositiveDepth { i: 2, j: 3, .. }), "{err}");
    }

    #[test]
    fn max_speed_examples() {
        let g = grid(3, 3);
        let q = Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(1.0, 0.0, 0.0));
        assert_eq!(max_wave_speed(&q, 1.0).unwrap(), (1.0, 1.0));
        let q = Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(1.0, 0.5, 0.0));
        assert_eq!(max_wave_speed(&q, 1.0).unwrap().0, 1.5);
        let q = Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(500.0, 0.0, 0.0));
        let (sx, sy) = max_wave_speed(&q, 0.03).unwrap();
        assert!((sx - 3.873).abs() < 1e-3 && sx == sy);
    }

    #[test]
    fn stable_dt_examples() {
        let g = Grid::new(10, 10, 0.1, 0.1, 0.0, 0.0).unwrap();
        assert!((stable_dt_from_speeds(1.0, 1.0, &g, 0.9) - 0.045).abs() < 1e-15);
        assert_eq!(stable_dt_from_speeds(0.0, 0.0, &g, 0.9), f64::INFINITY);

        let g = Grid::new(100, 200, 1.0e4, 1.0e4, 0.0, 0.0).unwrap();
        let q = Field::from_fn(g, Conserved::ZERO, |_, _| Conserved::new(500.0, 0.0, 0.0));
        let dt = stable_dt(&q, 0.03, 0.9).unwrap();
        assert!((dt - 0.9 / (2.0 * 15f64.sqrt() / 1.0e4)).abs() < 1e-9);
        assert!(dt > 1100.0 && dt < 1200.0);
        assert!(dt >= 360.0);
    }
}
