//! Source-term sub-problem: Coriolis, viscosity and forcing acting on the
//! momenta with the depth frozen, advanced by Heun's two-stage RK2 method.
//!
//! ```text
//! d(HU)/dt = +f (HV) + nu H lap(U) + H F^u
//! d(HV)/dt = -f (HU) + nu H lap(V) + H F^v,      f = f0 + beta (y - y_ref)
//! ```
//!
//! `lap` is the five-point centered Laplacian of the cell-centered velocities,
//! which reads the first ghost layer.

use std::f64::consts::PI;

use crate::boundary::fill_ghosts;
use crate::config::BoundaryKind;
use crate::error::{Result, SolverError};
use crate::grid::{Conserved, ConservedField, DEPTH_FLOOR};
use crate::params::{Forcing, PhysParams, WindForcing};
use crate::verification::AnsatzParams;

/// Momentum tendencies of interior cells, row-major; `h` is unused and zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceRhs {
    pub values: Vec<Conserved>,
}

/// Wind forcing at latitude coordinate `y` (measured from the southern wall).
pub fn wind_forcing(y: f64, spec: &WindForcing) -> (f64, f64) {
    let amp = spec.tau0 / (spec.rho * spec.h0);
    (-amp * (2.0 * PI * y / spec.length).cos(), 0.0)
}

/// Manufactured forcing of the nondimensional periodic test.
pub fn manufactured_forcing(x: f64, y: f64, t: f64, p: &AnsatzParams) -> (f64, f64) {
    let tp = 2.0 * PI;
    let (sx, cx) = (tp * x).sin_cos();
    let (sy, cy) = (tp * y).sin_cos();
    let (swt, cwt) = (p.omega * t).sin_cos();
    let amp = p.eta + p.epsilon * swt;
    let h = (cx * cy).exp();
    let fr2 = p.fr * p.fr;

    let fu = p.epsilon * p.omega * cwt * cx * sy - tp * amp * amp * sx * cx
        + 8.0 * PI * PI / p.re * amp * cx * sy
        + amp * sx * cy / p.r0
        - tp / fr2 * sx * cy * h;
    let fv = -p.epsilon * p.omega * cwt * sx * cy - tp * amp * amp * sy * cy - 8.0 * PI * PI / p.re * amp * sx * cy
        + amp * cx * sy / p.r0
        - tp / fr2 * cx * sy * h;
    (fu, fv)
}

/// Forcing acceleration `(F^u, F^v)` at a point.
pub fn forcing_at(forcing: &Forcing, x: f64, y: f64, t: f64) -> (f64, f64) {
    match forcing {
        Forcing::None => (0.0, 0.0),
        Forcing::Wind(w) => wind_forcing(y, w),
        Forcing::Manufactured(p) => manufactured_forcing(x, y, t, p),
    }
}

/// Right-hand side on a field whose ghost cells are already filled.
pub fn eval_rhs(q: &ConservedField, params: &PhysParams, t: f64) -> Result<SourceRhs> {
    let g = *q.grid();
    let (sx, nx, ny) = (g.sx(), g.nx, g.ny);
    let data = q.raw();

    // velocities on interior + first ghost layer
    let mut vel = vec![(0.0f64, 0.0f64); data.len()];
    for sj in 1..g.sy() - 1 {
        for si in 1..sx - 1 {
            let s = data[sj * sx + si];
            if !(s.h > DEPTH_FLOOR) {
                return Err(SolverError::NonPositiveDepth {
                    h: s.h,
                    i: si as isize - 1,
                    j: sj as isize - 1,
                });
            }
            vel[sj * sx + si] = (s.hu / s.h, s.hv / s.h);
        }
    }

    let (rdx2, rdy2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let mut values = Vec::with_capacity(nx * ny);
    for j in 1..=ny as isize {
        let y = g.yc(j);
        let f = params.coriolis(y);
        for i in 1..=nx as isize {
            let k = g.idx(i, j);
            let s = data[k];
            let (uc, vc) = vel[k];
            let (ul, vl) = vel[k - 1];
            let (ur, vr) = vel[k + 1];
            let (ud, vd) = vel[k - sx];
            let (uu, vu) = vel[k + sx];
            let lap_u = (ul - 2.0 * uc + ur) * rdx2 + (ud - 2.0 * uc + uu) * rdy2;
            let lap_v = (vl - 2.0 * vc + vr) * rdx2 + (vd - 2.0 * vc + vu) * rdy2;
            let (fu, fv) = forcing_at(&params.forcing, g.xc(i), y, t);
            let dhu = f * s.hv + params.nu * s.h * lap_u + s.h * fu;
            let dhv = -f * s.hu + params.nu * s.h * lap_v + s.h * fv;
            if !dhu.is_finite() || !dhv.is_finite() {
                return Err(SolverError::Instability(format!(
                    "non-finite source term at cell ({i}, {j})"
                )));
            }
            values.push(Conserved::new(0.0, dhu, dhv));
        }
    }
    Ok(SourceRhs { values })
}

/// Largest step for which Heun's method is stable on the discrete viscous operator.
pub fn viscous_dt_bound(dx: f64, dy: f64, nu: f64) -> f64 {
    if nu > 0.0 {
        (dx * dx * dy * dy) / (2.0 * nu * (dx * dx + dy * dy))
    } else {
        f64::INFINITY
    }
}

/// One Heun step `y+ = y + dt/2 (k1 + k2)` of a generic ODE on a state vector.
pub fn heun_step<F>(y: &[f64], t: f64, dt: f64, mut rhs: F) -> Vec<f64>
where
    F: FnMut(&[f64], f64) -> Vec<f64>,
{
    let k1 = rhs(y, t);
    let stage: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + dt * k).collect();
    let k2 = rhs(&stage, t + dt);
    y.iter()
        .zip(k1.iter().zip(&k2))
        .map(|(a, (p, q))| a + 0.5 * dt * (p + q))
        .collect()
}

/// Growth of the momentum magnitude in one step beyond which the run aborts,
/// relative to the larger of the initial magnitude and the first-stage increment.
const GROWTH_LIMIT: f64 = 1e6;

/// Advance the momenta of `q` from `t` to `t + dt`; depths are not modified.
///
/// Ghost cells are refilled with `boundary` before each stage; on return they
/// reflect the first stage and are stale.
pub fn rk2_advance(
    q: &mut ConservedField,
    dt: f64,
    params: &PhysParams,
    boundary: BoundaryKind,
    t: f64,
) -> Result<()> {
    let g = *q.grid();
    let bound = viscous_dt_bound(g.dx, g.dy, params.nu);
    if dt > bound {
        return Err(SolverError::SourceStepTooLarge { dt, bound });
    }
    let before = interior_momentum_max(q);

    fill_ghosts(q, boundary);
    let k1 = eval_rhs(q, params, t)?;
    let base = q.clone();

    let mut stage = base.clone();
    for ((i, j), k) in g.interior().zip(&k1.values) {
        let s = stage.get(i, j);
        stage.set(i, j, Conserved::new(s.h, s.hu + dt * k.hu, s.hv + dt * k.hv));
    }
    fill_ghosts(&mut stage, boundary);
    let k2 = eval_rhs(&stage, params, t + dt)?;

    let half = 0.5 * dt;
    for ((i, j), (a, b)) in g.interior().zip(k1.values.iter().zip(&k2.values)) {
        let s = base.get(i, j);
        q.set(
            i,
            j,
            Conserved::new(s.h, s.hu + half * (a.hu + b.hu), s.hv + half * (a.hv + b.hv)),
        );
    }

    // from rest the first-stage increment sets the scale
    let kick = dt * k1.values.iter().fold(0.0f64, |m, k| m.max(k.hu.abs()).max(k.hv.abs()));
    let after = interior_momentum_max(q);
    if !after.is_finite() || after > GROWTH_LIMIT * before.max(kick).max(f64::MIN_POSITIVE) {
        return Err(SolverError::Instability(format!(
            "momentum grew from {before:e} to {after:e} in one source step"
        )));
    }
    Ok(())
}

fn interior_momentum_max(q: &ConservedField) -> f64 {
    q.grid()
        .interior()
        .map(|(i, j)| {
            let s = q.get(i, j);
            s.hu.abs().max(s.hv.abs())
        })
        .fold(0.0, f64::max)
}
