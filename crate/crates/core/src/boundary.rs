//! Ghost-cell filling.
//!
//! Solid walls mirror the depth and negate both momentum components in each of
//! the two ghost layers (`H_0 = H_1`, `(HU)_0 = -(HU)_1`, `(HV)_0 = -(HV)_1`,
//! and the same with `-1` and `2`). Negating the tangential momentum as well as
//! the normal one makes the cell-centered velocities odd about every wall, which
//! is the no-slip condition used by the viscous term. Corners are filled by the
//! x rule followed by the y rule.

use crate::config::BoundaryKind;
use crate::error::Result;
use crate::grid::{Conserved, Field, ScalarField, NGHOST};

/// Source index and reflection count for ghost index `i` on an `n`-cell line.
#[inline]
fn mirror_source(mut i: isize, n: isize) -> (isize, u32) {
    let mut flips = 0;
    while i < 1 || i > n {
        i = if i < 1 { 1 - i } else { 2 * n + 1 - i };
        flips += 1;
    }
    (i, flips)
}

#[inline]
fn wrap_source(i: isize, n: isize) -> isize {
    (i - 1).rem_euclid(n) + 1
}

fn fill_with<T: Copy>(field: &mut Field<T>, periodic: bool, reflect: impl Fn(T) -> T) {
    let g = *field.grid();
    let (nx, ny) = (g.nx as isize, g.ny as isize);
    let ng = NGHOST as isize;
    let map = |i: isize, n: isize| -> (isize, u32) {
        if periodic {
            (wrap_source(i, n), 0)
        } else {
            mirror_source(i, n)
        }
    };
    let apply = |v: T, flips: u32| if flips % 2 == 1 { reflect(v) } else { v };

    let ghost_cols: Vec<isize> = (1 - ng..=0).chain(nx + 1..=nx + ng).collect();
    for j in 1..=ny {
        for &i in &ghost_cols {
            let (src, flips) = map(i, nx);
            let v = apply(field.get(src, j), flips);
            field.set(i, j, v);
        }
    }
    let ghost_rows: Vec<isize> = (1 - ng..=0).chain(ny + 1..=ny + ng).collect();
    for &j in &ghost_rows {
        let (src, flips) = map(j, ny);
        for i in 1 - ng..=nx + ng {
            let v = apply(field.get(i, src), flips);
            field.set(i, j, v);
        }
    }
}

/// Wrap both directions.
pub fn fill_ghost_periodic<T: Copy>(field: &mut Field<T>) {
    fill_with(field, true, |v| v);
}

/// Mirror depth, negate both momenta.
pub fn fill_ghost_solid_wall(q: &mut Field<Conserved>) {
    fill_with(q, false, |s| Conserved::new(s.h, -s.hu, -s.hv));
}

pub fn fill_ghosts(q: &mut Field<Conserved>, kind: BoundaryKind) {
    match kind {
        BoundaryKind::Periodic => fill_ghost_periodic(q),
        BoundaryKind::SolidWall => fill_ghost_solid_wall(q),
    }
}

/// Scalars are reflected evenly at walls.
pub fn fill_scalar_ghosts(c: &mut ScalarField, kind: BoundaryKind) {
    match kind {
        BoundaryKind::Periodic => fill_ghost_periodic(c),
        BoundaryKind::SolidWall => fill_with(c, false, |v| v),
    }
}

/// Cell-centered velocities `U = HU/H`, `V = HV/H` on the interior and the
/// first ghost layer (including its corners). Outer ghost layer entries are zero.
pub fn ghost_velocities(q: &Field<Conserved>) -> Result<(ScalarField, ScalarField)> {
    let g = *q.grid();
    let mut u = ScalarField::filled(g, 0.0);
    let mut v = ScalarField::filled(g, 0.0);
    for j in 0..=g.ny as isize + 1 {
        for i in 0..=g.nx as isize + 1 {
            let p = q.primitive(i, j)?;
            u.set(i, j, p.u);
            v.set(i, j, p.v);
        }
    }
    Ok((u, v))
}
