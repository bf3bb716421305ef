//! Structured grid, ghosted cell containers and the conserved/primitive state types.
//!
//! Cells are numbered the way the finite-volume formulas are written: interior
//! cells run over `1..=nx` and `1..=ny`, the two ghost layers on the low side are
//! `0` and `-1`, and on the high side `nx + 1` and `nx + 2`. Storage is a flat
//! row-major array (x fastest) of `(nx + 4) * (ny + 4)` entries.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};

/// Ghost-layer width. The limited correction fluxes read one cell beyond the
/// Riemann stencil, so two layers are always present.
pub const NGHOST: usize = 2;

/// Depths at or below this value abort the run.
pub const DEPTH_FLOOR: f64 = 1e-12;

/// Cell-averaged conserved state `(h, hu, hv)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Conserved {
    pub h: f64,
    pub hu: f64,
    pub hv: f64,
}

impl Conserved {
    pub const ZERO: Conserved = Conserved {
        h: 0.0,
        hu: 0.0,
        hv: 0.0,
    };

    pub const fn new(h: f64, hu: f64, hv: f64) -> Self {
        Conserved { h, hu, hv }
    }

    /// Exchange the two momentum components; maps the y-direction problem onto
    /// the x-direction one.
    #[inline]
    pub fn swap_xy(self) -> Self {
        Conserved {
            h: self.h,
            hu: self.hv,
            hv: self.hu,
        }
    }

    /// Inner product, grouped so that it is bitwise invariant under [`swap_xy`](Self::swap_xy).
    #[inline]
    pub fn dot(self, other: Conserved) -> f64 {
        self.h * other.h + (self.hu * other.hu + self.hv * other.hv)
    }

    pub fn is_finite(self) -> bool {
        self.h.is_finite() && self.hu.is_finite() && self.hv.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.h.abs().max(self.hu.abs()).max(self.hv.abs())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.h, self.hu, self.hv]
    }
}

impl Add for Conserved {
    type Output = Conserved;
    #[inline]
    fn add(self, o: Conserved) -> Conserved {
        Conserved::new(self.h + o.h, self.hu + o.hu, self.hv + o.hv)
    }
}

impl Sub for Conserved {
    type Output = Conserved;
    #[inline]
    fn sub(self, o: Conserved) -> Conserved {
        Conserved::new(self.h - o.h, self.hu - o.hu, self.hv - o.hv)
    }
}

impl Mul<f64> for Conserved {
    type Output = Conserved;
    #[inline]
    fn mul(self, a: f64) -> Conserved {
        Conserved::new(self.h * a, self.hu * a, self.hv * a)
    }
}

impl Mul<Conserved> for f64 {
    type Output = Conserved;
    #[inline]
    fn mul(self, q: Conserved) -> Conserved {
        q * self
    }
}

impl Neg for Conserved {
    type Output = Conserved;
    #[inline]
    fn neg(self) -> Conserved {
        Conserved::new(-self.h, -self.hu, -self.hv)
    }
}

impl AddAssign for Conserved {
    #[inline]
    fn add_assign(&mut self, o: Conserved) {
        *self = *self + o;
    }
}

impl SubAssign for Conserved {
    #[inline]
    fn sub_assign(&mut self, o: Conserved) {
        *self = *self - o;
    }
}

/// Primitive state `(h, u, v)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub h: f64,
    pub u: f64,
    pub v: f64,
}

impl Primitive {
    pub const fn new(h: f64, u: f64, v: f64) -> Self {
        Primitive { h, u, v }
    }

    pub fn to_conserved(self) -> Conserved {
        Conserved::new(self.h, self.h * self.u, self.h * self.v)
    }
}

/// Recover `(h, u, v)` from `(h, hu, hv)`; fails on a dry or negative cell.
pub fn primitives(q: Conserved) -> Result<Primitive> {
    if !(q.h > DEPTH_FLOOR) {
        return Err(SolverError::NonPositiveDepth { h: q.h, i: 0, j: 0 });
    }
    Ok(Primitive::new(q.h, q.hu / q.h, q.hv / q.h))
}

/// Uniform structured grid over a rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, x0: f64, y0: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(SolverError::InvalidGrid(format!(
                "cell counts must be positive (nx = {nx}, ny = {ny})"
            )));
        }
        if !(dx > 0.0 && dx.is_finite()) || !(dy > 0.0 && dy.is_finite()) {
            return Err(SolverError::InvalidGrid(format!(
                "cell widths must be positive and finite (dx = {dx}, dy = {dy})"
            )));
        }
        if !x0.is_finite() || !y0.is_finite() {
            return Err(SolverError::InvalidGrid("origin must be finite".into()));
        }
        Ok(Grid {
            nx,
            ny,
            dx,
            dy,
            x0,
            y0,
        })
    }

    /// Grid covering `[x0, x0 + width] x [y0, y0 + height]` with `nx * ny` cells.
    pub fn over_domain(nx: usize, ny: usize, x0: f64, y0: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0) || !(height > 0.0) {
            return Err(SolverError::InvalidGrid(format!(
                "domain extents must be positive (width = {width}, height = {height})"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(SolverError::InvalidGrid(format!(
                "cell counts must be positive (nx = {nx}, ny = {ny})"
            )));
        }
        Grid::new(nx, ny, width / nx as f64, height / ny as f64, x0, y0)
    }

    pub const fn nghost(&self) -> usize {
        NGHOST
    }

    /// Storage extent in x, including ghosts.
    pub fn sx(&self) -> usize {
        self.nx + 2 * NGHOST
    }

    /// Storage extent in y, including ghosts.
    pub fn sy(&self) -> usize {
        self.ny + 2 * NGHOST
    }

    pub fn len(&self) -> usize {
        self.sx() * self.sy()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    /// Center of cell `(i, j)` in the 1-based numbering (ghost indices allowed).
    #[inline]
    pub fn center(&self, i: isize, j: isize) -> (f64, f64) {
        (self.xc(i), self.yc(j))
    }

    #[inline]
    pub fn xc(&self, i: isize) -> f64 {
        self.x0 + (i as f64 - 0.5) * self.dx
    }

    #[inline]
    pub fn yc(&self, j: isize) -> f64 {
        self.y0 + (j as f64 - 0.5) * self.dy
    }

    /// Flat storage index of cell `(i, j)`.
    #[inline]
    pub fn idx(&self, i: isize, j: isize) -> usize {
        debug_assert!(i >= 1 - NGHOST as isize && i <= (self.nx + NGHOST) as isize);
        debug_assert!(j >= 1 - NGHOST as isize && j <= (self.ny + NGHOST) as isize);
        let si = (i + NGHOST as isize - 1) as usize;
        let sj = (j + NGHOST as isize - 1) as usize;
        sj * self.sx() + si
    }

    /// Storage column/row of interior cell 1.
    pub const fn first_interior(&self) -> usize {
        NGHOST
    }

    /// Grid with the roles of x and y exchanged.
    pub fn transposed(&self) -> Grid {
        Grid {
            nx: self.ny,
            ny: self.nx,
            dx: self.dy,
            dy: self.dx,
            x0: self.y0,
            y0: self.x0,
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Iterator over interior `(i, j)` in row-major order.
    pub fn interior(&self) -> impl Iterator<Item = (isize, isize)> + '_ {
        let nx = self.nx as isize;
        (1..=self.ny as isize).flat_map(move |j| (1..=nx).map(move |i| (i, j)))
    }
}

/// Cell values over interior and ghost cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: Grid,
    data: Vec<T>,
}

pub type ConservedField = Field<Conserved>;
pub type ScalarField = Field<f64>;

impl<T: Copy> Field<T> {
    pub fn filled(grid: Grid, value: T) -> Self {
        Field {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// Build a field by evaluating `f` at every interior cell center; ghosts get `ghost`.
    pub fn from_fn(grid: Grid, ghost: T, mut f: impl FnMut(f64, f64) -> T) -> Self {
        let mut field = Field::filled(grid, ghost);
        for (i, j) in grid.interior() {
            let (x, y) = grid.center(i, j);
            let k = grid.idx(i, j);
            field.data[k] = f(x, y);
        }
        field
    }

    pub fn from_raw(grid: Grid, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(SolverError::ShapeMismatch {
                expected: grid.len(),
                actual: data.len(),
            });
        }
        Ok(Field { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, i: isize, j: isize) -> T {
        self.data[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: isize, j: isize, value: T) {
        let k = self.grid.idx(i, j);
        self.data[k] = value;
    }

    pub fn raw(&self) -> &[T] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Interior values in row-major order (x fastest).
    pub fn interior_values(&self) -> Vec<T> {
        self.grid.interior().map(|(i, j)| self.get(i, j)).collect()
    }

    /// Replace interior values from a row-major slice of length `nx * ny`.
    pub fn set_interior(&mut self, values: &[T]) -> Result<()> {
        let n = self.grid.nx * self.grid.ny;
        if values.len() != n {
            return Err(SolverError::ShapeMismatch {
                expected: n,
                actual: values.len(),
            });
        }
        let grid = self.grid;
        for ((i, j), v) in grid.interior().zip(values) {
            self.set(i, j, *v);
        }
        Ok(())
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Field<Conserved> {
    /// Field from primitive values at cell centers.
    pub fn from_primitive_fn(grid: Grid, f: impl Fn(f64, f64) -> Primitive) -> Self {
        Field::from_fn(grid, Conserved::new(1.0, 0.0, 0.0), |x, y| f(x, y).to_conserved())
    }

    /// Total volume `sum(h) * dx * dy` over interior cells.
    pub fn mass(&self) -> f64 {
        let g = self.grid;
        let sum: f64 = g.interior().map(|(i, j)| self.get(i, j).h).sum();
        sum * g.cell_area()
    }

    /// `sum((hu^2 + hv^2) / h + g_r h^2) / 2 * dx * dy` over interior cells.
    ///
    /// The momentum term is written with `(hu)^2/h = h u^2`.
    pub fn energy_proxy(&self, g_r: f64) -> f64 {
        let g = self.grid;
        let sum: f64 = g
            .interior()
            .map(|(i, j)| {
                let q = self.get(i, j);
                0.5 * ((q.hu * q.hu + q.hv * q.hv) / q.h + g_r * q.h * q.h)
            })
            .sum();
        sum * g.cell_area()
    }

    /// Verify interior positivity; reports the first offending cell.
    pub fn check_positive(&self) -> Result<()> {
        for (i, j) in self.grid.interior() {
            let h = self.get(i, j).h;
            if !(h > DEPTH_FLOOR) {
                return Err(SolverError::NonPositiveDepth { h, i, j });
            }
        }
        Ok(())
    }

    /// Primitive state of interior cell `(i, j)`.
    pub fn primitive(&self, i: isize, j: isize) -> Result<Primitive> {
        let q = self.get(i, j);
        primitives(q).map_err(|_| SolverError::NonPositiveDepth { h: q.h, i, j })
    }

    /// Transpose the layout and exchange `hu` and `hv`.
    pub fn transpose_swap(&self) -> Field<Conserved> {
        let g = self.grid;
        let t = g.transposed();
        let (sx, sy) = (g.sx(), g.sy());
        let mut data = vec![Conserved::ZERO; g.len()];
        for r in 0..sy {
            for c in 0..sx {
                data[c * sy + r] = self.data[r * sx + c].swap_xy();
            }
        }
        Field { grid: t, data }
    }
}
