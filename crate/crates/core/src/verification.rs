//! Manufactured-solution verification on the nondimensional, periodic f-plane
//! problem over the unit square.
//!
//! ```text
//! u = (eta + eps sin(omega t)) cos(2 pi x) sin(2 pi y)
//! v = -(eta + eps sin(omega t)) sin(2 pi x) cos(2 pi y)
//! h = exp(cos(2 pi x) cos(2 pi y))
//! ```
//!
//! The nondimensional system is the dimensional one with `g_r = Fr^-2`,
//! `nu = 1/Re`, `f0 = 1/R0` and `beta = 0`.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::boundary::fill_ghost_periodic;
use crate::config::{BoundaryKind, Limiter, Splitting};
use crate::error::{Result, SolverError};
use crate::grid::{Conserved, ConservedField, Field, Grid};
use crate::params::{Forcing, PhysParams};
use crate::splitting::{step_count, Simulation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzParams {
    pub eta: f64,
    pub epsilon: f64,
    pub omega: f64,
    pub fr: f64,
    pub re: f64,
    pub r0: f64,
}

impl AnsatzParams {
    /// Parameters of the grid-refinement study.
    pub fn convergence_defaults() -> Self {
        AnsatzParams {
            eta: 0.1,
            epsilon: 0.9,
            omega: PI / 20.0,
            fr: 2.0,
            re: 100.0,
            r0: 0.1,
        }
    }

    /// Parameters of the eta-sensitivity study (`eta + epsilon = 1`).
    pub fn eta_study(eta: f64) -> Self {
        AnsatzParams {
            eta,
            epsilon: 1.0 - eta,
            omega: PI / 10.0,
            ..Self::convergence_defaults()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("fr", self.fr), ("re", self.re), ("r0", self.r0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::config(key, "must be positive"));
            }
        }
        for (key, v) in [("eta", self.eta), ("epsilon", self.epsilon), ("omega", self.omega)] {
            if !v.is_finite() {
                return Err(SolverError::config(key, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn to_phys_params(&self) -> PhysParams {
        PhysParams {
            g_r: 1.0 / (self.fr * self.fr),
            f0: 1.0 / self.r0,
            beta: 0.0,
            nu: 1.0 / self.re,
            beta_origin: 0.0,
            forcing: Forcing::Manufactured(*self),
        }
    }

    #[inline]
    fn amplitude(&self, t: f64) -> f64 {
        self.eta + self.epsilon * (self.omega * t).sin()
    }
}

/// Exact `(u, v, h)` at a point.
pub fn exact_solution(x: f64, y: f64, t: f64, p: &AnsatzParams) -> (f64, f64, f64) {
    let a = p.amplitude(t);
    let (sx, cx) = (2.0 * PI * x).sin_cos();
    let (sy, cy) = (2.0 * PI * y).sin_cos();
    (a * cx * sy, -a * sx * cy, (cx * cy).exp())
}

/// How the exact solution is sampled on the grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Point values at cell centers.
    #[default]
    Point,
    /// Cell averages by 4x4 Gauss-Legendre quadrature.
    CellAverage,
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
];

/// Exact `(u, v, h)` for cell `(i, j)` under `sampling`.
pub fn sample_exact(grid: &Grid, i: isize, j: isize, t: f64, p: &AnsatzParams, sampling: Sampling) -> (f64, f64, f64) {
    let (xc, yc) = grid.center(i, j);
    match sampling {
        Sampling::Point => exact_solution(xc, yc, t, p),
        Sampling::CellAverage => {
            let (mut u, mut v, mut h) = (0.0, 0.0, 0.0);
            for (a, wa) in GAUSS4 {
                for (b, wb) in GAUSS4 {
                    let w = 0.25 * wa * wb;
                    let (eu, ev, eh) = exact_solution(xc + 0.5 * a * grid.dx, yc + 0.5 * b * grid.dy, t, p);
                    u += w * eu;
                    v += w * ev;
                    h += w * eh;
                }
            }
            (u, v, h)
        }
    }
}

/// Periodic unit-square grid with `n` cells per direction.
pub fn unit_grid(n: usize) -> Result<Grid> {
    Grid::over_domain(n, n, 0.0, 0.0, 1.0, 1.0)
}

/// Conserved field holding the exact solution at time `t`, ghosts filled.
pub fn exact_field(grid: Grid, t: f64, p: &AnsatzParams, sampling: Sampling) -> ConservedField {
    let mut q = Field::filled(grid, Conserved::ZERO);
    for (i, j) in grid.interior() {
        let (u, v, h) = sample_exact(&grid, i, j, t, p, sampling);
        q.set(i, j, Conserved::new(h, h * u, h * v));
    }
    fill_ghost_periodic(&mut q);
    q
}

/// `sqrt(mean(err^2))` over matching sequences of numeric and exact values.
pub fn l2_error(numeric: &[f64], exact: &[f64]) -> Result<f64> {
    if numeric.len() != exact.len() {
        return Err(SolverError::ShapeMismatch {
            expected: exact.len(),
            actual: numeric.len(),
        });
    }
    if numeric.is_empty() {
        return Err(SolverError::ShapeMismatch { expected: 1, actual: 0 });
    }
    let sum: f64 = numeric.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / numeric.len() as f64).sqrt())
}

/// Errors of a numerical field against the exact solution at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    pub h: f64,
    pub u: f64,
    pub v: f64,
}

pub fn field_errors(q: &ConservedField, t: f64, p: &AnsatzParams, sampling: Sampling) -> Result<FieldErrors> {
    let g = *q.grid();
    let n = g.nx * g.ny;
    let (mut nh, mut nu, mut nv) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut eh, mut eu, mut ev) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (i, j) in g.interior() {
        let s = q.primitive(i, j)?;
        let (u, v, h) = sample_exact(&g, i, j, t, p, sampling);
        nh.push(s.h);
        nu.push(s.u);
        nv.push(s.v);
        eh.push(h);
        eu.push(u);
        ev.push(v);
    }
    Ok(FieldErrors {
        h: l2_error(&nh, &eh)?,
        u: l2_error(&nu, &eu)?,
        v: l2_error(&nv, &ev)?,
    })
}

/// Numerical options shared by the studies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub splitting: Splitting,
    pub limiter: Limiter,
    pub sampling: Sampling,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            splitting: Splitting::Strang,
            limiter: Limiter::None,
            sampling: Sampling::Point,
        }
    }
}

/// Result of one manufactured run.
#[derive(Clone, Debug)]
pub struct ManufacturedRun {
    pub state: ConservedField,
    pub steps: usize,
    pub errors: FieldErrors,
    /// Wall time of the time loop only.
    pub seconds: f64,
}

/// Integrate the manufactured problem on an `n x n` grid with fixed `dt` to `t_end`.
pub fn run_manufactured(n: usize, dt: f64, t_end: f64, p: &AnsatzParams, opts: StudyOptions) -> Result<ManufacturedRun> {
    p.validate()?;
    let grid = unit_grid(n)?;
    let params = p.to_phys_params();
    let mut sim = Simulation::new(grid, params, opts.limiter, BoundaryKind::Periodic, opts.splitting, false);
    let mut q = exact_field(grid, 0.0, p, opts.sampling);
    let steps = step_count(t_end, dt);

    let start = Instant::now();
    let mut t = 0.0;
    for k in 0..steps {
        let h = if k + 1 == steps { t_end - t } else { dt };
        sim.advance(&mut q, t, h)?;
        t = if k + 1 == steps { t_end } else { (k + 1) as f64 * dt };
    }
    let seconds = start.elapsed().as_secs_f64();

    let errors = field_errors(&q, t_end, p, opts.sampling)?;
    Ok(ManufacturedRun {
        state: q,
        steps,
        errors,
        seconds,
    })
}

/// Coarsest level and its step of the refinement schedule.
pub const BASE_N: usize = 10;
pub const BASE_DT: f64 = 0.025;

/// Time step for `n` cells: `base_dt (base_n / n)^2`, which divides the step by
/// four per doubling and extends to levels that are not powers of two.
pub fn schedule_dt(n: usize, base_n: usize, base_dt: f64) -> f64 {
    let r = base_n as f64 / n as f64;
    base_dt * r * r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dt: f64,
    pub error: f64,
    /// `log(e_prev / e) / log(n / n_prev)`; absent on the first row.
    pub order: Option<f64>,
    pub seconds: f64,
}

/// Height-error refinement study at `t = 1`.
pub fn convergence_study(levels: &[usize], base_dt: f64, p: &AnsatzParams, opts: StudyOptions) -> Result<Vec<ConvergenceRow>> {
    convergence_study_with(levels, base_dt, p, opts, |_, _| {})
}

/// As [`convergence_study`], handing each row and its final field to `on_row`
/// as soon as the level completes.
pub fn convergence_study_with(
    levels: &[usize],
    base_dt: f64,
    p: &AnsatzParams,
    opts: StudyOptions,
    mut on_row: impl FnMut(&ConvergenceRow, &ConservedField),
) -> Result<Vec<ConvergenceRow>> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolverError::config("levels", "levels must be non-empty and strictly increasing"));
    }
    let base_n = levels[0];
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    for &n in levels {
        let dt = schedule_dt(n, base_n, base_dt);
        let run = run_manufactured(n, dt, 1.0, p, opts).map_err(|e| SolverError::LevelFailed {
            n,
            source: Box::new(e),
        })?;
        let order = rows
            .last()
            .map(|prev| (prev.error / run.errors.h).ln() / (n as f64 / prev.n as f64).ln());
        let row = ConvergenceRow {
            n,
            dt,
            error: run.errors.h,
            order,
            seconds: run.seconds,
        };
        on_row(&row, &run.state);
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    pub eta: f64,
    pub epsilon: f64,
    pub u_error: f64,
    pub seconds: f64,
}

/// Settings of the eta-sensitivity study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaStudy {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Each timing is the minimum over this many repeated runs.
    pub repeats: usize,
}

impl Default for EtaStudy {
    fn default() -> Self {
        EtaStudy {
            n: 50,
            dt: schedule_dt(50, BASE_N, BASE_DT),
            t_end: 5.0,
            repeats: 1,
        }
    }
}

/// u-error and loop wall time per `eta` with `epsilon = 1 - eta`, `omega = pi/10`.
pub fn eta_sensitivity_study(etas: &[f64], study: EtaStudy, opts: StudyOptions) -> Result<Vec<EtaRow>> {
    eta_sensitivity_study_with(etas, study, opts, AnsatzParams::eta_study)
}

/// As [`eta_sensitivity_study`] with the parameters of each `eta` supplied by `params`.
pub fn eta_sensitivity_study_with(
    etas: &[f64],
    study: EtaStudy,
    opts: StudyOptions,
    params: impl Fn(f64) -> AnsatzParams,
) -> Result<Vec<EtaRow>> {
    // Repeats run in rounds over all etas so slow drift in machine speed
    // affects every eta alike.
    let params: Vec<AnsatzParams> = etas.iter().map(|&eta| params(eta)).collect();
    let mut rows: Vec<EtaRow> = etas
        .iter()
        .zip(&params)
        .map(|(&eta, p)| EtaRow {
            eta,
            epsilon: p.epsilon,
            u_error: f64::NAN,
            seconds: f64::INFINITY,
        })
        .collect();
    for _ in 0..study.repeats.max(1) {
        for (row, p) in rows.iter_mut().zip(&params) {
            let run = run_manufactured(study.n, study.dt, study.t_end, p, opts)?;
            row.seconds = row.seconds.min(run.seconds);
            row.u_error = run.errors.u;
        }
    }
    Ok(rows)
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("n,dt,error,order,seconds\n");
    for r in rows {
        let order = r.order.map(|o| format!("{o:.4}")).unwrap_or_default();
        s.push_str(&format!("{},{:.6e},{:.6e},{},{:.3}\n", r.n, r.dt, r.error, order, r.seconds));
    }
    s
}

pub fn convergence_table(rows: &[ConvergenceRow]) -> String {
    let mut s = format!("{:>6} {:>12} {:>12} {:>7} {:>9}\n", "N", "dt", "||H-h||", "order", "time(s)");
    for r in rows {
        let order = r.order.map(|o| format!("{o:.2}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!("{:>6} {:>12.4e} {:>12.4e} {:>7} {:>9.2}\n", r.n, r.dt, r.error, order, r.seconds));
    }
    s
}

pub fn eta_csv(rows: &[EtaRow]) -> String {
    let mut s = String::from("eta,epsilon,u_error,seconds\n");
    for r in rows {
        s.push_str(&format!("{},{},{:.6e},{:.4}\n", r.eta, r.epsilon, r.u_error, r.seconds));
    }
    s
}

pub fn eta_table(rows: &[EtaRow]) -> String {
    let mut s = format!("{:>5} {:>8} {:>12} {:>9}\n", "eta", "epsilon", "||U-u||", "time(s)");
    for r in rows {
        s.push_str(&format!("{:>5.2} {:>8.2} {:>12.4e} {:>9.3}\n", r.eta, r.epsilon, r.u_error, r.seconds));
    }
    s
}

/// Interior height values, row-major, for contour dumps.
pub fn height_values(q: &ConservedField) -> Vec<f64> {
    q.interior_values().iter().map(|s| s.h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_solution_examples() {
        let p = AnsatzParams::convergence_defaults();
        let (u, v, h) = exact_solution(0.0, 0.0, 0.7, &p);
        assert_eq!((u, v), (0.0, 0.0));
        assert!((h - std::f64::consts::E).abs() < 1e-15);
        let (u, _, h) = exact_solution(0.5, 0.5, 0.3, &p);
        assert!(u.abs() < 1e-15);
        assert!((h - std::f64::consts::E).abs() < 1e-14);
        let (u, _, _) = exact_solution(0.125, 0.125, 0.0, &p);
        assert!((u - 0.05).abs() < 1e-15);
        let (_, _, h) = exact_solution(0.5, 0.0, 0.0, &p);
        assert!((h - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn l2_examples() {
        assert_eq!(l2_error(&[3.0; 9], &[1.0; 9]).unwrap(), 2.0);
        assert_eq!(l2_error(&[1.0; 4], &[1.0; 4]).unwrap(), 0.0);
        let checker: Vec<f64> = (0..16).map(|k| if (k / 4 + k % 4) % 2 == 0 { 0.5 } else { -0.5 }).collect();
        assert_eq!(l2_error(&checker, &[0.0; 16]).unwrap(), 0.5);
        assert!(matches!(
            l2_error(&[1.0; 3], &[1.0; 4]),
            Err(SolverError::ShapeMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn parameter_mapping() {
        let p = AnsatzParams::convergence_defaults().to_phys_params();
        assert_eq!(p.g_r, 0.25);
        assert_eq!(p.nu, 0.01);
        assert_eq!(p.f0, 10.0);
        assert_eq!(p.beta, 0.0);
    }

    #[test]
    fn invalid_params() {
        let p = AnsatzParams {
            re: 0.0,
            ..AnsatzParams::convergence_defaults()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn schedule() {
        assert_eq!(schedule_dt(10, 10, 0.025), 0.025);
        assert!((schedule_dt(20, 10, 0.025) - 0.00625).abs() < 1e-18);
        let r = schedule_dt(250, 10, 0.025) / schedule_dt(160, 10, 0.025);
        assert!((r - (160.0f64 / 250.0).powi(2)).abs() < 1e-15);
        assert!((EtaStudy::default().dt - 0.001).abs() < 1e-18);
    }

    #[test]
    fn cell_average_differs_at_second_order() {
        let p = AnsatzParams::convergence_defaults();
        let diff = |n: usize| {
            let g = unit_grid(n).unwrap();
            let a: Vec<f64> = g.interior().map(|(i, j)| sample_exact(&g, i, j, 0.0, &p, Sampling::Point).2).collect();
            let b: Vec<f64> = g
                .interior()
                .map(|(i, j)| sample_exact(&g, i, j, 0.0, &p, Sampling::CellAverage).2)
                .collect();
            l2_error(&a, &b).unwrap()
        };
        let ratio = diff(20) / diff(40);
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn level_failure_names_level() {
        let p = AnsatzParams::convergence_defaults();
        let err = convergence_study(&[10, 20], 1.0, &p, StudyOptions::default()).unwrap_err();
        assert!(matches!(err, SolverError::LevelFailed { n: 10, .. }));
    }
}
