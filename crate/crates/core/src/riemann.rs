//! Fluxes, eigenstructure and the Roe approximate Riemann solver.
//!
//! All y-direction quantities are obtained from the x-direction kernels by
//! exchanging the momentum components ([`Conserved::swap_xy`]), so the two
//! directions are bitwise mirror images of each other.

use crate::error::{Result, SolverError};
use crate::grid::{Conserved, DEPTH_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
}

fn check_depth(h: f64) -> Result<()> {
    if h > DEPTH_FLOOR {
        Ok(())
    } else {
        Err(SolverError::NonPositiveDepth { h, i: 0, j: 0 })
    }
}

#[inline]
fn flux_x_unchecked(q: Conserved, g_r: f64) -> Conserved {
    let u = q.hu / q.h;
    Conserved::new(q.hu, q.hu * u + 0.5 * g_r * q.h * q.h, q.hv * u)
}

/// x-direction flux `f(q) = (hu, hu^2 + g_r h^2 / 2, huv)`.
pub fn flux_x(q: Conserved, g_r: f64) -> Result<Conserved> {
    check_depth(q.h)?;
    Ok(flux_x_unchecked(q, g_r))
}

/// y-direction flux `g(q) = (hv, huv, hv^2 + g_r h^2 / 2)`.
pub fn flux_y(q: Conserved, g_r: f64) -> Result<Conserved> {
    check_depth(q.h)?;
    Ok(flux_x_unchecked(q.swap_xy(), g_r).swap_xy())
}

/// Eigenvalues (ascending) and right eigenvectors of a flux Jacobian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigensystem {
    pub speeds: [f64; 3],
    pub vectors: [Conserved; 3],
}

/// Eigenstructure of `f'(q)` at primitive state `(h, u, v)`.
pub fn eigen_x(h: f64, u: f64, v: f64, g_r: f64) -> Result<Eigensystem> {
    check_depth(h)?;
    let c = (g_r * h).sqrt();
    Ok(Eigensystem {
        speeds: [u - c, u, u + c],
        vectors: [
            Conserved::new(1.0, u - c, v),
            Conserved::new(0.0, 0.0, 1.0),
            Conserved::new(1.0, u + c, v),
        ],
    })
}

/// Eigenstructure of `g'(q)` at primitive state `(h, u, v)`.
pub fn eigen_y(h: f64, u: f64, v: f64, g_r: f64) -> Result<Eigensystem> {
    check_depth(h)?;
    let c = (g_r * h).sqrt();
    Ok(Eigensystem {
        speeds: [v - c, v, v + c],
        vectors: [
            Conserved::new(1.0, u, v - c),
            Conserved::new(0.0, -1.0, 0.0),
            Conserved::new(1.0, u, v + c),
        ],
    })
}

/// Roe-averaged interface state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoeState {
    pub h: f64,
    pub u: f64,
    pub v: f64,
    pub c: f64,
}

impl RoeState {
    #[inline]
    pub fn swap_xy(self) -> Self {
        RoeState {
            h: self.h,
            u: self.v,
            v: self.u,
            c: self.c,
        }
    }
}

#[inline]
pub(crate) fn roe_unchecked(ql: Conserved, qr: Conserved, g_r: f64) -> RoeState {
    let sl = ql.h.sqrt();
    let sr = qr.h.sqrt();
    let denom = sl + sr;
    // sqrt(h) * u = hu / sqrt(h)
    let u = (ql.hu / sl + qr.hu / sr) / denom;
    let v = (ql.hv / sl + qr.hv / sr) / denom;
    let h = 0.5 * (ql.h + qr.h);
    RoeState {
        h,
        u,
        v,
        c: (g_r * h).sqrt(),
    }
}

/// Roe average of two states: depth-square-root-weighted velocities and
/// `c = sqrt(g_r (h_l + h_r) / 2)`.
pub fn roe_average(ql: Conserved, qr: Conserved, g_r: f64) -> Result<RoeState> {
    check_depth(ql.h)?;
    check_depth(qr.h)?;
    Ok(roe_unchecked(ql, qr, g_r))
}

/// Coefficients of `delta` in the x-direction Roe eigenvector basis.
#[inline]
pub(crate) fn project_x(delta: Conserved, roe: &RoeState) -> [f64; 3] {
    let inv2c = 0.5 / roe.c;
    let a1 = ((roe.u + roe.c) * delta.h - delta.hu) * inv2c;
    let a3 = (delta.hu - (roe.u - roe.c) * delta.h) * inv2c;
    let a2 = delta.hv - roe.v * delta.h;
    [a1, a2, a3]
}

#[inline]
fn waves_x(alpha: [f64; 3], roe: &RoeState) -> [Conserved; 3] {
    [
        Conserved::new(alpha[0], alpha[0] * (roe.u - roe.c), alpha[0] * roe.v),
        Conserved::new(0.0, 0.0, alpha[1]),
        Conserved::new(alpha[2], alpha[2] * (roe.u + roe.c), alpha[2] * roe.v),
    ]
}

/// Split `delta` into its left- and right-going parts `(A^- delta, A^+ delta)`
/// with the Roe-linearized x-Jacobian.
#[inline]
pub(crate) fn split_x(delta: Conserved, roe: &RoeState) -> (Conserved, Conserved) {
    let alpha = project_x(delta, roe);
    let w = waves_x(alpha, roe);
    let s = [roe.u - roe.c, roe.u, roe.u + roe.c];
    let mut minus = Conserved::ZERO;
    let mut plus = Conserved::ZERO;
    for p in 0..3 {
        if s[p] < 0.0 {
            minus += w[p] * s[p];
        } else {
            plus += w[p] * s[p];
        }
    }
    (minus, plus)
}

/// Waves, speeds and fluctuations at one interface.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WaveDecomposition {
    pub waves: [Conserved; 3],
    pub speeds: [f64; 3],
    /// Left-going fluctuation `A^- dQ`.
    pub fluct_minus: Conserved,
    /// Right-going fluctuation `A^+ dQ`.
    pub fluct_plus: Conserved,
}

impl WaveDecomposition {
    pub fn swap_xy(self) -> Self {
        WaveDecomposition {
            waves: self.waves.map(Conserved::swap_xy),
            speeds: self.speeds,
            fluct_minus: self.fluct_minus.swap_xy(),
            fluct_plus: self.fluct_plus.swap_xy(),
        }
    }
}

/// x-direction Roe solve without depth checks; callers guarantee `h > 0`.
#[inline]
pub(crate) fn solve_x_unchecked(
    ql: Conserved,
    qr: Conserved,
    g_r: f64,
    entropy_fix: bool,
) -> (WaveDecomposition, RoeState) {
    let roe = roe_unchecked(ql, qr, g_r);
    let alpha = project_x(qr - ql, &roe);
    let waves = waves_x(alpha, &roe);
    let speeds = [roe.u - roe.c, roe.u, roe.u + roe.c];

    let mut minus = Conserved::ZERO;
    let mut plus = Conserved::ZERO;
    if entropy_fix {
        let total = (waves[0] * speeds[0] + waves[1] * speeds[1]) + waves[2] * speeds[2];
        minus = harten_hyman_minus(ql, qr, g_r, &waves, &speeds);
        plus = total - minus;
    } else {
        for p in 0..3 {
            if speeds[p] < 0.0 {
                minus += waves[p] * speeds[p];
            } else {
                plus += waves[p] * speeds[p];
            }
        }
    }
    (
        WaveDecomposition {
            waves,
            speeds,
            fluct_minus: minus,
            fluct_plus: plus,
        },
        roe,
    )
}

/// Left-going fluctuation with transonic rarefactions split by the
/// Harten-Hyman rule.
fn harten_hyman_minus(
    ql: Conserved,
    qr: Conserved,
    g_r: f64,
    waves: &[Conserved; 3],
    speeds: &[f64; 3],
) -> Conserved {
    let mut minus = Conserved::ZERO;

    let qm = ql + waves[0];
    let transonic_1 = if qm.h > DEPTH_FLOOR {
        let s_left = ql.hu / ql.h - (g_r * ql.h).sqrt();
        let s_mid = qm.hu / qm.h - (g_r * qm.h).sqrt();
        (s_left < 0.0 && s_mid > 0.0).then(|| s_left * (s_mid - speeds[0]) / (s_mid - s_left))
    } else {
        None
    };
    match transonic_1 {
        Some(sfract) => minus += waves[0] * sfract,
        None if speeds[0] < 0.0 => minus += waves[0] * speeds[0],
        None => {}
    }

    if speeds[1] < 0.0 {
        minus += waves[1] * speeds[1];
    }

    let qm3 = qr - waves[2];
    let transonic_3 = if qm3.h > DEPTH_FLOOR {
        let s_mid = qm3.hu / qm3.h + (g_r * qm3.h).sqrt();
        let s_right = qr.hu / qr.h + (g_r * qr.h).sqrt();
        (s_mid < 0.0 && s_right > 0.0).then(|| s_mid * (s_right - speeds[2]) / (s_right - s_mid))
    } else {
        None
    };
    match transonic_3 {
        Some(sfract) => minus += waves[2] * sfract,
        None if speeds[2] < 0.0 => minus += waves[2] * speeds[2],
        None => {}
    }
    minus
}

/// Roe solve at an interface in the given direction.
pub fn solve_riemann(ql: Conserved, qr: Conserved, g_r: f64, direction: Direction) -> Result<WaveDecomposition> {
    solve_riemann_with(ql, qr, g_r, direction, false)
}

/// [`solve_riemann`] with optional entropy fix.
pub fn solve_riemann_with(
    ql: Conserved,
    qr: Conserved,
    g_r: f64,
    direction: Direction,
    entropy_fix: bool,
) -> Result<WaveDecomposition> {
    check_depth(ql.h)?;
    check_depth(qr.h)?;
    if !(g_r > 0.0) {
        return Err(SolverError::config("g_r", "reduced gravity must be positive"));
    }
    Ok(match direction {
        Direction::X => solve_x_unchecked(ql, qr, g_r, entropy_fix).0,
        Direction::Y => solve_x_unchecked(ql.swap_xy(), qr.swap_xy(), g_r, entropy_fix)
            .0
            .swap_xy(),
    })
}

/// Outcome of [`self_test`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfTestReport {
    pub samples: usize,
    pub max_completeness_error: f64,
    pub max_roe_property_error: f64,
    pub max_symmetry_error: f64,
}

impl SelfTestReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_completeness_error <= tol && self.max_roe_property_error <= tol && self.max_symmetry_error == 0.0
    }
}

/// Randomized check of wave completeness, the Roe property and x/y symmetry.
///
/// Errors are relative to the size of the jump (or flux difference) plus the
/// size of the states, so they are meaningful for tiny jumps too.
pub fn self_test(samples: usize, seed: u64) -> SelfTestReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = SelfTestReport {
        samples,
        max_completeness_error: 0.0,
        max_roe_property_error: 0.0,
        max_symmetry_error: 0.0,
    };
    for _ in 0..samples {
        let g_r = rng.random_range(0.01..10.0);
        let mut state = || {
            let h: f64 = rng.random_range(0.5..2.0);
            Conserved::new(h, h * rng.random_range(-2.0..2.0), h * rng.random_range(-2.0..2.0))
        };
        let (ql, qr) = (state(), state());
        for dir in [Direction::X, Direction::Y] {
            let wd = solve_riemann(ql, qr, g_r, dir).expect("positive depths");
            let dq = qr - ql;
            let sum = (wd.waves[0] + wd.waves[1]) + wd.waves[2];
            let scale = ql.max_abs().max(qr.max_abs());
            report.max_completeness_error = report.max_completeness_error.max((sum - dq).max_abs() / scale);
            let flux = match dir {
                Direction::X => flux_x,
                Direction::Y => flux_y,
            };
            let (fl, fr) = (flux(ql, g_r).unwrap(), flux(qr, g_r).unwrap());
            let df = fr - fl;
            let fscale = fl.max_abs().max(fr.max_abs());
            let fluct = wd.fluct_minus + wd.fluct_plus;
            report.max_roe_property_error = report.max_roe_property_error.max((fluct - df).max_abs() / fscale);
        }
        let x = solve_riemann(ql, qr, g_r, Direction::X).unwrap();
        let y = solve_riemann(ql.swap_xy(), qr.swap_xy(), g_r, Direction::Y).unwrap();
        let ys = y.swap_xy();
        let mut diff: f64 = 0.0;
        for p in 0..3 {
            diff = diff.max((ys.waves[p] - x.waves[p]).max_abs());
            diff = diff.max((ys.speeds[p] - x.speeds[p]).abs());
        }
        report.max_symmetry_error = report.max_symmetry_error.max(diff);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(h: f64, hu: f64, hv: f64) -> Conserved {
        Conserved::new(h, hu, hv)
    }

    #[test]
    fn flux_examples() {
        assert_eq!(flux_x(q(2.0, 0.0, 0.0), 1.0).unwrap(), q(0.0, 2.0, 0.0));
        assert_eq!(flux_x(q(1.0, 1.0, 1.0), 1.0).unwrap(), q(1.0, 1.5, 1.0));
        assert_eq!(flux_x(q(1.0, 0.0, 5.0), 2.0).unwrap(), q(0.0, 1.0, 0.0));
        assert_eq!(flux_y(q(2.0, 0.0, 0.0), 1.0).unwrap(), q(0.0, 0.0, 2.0));
        assert_eq!(flux_y(q(1.0, 1.0, 1.0), 1.0).unwrap(), q(1.0, 1.0, 1.5));
        assert_eq!(flux_y(q(1.0, 3.0, 0.0), 2.0).unwrap(), q(0.0, 0.0, 1.0));
        assert!(flux_x(q(0.0, 1.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn eigen_examples() {
        let e = eigen_x(1.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(e.speeds, [-1.0, 0.0, 1.0]);
        assert_eq!(e.vectors, [q(1.0, -1.0, 0.0), q(0.0, 0.0, 1.0), q(1.0, 1.0, 0.0)]);
        assert_eq!(eigen_x(4.0, 1.0, 2.0, 1.0).unwrap().speeds, [-1.0, 1.0, 3.0]);
        let c = eigen_x(500.0, 0.0, 0.0, 0.03).unwrap().speeds[2];
        assert!((c - 15f64.sqrt()).abs() < 1e-12);
        assert!((c - 3.873).abs() < 1e-3);

        let e = eigen_y(1.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(e.speeds, [-1.0, 0.0, 1.0]);
        assert_eq!(e.vectors[1], q(0.0, -1.0, 0.0));
        assert_eq!(eigen_y(4.0, 2.0, 1.0, 1.0).unwrap().speeds, [-1.0, 1.0, 3.0]);
        assert_eq!(eigen_y(1.0, 0.0, 0.5, 1.0).unwrap().speeds, [-0.5, 0.5, 1.5]);
    }

    #[test]
    fn eigenvectors_satisfy_jacobian() {
        // A r = lambda r with the printed quasi-linear matrices.
        let (h, u, v, g) = (1.7, 0.3, -0.8, 2.0);
        let a = [[0.0, 1.0, 0.0], [-u * u + g * h, 2.0 * u, 0.0], [-u * v, v, u]];
        let b = [[0.0, 0.0, 1.0], [-u * v, v, u], [-v * v + g * h, 0.0, 2.0 * v]];
        for (m, e) in [(a, eigen_x(h, u, v, g).unwrap()), (b, eigen_y(h, u, v, g).unwrap())] {
            for p in 0..3 {
                let r = e.vectors[p].to_array();
                for row in 0..3 {
                    let mr: f64 = (0..3).map(|k| m[row][k] * r[k]).sum();
                    assert!((mr - e.speeds[p] * r[row]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn roe_average_examples() {
        let r = roe_average(q(1.0, 1.0, 0.0), q(1.0, 1.0, 0.0), 2.0).unwrap();
        assert_eq!((r.h, r.u, r.v), (1.0, 1.0, 0.0));
        assert!((r.c - 2f64.sqrt()).abs() < 1e-15);

        let r = roe_average(q(1.0, 0.0, 0.0), q(4.0, 12.0, 0.0), 1.0).unwrap();
        assert!((r.u - 2.0).abs() < 1e-15);
        assert!((r.c - 2.5f64.sqrt()).abs() < 1e-15);

        let r = roe_average(q(2.0, 2.0 * 0.3, 0.0), q(2.0, 2.0 * -0.9, 0.0), 1.0).unwrap();
        assert!((r.u - (0.3 - 0.9) / 2.0).abs() < 1e-15);

        assert!(roe_average(q(0.0, 0.0, 0.0), q(1.0, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn no_jump_no_waves() {
        let s = q(1.3, 0.4, -0.2);
        let wd = solve_riemann(s, s, 1.0, Direction::X).unwrap();
        for w in wd.waves {
            assert_eq!(w, Conserved::ZERO);
        }
        assert_eq!(wd.fluct_minus, Conserved::ZERO);
        assert_eq!(wd.fluct_plus, Conserved::ZERO);
    }

    #[test]
    fn pure_shear_jump() {
        let wd = solve_riemann(q(1.0, 0.2, 0.0), q(1.0, 0.2, 0.7), 1.0, Direction::X).unwrap();
        assert_eq!(wd.waves[1], q(0.0, 0.0, 0.7));
        assert_eq!(wd.waves[0], Conserved::ZERO);
        assert_eq!(wd.waves[2], Conserved::ZERO);
    }

    #[test]
    fn consistency_at_equal_states() {
        let s = q(2.5, 1.0, -0.5);
        let r = roe_average(s, s, 1.5).unwrap();
        let e_roe = eigen_x(r.h, r.u, r.v, 1.5).unwrap();
        let e = eigen_x(2.5, 0.4, -0.2, 1.5).unwrap();
        for p in 0..3 {
            assert!((e_roe.speeds[p] - e.speeds[p]).abs() < 1e-15);
        }
    }

    #[test]
    fn entropy_fix_keeps_flux_difference() {
        // transonic left rarefaction
        let ql = q(2.0, 0.0, 0.1);
        let qr = q(0.5, 0.5 * 2.5, 0.0);
        let wd = solve_riemann_with(ql, qr, 1.0, Direction::X, true).unwrap();
        let df = flux_x(qr, 1.0).unwrap() - flux_x(ql, 1.0).unwrap();
        assert!(((wd.fluct_minus + wd.fluct_plus) - df).max_abs() < 1e-12);
        let plain = solve_riemann(ql, qr, 1.0, Direction::X).unwrap();
        assert_ne!(plain.fluct_minus, wd.fluct_minus);
    }

    #[test]
    fn self_test_passes() {
        let report = self_test(2_000, 11);
        assert!(report.passed(1e-12), "{report:?}");
    }

    proptest::proptest! {
        #[test]
        fn completeness_and_roe_property(
            hl in 0.5f64..2.0, hr in 0.5f64..2.0,
            ul in -2.0f64..2.0, ur in -2.0f64..2.0,
            vl in -2.0f64..2.0, vr in -2.0f64..2.0,
            g in 0.01f64..10.0,
        ) {
            let ql = q(hl, hl * ul, hl * vl);
            let qr = q(hr, hr * ur, hr * vr);
            for (dir, flux) in [(Direction::X, flux_x as fn(Conserved, f64) -> Result<Conserved>), (Direction::Y, flux_y)] {
                let wd = solve_riemann(ql, qr, g, dir).unwrap();
                let sum = wd.waves[0] + wd.waves[1] + wd.waves[2];
                proptest::prop_assert!((sum - (qr - ql)).max_abs() <= 1e-12 * ql.max_abs().max(qr.max_abs()));
                let df = flux(qr, g).unwrap() - flux(ql, g).unwrap();
                let scale = flux(ql, g).unwrap().max_abs().max(flux(qr, g).unwrap().max_abs());
                let fl = wd.fluct_minus + wd.fluct_plus;
                proptest::prop_assert!((fl - df).max_abs() <= 1e-12 * scale);
            }
        }
    }
}
