use crate::config::Limiter;

/// Limiter function `phi(theta)`.
#[inline]
pub fn apply_limiter(theta: f64, kind: Limiter) -> f64 {
    match kind {
        Limiter::None => 1.0,
        Limiter::Minmod => theta.min(1.0).max(0.0),
        Limiter::Mc => (0.5 * (1.0 + theta)).min(2.0).min(2.0 * theta).max(0.0),
        Limiter::Superbee => (2.0 * theta).min(1.0).max(theta.min(2.0)).max(0.0),
    }
}
