use std::f64::consts::E;

use crate::protocol::ProtocolParams;

/// Additive constant of the closed-form regret bound,
/// `e / (2e - 3) + 8e / ((e - 1)(e - 2))`.
pub fn regret_constant() -> f64 {
    E / (2.0 * E - 3.0) + 8.0 * E / ((E - 1.0) * (E - 2.0))
}

/// Closed-form upper bound on expected regret after `horizon` steps:
///
/// ```text
/// (M / (2 delta^2) + K M^3 ln(1/delta) / ln M + 4 M^3) ln T + C
/// ```
///
/// with `delta = params.delta` and natural logarithms.
pub fn theoretical_bound(params: &ProtocolParams, horizon: u64) -> f64 {
    let m = params.m as f64;
    let k = params.k as f64;
    let d = params.delta;
    let slope = m / (2.0 * d * d) + k * m.powi(3) * (1.0 / d).ln() / m.ln() + 4.0 * m.powi(3);
    slope * (horizon.max(1) as f64).ln() + regret_constant()
}
