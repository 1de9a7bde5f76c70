//! Per-`t` cost of a prescribed first branching `(τ, y) = (λτ·t, ŷ·t)` with
//! both subtrees ending below `√2αt`.

use super::{Region, RHO, SQRT2};
use crate::error::{domain, Result};

/// Region edges `(a, b)` at time fraction `lambda`: I1 is `ŷ < a`, I2 is
/// `a <= ŷ <= b`, I3 is `ŷ > b`.
#[inline]
pub(crate) fn region_edges(alpha: f64, lambda: f64) -> (f64, f64) {
    let rest = 1.0 - lambda;
    (SQRT2 * alpha - SQRT2 * rest, SQRT2 * alpha + SQRT2 * RHO * rest)
}

/// Exponent of `P(X_max((1−λτ)t) <= √2αt − ŷt)` for one subtree started at
/// the first branching point.
///
/// Region I1 returns 0: there the probability tends to one.
pub fn child_tail_exponent(alpha: f64, lambda_tau: f64, y_coeff: f64) -> Result<(Region, f64)> {
    if !(0.0..1.0).contains(&lambda_tau) {
        return domain(format!("child_tail_exponent requires 0 <= lambda_tau < 1, got {lambda_tau}"));
    }
    if !alpha.is_finite() || !y_coeff.is_finite() {
        return domain("child_tail_exponent requires finite alpha and y_coeff");
    }
    let (a, b) = region_edges(alpha, lambda_tau);
    Ok(if y_coeff < a {
        (Region::I1, 0.0)
    } else if y_coeff <= b {
        (Region::I2, SQRT2 * RHO * (SQRT2 * (1.0 - alpha) - SQRT2 * lambda_tau + y_coeff))
    } else {
        let rest = 1.0 - lambda_tau;
        let d = SQRT2 * alpha - y_coeff;
        (Region::I3, rest + d * d / (2.0 * rest))
    })
}

/// Full per-`t` cost: Brownian displacement to `ŷ` without branching up to
/// `λτ`, plus twice the subtree tail exponent. Written in completed-square
/// form per region.
pub fn pointwise_cost(alpha: f64, lambda_tau: f64, y_coeff: f64) -> Result<(Region, f64)> {
    if !(lambda_tau > 0.0 && lambda_tau <= 1.0) {
        return domain(format!("pointwise_cost requires 0 < lambda_tau <= 1, got {lambda_tau}"));
    }
    if !alpha.is_finite() || !y_coeff.is_finite() {
        return domain("pointwise_cost requires finite alpha and y_coeff");
    }
    Ok(cost_unchecked(alpha, lambda_tau, y_coeff))
}

#[inline]
pub(crate) fn cost_unchecked(alpha: f64, lambda: f64, y: f64) -> (Region, f64) {
    let (a, b) = region_edges(alpha, lambda);
    if y < a {
        (Region::I1, lambda + y * y / (2.0 * lambda))
    } else if y <= b {
        let c = y + 2.0 * SQRT2 * RHO * lambda;
        (
            Region::I2,
            -(4.0 * SQRT2 * RHO - 1.0) * lambda + 4.0 * RHO * (1.0 - alpha) + c * c / (2.0 * lambda),
        )
    } else if lambda >= 1.0 {
        // no time left for the subtrees to come down
        (Region::I3, f64::INFINITY)
    } else {
        let center = 2.0 * SQRT2 * alpha * lambda / (1.0 + lambda);
        let d = y - center;
        (
            Region::I3,
            2.0 - lambda
                + 2.0 * alpha * alpha / (1.0 + lambda)
                + d * d * (1.0 + lambda) / (2.0 * lambda * (1.0 - lambda)),
        )
    }
}
