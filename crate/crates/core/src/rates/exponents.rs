//! The per-`t` exponents of the three integrand families after Gaussian tail
//! estimates. `x` is the first-branching time fraction `λτ`, `y` the location
//! slope (`u = √2αt − √2·y·(1−x)t`).

use serde::{Deserialize, Serialize};

use super::{RHO, SQRT2};
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExponentKind {
    I11,
    I12,
    I21,
    I22,
    I31,
    I32,
}

impl ExponentKind {
    pub const ALL: [ExponentKind; 6] = [
        ExponentKind::I11,
        ExponentKind::I12,
        ExponentKind::I21,
        ExponentKind::I22,
        ExponentKind::I31,
        ExponentKind::I32,
    ];

    pub fn uses_slope(self) -> bool {
        matches!(self, ExponentKind::I11 | ExponentKind::I21 | ExponentKind::I31)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentArgs {
    pub kind: ExponentKind,
    /// Time fraction `λτ`, must be positive.
    pub x: f64,
    /// Location slope; ignored by the slope-free kinds.
    pub slope: f64,
    pub alpha: f64,
}

pub fn exponent(args: &ExponentArgs) -> Result<f64> {
    let ExponentArgs { kind, x, slope, alpha } = *args;
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("exponent requires x > 0, got {x}"));
    }
    if !alpha.is_finite() || (kind.uses_slope() && !slope.is_finite()) {
        return domain("exponent arguments must be finite");
    }
    Ok(match kind {
        ExponentKind::I11 => i11(alpha, x, slope),
        ExponentKind::I12 => i12(x),
        ExponentKind::I21 => i21(alpha, x, slope),
        ExponentKind::I22 => i22(alpha, x),
        ExponentKind::I31 => i31(alpha, x, slope),
        ExponentKind::I32 => i32(alpha, x),
    })
}

#[inline]
pub fn i11(alpha: f64, x: f64, y: f64) -> f64 {
    let d = alpha - y * (1.0 - x);
    x + d * d / x
}

#[inline]
pub fn i12(x: f64) -> f64 {
    x
}

#[inline]
pub fn i21(alpha: f64, x: f64, y: f64) -> f64 {
    let d = alpha - y;
    -(4.0 * RHO * (1.0 - y) - 1.0 - y * y) * x + d * d / x + 4.0 * RHO * (1.0 - y) + 2.0 * y * d
}

#[inline]
pub fn i22(alpha: f64, x: f64) -> f64 {
    -(4.0 * SQRT2 * RHO - 1.0) * x + 4.0 * RHO * (1.0 - alpha)
}

#[inline]
pub fn i31(alpha: f64, x: f64, y: f64) -> f64 {
    let d = alpha - y;
    -(1.0 + y * y) * x + d * d / x + 2.0 * (alpha * y + 1.0)
}

#[inline]
pub fn i32(alpha: f64, x: f64) -> f64 {
    -x + 2.0 * alpha * alpha / (1.0 + x) + 2.0
}
