//! Log-domain helpers: Gaussian tails, log-sum-exp and closed-form Gaussian
//! integrals of `exp(quadratic)` over intervals.

use std::f64::consts::{PI, SQRT_2};

/// `ln(2π)/2`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Φ(x)` for the standard normal CDF, accurate in both tails.
pub fn log_ndtr(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 6.0 {
        (-0.5 * libm::erfc(x / SQRT_2)).ln_1p()
    } else if x > -30.0 {
        (0.5 * libm::erfc(-x / SQRT_2)).ln()
    } else {
        // Mills-ratio expansion; at |x| >= 30 the truncation error is below 1e-16.
        let z = 1.0 / (x * x);
        let series = 1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z * (1.0 - 9.0 * z))));
        -0.5 * x * x - (-x).ln() - HALF_LN_2PI + series.ln()
    }
}

/// Standard normal CDF.
pub fn ndtr(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a - e^b)` for `a >= b`; returns `-inf` when the difference vanishes.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp_m1()).ln()
}

/// `ln Σ e^{x_i}`, ignoring `-inf` entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln(Φ(zu) - Φ(zl))` for `zl <= zu`.
pub fn log_ndtr_diff(zl: f64, zu: f64) -> f64 {
    if zu <= zl {
        return f64::NEG_INFINITY;
    }
    if zl > 0.0 {
        // upper tail: Φ(zu) - Φ(zl) = Φ(-zl) - Φ(-zu)
        log_sub_exp(log_ndtr(-zl), log_ndtr(-zu))
    } else {
        log_sub_exp(log_ndtr(zu), log_ndtr(zl))
    }
}

/// `ln ∫_lo^hi exp(-a y² + b y + c) dy` with `a > 0`; bounds may be infinite.
pub fn log_gaussian_integral(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(a > 0.0);
    if hi <= lo {
        return f64::NEG_INFINITY;
    }
    let mean = b / (2.0 * a);
    let sd = (0.5 / a).sqrt();
    let peak = c + b * b / (4.0 * a);
    peak + (sd * (2.0 * PI).sqrt()).ln() + log_ndtr_diff((lo - mean) / sd, (hi - mean) / sd)
}

/// Log-density of `N(mean, var)` at `x`.
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - HALF_LN_2PI
}
