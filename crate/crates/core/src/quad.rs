//! Gauss–Legendre rules and adaptive quadrature of log-integrands.
//!
//! Integrands are supplied as `ln f`, and results come back as `ln ∫ f`, so
//! values far below `f64::MIN_POSITIVE` are handled without underflow.

use crate::error::{Error, Result};
use crate::special::log_sum_exp;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// `∫_a^b f` for a linear-domain integrand.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// `ln ∫_a^b e^{g}` for a log-domain integrand `g`.
    pub fn log_integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut g: F) -> f64 {
        if b <= a {
            return f64::NEG_INFINITY;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| g(mid + half * x) + w.ln())
            .collect();
        log_sum_exp(&terms) + half.ln()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Result of a log-domain integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogIntegral {
    /// `ln ∫ f`.
    pub value: f64,
    /// Estimated absolute error of `value` (so relative error of `∫ f`).
    pub error: f64,
}

/// Adaptive bisection driver around a fixed Gauss–Legendre rule.
#[derive(Debug, Clone)]
pub struct AdaptiveLog {
    rule: GaussLegendre,
    pub tol: f64,
    pub max_depth: usize,
}

impl Default for AdaptiveLog {
    fn default() -> Self {
        Self::new(20, 1e-10, 30)
    }
}

impl AdaptiveLog {
    pub fn new(order: usize, tol: f64, max_depth: usize) -> Self {
        Self { rule: GaussLegendre::new(order), tol, max_depth }
    }

    /// Integrates `e^{g}` over the union of consecutive panels defined by
    /// sorted `breaks`. Each panel is refined until the whole/halves estimates
    /// agree to `tol` in log units, relative to the running total.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, breaks: &[f64], mut g: F) -> Result<LogIntegral> {
        let mut pieces = Vec::new();
        let mut err_lin = Vec::new();
        let panels: Vec<(f64, f64, f64)> = breaks
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (w[0], w[1], self.rule.log_integrate(w[0], w[1], &mut g)))
            .collect();
        // coarse total, so that tiny panels met early are still recognised
        let coarse = log_sum_exp(&panels.iter().map(|p| p.2).collect::<Vec<_>>());
        for (a, b, whole) in panels {
            self.recurse(a, b, whole, 0, coarse, &mut g, &mut pieces, &mut err_lin)?;
        }
        let value = log_sum_exp(&pieces);
        if value.is_nan() {
            return Err(Error::Quadrature("integrand produced NaN".into()));
        }
        let error = if value == f64::NEG_INFINITY {
            0.0
        } else {
            let e = log_sum_exp(&err_lin);
            (e - value).exp()
        };
        Ok(LogIntegral { value, error })
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        whole: f64,
        depth: usize,
        coarse: f64,
        g: &mut F,
        pieces: &mut Vec<f64>,
        err_lin: &mut Vec<f64>,
    ) -> Result<()> {
        let mid = 0.5 * (a + b);
        let left = self.rule.log_integrate(a, mid, &mut *g);
        let right = self.rule.log_integrate(mid, b, &mut *g);
        let halves = crate::special::log_add_exp(left, right);
        if halves.is_nan() || whole.is_nan() {
            return Err(Error::Quadrature(format!("NaN on panel [{a}, {b}]")));
        }
        if halves == f64::NEG_INFINITY && whole == f64::NEG_INFINITY {
            return Ok(());
        }
        let diff = (halves - whole).abs();
        // absolute change measured against the best estimate of the total
        let reference = log_sum_exp(pieces).max(if coarse.is_finite() { coarse } else { f64::NEG_INFINITY });
        let change = crate::special::log_sub_exp(halves.max(whole), halves.min(whole));
        let small = reference.is_finite() && change <= reference + self.tol.ln();
        if diff <= self.tol || small || depth >= self.max_depth {
            if depth >= self.max_depth && !small && diff > self.tol.sqrt() {
                return Err(Error::Quadrature(format!(
                    "no convergence on panel [{a:.6e}, {b:.6e}]: log estimates differ by {diff:.3e}"
                )));
            }
            pieces.push(halves);
            err_lin.push(change);
            return Ok(());
        }
        self.recurse(a, mid, left, depth + 1, coarse, g, pieces, err_lin)?;
        self.recurse(mid, b, right, depth + 1, coarse, g, pieces, err_lin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(10);
        // degree 19 is exact for 10 points
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(19));
        let want = (2f64.powi(20) - 1.0) / 20.0;
        assert!((v - want).abs() / want < 1e-13);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_log_integral_of_exponential() {
        let q = AdaptiveLog::default();
        // ∫_40^200 e^{-τ} dτ
        let r = q.integrate(&[40.0, 200.0], |x| -x).unwrap();
        let want = (-40.0f64) + (-(-160.0f64).exp_m1()).ln();
        assert!((r.value - want).abs() < 1e-10, "{} vs {want}", r.value);
    }

    #[test]
    fn adaptive_log_integral_handles_tiny_values() {
        let q = AdaptiveLog::default();
        // ∫_0^1 e^{-5000 - x} dx, far below f64 range in linear form
        let r = q.integrate(&[0.0, 1.0], |x| -5000.0 - x).unwrap();
        let want = -5000.0 + (-(-1.0f64).exp_m1()).ln();
        assert!((r.value - want).abs() < 1e-12);
    }
}
