//! Finite-`t` constrained probabilities through the first branching event.
//!
//! With `τ` the first branching time and `y` its location,
//!
//! ```text
//! P(X_max(t) <= X, τ ∈ A, y ∈ B) = ∫_A e^{−τ} ∫_B φ_τ(y) F(t−τ, X−y)² dy dτ
//!                                  + 1{t ∈ A} e^{−t} P(B_t <= X, B_t ∈ B)
//! ```
//!
//! where `X = √2αt`. The second term is the path without any branching. In
//! exact mode `F` comes from an FKPP solution; in asymptotic mode `F²` is
//! replaced by its exponential-order form in each of the three location
//! regions, which turns the inner integral into closed-form Gaussian pieces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fkpp::FkppSolution;
use crate::quad::AdaptiveLog;
use crate::rates::{RHO, SQRT2};
use crate::special::{log_add_exp, log_gaussian_integral, log_ndtr, log_ndtr_diff, log_sum_exp, HALF_LN_2PI};
use crate::variational::{ConstraintSpec, LocationConstraint};

/// Default width of the time window for the location events.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Log-integrand drop below the maximum at which the inner range is cut.
const TRUNCATION: f64 = 40.0;
const SCAN_POINTS: usize = 801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Asymptotic,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Mode::Exact),
            "asymptotic" => Ok(Mode::Asymptotic),
            other => Err(format!("unknown mode '{other}' (expected exact or asymptotic)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Asymptotic => "asymptotic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionQuery {
    pub alpha: f64,
    pub t: f64,
    pub spec: ConstraintSpec,
    pub mode: Mode,
}

impl DecompositionQuery {
    pub fn new(alpha: f64, t: f64, spec: ConstraintSpec, mode: Mode) -> Self {
        Self { alpha, t, spec, mode }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {}", self.t)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Domain("alpha must be finite".into()));
        }
        self.spec.validate()
    }

    /// Admissible interval of `y` when the first branch happens at `tau`.
    fn location_interval(&self, tau: f64) -> (f64, f64) {
        let line = |b: f64| SQRT2 * self.alpha * self.t - SQRT2 * b * (self.t - tau);
        match self.spec.location {
            LocationConstraint::Unconstrained => (f64::NEG_INFINITY, f64::INFINITY),
            LocationConstraint::Below(b) => (f64::NEG_INFINITY, line(b)),
            LocationConstraint::Above(b) => (line(b), f64::INFINITY),
        }
    }

    /// Panel breaks for the τ-integral: window edges plus every regime
    /// switch time that falls inside.
    fn tau_breaks(&self) -> Vec<f64> {
        let (lo, hi) = self.spec.tau_window;
        let a = self.alpha;
        let mut fr = vec![
            lo,
            hi,
            -(a + RHO) / RHO,
            (1.0 - a) / (2.0 * SQRT2 - 1.0),
            (1.0 - a) / SQRT2,
            1.0 - a,
        ];
        fr.retain(|f| f.is_finite() && *f >= lo && *f <= hi);
        fr.sort_by(f64::total_cmp);
        fr.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        fr.into_iter().map(|f| f * self.t).collect()
    }

    /// `ln(e^{−t} P(B_t <= X, B_t ∈ B))` when the window reaches `t`.
    fn no_branch_atom(&self) -> f64 {
        if self.spec.tau_window.1 < 1.0 {
            return f64::NEG_INFINITY;
        }
        let (lo, hi) = self.location_interval(self.t);
        let x = SQRT2 * self.alpha * self.t;
        let sd = self.t.sqrt();
        -self.t + log_ndtr_diff(lo / sd, hi.min(x) / sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionEstimate {
    pub ln_prob: f64,
    pub probability: f64,
    pub minus_log_over_t: f64,
    /// Relative error estimate of the probability from the quadrature.
    pub quadrature_error: f64,
}

impl DecompositionEstimate {
    fn new(t: f64, ln_prob: f64, quadrature_error: f64) -> Self {
        Self { ln_prob, probability: ln_prob.exp(), minus_log_over_t: -ln_prob / t, quadrature_error }
    }
}

fn outer_rule() -> AdaptiveLog {
    AdaptiveLog::new(20, 1e-7, 18)
}

/// Runs the τ-integral of `e^{−τ}·inner(τ)`, surfacing the first error raised
/// by `inner`.
fn integrate_tau<F: FnMut(f64) -> Result<f64>>(breaks: &[f64], mut inner: F) -> Result<(f64, f64)> {
    let mut failure: Option<Error> = None;
    let res = outer_rule().integrate(breaks, |tau| {
        if failure.is_some() {
            return f64::NEG_INFINITY;
        }
        match inner(tau) {
            Ok(v) => -tau + v,
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let r = res?;
    Ok((r.value, r.error))
}

/// Exact mode: children laws taken from `sol`.
pub fn constrained_prob_exact(q: &DecompositionQuery, sol: &FkppSolution) -> Result<DecompositionEstimate> {
    q.validate()?;
    if q.mode != Mode::Exact {
        return Err(Error::Config("constrained_prob_exact called with a non-exact query".into()));
    }
    let t_end = *sol.times().last().unwrap_or(&0.0);
    if q.t > t_end + 1e-9 {
        return Err(Error::OutOfGrid(format!("horizon {} beyond solution t_end {t_end}", q.t)));
    }
    let x_top = SQRT2 * q.alpha * q.t;
    let (x_min, x_max) = sol.x_range();
    let inner_rule = AdaptiveLog::new(20, 1e-8, 16);
    // Inside the first stored step the grid still carries the initial step,
    // so the child there is taken as a free Brownian particle.
    let first_step = sol.times().get(1).copied().unwrap_or(f64::INFINITY);

    let log_integrand = |tau: f64, s: f64, y: f64| -> Result<f64> {
        let x = x_top - y;
        let child = if x >= x_max {
            0.0
        } else if x < x_min {
            f64::NEG_INFINITY
        } else if s < first_step {
            if s > 0.0 {
                log_ndtr(x / s.sqrt())
            } else if x >= 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            sol.query(s, x)?
        };
        Ok(-0.5 * y * y / tau - 0.5 * tau.ln() - HALF_LN_2PI + 2.0 * child)
    };

    let inner = |tau: f64| -> Result<f64> {
        let s = q.t - tau;
        let (flo, fhi) = q.location_interval(tau);
        // h(y) <= ln φ_τ(0) − y²/(2τ): anything farther than `reach` from 0
        // lies TRUNCATION below the better of the two reference points.
        let phi0 = -0.5 * tau.ln() - HALF_LN_2PI;
        let mut reference = f64::NEG_INFINITY;
        for y in [0.0, x_top, flo, fhi] {
            if y.is_finite() && y >= flo && y <= fhi {
                reference = reference.max(log_integrand(tau, s, y)?);
            }
        }
        if reference == f64::NEG_INFINITY {
            reference = phi0 - 0.5 * x_top * x_top / tau - 2.0 * TRUNCATION;
        }
        let reach = (2.0 * tau * (phi0 - reference + TRUNCATION).max(1.0)).sqrt();
        let lo = flo.max(-reach);
        let hi = fhi.min(reach).min(x_top - x_min);
        if !(lo < hi) {
            return Ok(f64::NEG_INFINITY);
        }
        let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
        let mut scan = Vec::with_capacity(SCAN_POINTS);
        for k in 0..SCAN_POINTS {
            let y = lo + step * k as f64;
            scan.push((y, log_integrand(tau, s, y)?));
        }
        let (imax, &(ypk, top)) = scan
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("scan is non-empty");
        if top == f64::NEG_INFINITY {
            return Ok(top);
        }
        let first = scan.iter().position(|p| p.1 > top - TRUNCATION).unwrap_or(imax);
        let last = scan.iter().rposition(|p| p.1 > top - TRUNCATION).unwrap_or(imax);
        if last + 1 == SCAN_POINTS && hi == x_top - x_min && hi < fhi {
            return Err(Error::OutOfGrid(format!(
                "solution does not cover x = {x_min} needed at tau = {tau}; widen the grid"
            )));
        }
        let a = scan[first.saturating_sub(1)].0;
        let b = scan[(last + 1).min(SCAN_POINTS - 1)].0;
        let mut breaks = vec![a, b, ypk];
        // region edges and the jump of the initial step
        for e in [x_top - SQRT2 * s, x_top + SQRT2 * RHO * s, x_top] {
            if e > a && e < b {
                breaks.push(e);
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut failure = None;
        let r = inner_rule.integrate(&breaks, |y| match log_integrand(tau, s, y) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(r.value),
        }
    };

    let (main, err) = integrate_tau(&q.tau_breaks(), inner)?;
    let ln_prob = log_add_exp(main, q.no_branch_atom());
    Ok(DecompositionEstimate::new(q.t, ln_prob, err))
}

/// Log-probabilities of the three location regions and their total, in
/// asymptotic mode. The no-branching term is folded into the total only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParts {
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub total: f64,
}

/// `ln ∫ φ_τ(y) Π(children) dy` over region `region` (0, 1, 2) and `[lo, hi]`.
fn asymptotic_region(q: &DecompositionQuery, tau: f64, region: usize) -> f64 {
    let t = q.t;
    let x = SQRT2 * q.alpha * t;
    let s = t - tau;
    let (flo, fhi) = q.location_interval(tau);
    let e1 = x - SQRT2 * s;
    let e2 = x + SQRT2 * RHO * s;
    let a0 = 0.5 / tau;
    let c0 = -0.5 * tau.ln() - HALF_LN_2PI;
    match region {
        0 => log_gaussian_integral(a0, 0.0, c0, flo, fhi.min(e1)),
        1 => {
            let b = -2.0 * SQRT2 * RHO;
            let c = c0 - 4.0 * RHO * ((1.0 - q.alpha) * t - tau);
            log_gaussian_integral(a0, b, c, flo.max(e1), fhi.min(e2))
        }
        _ => {
            if s <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let a = a0 + 1.0 / s;
            let b = 2.0 * x / s;
            let c = c0 - 2.0 * s - x * x / s;
            log_gaussian_integral(a, b, c, flo.max(e2), fhi)
        }
    }
}

pub fn asymptotic_parts(q: &DecompositionQuery) -> Result<(RegionParts, f64)> {
    q.validate()?;
    let breaks = q.tau_breaks();
    let mut parts = [0.0; 3];
    let mut err = 0.0f64;
    for (r, slot) in parts.iter_mut().enumerate() {
        let (v, e) = integrate_tau(&breaks, |tau| Ok(asymptotic_region(q, tau, r)))?;
        *slot = v;
        err = err.max(e);
    }
    let total = log_sum_exp(&[parts[0], parts[1], parts[2], q.no_branch_atom()]);
    Ok((RegionParts { y1: parts[0], y2: parts[1], y3: parts[2], total }, err))
}

/// Asymptotic mode. The result is an exponential-order approximation and
/// need not be a probability.
pub fn constrained_prob_asymptotic(q: &DecompositionQuery) -> Result<DecompositionEstimate> {
    if q.mode != Mode::Asymptotic {
        return Err(Error::Config("constrained_prob_asymptotic called with a non-asymptotic query".into()));
    }
    let (parts, err) = asymptotic_parts(q)?;
    Ok(DecompositionEstimate::new(q.t, parts.total, err))
}

/// Dispatches on the query mode; exact mode needs a solution.
pub fn constrained_prob(q: &DecompositionQuery, sol: Option<&FkppSolution>) -> Result<DecompositionEstimate> {
    match (q.mode, sol) {
        (Mode::Exact, Some(sol)) => constrained_prob_exact(q, sol),
        (Mode::Exact, None) => Err(Error::Config("exact mode needs an FKPP solution".into())),
        (Mode::Asymptotic, _) => constrained_prob_asymptotic(q),
    }
}

/// Least-squares fit of `−ln P = rate·t + log_coeff·ln t + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub rate: f64,
    pub log_coeff: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub rms_residual: f64,
}

pub fn slope_fit(t_list: &[f64], ln_probs: &[f64]) -> Result<SlopeFit> {
    if t_list.len() != ln_probs.len() {
        return Err(Error::Fit(format!("{} times but {} values", t_list.len(), ln_probs.len())));
    }
    if t_list.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", t_list.len())));
    }
    if t_list.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::Fit("times must be positive and finite".into()));
    }
    if ln_probs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("log-probabilities must be finite".into()));
    }
    let mut sorted = t_list.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[1] - w[0] <= 1e-12 * w[1]) {
        return Err(Error::Fit("duplicate times make the design singular".into()));
    }

    let rows: Vec<[f64; 3]> = t_list.iter().map(|&t| [t, t.ln(), 1.0]).collect();
    let ys: Vec<f64> = ln_probs.iter().map(|v| -v).collect();
    let mut m = [[0.0; 4]; 3];
    for (row, &y) in rows.iter().zip(&ys) {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            m[i][3] += row[i] * y;
        }
    }
    let coef = solve3(m).ok_or_else(|| Error::Fit("singular normal equations".into()))?;
    let residuals: Vec<f64> = rows
        .iter()
        .zip(&ys)
        .map(|(r, y)| y - (coef[0] * r[0] + coef[1] * r[1] + coef[2] * r[2]))
        .collect();
    let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(SlopeFit { rate: coef[0], log_coeff: coef[1], intercept: coef[2], residuals, rms_residual })
}

/// Gaussian elimination with partial pivoting on an augmented 3×4 system.
fn solve3(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flat_map(|r| r[..3].iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][3] - s) / m[r][r];
    }
    Some(x)
}

/// Evaluates the query at every horizon in `t_list` and fits the decay rate.
pub fn fit_rate(
    alpha: f64,
    spec: ConstraintSpec,
    mode: Mode,
    t_list: &[f64],
    sol: Option<&FkppSolution>,
) -> Result<(SlopeFit, Vec<DecompositionEstimate>)> {
    let mut est = Vec::with_capacity(t_list.len());
    for &t in t_list {
        est.push(constrained_prob(&DecompositionQuery::new(alpha, t, spec, mode), sol)?);
    }
    let ln_p: Vec<f64> = est.iter().map(|e| e.ln_prob).collect();
    Ok((slope_fit(t_list, &ln_p)?, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::psi1;

    #[test]
    fn exact_fit_recovers_coefficients() {
        let ts = [10.0, 20.0, 30.0, 40.0, 55.0];
        let lp: Vec<f64> = ts.iter().map(|&t: &f64| -(2.0 * t + t.ln() + 3.0)).collect();
        let f = slope_fit(&ts, &lp).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-9);
        assert!((f.log_coeff - 1.0).abs() < 1e-8);
        assert!((f.intercept - 3.0).abs() < 1e-7);
        assert!(f.rms_residual < 1e-9);
    }

    #[test]
    fn constant_input_has_zero_rate() {
        let ts = [1.0, 2.0, 4.0, 8.0];
        let f = slope_fit(&ts, &[-0.7; 4]).unwrap();
        assert!(f.rate.abs() < 1e-10 && f.log_coeff.abs() < 1e-10);
    }

    #[test]
    fn fit_rejects_bad_designs() {
        assert!(slope_fit(&[1.0, 2.0, 3.0], &[0.0; 3]).is_err());
        assert!(slope_fit(&[1.0, 2.0, 2.0, 3.0], &[0.0; 4]).is_err());
        assert!(slope_fit(&[1.0, 2.0, 3.0, 4.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn asymptotic_mode_approaches_the_rate() {
        let spec = ConstraintSpec::new(0.0, 0.2, LocationConstraint::Unconstrained);
        let q = DecompositionQuery::new(0.0, 400.0, spec, Mode::Asymptotic);
        let est = constrained_prob_asymptotic(&q).unwrap();
        let target = psi1(0.0, 0.2).unwrap().value;
        assert!((est.minus_log_over_t - target).abs() / target < 0.03, "{est:?}");
    }

    #[test]
    fn asymptotic_regions_sum_to_total() {
        let spec = ConstraintSpec::new(0.0, 0.2, LocationConstraint::Unconstrained);
        let q = DecompositionQuery::new(0.0, 400.0, spec, Mode::Asymptotic);
        let (p, _) = asymptotic_parts(&q).unwrap();
        assert!((log_sum_exp(&[p.y1, p.y2, p.y3]) - p.total).abs() < 1e-12);
        // the middle region dominates
        let without_y3 = log_add_exp(p.y1, p.y2);
        assert!((without_y3 - p.total).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let q = DecompositionQuery::new(0.0, 10.0, ConstraintSpec::unconstrained(), Mode::Exact);
        assert!(constrained_prob(&q, None).is_err());
        assert!(constrained_prob_asymptotic(&q).is_err());
    }
}
