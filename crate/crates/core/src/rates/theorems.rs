use serde::{Deserialize, Serialize};

use super::cost::{cost_unchecked, region_edges};
use super::exponents::{i11, i21, i22, i31, i32};
use super::{RateEvaluation, Region, RegimeLabel, Theorem, RHO, SQRT2};
use crate::error::{domain, Result};

/// Every regime boundary of the five rates at a given `(α, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    /// `α/(1−γ)`; `+∞` at `γ = 1`.
    pub beta1: f64,
    /// `(α+2ργ)/(1−γ)`; at `γ = 1` it is `−∞` for `α < −2ρ` and `+∞` otherwise.
    pub beta2: f64,
    pub child_switch: f64,
}

/// Parameter swept when locating regime boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    Alpha,
    Gamma,
    Beta,
}

impl std::str::FromStr for SweepVar {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "alpha" => Ok(SweepVar::Alpha),
            "gamma" => Ok(SweepVar::Gamma),
            "beta" => Ok(SweepVar::Beta),
            other => Err(format!("unknown sweep variable '{other}'")),
        }
    }
}

/// A point where the active branch changes along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub at: f64,
    /// Branch active at and just below `at`.
    pub lower_case: u8,
    /// Branch active just above `at`.
    pub upper_case: u8,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha < 1.0) || !alpha.is_finite() {
        return domain(format!("alpha must be finite and < 1, got {alpha}"));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return domain(format!("gamma must lie in (0, 1], got {gamma}"));
    }
    Ok(())
}

pub fn thresholds(alpha: f64, gamma: f64) -> Result<RegimeThresholds> {
    check_alpha(alpha)?;
    check_gamma(gamma)?;
    let (beta1, beta2) = if gamma < 1.0 {
        (alpha / (1.0 - gamma), (alpha + 2.0 * RHO * gamma) / (1.0 - gamma))
    } else if alpha < -2.0 * RHO {
        (f64::INFINITY, f64::NEG_INFINITY)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(RegimeThresholds {
        t1: -(alpha + RHO) / RHO,
        t2: (1.0 - alpha) / (2.0 * SQRT2 - 1.0),
        t3: (1.0 - alpha) / SQRT2,
        t4: 1.0 - alpha,
        beta1,
        beta2,
        child_switch: alpha / (1.0 + gamma),
    })
}

/// Typical position `√2t − (3/(2√2))·ln t` of the maximum at time `t`.
pub fn typical_max(t: f64) -> Result<f64> {
    if !(t > 1.0) || !t.is_finite() {
        return domain(format!("typical_max requires t > 1, got {t}"));
    }
    Ok(SQRT2 * t - 3.0 / (2.0 * SQRT2) * t.ln())
}

/// Unconstrained rate of `P(X_max(t) <= √2αt)`.
pub fn psi(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(branch_unchecked(Theorem::Unconstrained, case_unchecked(Theorem::Unconstrained, alpha, 1.0, 0.0), alpha, 1.0, 0.0).0)
}

pub fn psi_eval(alpha: f64) -> Result<RateEvaluation> {
    check_alpha(alpha)?;
    Ok(evaluate(Theorem::Unconstrained, alpha, 1.0, f64::NAN))
}

/// First branching restricted to `[0, γt]`.
pub fn psi1(alpha: f64, gamma: f64) -> Result<RateEvaluation> {
    check_alpha(alpha)?;
    check_gamma(gamma)?;
    Ok(evaluate(Theorem::Time, alpha, gamma, f64::NAN))
}

/// First branching restricted to `[γt, t]`.
pub fn psi2(alpha: f64, gamma: f64) -> Result<RateEvaluation> {
    check_domain(Theorem::TimeLate, alpha, gamma, f64::NAN)?;
    Ok(evaluate(Theorem::TimeLate, alpha, gamma, f64::NAN))
}

/// First branching near `γt`, located at or below `√2αt − √2β(t−τ)`.
pub fn psi3(alpha: f64, gamma: f64, beta: f64) -> Result<RateEvaluation> {
    check_domain(Theorem::LocBelow, alpha, gamma, beta)?;
    Ok(evaluate(Theorem::LocBelow, alpha, gamma, beta))
}

/// First branching near `γt`, located at or above `√2αt − √2β(t−τ)`.
pub fn psi4(alpha: f64, gamma: f64, beta: f64) -> Result<RateEvaluation> {
    check_domain(Theorem::LocAbove, alpha, gamma, beta)?;
    Ok(evaluate(Theorem::LocAbove, alpha, gamma, beta))
}

fn check_domain(theorem: Theorem, alpha: f64, gamma: f64, beta: f64) -> Result<()> {
    check_alpha(alpha)?;
    match theorem {
        Theorem::Unconstrained => {}
        Theorem::Time => check_gamma(gamma)?,
        Theorem::TimeLate => {
            if !(alpha > -RHO) {
                return domain(format!("psi2 requires alpha > -(sqrt2-1), got {alpha}"));
            }
            let t3 = (1.0 - alpha) / SQRT2;
            if !(gamma > t3 && gamma <= 1.0) {
                return domain(format!(
                    "psi2 requires gamma > (1-alpha)/sqrt2 = {t3} and gamma <= 1, got {gamma}"
                ));
            }
        }
        Theorem::LocBelow => {
            check_gamma(gamma)?;
            if !(beta >= 1.0) || !beta.is_finite() {
                return domain(format!("psi3 requires finite beta >= 1, got {beta}"));
            }
        }
        Theorem::LocAbove => {
            check_gamma(gamma)?;
            if !(beta <= 1.0) || !beta.is_finite() {
                return domain(format!("psi4 requires finite beta <= 1, got {beta}"));
            }
        }
    }
    Ok(())
}

/// Index of the active branch. Points on a boundary go to the lower index.
pub fn case_of(theorem: Theorem, alpha: f64, gamma: f64, beta: f64) -> Result<u8> {
    check_domain(theorem, alpha, gamma, beta)?;
    Ok(case_unchecked(theorem, alpha, gamma, beta))
}

/// Value, `τ/t` and `y/t` of one branch formula, evaluated regardless of
/// whether the branch is active at the given point.
pub fn branch(theorem: Theorem, case: u8, alpha: f64, gamma: f64, beta: f64) -> Result<(f64, f64, f64)> {
    if case == 0 || case > theorem.case_count() {
        return domain(format!("{theorem} has no case {case}"));
    }
    Ok(branch_unchecked(theorem, case, alpha, gamma, beta))
}

pub(crate) fn case_unchecked(theorem: Theorem, alpha: f64, gamma: f64, beta: f64) -> u8 {
    let t1 = -(alpha + RHO) / RHO;
    let t2 = (1.0 - alpha) / (2.0 * SQRT2 - 1.0);
    let t3 = (1.0 - alpha) / SQRT2;
    match theorem {
        Theorem::Unconstrained => {
            if alpha >= -RHO {
                1
            } else {
                2
            }
        }
        Theorem::Time => {
            if gamma <= t1.min(1.0) {
                1
            } else if gamma <= t2.min(1.0) {
                2
            } else if gamma <= t3.min(1.0) {
                3
            } else {
                4
            }
        }
        // With α < 0 a first branch at γ = 1 still has to travel down to √2α,
        // so the split point is 1 − α itself and not (1 − α) ∧ 1.
        Theorem::TimeLate => {
            if gamma <= 1.0 - alpha {
                1
            } else {
                2
            }
        }
        // The free optimum y = 0 is admissible iff β <= α/(1−γ). At γ = 1 this
        // becomes 0 <= √2α.
        Theorem::LocBelow => {
            let free = if gamma < 1.0 { beta <= alpha / (1.0 - gamma) } else { alpha >= 0.0 };
            if free {
                1
            } else {
                2
            }
        }
        Theorem::LocAbove => {
            if gamma < t1.min(1.0) {
                if beta <= alpha / (1.0 + gamma) {
                    1
                } else {
                    2
                }
            } else if beta <= -RHO {
                3
            } else if gamma < 1.0 && beta > (alpha + 2.0 * RHO * gamma) / (1.0 - gamma) {
                5
            } else {
                4
            }
        }
    }
}

pub(crate) fn branch_unchecked(theorem: Theorem, case: u8, alpha: f64, gamma: f64, beta: f64) -> (f64, f64, f64) {
    let t3 = (1.0 - alpha) / SQRT2;
    let i3_center = 2.0 * SQRT2 * alpha * gamma / (1.0 + gamma);
    let i2_center = -2.0 * SQRT2 * RHO * gamma;
    let edge = |b: f64| SQRT2 * alpha - SQRT2 * b * (1.0 - gamma);
    match (theorem, case) {
        (Theorem::Unconstrained, 1) => (2.0 * RHO * (1.0 - alpha), t3, -RHO * (1.0 - alpha)),
        (Theorem::Unconstrained, _) => (1.0 + alpha * alpha, 1.0, SQRT2 * alpha),
        (Theorem::Time, 1) => (i32(alpha, gamma), gamma, i3_center),
        (Theorem::Time, 2) => (i22(alpha, gamma), gamma, i2_center),
        (Theorem::Time, 3) => (i11(alpha, gamma, 1.0), gamma, edge(1.0)),
        (Theorem::Time, _) => (2.0 * RHO * (1.0 - alpha), t3, -RHO * (1.0 - alpha)),
        (Theorem::TimeLate, 1) => (i11(alpha, gamma, 1.0), gamma, edge(1.0)),
        (Theorem::TimeLate, _) => (gamma, gamma, 0.0),
        (Theorem::LocBelow, 1) => (gamma, gamma, 0.0),
        (Theorem::LocBelow, _) => (i11(alpha, gamma, beta), gamma, edge(beta)),
        (Theorem::LocAbove, 1) => (i31(alpha, gamma, beta), gamma, edge(beta)),
        (Theorem::LocAbove, 2) => (i32(alpha, gamma), gamma, i3_center),
        (Theorem::LocAbove, 3) => (i31(alpha, gamma, beta), gamma, edge(beta)),
        (Theorem::LocAbove, 4) => (i21(alpha, gamma, beta), gamma, edge(beta)),
        (Theorem::LocAbove, _) => (i22(alpha, gamma), gamma, i2_center),
    }
}

/// Region of a first-branching point, with points within 1e-12 of an edge
/// reported as I2.
pub(crate) fn region_of(alpha: f64, lambda: f64, y: f64) -> Region {
    let (a, b) = region_edges(alpha, lambda);
    let tol = 1e-12 * a.abs().max(b.abs()).max(1.0);
    if (y - a).abs() <= tol || (y - b).abs() <= tol {
        Region::I2
    } else {
        cost_unchecked(alpha, lambda, y).0
    }
}

fn evaluate(theorem: Theorem, alpha: f64, gamma: f64, beta: f64) -> RateEvaluation {
    let case_index = case_unchecked(theorem, alpha, gamma, beta);
    let (value, tau, y) = branch_unchecked(theorem, case_index, alpha, gamma, beta);
    RateEvaluation {
        value,
        regime: RegimeLabel { theorem, case_index, region: region_of(alpha, tau, y) },
        opt_tau_fraction: tau,
        opt_loc_coeff: y,
    }
}

/// Branch changes of `theorem` along `var`, the other parameters held at the
/// given values, restricted to the open domain of the swept variable.
pub fn regime_boundaries(theorem: Theorem, var: SweepVar, alpha: f64, gamma: f64, beta: f64) -> Result<Vec<Boundary>> {
    let candidates: Vec<f64> = match var {
        SweepVar::Alpha => vec![
            -RHO,
            -RHO * (1.0 + gamma),
            1.0 - (2.0 * SQRT2 - 1.0) * gamma,
            1.0 - SQRT2 * gamma,
            1.0 - gamma,
            beta * (1.0 - gamma),
            beta * (1.0 + gamma),
            beta * (1.0 - gamma) - 2.0 * RHO * gamma,
        ],
        SweepVar::Gamma => vec![
            -(alpha + RHO) / RHO,
            (1.0 - alpha) / (2.0 * SQRT2 - 1.0),
            (1.0 - alpha) / SQRT2,
            1.0 - alpha,
            1.0 - alpha / beta,
            alpha / beta - 1.0,
            (beta - alpha) / (beta + 2.0 * RHO),
        ],
        SweepVar::Beta => {
            if gamma < 1.0 {
                vec![alpha / (1.0 - gamma), alpha / (1.0 + gamma), -RHO, (alpha + 2.0 * RHO * gamma) / (1.0 - gamma)]
            } else {
                vec![alpha / (1.0 + gamma), -RHO]
            }
        }
    };
    let at = |v: f64| match var {
        SweepVar::Alpha => (v, gamma, beta),
        SweepVar::Gamma => (alpha, v, beta),
        SweepVar::Beta => (alpha, gamma, v),
    };
    let mut out: Vec<Boundary> = Vec::new();
    for c in candidates {
        if !c.is_finite() {
            continue;
        }
        let (a0, g0, b0) = at(c);
        if check_domain(theorem, a0, g0, b0).is_err() {
            continue;
        }
        let delta = 1e-9 * c.abs().max(1.0);
        let (a1, g1, b1) = at(c + delta);
        if check_domain(theorem, a1, g1, b1).is_err() {
            continue;
        }
        let lower_case = case_unchecked(theorem, a0, g0, b0);
        let upper_case = case_unchecked(theorem, a1, g1, b1);
        if lower_case != upper_case && !out.iter().any(|b| (b.at - c).abs() <= delta) {
            out.push(Boundary { at: c, lower_case, upper_case });
        }
    }
    out.sort_by(|x, y| x.at.total_cmp(&y.at));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn psi_examples() {
        assert!(close(psi(-RHO).unwrap(), 4.0 - 2.0 * SQRT2, 1e-15));
        assert!(close(1.0 + RHO * RHO, 2.0 * RHO * (1.0 + RHO), 1e-15));
        assert!(close(psi(0.0).unwrap(), 0.828_427_124_746_190_1, 1e-15));
        assert_eq!(psi(-2.0).unwrap(), 5.0);
        assert!(psi(1.0).is_err());
    }

    #[test]
    fn typical_max_examples() {
        let e = std::f64::consts::E;
        assert!(close(typical_max(e).unwrap(), SQRT2 * e - 3.0 / (2.0 * SQRT2), 1e-14));
        assert!(close(typical_max(100.0).unwrap(), 136.538, 2e-3));
        assert!(close(typical_max(10.0).unwrap(), 11.700, 1e-3));
        assert!(typical_max(1.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        let th = thresholds(0.0, 0.5).unwrap();
        assert!(close(th.t1, -1.0, 1e-15));
        assert!(close(th.t2, 0.546_918_160_678_027_1, 1e-12));
        assert!(close(th.t3, 0.707_106_781_186_547_6, 1e-15));
        assert_eq!(th.t4, 1.0);
        assert_eq!(th.beta1, 0.0);
        assert!(close(th.beta2, 2.0 * RHO, 1e-15));
        assert_eq!(th.child_switch, 0.0);
        assert_eq!(thresholds(-RHO, 0.5).unwrap().t1, 0.0);
        assert_eq!(thresholds(-0.5, 1.0).unwrap().beta2, f64::INFINITY);
        assert_eq!(thresholds(-0.9, 1.0).unwrap().beta2, f64::NEG_INFINITY);
    }

    #[test]
    fn psi1_examples() {
        let r = psi1(0.0, 0.2).unwrap();
        assert!(close(r.value, 1.388_225_099_390_856_5, 1e-12));
        assert_eq!(r.regime.case_index, 2);
        assert!(close(r.opt_loc_coeff, -0.234_314_575_050_762, 1e-12));
        let r = psi1(0.0, 0.6).unwrap();
        assert!(close(r.value, 0.866_666_666_666_666_7, 1e-12));
        assert_eq!(r.regime.case_index, 3);
        assert!(close(r.opt_loc_coeff, -0.4 * SQRT2, 1e-12));
        for a in [-3.0, -1.0, -0.5, -RHO, 0.0, 0.7] {
            assert!(close(psi1(a, 1.0).unwrap().value, psi(a).unwrap(), 1e-12));
        }
    }

    #[test]
    fn psi2_examples() {
        assert!(close(psi2(0.0, 0.8).unwrap().value, 0.85, 1e-12));
        let r = psi2(0.5, 0.6).unwrap();
        assert_eq!((r.value, r.regime.case_index), (0.6, 2));
        let err = psi2(0.0, 0.4).unwrap_err().to_string();
        assert!(err.contains("gamma > (1-alpha)/sqrt2"), "{err}");
        // γ just above (1−α)/√2 approaches 2ρ(1−α)
        let a = 0.3;
        let g = (1.0 - a) / SQRT2 + 1e-9;
        assert!(close(psi2(a, g).unwrap().value, 2.0 * RHO * (1.0 - a), 1e-8));
        // window [1, 1] with α < 0 still pays to reach √2α
        assert!(close(psi2(-0.2, 1.0).unwrap().value, 1.04, 1e-12));
    }

    #[test]
    fn psi3_examples() {
        assert!(close(psi3(0.0, 0.5, 2.0).unwrap().value, 2.5, 1e-12));
        let r = psi3(0.0, 0.3, 1.0).unwrap();
        assert!(close(r.value, 0.3 + 0.49 / 0.3, 1e-12));
        let r = psi3(0.5, 0.8, 1.0).unwrap();
        assert_eq!((r.value, r.regime.case_index), (0.8, 1));
        assert!(close(psi3(-1.0, 1.0, 2.0).unwrap().value, 2.0, 1e-12));
        assert!(psi3(0.0, 0.5, 0.9).is_err());
    }

    #[test]
    fn psi4_examples() {
        let r = psi4(-1.0, 0.3, -1.0).unwrap();
        assert!(close(r.value, 3.4, 1e-12));
        assert_eq!(r.regime.case_index, 1);
        let r = psi4(-1.0, 0.3, 0.0).unwrap();
        assert!(close(r.value, 3.238_461_538_461_538, 1e-12));
        assert!(close(r.value, psi1(-1.0, 0.3).unwrap().value, 1e-12));
        assert!(close(psi4(0.0, 0.9, 1.0).unwrap().value, 0.9 + 0.01 / 0.9, 1e-12));
        assert!(psi4(0.0, 0.5, 1.5).is_err());
    }

    #[test]
    fn boundaries_follow_thresholds() {
        let b = regime_boundaries(Theorem::Time, SweepVar::Gamma, -0.5, 0.5, 0.0).unwrap();
        let th = thresholds(-0.5, 0.5).unwrap();
        let at: Vec<f64> = b.iter().map(|b| b.at).collect();
        assert_eq!(at, vec![th.t1, th.t2]);
        assert!(th.t3 > 1.0);
        let b = regime_boundaries(Theorem::LocAbove, SweepVar::Beta, -1.0, 0.3, 0.0).unwrap();
        assert_eq!(b.len(), 1);
        assert!(close(b[0].at, -1.0 / 1.3, 1e-15));
        assert_eq!((b[0].lower_case, b[0].upper_case), (1, 2));
    }
}
