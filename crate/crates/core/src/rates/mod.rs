//! Closed-form rate functions for branching Brownian motion conditioned on
//! `X_max(t) <= √2·α·t`, with constraints on the first branching time and
//! location.
//!
//! Every rate is exposed through [`RateEvaluation`], which carries the value,
//! the active piecewise branch and the optimal first-branching point
//! `(τ/t, y/t)`. Boundary points between branches are assigned to the
//! lower-indexed branch; the formulas agree there, so only the label depends
//! on the convention.

mod cost;
mod exponents;
mod theorems;

use serde::{Deserialize, Serialize};

pub use cost::{child_tail_exponent, pointwise_cost};
pub use exponents::{exponent, i11, i12, i21, i22, i31, i32, ExponentArgs, ExponentKind};
pub use theorems::{
    branch, case_of, psi, psi1, psi2, psi3, psi4, psi_eval, regime_boundaries, thresholds,
    typical_max, Boundary, RegimeThresholds, SweepVar,
};

/// `√2`.
pub const SQRT2: f64 = std::f64::consts::SQRT_2;
/// `ρ = √2 − 1`, the lower-tail constant of the BBM maximum.
pub const RHO: f64 = SQRT2 - 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MathConstants {
    pub sqrt2: f64,
    pub rho: f64,
}

impl MathConstants {
    pub const fn get() -> Self {
        Self { sqrt2: SQRT2, rho: RHO }
    }
}

/// Which constrained probability a rate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// No constraint: `P(X_max(t) <= √2αt)`.
    Unconstrained,
    /// First branching in `[0, γt]`.
    Time,
    /// First branching in `[γt, t]`.
    TimeLate,
    /// First branching in `[(γ−ε)t, γt]` at or below `√2αt − √2β(t−τ)`.
    LocBelow,
    /// First branching in `[(γ−ε)t, γt]` at or above `√2αt − √2β(t−τ)`.
    LocAbove,
}

impl Theorem {
    pub const ALL: [Theorem; 5] = [
        Theorem::Unconstrained,
        Theorem::Time,
        Theorem::TimeLate,
        Theorem::LocBelow,
        Theorem::LocAbove,
    ];

    /// Number of piecewise branches.
    pub fn case_count(self) -> u8 {
        match self {
            Theorem::Unconstrained => 2,
            Theorem::Time => 4,
            Theorem::TimeLate => 2,
            Theorem::LocBelow => 2,
            Theorem::LocAbove => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Theorem::Unconstrained => "unconstrained",
            Theorem::Time => "time",
            Theorem::TimeLate => "time_late",
            Theorem::LocBelow => "location_below",
            Theorem::LocAbove => "location_above",
        }
    }
}

impl std::fmt::Display for Theorem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Theorem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "unconstrained" | "psi" => Ok(Theorem::Unconstrained),
            "time" | "psi1" => Ok(Theorem::Time),
            "time_late" | "psi2" => Ok(Theorem::TimeLate),
            "location_below" | "loc_below" | "psi3" => Ok(Theorem::LocBelow),
            "location_above" | "loc_above" | "psi4" => Ok(Theorem::LocAbove),
            other => Err(format!(
                "unknown theorem '{other}' (expected unconstrained, time, time_late, location_below, location_above)"
            )),
        }
    }
}

/// Position class of the first branching location relative to the child
/// tail regimes: below `√2αt − √2(t−τ)` (I1), between that and
/// `√2αt + √2ρ(t−τ)` (I2), or above (I3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    I1,
    I2,
    I3,
    #[serde(rename = "NONE")]
    None,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::I1 => "I1",
            Region::I2 => "I2",
            Region::I3 => "I3",
            Region::None => "NONE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub theorem: Theorem,
    /// 1-based index of the active branch.
    pub case_index: u8,
    /// Region of the optimal first-branching location.
    pub region: Region,
}

/// A rate value together with its optimal first-branching strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEvaluation {
    pub value: f64,
    pub regime: RegimeLabel,
    /// `lim τ/t` of the optimal first branching time.
    pub opt_tau_fraction: f64,
    /// `lim y/t` of the optimal first branching location.
    pub opt_loc_coeff: f64,
}

/// Parameters of a rate query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl QueryParams {
    pub fn new(alpha: f64, gamma: f64, beta: f64) -> Self {
        Self { alpha, gamma, beta }
    }

    /// Evaluates the rate of `theorem` at these parameters.
    pub fn evaluate(&self, theorem: Theorem) -> crate::Result<RateEvaluation> {
        match theorem {
            Theorem::Unconstrained => psi_eval(self.alpha),
            Theorem::Time => psi1(self.alpha, self.gamma),
            Theorem::TimeLate => psi2(self.alpha, self.gamma),
            Theorem::LocBelow => psi3(self.alpha, self.gamma, self.beta),
            Theorem::LocAbove => psi4(self.alpha, self.gamma, self.beta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_satisfy_their_identities() {
        let c = MathConstants::get();
        assert_eq!(c.rho, c.sqrt2 - 1.0);
        assert!((c.rho * c.rho - (3.0 - 2.0 * c.sqrt2)).abs() < 1e-15);
        assert!((1.0 + c.rho * c.rho - (4.0 - 2.0 * c.sqrt2)).abs() < 1e-15);
    }

    #[test]
    fn theorem_names_round_trip() {
        for t in Theorem::ALL {
            assert_eq!(t.name().parse::<Theorem>().unwrap(), t);
        }
        assert!("sideways".parse::<Theorem>().is_err());
    }
}
