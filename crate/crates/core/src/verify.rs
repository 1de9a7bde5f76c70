//! Self-check suites over the closed forms and the numerical oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rates::{
    branch, case_of, child_tail_exponent, i11, i12, i21, i22, i31, i32, pointwise_cost, psi, psi1, psi2, psi3,
    psi4, regime_boundaries, SweepVar, Theorem, RHO, SQRT2,
};
use crate::variational::{laplace_check, verify_rate, VerifyRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub count: usize,
    pub worst_error: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, tol: f64) -> Self {
        Self { name: name.to_string(), count: 0, worst_error: 0.0, tol, pass: true }
    }

    fn record(&mut self, err: f64) {
        self.count += 1;
        if !(err <= self.worst_error) {
            self.worst_error = err;
        }
        self.pass = self.worst_error <= self.tol;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl SuiteReport {
    fn new(suite: &str, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self { suite: suite.to_string(), checks, pass }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Difference identities between the exponents, their coincidences and the
/// composition of the per-branch cost, on `draws` random parameter points.
pub fn identity_suite(draws: usize, seed: u64, tol: f64) -> SuiteReport {
    let names = [
        "i11_minus_i22",
        "i31_minus_i22",
        "i21_minus_i32",
        "i31_minus_i11",
        "i12_minus_i11",
        "i31_at_one_minus_i21",
        "i22_at_t2_minus_i21_at_t3",
        "i31_minus_i21_in_slope",
        "i21_equals_i11_at_slope_one",
        "i21_equals_i31_at_slope_minus_rho",
        "cost_composition",
    ];
    let mut checks: Vec<Check> = names.iter().map(|n| Check::new(n, tol)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = 6.0 - 2.0 * SQRT2;
    for _ in 0..draws {
        let a: f64 = rng.random_range(-3.0..1.0);
        let g: f64 = 1.0 - rng.random_range(0.0..1.0);
        let b: f64 = rng.random_range(-3.0..3.0);
        let t2 = (1.0 - a) / (2.0 * SQRT2 - 1.0);
        let t3 = (1.0 - a) / SQRT2;
        let s = RHO * g + a + RHO;
        let k = (a * a - 2.0 * a + 3.0) / 4.0;
        let pairs = [
            (i11(a, g, 1.0) - i22(a, g), (9.0 - 4.0 * SQRT2) / g * (g - t2).powi(2)),
            (i31(a, g, -RHO) - i22(a, g), s * s / g),
            (i21(a, g, -RHO) - i32(a, g), (1.0 - g) / (g * (1.0 + g)) * s * s),
            (
                i31(a, g, -RHO) - i11(a, g, 1.0),
                -c / g * ((g - (2.0 - SQRT2 * a) / c).powi(2) - 2.0 * (a + 2.0 * RHO).powi(2) / (c * c)),
            ),
            (
                i12(1.0 - a) - i11(a, g, 1.0),
                -2.0 / g * ((g - 3.0 * (1.0 - a) / 4.0).powi(2) - ((1.0 - a) / 4.0).powi(2)),
            ),
            (
                i31(a, 1.0, -RHO) - i21(a, g, 1.0),
                -2.0 / g * ((g - k).powi(2) - k * k + (1.0 - a).powi(2) / 2.0),
            ),
            (i22(a, t2) - i21(a, t3, 1.0), RHO * RHO / (2.0 * SQRT2 - 1.0) * (1.0 - a)),
            (
                i31(a, g, -RHO) - i21(a, g, b),
                -(1.0 - g).powi(2) / g * (b - (2.0 * RHO * g + a) / (1.0 - g)).powi(2)
                    + (3.0 - 2.0 * SQRT2) * g
                    + (a + RHO).powi(2) / g
                    + 2.0 * RHO * a
                    - 4.0 * RHO
                    + 2.0,
            ),
            (i21(a, g, 1.0), i11(a, g, 1.0)),
            (i21(a, g, -RHO), i31(a, g, -RHO)),
        ];
        // scale by the size of the terms being differenced
        let scale = i11(a, g, 1.0).abs().max(i31(a, g, -RHO).abs()).max(i21(a, g, b).abs()).max(1.0);
        for (check, (lhs, rhs)) in checks.iter_mut().zip(pairs) {
            if check.name == "i31_minus_i21_in_slope" && g >= 1.0 {
                continue;
            }
            check.record((lhs - rhs).abs() / scale);
        }
        let lam = g.min(1.0 - 1e-9);
        let y: f64 = rng.random_range(-6.0..6.0);
        let cost = pointwise_cost(a, lam, y).map(|r| r.1).unwrap_or(f64::NAN);
        let child = child_tail_exponent(a, lam, y).map(|r| r.1).unwrap_or(f64::NAN);
        checks[10].record(rel(cost, lam + y * y / (2.0 * lam) + 2.0 * child));
    }
    SuiteReport::new("identities", checks)
}

fn draw_point(rng: &mut ChaCha8Rng, theorem: Theorem) -> (f64, f64, f64) {
    loop {
        let a: f64 = rng.random_range(-3.0..1.0);
        let g: f64 = 1.0 - rng.random_range(0.0..1.0);
        let b: f64 = match theorem {
            Theorem::LocBelow => rng.random_range(1.0..5.0),
            _ => rng.random_range(-4.0..1.0),
        };
        if case_of(theorem, a, g, b).is_ok() {
            return (a, g, b);
        }
    }
}

/// Agreement of adjacent branches at every regime boundary, and the
/// consistency relations between the rates.
pub fn continuity_suite(draws: usize, seed: u64, tol: f64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boundary = Check::new("branch_agreement", tol);
    let mut psi1_full = Check::new("psi1_full_window_equals_psi", tol);
    let mut psi4_early = Check::new("psi4_vacuous_slope_equals_psi1_when_branch_not_late", tol);
    let mut psi4_late = Check::new("psi4_vacuous_slope_late_window", tol);
    let mut psi3_vac = Check::new("psi3_vacuous_slope", tol);
    let mut psi2_psi3 = Check::new("psi2_equals_psi3_at_slope_one", tol);

    for theorem in Theorem::ALL {
        for _ in 0..draws {
            let (a, g, b) = draw_point(&mut rng, theorem);
            for var in [SweepVar::Alpha, SweepVar::Gamma, SweepVar::Beta] {
                for bd in regime_boundaries(theorem, var, a, g, b)? {
                    let (pa, pg, pb) = match var {
                        SweepVar::Alpha => (bd.at, g, b),
                        SweepVar::Gamma => (a, bd.at, b),
                        SweepVar::Beta => (a, g, bd.at),
                    };
                    let lo = branch(theorem, bd.lower_case, pa, pg, pb)?.0;
                    let hi = branch(theorem, bd.upper_case, pa, pg, pb)?.0;
                    boundary.record(rel(lo, hi));
                }
            }
        }
    }

    for _ in 0..draws {
        let a: f64 = rng.random_range(-3.0..1.0);
        let g: f64 = 1.0 - rng.random_range(0.0..1.0);
        psi1_full.record(rel(psi1(a, 1.0)?.value, psi(a)?));
        let p1 = psi1(a, g)?.value;
        let p4 = psi4(a, g, 1.0)?.value;
        let t3 = (1.0 - a) / SQRT2;
        if g <= t3.min(1.0) {
            psi4_early.record(rel(p4, p1));
        } else {
            psi4_late.record(rel(p4, i11(a, g, 1.0)));
        }
        let want = if g < 1.0 - a { g + (a - (1.0 - g)).powi(2) / g } else { g };
        psi3_vac.record(rel(psi3(a, g, 1.0)?.value, want));
        if let Ok(p2) = psi2(a, g) {
            psi2_psi3.record(rel(p2.value, psi3(a, g, 1.0)?.value));
        }
    }
    Ok(SuiteReport::new("continuity", vec![boundary, psi1_full, psi4_early, psi4_late, psi3_vac, psi2_psi3]))
}

pub const ORACLE_ALPHAS: [f64; 9] = [-2.0, -1.0, -0.85, -0.7, -0.5, -RHO, 0.0, 0.5, 0.9];
pub const ORACLE_BETAS: [f64; 8] = [-2.0, -1.0, -RHO, 0.0, 0.5, 1.0, 1.5, 3.0];

/// Every in-domain point of the oracle sweep grid.
pub fn oracle_grid() -> Vec<(Theorem, f64, f64, f64)> {
    let gammas: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
    let mut pts = Vec::new();
    for theorem in [Theorem::Time, Theorem::TimeLate, Theorem::LocBelow, Theorem::LocAbove] {
        for &a in &ORACLE_ALPHAS {
            for &g in &gammas {
                let betas: &[f64] = match theorem {
                    Theorem::LocBelow | Theorem::LocAbove => &ORACLE_BETAS,
                    _ => &[f64::NAN],
                };
                for &b in betas {
                    if case_of(theorem, a, g, b).is_ok() {
                        pts.push((theorem, a, g, b));
                    }
                }
            }
        }
    }
    pts
}

/// Closed forms against the variational minimum over the sweep grid.
pub fn oracle_sweep(tol: f64) -> Result<Vec<VerifyRecord>> {
    oracle_grid()
        .into_par_iter()
        .map(|(th, a, g, b)| verify_rate(th, a, g, b, tol))
        .collect()
}

pub fn oracle_suite(tol: f64) -> Result<(SuiteReport, Vec<VerifyRecord>)> {
    let records = oracle_sweep(tol)?;
    let mut checks = Vec::new();
    for theorem in [Theorem::Time, Theorem::TimeLate, Theorem::LocBelow, Theorem::LocAbove] {
        let mut c = Check::new(theorem.name(), tol);
        for r in records.iter().filter(|r| r.theorem == theorem) {
            c.count += 1;
            let excess = ((r.closed - r.oracle).abs() - r.gap).max(0.0);
            c.worst_error = c.worst_error.max(excess);
            c.pass &= r.pass;
        }
        checks.push(c);
    }
    Ok((SuiteReport::new("oracle", checks), records))
}

pub const LAPLACE_TIMES: [f64; 5] = [25.0, 50.0, 100.0, 200.0, 400.0];

/// Laplace asymptotics on test functions with known maxima: the error must
/// shrink along `LAPLACE_TIMES` and stay within `2·ln t / t`.
pub fn laplace_suite() -> Result<SuiteReport> {
    type Case = (&'static str, fn(f64) -> f64, f64, f64);
    let cases: [Case; 4] = [
        ("linear_decay", |l| -l, 0.2, 1.0),
        ("interior_quadratic", |l| -(l - 0.5) * (l - 0.5), 0.0, 1.0),
        ("kinked", |l| -(l - 0.3).abs() - 0.5 * l, 0.0, 1.0),
        ("rate_profile", |l| -crate::rates::i22(0.0, l.max(1e-12)), 0.1, 0.2),
    ];
    let mut checks = Vec::new();
    for (name, g, p, q) in cases {
        let rep = laplace_check(g, p, q, &LAPLACE_TIMES)?;
        let mut c = Check::new(name, 0.0);
        let mut prev = f64::INFINITY;
        for pt in &rep.points {
            c.count += 1;
            let bound = 2.0 * pt.t.ln() / pt.t;
            c.worst_error = c.worst_error.max(pt.error);
            c.pass &= pt.error <= bound && (pt.error < prev || pt.error < 1e-9);
            prev = pt.error;
        }
        c.tol = 2.0 * LAPLACE_TIMES[0].ln() / LAPLACE_TIMES[0];
        checks.push(c);
    }
    Ok(SuiteReport::new("laplace", checks))
}
