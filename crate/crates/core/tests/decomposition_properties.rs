use std::sync::OnceLock;

use bbm_lowmax::decomposition::*;
use bbm_lowmax::fkpp::{solve, FkppConfig, FkppSolution};
use bbm_lowmax::special::log_add_exp;
use bbm_lowmax::variational::{ConstraintSpec, LocationConstraint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const T: f64 = 10.0;

fn sol() -> &'static FkppSolution {
    static SOL: OnceLock<FkppSolution> = OnceLock::new();
    SOL.get_or_init(|| solve(&FkppConfig::for_horizon(-0.3, T).unwrap()).unwrap())
}

fn exact(alpha: f64, lo: f64, hi: f64, loc: LocationConstraint) -> DecompositionEstimate {
    let q = DecompositionQuery::new(alpha, T, ConstraintSpec::new(lo, hi, loc), Mode::Exact);
    constrained_prob_exact(&q, sol()).unwrap()
}

#[test]
fn exact_probabilities_are_probabilities() {
    for alpha in [0.0, -0.3, 0.5] {
        let e = exact(alpha, 0.0, 1.0, LocationConstraint::Unconstrained);
        assert!(e.probability > 0.0 && e.probability <= 1.0, "{e:?}");
    }
}

#[test]
fn integrating_out_the_first_branch_recovers_the_law_of_the_maximum() {
    // The lattice solution satisfies the branching identity only up to its
    // own discretisation error, which is O(dx²) and well above the quadrature error.
    for alpha in [0.0, -0.3] {
        let e = exact(alpha, 0.0, 1.0, LocationConstraint::Unconstrained);
        let direct = sol().query(T, std::f64::consts::SQRT_2 * alpha * T).unwrap();
        assert!((e.ln_prob - direct).abs() <= e.quadrature_error + 1e-3, "{alpha}: {e:?} vs {direct}");
    }
}

#[test]
fn window_integral_is_additive() {
    for (alpha, g) in [(0.0, 0.3), (-0.3, 0.6)] {
        let full = exact(alpha, 0.0, 1.0, LocationConstraint::Unconstrained);
        let a = exact(alpha, 0.0, g, LocationConstraint::Unconstrained);
        let b = exact(alpha, g, 1.0, LocationConstraint::Unconstrained);
        let sum = log_add_exp(a.ln_prob, b.ln_prob);
        let tol = 2.0 * (a.quadrature_error + b.quadrature_error + full.quadrature_error) + 1e-9;
        assert!((sum - full.ln_prob).abs() <= tol, "{sum} vs {}", full.ln_prob);
    }
}

#[test]
fn shrinking_the_window_lowers_the_probability() {
    let mut prev = f64::INFINITY;
    for hi in [1.0, 0.8, 0.5, 0.3, 0.1] {
        let e = exact(0.0, 0.0, hi, LocationConstraint::Unconstrained);
        assert!(e.ln_prob <= prev + 1e-9);
        prev = e.ln_prob;
    }
}

#[test]
fn tightening_the_location_lowers_the_probability() {
    let (lo, hi) = (0.5 - 1e-3, 0.5);
    let mut prev = f64::INFINITY;
    for b in [1.0, 1.5, 2.0, 3.0] {
        let e = exact(0.0, lo, hi, LocationConstraint::Below(b));
        assert!(e.ln_prob <= prev + 1e-9, "below {b}");
        prev = e.ln_prob;
    }
    let mut prev = f64::INFINITY;
    for b in [1.0, 0.0, -0.5, -1.0] {
        let e = exact(0.0, lo, hi, LocationConstraint::Above(b));
        assert!(e.ln_prob <= prev + 1e-9, "above {b}");
        prev = e.ln_prob;
    }
}

#[test]
fn exact_and_asymptotic_modes_share_the_window_semantics() {
    let spec = ConstraintSpec::new(0.0, 0.3, LocationConstraint::Unconstrained);
    let e = constrained_prob(&DecompositionQuery::new(0.0, T, spec, Mode::Exact), Some(sol())).unwrap();
    let a = constrained_prob(&DecompositionQuery::new(0.0, T, spec, Mode::Asymptotic), None).unwrap();
    // same leading order, different o(t) terms
    assert!((e.minus_log_over_t - a.minus_log_over_t).abs() < 0.5, "{e:?} {a:?}");
}

#[test]
fn exact_mode_rejects_horizons_beyond_the_solution() {
    let q = DecompositionQuery::new(0.0, 2.0 * T, ConstraintSpec::unconstrained(), Mode::Exact);
    assert!(constrained_prob_exact(&q, sol()).is_err());
}

#[test]
fn asymptotic_gap_to_exact_shrinks_relative_to_t() {
    let cfg = FkppConfig::for_horizon(0.0, 40.0).unwrap();
    let big = solve(&cfg).unwrap();
    let spec = ConstraintSpec::new(0.0, 0.3, LocationConstraint::Unconstrained);
    let gap = |t: f64| {
        let e = constrained_prob_exact(&DecompositionQuery::new(0.0, t, spec, Mode::Exact), &big).unwrap();
        let a = constrained_prob_asymptotic(&DecompositionQuery::new(0.0, t, spec, Mode::Asymptotic)).unwrap();
        (e.ln_prob - a.ln_prob).abs() / t
    };
    assert!(gap(40.0) < gap(10.0));
}

#[test]
fn noisy_fit_recovers_the_rate() {
    let ts: Vec<f64> = (1..=8).map(|k| 50.0 * k as f64).collect();
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lp: Vec<f64> = ts.iter().map(|&t| -(1.2 * t + 1.5 * t.ln() - 2.0) + noise.sample(&mut rng)).collect();
    let fit = slope_fit(&ts, &lp).unwrap();
    assert!((fit.rate - 1.2).abs() < 0.02, "{fit:?}");
}
