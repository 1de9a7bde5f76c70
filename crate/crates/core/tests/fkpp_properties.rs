use bbm_lowmax::fkpp::*;
use bbm_lowmax::rates::SQRT2;
use bbm_lowmax::special::{log_ndtr, ndtr};

#[test]
fn moment_bounds_hold_at_every_snapshot_from_t_one() {
    let sol = solve(&FkppConfig::for_horizon(-0.3, 5.0).unwrap()).unwrap();
    for (k, &t) in sol.times().iter().enumerate().skip(1) {
        for (i, x) in sol.xs().enumerate() {
            let g = sol.snapshot(k)[i];
            assert!(g <= 0.0);
            // lattice tails settle onto the Gaussian ones only after many steps
            if t < 1.0 {
                continue;
            }
            let lower = -t + log_ndtr(x / t.sqrt());
            if lower > -30.0 {
                assert!(g >= lower - 1e-3, "t={t} x={x}: {g} < {lower}");
            }
            let upper = t.exp() * (1.0 - ndtr(x / t.sqrt()));
            assert!(-g.exp_m1() <= upper * (1.0 + 1e-3) + 1e-10, "t={t} x={x} {} {upper}", -g.exp_m1());
        }
    }
}

#[test]
fn probability_along_the_ray_decreases() {
    for alpha in [0.0, -0.5] {
        let sol = solve(&FkppConfig::for_horizon_with(alpha, 8.0, 0.1).unwrap()).unwrap();
        let mut prev = 0.0;
        for &t in sol.times().iter().skip(1) {
            let v = sol.query(t, SQRT2 * alpha * t).unwrap();
            assert!(v <= prev + 1e-12, "alpha {alpha}, t {t}");
            prev = v;
        }
    }
}

#[test]
fn grid_refinement_changes_little() {
    let t_end = 10.0;
    let coarse = solve(&FkppConfig::for_horizon_with(0.0, t_end, 0.05).unwrap()).unwrap();
    let fine = solve(&FkppConfig::for_horizon_with(0.0, t_end, 0.025).unwrap()).unwrap();
    let a = coarse.query(t_end, 0.0).unwrap();
    let b = fine.query(t_end, 0.0).unwrap();
    assert!((a - b).abs() <= 0.02 * b.abs(), "{a} vs {b}");
}

#[test]
fn monotone_in_space_between_nodes() {
    let sol = solve(&FkppConfig::for_horizon_with(0.0, 3.0, 0.1).unwrap()).unwrap();
    let (lo, hi) = sol.x_range();
    let xs: Vec<f64> = (0..=997).map(|k| lo + (hi - lo) * k as f64 / 997.0).collect();
    for &t in &[0.3, 1.234, 3.0] {
        let vals: Vec<f64> = xs.iter().map(|&x| sol.query(t, x).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = FkppConfig::for_horizon(0.0, 5.0).unwrap();
    cfg.dt = cfg.dx * cfg.dx;
    assert!(solve(&cfg).is_err());
    let mut cfg = FkppConfig::for_horizon(0.0, 5.0).unwrap();
    cfg.x_min = 1.0;
    assert!(solve(&cfg).is_err());
    assert!(FkppConfig::for_horizon(0.0, -1.0).is_err());
}

#[test]
fn slope_needs_four_points() {
    let cfg = FkppConfig::for_horizon_with(0.0, 4.0, 0.1).unwrap();
    assert!(slope_estimate(0.0, &[1.0, 2.0, 3.0], &cfg).is_err());
    let fit = slope_estimate(0.0, &[1.0, 2.0, 3.0, 4.0], &cfg).unwrap();
    assert!(fit.rate.is_finite());
}
