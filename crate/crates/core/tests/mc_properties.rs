use bbm_lowmax::fkpp::{solve, FkppConfig};
use bbm_lowmax::mc::*;
use bbm_lowmax::rates::{typical_max, SQRT2};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn mean_population_at_two() {
    let rep = sanity_population(2.0, 100_000, 1).unwrap();
    let se = (rep.variance / rep.replicas as f64).sqrt();
    assert!((rep.mean - 2f64.exp()).abs() <= 3.0 * se, "{rep:?}");
}

#[test]
fn population_report_at_three_is_reproducible() {
    let a = sanity_population(3.0, 100_000, 17).unwrap();
    let b = sanity_population(3.0, 100_000, 17).unwrap();
    assert_eq!(a, b);
    assert!((a.expected_mean - 20.085_536_923_187_668).abs() < 1e-9);
    assert!(a.mean_z.abs() <= 3.0, "{a:?}");
    assert!(!a.flagged);
    assert!(sanity_population(11.0, 10, 0).is_err());
}

#[test]
fn no_branch_probability_is_exponential() {
    let t = 1.5;
    let recs = run_replicas(&McConfig::new(t, f64::INFINITY, 40_000, 5)).unwrap();
    let none = recs.iter().filter(|r| r.tau_over_t.is_none()).count() as f64 / recs.len() as f64;
    let p = (-t).exp();
    let se = (p * (1.0 - p) / recs.len() as f64).sqrt();
    assert!((none - p).abs() <= 3.0 * se, "{none} vs {p}");
}

#[test]
fn unconditional_first_branch_times_follow_truncated_exponential() {
    let t = 3.0;
    let cfg = McConfig::new(t, f64::INFINITY, 20_000, 23);
    let est = estimate_prob(&cfg).unwrap();
    assert_eq!(est.hits, est.replicas);
    let summary = summarize_conditional(&est, t, 10).unwrap();
    let n = est.cond_tau_samples.len() as f64;
    let norm = -(-t).exp_m1();
    let bins = summary.tau_histogram.counts.len();
    let stat: f64 = summary
        .tau_histogram
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let (a, b) = (k as f64 / bins as f64, (k + 1) as f64 / bins as f64);
            let expect = n * ((-t * a).exp() - (-t * b).exp()) / norm;
            (c as f64 - expect).powi(2) / expect
        })
        .sum();
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "chi2 = {stat}, p = {p}");
    assert!((summary.unconditional_mean_tau_over_t - norm / t).abs() < 1e-15);
}

#[test]
fn median_maximum_tracks_the_typical_position() {
    let t = 10.0;
    let n = 300;
    let maxima: Vec<f64> = (0..n)
        .map(|i| simulate_with(t, &mut replica_rng(31, i), DEFAULT_POPULATION_CAP).unwrap().max_position)
        .collect();
    // F(t, median) = 1/2 from the FKPP solution
    let sol = solve(&FkppConfig::for_horizon(0.0, t).unwrap()).unwrap();
    let mut median = 5.0;
    while sol.query(t, median).unwrap() < -std::f64::consts::LN_2 {
        median += 0.005;
    }
    let below = maxima.iter().filter(|&&m| m <= median).count() as f64 / n as f64;
    assert!((below - 0.5).abs() <= 3.0 * (0.25 / n as f64).sqrt(), "{below}");
    // the gap to the two leading terms is the O(1) shift of the maximum
    let gap = typical_max(t).unwrap() - median;
    assert!(gap > 0.0 && gap < 2.0, "median {median}");
}

#[test]
fn estimates_do_not_depend_on_the_worker_count() {
    let cfg = McConfig::new(4.0, 0.0, 3000, 99);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| estimate_prob(&cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn hits_are_below_the_threshold() {
    let cfg = McConfig::new(3.0, 0.0, 2000, 4);
    let x = SQRT2 * cfg.alpha * cfg.t;
    for r in run_replicas(&cfg).unwrap() {
        let real = simulate_with(cfg.t, &mut replica_rng(cfg.seed, r.replica as u64), cfg.population_cap).unwrap();
        assert_eq!(r.hit, real.max_position <= x);
        if let Some(tau) = real.first_branch_time {
            assert!(tau <= cfg.t);
        }
        assert!(real.final_population >= 1);
    }
}

#[test]
fn estimate_agrees_with_the_fkpp_value_at_four() {
    let sol = solve(&FkppConfig::for_horizon(0.0, 4.0).unwrap()).unwrap();
    let oracle = sol.query(4.0, 0.0).unwrap().exp();
    let est = estimate_prob(&McConfig::new(4.0, 0.0, 100_000, 2024)).unwrap();
    assert!((est.p_hat - oracle).abs() <= 3.0 * est.std_err, "{} vs {oracle}", est.p_hat);
}

#[test]
fn decay_slope_is_in_the_expected_band() {
    let ts = [4.0, 6.0, 8.0];
    let lp: Vec<f64> = ts
        .iter()
        .map(|&t| estimate_prob(&McConfig::new(t, 0.0, 20_000, 8)).unwrap().p_hat.ln())
        .collect();
    let mean_t = ts.iter().sum::<f64>() / 3.0;
    let mean_l = lp.iter().sum::<f64>() / 3.0;
    let slope = -ts.iter().zip(&lp).map(|(t, l)| (t - mean_t) * (l - mean_l)).sum::<f64>()
        / ts.iter().map(|t| (t - mean_t).powi(2)).sum::<f64>();
    assert!(slope > 0.6 && slope < 1.2, "slope {slope}");
}

#[test]
fn estimator_fields_are_consistent() {
    let est = estimate_prob(&McConfig::new(4.0, 0.99, 5000, 1)).unwrap();
    assert!(est.p_hat > 0.0 && est.p_hat < 1.0);
    assert_eq!(est.p_hat, est.hits as f64 / est.replicas as f64);
    assert_eq!(est.std_err, (est.p_hat * (1.0 - est.p_hat) / est.replicas as f64).sqrt());
    assert!(est.cond_tau_samples.len() <= est.hits);
}
