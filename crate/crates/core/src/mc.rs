//! Direct simulation of binary branching Brownian motion with rate-one
//! exponential lifetimes.
//!
//! Replica `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, so
//! results do not depend on how rayon schedules the replicas.

use std::io::Write;

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::SQRT2;

pub const DEFAULT_POPULATION_CAP: usize = 1_000_000;
pub const DEFAULT_MAX_T: f64 = 12.0;
/// Hits with a first branch needed before a conditional summary is reported.
pub const MIN_CONDITIONAL_HITS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub t: f64,
    /// Event threshold slope; `+∞` conditions on nothing.
    pub alpha: f64,
    pub replicas: usize,
    pub seed: u64,
    pub population_cap: usize,
    /// Largest horizon accepted by the estimators.
    pub max_t: f64,
}

impl McConfig {
    pub fn new(t: f64, alpha: f64, replicas: usize, seed: u64) -> Self {
        Self { t, alpha, replicas, seed, population_cap: DEFAULT_POPULATION_CAP, max_t: DEFAULT_MAX_T }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.t)));
        }
        if self.t > self.max_t {
            return Err(Error::Config(format!(
                "t = {} exceeds the compute guard {}; raise max_t explicitly",
                self.t, self.max_t
            )));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.alpha.is_nan() {
            return Err(Error::Config("alpha is NaN".into()));
        }
        Ok(())
    }

    /// `√2αt`, or `+∞` for the unconditional sentinel.
    pub fn threshold(&self) -> f64 {
        if self.alpha == f64::INFINITY {
            f64::INFINITY
        } else {
            SQRT2 * self.alpha * self.t
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub max_position: f64,
    pub first_branch_time: Option<f64>,
    pub first_branch_location: Option<f64>,
    pub final_population: usize,
}

/// Runs one tree up to time `t`.
pub fn simulate_with<R: Rng>(t: f64, rng: &mut R, population_cap: usize) -> Result<Realization> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {t}")));
    }
    // (birth time, birth position)
    let mut stack: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut first: Option<(f64, f64)> = None;
    let mut max_position = f64::NEG_INFINITY;
    let mut population = 0usize;
    while let Some((born, pos)) = stack.pop() {
        let life: f64 = rng.sample(Exp1);
        let z: f64 = rng.sample(StandardNormal);
        if born + life >= t {
            let end = pos + z * (t - born).sqrt();
            max_position = max_position.max(end);
            population += 1;
            if population + stack.len() > population_cap {
                return Err(Error::PopulationCap { cap: population_cap });
            }
        } else {
            let death = born + life;
            let at = pos + z * life.sqrt();
            if first.is_none() {
                first = Some((death, at));
            }
            stack.push((death, at));
            stack.push((death, at));
            if population + stack.len() > population_cap {
                return Err(Error::PopulationCap { cap: population_cap });
            }
        }
    }
    Ok(Realization {
        max_position,
        first_branch_time: first.map(|f| f.0),
        first_branch_location: first.map(|f| f.1),
        final_population: population,
    })
}

/// Generator of replica `replica`: stream `replica` of `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// One realisation on stream 0 of `seed`.
pub fn simulate(t: f64, seed: u64) -> Result<Realization> {
    simulate_with(t, &mut replica_rng(seed, 0), DEFAULT_POPULATION_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: usize,
    pub hit: bool,
    pub tau_over_t: Option<f64>,
    pub y_over_t: Option<f64>,
}

/// Every replica's event indicator and first-branch point, in replica order.
pub fn run_replicas(cfg: &McConfig) -> Result<Vec<ReplicaRecord>> {
    cfg.validate()?;
    let x = cfg.threshold();
    (0..cfg.replicas)
        .into_par_iter()
        .map(|i| {
            let r = simulate_with(cfg.t, &mut replica_rng(cfg.seed, i as u64), cfg.population_cap)?;
            Ok(ReplicaRecord {
                replica: i,
                hit: r.max_position <= x,
                tau_over_t: r.first_branch_time.map(|v| v / cfg.t),
                y_over_t: r.first_branch_location.map(|v| v / cfg.t),
            })
        })
        .collect()
}

pub fn write_records_csv<W: Write>(records: &[ReplicaRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "replica,hit,tau_over_t,y_over_t")?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        writeln!(w, "{},{},{},{}", r.replica, u8::from(r.hit), opt(r.tau_over_t), opt(r.y_over_t))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub hits: usize,
    pub replicas: usize,
    /// `τ/t` of hits that branched before `t`.
    pub cond_tau_samples: Vec<f64>,
    pub cond_y_samples: Vec<f64>,
}

impl McEstimate {
    pub fn from_records(records: &[ReplicaRecord]) -> Self {
        let replicas = records.len();
        let hits = records.iter().filter(|r| r.hit).count();
        let p_hat = hits as f64 / replicas.max(1) as f64;
        let mut cond_tau_samples = Vec::new();
        let mut cond_y_samples = Vec::new();
        for r in records.iter().filter(|r| r.hit) {
            if let (Some(tau), Some(y)) = (r.tau_over_t, r.y_over_t) {
                cond_tau_samples.push(tau);
                cond_y_samples.push(y);
            }
        }
        Self {
            p_hat,
            std_err: (p_hat * (1.0 - p_hat) / replicas.max(1) as f64).sqrt(),
            hits,
            replicas,
            cond_tau_samples,
            cond_y_samples,
        }
    }
}

/// Fraction of replicas with `X_max(t) <= √2αt`.
pub fn estimate_prob(cfg: &McConfig) -> Result<McEstimate> {
    Ok(McEstimate::from_records(&run_replicas(cfg)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &s in samples {
            if s >= lo && s <= hi {
                let k = (((s - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
        }
        Self { lo, hi, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSummary {
    pub hits: usize,
    pub samples: usize,
    pub mean_tau_over_t: f64,
    pub mean_y_over_t: f64,
    /// `E[(τ∧t)/t] = (1 − e^{−t})/t` without conditioning.
    pub unconditional_mean_tau_over_t: f64,
    pub tau_histogram: Histogram,
    pub y_histogram: Histogram,
}

pub fn summarize_conditional(est: &McEstimate, t: f64, bins: usize) -> Result<ConditionalSummary> {
    let n = est.cond_tau_samples.len();
    if n < MIN_CONDITIONAL_HITS {
        return Err(Error::TooFewHits { hits: n, needed: MIN_CONDITIONAL_HITS });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ylo, yhi) = est
        .cond_y_samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    Ok(ConditionalSummary {
        hits: est.hits,
        samples: n,
        mean_tau_over_t: mean(&est.cond_tau_samples),
        mean_y_over_t: mean(&est.cond_y_samples),
        unconditional_mean_tau_over_t: -(-t).exp_m1() / t,
        tau_histogram: Histogram::build(&est.cond_tau_samples, 0.0, 1.0, bins.max(1)),
        y_histogram: Histogram::build(&est.cond_y_samples, ylo, yhi.max(ylo + 1e-12), bins.max(1)),
    })
}

/// First-branch statistics among replicas that realise the event.
pub fn conditional_first_branch(cfg: &McConfig) -> Result<ConditionalSummary> {
    summarize_conditional(&estimate_prob(cfg)?, cfg.t, 20)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationReport {
    pub t: f64,
    pub replicas: usize,
    pub mean: f64,
    pub variance: f64,
    pub expected_mean: f64,
    pub expected_variance: f64,
    pub mean_z: f64,
    pub variance_z: f64,
    /// Either moment is more than 4 standard errors from its Yule value.
    pub flagged: bool,
}

/// Compares the sample moments of `n(t)` with `e^t` and `e^t(e^t − 1)`.
pub fn sanity_population(t: f64, replicas: usize, seed: u64) -> Result<PopulationReport> {
    if !(t > 0.0 && t <= 10.0) {
        return Err(Error::Domain(format!("sanity_population requires 0 < t <= 10, got {t}")));
    }
    if replicas < 2 {
        return Err(Error::Domain("sanity_population needs at least 2 replicas".into()));
    }
    let sizes: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            simulate_with(t, &mut replica_rng(seed, i as u64), DEFAULT_POPULATION_CAP).map(|r| r.final_population as f64)
        })
        .collect::<Result<_>>()?;
    let n = replicas as f64;
    let mean = sizes.iter().sum::<f64>() / n;
    let m2 = sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let m4 = sizes.iter().map(|s| (s - mean).powi(4)).sum::<f64>() / n;
    let variance = m2 * n / (n - 1.0);
    let expected_mean = t.exp();
    let expected_variance = t.exp() * t.exp_m1();
    let mean_z = (mean - expected_mean) / (variance / n).sqrt();
    let variance_z = (variance - expected_variance) / ((m4 - m2 * m2).max(0.0) / n).sqrt();
    let mean_z = if mean_z.is_nan() { 0.0 } else { mean_z };
    let variance_z = if variance_z.is_nan() { 0.0 } else { variance_z };
    Ok(PopulationReport {
        t,
        replicas,
        mean,
        variance,
        expected_mean,
        expected_variance,
        mean_z,
        variance_z,
        flagged: mean_z.abs() > 4.0 || variance_z.abs() > 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulation_is_reproducible() {
        let a = simulate(5.0, 42).unwrap();
        let b = simulate(5.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.final_population >= 1);
        if let Some(tau) = a.first_branch_time {
            assert!(tau <= 5.0);
        }
    }

    #[test]
    fn population_cap_is_enforced() {
        let mut rng = replica_rng(1, 0);
        let err = simulate_with(12.0, &mut rng, 50).unwrap_err();
        assert_eq!(err, Error::PopulationCap { cap: 50 });
    }

    #[test]
    fn guard_rejects_long_horizons() {
        assert!(estimate_prob(&McConfig::new(13.0, 0.0, 10, 0)).is_err());
        assert!(estimate_prob(&McConfig::new(1.0, 0.0, 0, 0)).is_err());
    }

    #[test]
    fn hits_respect_the_threshold() {
        let cfg = McConfig::new(4.0, 0.99, 2000, 3);
        let est = estimate_prob(&cfg).unwrap();
        assert!(est.p_hat > 0.0 && est.p_hat < 1.0);
        assert_eq!(est.p_hat, est.hits as f64 / est.replicas as f64);
        assert!((est.std_err - (est.p_hat * (1.0 - est.p_hat) / 2000.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn small_population_mean() {
        let rep = sanity_population(0.1, 20_000, 9).unwrap();
        assert!((rep.expected_mean - 1.105_170_918_075_647_7).abs() < 1e-12);
        assert!((rep.mean - 1.105).abs() < 0.01);
        assert!(!rep.flagged);
    }

    #[test]
    fn too_few_hits_is_reported() {
        let cfg = McConfig::new(3.0, -1.0, 200, 1);
        assert!(matches!(conditional_first_branch(&cfg), Err(Error::TooFewHits { .. })));
    }

    #[test]
    fn csv_has_one_row_per_replica() {
        let recs = run_replicas(&McConfig::new(2.0, 0.5, 25, 8)).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 26);
    }
}
