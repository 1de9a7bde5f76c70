//! Log-domain solver for `F_t = ½F_xx + F² − F`, `F(0, x) = 1{x >= 0}`.
//!
//! `F(t, x) = P(X_max(t) <= x)`. The solver stores `g = ln F` so that the
//! far lower tail, where `F` is far below the smallest double, keeps full
//! relative accuracy.
//!
//! Each step applies the exact logistic reaction flow followed by one
//! explicit diffusion step. The diffusion step is the centred three-point
//! scheme for `F` written in log form,
//!
//! ```text
//! g_i ← LSE(ln(1−r) + g_i, ln(r/2) + g_{i−1}, ln(r/2) + g_{i+1}),  r = dt/dx²
//! ```
//!
//! which is monotone for `r <= 1` and handles `g = −∞` cells exactly.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{slope_fit, SlopeFit};
use crate::error::{Error, Result};
use crate::rates::SQRT2;

/// Largest number of stored snapshots chosen by [`FkppConfig::for_horizon`].
pub const MAX_SNAPSHOTS: usize = 2000;
const INSTABILITY_TOL: f64 = 1e-9;
const PAR_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkppConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
}

impl FkppConfig {
    /// Default grid for reading `F(t, √2αt)` with `t <= t_end` for every
    /// slope in `[alpha, 1]`.
    pub fn for_horizon(alpha: f64, t_end: f64) -> Result<Self> {
        Self::for_horizon_with(alpha, t_end, 0.05)
    }

    pub fn for_horizon_with(alpha: f64, t_end: f64, dx: f64) -> Result<Self> {
        if !(t_end > 0.0) || !alpha.is_finite() || !(dx > 0.0) {
            return Err(Error::Config(format!("invalid horizon t_end={t_end}, alpha={alpha}, dx={dx}")));
        }
        let pad = 12.0 * t_end.sqrt();
        let dt = dx * dx / 4.0;
        let steps = (t_end / dt).ceil() as usize;
        let cfg = Self {
            // node-aligned so the initial step sits on x = 0
            x_min: (((SQRT2 * alpha * t_end).min(0.0) - pad) / dx).floor() * dx,
            x_max: ((SQRT2 * t_end + pad) / dx).ceil() * dx,
            dx,
            dt,
            t_end,
            snapshot_stride: steps.div_ceil(MAX_SNAPSHOTS).max(1),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.x_min < 0.0 && 0.0 < self.x_max) {
            return bad(format!("need x_min < 0 < x_max, got [{}, {}]", self.x_min, self.x_max));
        }
        if !(self.dx > 0.0) || !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return bad("dx, dt and t_end must be positive".into());
        }
        if self.dt > self.dx * self.dx / 2.0 {
            return bad(format!("dt = {} exceeds dx²/2 = {}", self.dt, self.dx * self.dx / 2.0));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1".into());
        }
        if self.cells() < 3 {
            return bad("grid needs at least 3 cells".into());
        }
        Ok(())
    }

    fn cells(&self) -> usize {
        ((self.x_max - self.x_min) / self.dx).round() as usize + 1
    }

    /// Parses `key = value` lines; `#` starts a comment. Missing keys are an
    /// error.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut vals: [Option<f64>; 6] = [None; 6];
        const KEYS: [&str; 6] = ["x_min", "x_max", "dx", "dt", "t_end", "snapshot_stride"];
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            let idx = KEYS
                .iter()
                .position(|&key| key == k)
                .ok_or_else(|| Error::Config(format!("line {}: unknown key '{k}'", n + 1)))?;
            let v = f64::from_str(v.trim())
                .map_err(|e| Error::Config(format!("line {}: bad value for {k}: {e}", n + 1)))?;
            vals[idx] = Some(v);
        }
        let get = |i: usize| vals[i].ok_or_else(|| Error::Config(format!("missing key '{}'", KEYS[i])));
        let stride = get(5)?;
        if stride < 1.0 || stride.fract() != 0.0 {
            return Err(Error::Config(format!("snapshot_stride must be a positive integer, got {stride}")));
        }
        let cfg = Self {
            x_min: get(0)?,
            x_max: get(1)?,
            dx: get(2)?,
            dt: get(3)?,
            t_end: get(4)?,
            snapshot_stride: stride as usize,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "x_min = {}\nx_max = {}\ndx = {}\ndt = {}\nt_end = {}\nsnapshot_stride = {}\n",
            self.x_min, self.x_max, self.dx, self.dt, self.t_end, self.snapshot_stride
        )
    }
}

/// Stored `ln F` on a uniform space grid at the snapshot times.
#[derive(Debug, Clone)]
pub struct FkppSolution {
    config: FkppConfig,
    times: Vec<f64>,
    nx: usize,
    /// Snapshot-major `ln F` values.
    data: Vec<f64>,
}

fn log_sum3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

pub fn solve(cfg: &FkppConfig) -> Result<FkppSolution> {
    cfg.validate()?;
    let nx = cfg.cells();
    let stride = cfg.snapshot_stride;
    let n_snap = ((cfg.t_end / cfg.dt).ceil() as usize).div_ceil(stride);
    let steps = n_snap * stride;
    let dt = cfg.t_end / steps as f64;
    let r = dt / (cfg.dx * cfg.dx);
    let (ln_stay, ln_move) = ((1.0 - r).ln(), (0.5 * r).ln());
    let decay = -(-dt).exp_m1(); // 1 − e^{−dt}

    // a node sitting on the jump takes the midpoint value 1/2
    let mut g: Vec<f64> = (0..nx)
        .map(|i| {
            let x = cfg.x_min + i as f64 * cfg.dx;
            if x.abs() <= 1e-9 * cfg.dx {
                -std::f64::consts::LN_2
            } else if x > 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut next = vec![0.0; nx];
    let mut data = Vec::with_capacity((n_snap + 1) * nx);
    let mut times = Vec::with_capacity(n_snap + 1);
    data.extend_from_slice(&g);
    times.push(0.0);

    for step in 1..=steps {
        // reaction: F ← F / (F + (1 − F)e^{dt})
        g.par_chunks_mut(PAR_CHUNK).for_each(|chunk| {
            for v in chunk {
                if *v > f64::NEG_INFINITY {
                    *v = *v - dt - (-(v.exp()) * decay).ln_1p();
                }
            }
        });
        // diffusion on the interior
        {
            let src = &g;
            next[1..nx - 1].par_chunks_mut(PAR_CHUNK).enumerate().for_each(|(c, chunk)| {
                let base = 1 + c * PAR_CHUNK;
                for (k, out) in chunk.iter_mut().enumerate() {
                    let i = base + k;
                    *out = log_sum3(ln_stay + src[i], ln_move + src[i - 1], ln_move + src[i + 1]);
                }
            });
        }
        next[0] = if next[1] > f64::NEG_INFINITY && next[2] > f64::NEG_INFINITY {
            2.0 * next[1] - next[2]
        } else {
            f64::NEG_INFINITY
        };
        next[nx - 1] = 0.0;
        std::mem::swap(&mut g, &mut next);

        if let Some(i) = g.iter().position(|v| v.is_nan() || *v > INSTABILITY_TOL) {
            return Err(Error::Instability {
                step,
                time: step as f64 * dt,
                detail: format!("ln F = {} at x = {}", g[i], cfg.x_min + i as f64 * cfg.dx),
            });
        }
        if step % stride == 0 {
            data.extend_from_slice(&g);
            times.push(step as f64 * dt);
        }
    }
    Ok(FkppSolution { config: *cfg, times, nx, data })
}

impl FkppSolution {
    pub fn config(&self) -> &FkppConfig {
        &self.config
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn x_at(&self, i: usize) -> f64 {
        self.config.x_min + i as f64 * self.config.dx
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nx).map(|i| self.x_at(i))
    }

    /// `ln F` at snapshot `k`.
    pub fn snapshot(&self, k: usize) -> &[f64] {
        &self.data[k * self.nx..(k + 1) * self.nx]
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.config.x_min, self.x_at(self.nx - 1))
    }

    /// Bilinear interpolation of `ln F` in `(t, x)`. Corners with zero weight
    /// are ignored so that `−∞` cells do not poison exact node queries.
    pub fn query(&self, t: f64, x: f64) -> Result<f64> {
        let t_end = *self.times.last().unwrap_or(&0.0);
        let (x_lo, x_hi) = self.x_range();
        if !(t >= 0.0 && t <= t_end) || !(x >= x_lo && x <= x_hi) {
            return Err(Error::OutOfGrid(format!(
                "(t={t}, x={x}) outside [0, {t_end}] × [{x_lo}, {x_hi}]"
            )));
        }
        let dts = self.times.get(1).copied().unwrap_or(1.0);
        let ft = t / dts;
        let k = (ft.floor() as usize).min(self.times.len().saturating_sub(2));
        let wt = (ft - k as f64).clamp(0.0, 1.0);
        let fx = (x - x_lo) / self.config.dx;
        let i = (fx.floor() as usize).min(self.nx - 2);
        let wx = (fx - i as f64).clamp(0.0, 1.0);
        let mut acc = 0.0;
        for (dk, w_t) in [(0, 1.0 - wt), (1, wt)] {
            if w_t == 0.0 || k + dk >= self.times.len() {
                continue;
            }
            let row = self.snapshot(k + dk);
            for (di, w_x) in [(0, 1.0 - wx), (1, wx)] {
                let w = w_t * w_x;
                if w == 0.0 {
                    continue;
                }
                acc += w * row[i + di];
            }
        }
        Ok(acc)
    }

    /// Writes `t,x,ln_f` rows, keeping every `t_stride`-th snapshot and every
    /// `x_stride`-th cell.
    pub fn write_csv<W: Write>(&self, mut w: W, t_stride: usize, x_stride: usize) -> std::io::Result<()> {
        writeln!(w, "t,x,ln_f")?;
        for k in (0..self.times.len()).step_by(t_stride.max(1)) {
            let row = self.snapshot(k);
            for i in (0..self.nx).step_by(x_stride.max(1)) {
                writeln!(w, "{},{},{}", self.times[k], self.x_at(i), row[i])?;
            }
        }
        Ok(())
    }
}

/// Fit of `−ln F(t, √2αt) = ψ̂t + c·ln t + d`.
pub fn slope_estimate_from(sol: &FkppSolution, alpha: f64, t_list: &[f64]) -> Result<SlopeFit> {
    let mut ln_p = Vec::with_capacity(t_list.len());
    for &t in t_list {
        ln_p.push(sol.query(t, SQRT2 * alpha * t)?);
    }
    slope_fit(t_list, &ln_p)
}

/// Solves on `cfg` and fits the decay rate of `F(t, √2αt)` over `t_list`.
pub fn slope_estimate(alpha: f64, t_list: &[f64], cfg: &FkppConfig) -> Result<SlopeFit> {
    if t_list.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 times, got {}", t_list.len())));
    }
    let t_max = t_list.iter().copied().fold(0.0, f64::max);
    if t_max > cfg.t_end {
        return Err(Error::OutOfGrid(format!("t = {t_max} beyond t_end = {}", cfg.t_end)));
    }
    let sol = solve(cfg)?;
    slope_estimate_from(&sol, alpha, t_list)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{log_ndtr, ndtr};

    fn small() -> FkppSolution {
        let cfg = FkppConfig::for_horizon_with(-0.5, 4.0, 0.1).unwrap();
        solve(&cfg).unwrap()
    }

    #[test]
    fn stored_nodes_are_returned_exactly() {
        let sol = small();
        let k = sol.times().len() / 2;
        let t = sol.times()[k];
        for i in [5, 100, 200] {
            assert_eq!(sol.query(t, sol.x_at(i)).unwrap(), sol.snapshot(k)[i]);
        }
        let (_, x_hi) = sol.x_range();
        assert_eq!(sol.query(4.0, x_hi).unwrap(), 0.0);
        assert!(sol.query(4.5, 0.0).is_err());
        assert!(sol.query(1.0, x_hi + 1.0).is_err());
    }

    #[test]
    fn solution_is_a_log_cdf() {
        let sol = small();
        for k in 0..sol.times().len() {
            let row = sol.snapshot(k);
            assert!(row.iter().all(|&v| v <= 0.0));
            assert!(row.windows(2).all(|w| w[0] <= w[1] + 1e-12), "not monotone at snapshot {k}");
            assert!(*row.last().unwrap() >= -1e-6);
        }
    }

    #[test]
    fn initial_snapshot_is_a_step() {
        let sol = small();
        let row = sol.snapshot(0);
        for (i, x) in sol.xs().enumerate() {
            if x < -sol.config().dx {
                assert_eq!(row[i], f64::NEG_INFINITY);
            } else if x > sol.config().dx {
                assert_eq!(row[i], 0.0);
            }
        }
    }

    #[test]
    fn respects_moment_bounds_in_the_bulk() {
        let sol = small();
        let k = sol.times().len() - 1;
        let t = sol.times()[k];
        for (i, x) in sol.xs().enumerate() {
            let g = sol.snapshot(k)[i];
            let lower = -t + log_ndtr(x / t.sqrt());
            if lower > -30.0 {
                assert!(g >= lower - 1e-3, "x={x}: {g} < {lower}");
            }
            let upper_tail = t.exp() * (1.0 - ndtr(x / t.sqrt()));
            // the log-domain update leaves ~1e-12 absolute noise next to ln F = 0
            assert!(-g.exp_m1() <= upper_tail * (1.0 + 1e-3) + 1e-10, "x={x}");
        }
    }

    #[test]
    fn config_round_trips_through_key_value_text() {
        let cfg = FkppConfig::for_horizon(0.0, 10.0).unwrap();
        let back = FkppConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(cfg, back);
        assert!(FkppConfig::from_kv_str("x_min = -1\n").is_err());
        assert!(FkppConfig::from_kv_str("bogus = 1\n").is_err());
        let unstable = "x_min=-5\nx_max=5\ndx=0.1\ndt=0.1\nt_end=1\nsnapshot_stride=1";
        assert!(matches!(FkppConfig::from_kv_str(unstable), Err(Error::Config(_))));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let sol = small();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf, 100, 50).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,ln_f"));
        assert!(lines.count() > 10);
    }
}
