//! Figure data: rate curves along one parameter, with a flagged row at every
//! regime boundary.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{branch, regime_boundaries, Boundary, QueryParams, Region, SweepVar, Theorem};

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a comma
/// separated list. The empty string is the empty grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number '{}' in grid '{text}'", s.trim())))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("grid '{text}' is not start:stop:step")));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
            return Err(Error::Config(format!("grid '{text}' needs finite bounds and a positive step")));
        }
        if stop < start {
            return Ok(Vec::new());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        if n > 10_000_000 {
            return Err(Error::Config(format!("grid '{text}' has too many points")));
        }
        // k·step rather than repeated addition keeps nodes on the lattice
        Ok((0..=n).map(|k| if k == n && ((start + k as f64 * step) - stop).abs() < 1e-9 * step { stop } else { start + k as f64 * step }).collect())
    } else {
        text.split(',').map(num).collect()
    }
}

/// One row of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theorem: Theorem,
    pub var: SweepVar,
    /// Value of the swept parameter.
    pub x: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub value: f64,
    pub case_index: u8,
    pub region: Region,
    pub tau_over_t: f64,
    pub y_over_t: f64,
    /// Row inserted at a regime boundary.
    pub boundary: bool,
    /// At boundary rows, difference of the two adjacent branch formulas.
    pub jump: f64,
}

fn place(var: SweepVar, x: f64, alpha: f64, gamma: f64, beta: f64) -> (f64, f64, f64) {
    match var {
        SweepVar::Alpha => (x, gamma, beta),
        SweepVar::Gamma => (alpha, x, beta),
        SweepVar::Beta => (alpha, gamma, x),
    }
}

fn row(theorem: Theorem, var: SweepVar, x: f64, alpha: f64, gamma: f64, beta: f64) -> Result<SweepRow> {
    let (a, g, b) = place(var, x, alpha, gamma, beta);
    let ev = QueryParams::new(a, g, b).evaluate(theorem)?;
    Ok(SweepRow {
        theorem,
        var,
        x,
        alpha: a,
        gamma: g,
        beta: b,
        value: ev.value,
        case_index: ev.regime.case_index,
        region: ev.regime.region,
        tau_over_t: ev.opt_tau_fraction,
        y_over_t: ev.opt_loc_coeff,
        boundary: false,
        jump: 0.0,
    })
}

/// Evaluates `theorem` along `grid` in `var`, the other two parameters held
/// fixed, and inserts a flagged row at every regime boundary inside the grid
/// range. Grid points outside the rate's domain are skipped; if every point
/// is outside, the first domain error is returned.
pub fn sweep(theorem: Theorem, var: SweepVar, alpha: f64, gamma: f64, beta: f64, grid: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(grid.len() + 4);
    let mut first_err = None;
    for &x in grid {
        match row(theorem, var, x, alpha, gamma, beta) {
            Ok(r) => rows.push(r),
            Err(e @ Error::Domain(_)) => {
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return match first_err {
            Some(e) => Err(e),
            None => Ok(rows),
        };
    }
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for Boundary { at, lower_case, upper_case } in regime_boundaries(theorem, var, alpha, gamma, beta)? {
        if at < lo || at > hi {
            continue;
        }
        let (a, g, b) = place(var, at, alpha, gamma, beta);
        let mut r = row(theorem, var, at, alpha, gamma, beta)?;
        r.boundary = true;
        r.jump = branch(theorem, upper_case, a, g, b)?.0 - branch(theorem, lower_case, a, g, b)?.0;
        rows.push(r);
    }
    rows.sort_by(|p, q| p.x.total_cmp(&q.x).then(q.boundary.cmp(&p.boundary)));
    Ok(rows)
}

pub const CSV_HEADER: &str = "theorem,var,x,alpha,gamma,beta,value,case,region,tau_over_t,y_over_t,boundary,jump";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        let var = match r.var {
            SweepVar::Alpha => "alpha",
            SweepVar::Gamma => "gamma",
            SweepVar::Beta => "beta",
        };
        writeln!(
            w,
            "{},{var},{},{},{},{},{},{},{},{},{},{},{}",
            r.theorem,
            r.x,
            r.alpha,
            r.gamma,
            r.beta,
            r.value,
            r.case_index,
            r.region,
            r.tau_over_t,
            r.y_over_t,
            u8::from(r.boundary),
            r.jump
        )?;
    }
    Ok(())
}

/// A gnuplot script drawing the value and `y/t` columns of a sweep CSV.
pub fn gnuplot_script(csv_path: &str, title: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set multiplot layout 1,2 title '{title}'\n\
         plot '{csv_path}' using 3:7 with lines title 'rate', \\\n     '' using 3:($12==1 ? $7 : 1/0) with points pt 7 title 'boundary'\n\
         plot '{csv_path}' using 3:11 with lines title 'y/t'\n\
         unset multiplot\n"
    )
}

/// A named figure panel: one curve of one rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub name: String,
    pub theorem: Theorem,
    pub var: SweepVar,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub grid: String,
}

/// Representative panels for each constrained rate.
pub fn standard_panels() -> Vec<Panel> {
    let p = |name: &str, theorem, var, alpha, gamma, beta, grid: &str| Panel {
        name: name.to_string(),
        theorem,
        var,
        alpha,
        gamma,
        beta,
        grid: grid.to_string(),
    };
    use SweepVar::*;
    use Theorem::*;
    vec![
        p("time_alpha_large", Time, Gamma, 0.2, 1.0, 0.0, "0.005:1:0.005"),
        p("time_alpha_middle", Time, Gamma, -0.6, 1.0, 0.0, "0.005:1:0.005"),
        p("time_alpha_small", Time, Gamma, -1.0, 1.0, 0.0, "0.005:1:0.005"),
        p("time_late_alpha_large", TimeLate, Gamma, 0.5, 1.0, 0.0, "0.005:1:0.005"),
        p("time_late_alpha_small", TimeLate, Gamma, -0.2, 1.0, 0.0, "0.005:1:0.005"),
        p("location_below_gamma_small", LocBelow, Beta, 0.5, 0.3, 1.0, "1:4:0.01"),
        p("location_below_gamma_large", LocBelow, Beta, 0.5, 0.8, 1.0, "1:4:0.01"),
        p("location_above_alpha_large", LocAbove, Beta, 0.5, 0.5, 0.0, "-3:1:0.01"),
        p("location_above_alpha_middle", LocAbove, Beta, -0.6, 0.8, 0.0, "-3:1:0.01"),
        p("location_above_alpha_small", LocAbove, Beta, -1.0, 0.3, 0.0, "-3:1:0.01"),
    ]
}

impl Panel {
    pub fn rows(&self) -> Result<Vec<SweepRow>> {
        sweep(self.theorem, self.var, self.alpha, self.gamma, self.beta, &parse_grid(&self.grid)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{thresholds, RHO};

    #[test]
    fn grids() {
        assert_eq!(parse_grid("").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_grid("1,2.5,-3").unwrap(), vec![1.0, 2.5, -3.0]);
        let g = parse_grid("0.01:1:0.01").unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(parse_grid("1:0:0.1").unwrap().is_empty());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn time_sweep_breakpoints() {
        let grid = parse_grid("0.01:1:0.01").unwrap();
        let rows = sweep(Theorem::Time, SweepVar::Gamma, -0.5, 1.0, 0.0, &grid).unwrap();
        let th = thresholds(-0.5, 0.5).unwrap();
        let at: Vec<f64> = rows.iter().filter(|r| r.boundary).map(|r| r.x).collect();
        assert_eq!(at, vec![th.t1, th.t2]);
        assert!(rows.iter().filter(|r| r.boundary).all(|r| r.jump.abs() <= 1e-12));
        assert_eq!(rows.len(), 102);
    }

    #[test]
    fn location_above_kink() {
        let grid = parse_grid("-3:1:0.01").unwrap();
        let rows = sweep(Theorem::LocAbove, SweepVar::Beta, -1.0, 0.3, 0.0, &grid).unwrap();
        let at: Vec<f64> = rows.iter().filter(|r| r.boundary).map(|r| r.x).collect();
        assert_eq!(at.len(), 1);
        assert!((at[0] + 0.769_230_769_230_769_2).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain_points_are_skipped() {
        let rows = sweep(Theorem::TimeLate, SweepVar::Gamma, 0.0, 1.0, 0.0, &[0.4, 0.8, 1.0]).unwrap();
        assert_eq!(rows.iter().filter(|r| !r.boundary).count(), 2);
        let err = sweep(Theorem::TimeLate, SweepVar::Gamma, 0.0, 1.0, 0.0, &[0.4]).unwrap_err();
        assert!(err.to_string().contains("psi2 requires gamma > (1-alpha)/sqrt2"));
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let rows = sweep(Theorem::Time, SweepVar::Gamma, 0.0, 1.0, 0.0, &[]).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn panels_evaluate() {
        for p in standard_panels() {
            let rows = p.rows().unwrap();
            assert!(!rows.is_empty(), "{}", p.name);
        }
        let mid = standard_panels().into_iter().find(|p| p.name == "location_above_alpha_middle").unwrap();
        let at: Vec<f64> = mid.rows().unwrap().iter().filter(|r| r.boundary).map(|r| r.x).collect();
        assert_eq!(at, vec![-RHO, thresholds(-0.6, 0.8).unwrap().beta2]);
    }
}
