use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use bbm_lowmax::decomposition::{self, DecompositionQuery, Mode};
use bbm_lowmax::figures::{self, parse_grid};
use bbm_lowmax::fkpp::{self, FkppConfig};
use bbm_lowmax::mc::{self, McConfig};
use bbm_lowmax::rates::{self, QueryParams, SweepVar, Theorem};
use bbm_lowmax::variational::constraint_for;
use bbm_lowmax::verify;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "bbmlab", version, about = "Rate functions and numerical checks for branching Brownian motion with a low maximum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    /// Output file; stdout when omitted. Relative paths land in BBM_LAB_OUT_DIR if set.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    #[arg(long, env = "BBM_LAB_OUT_DIR", hide_env_values = true)]
    out_dir: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one rate function.
    Eval {
        #[arg(long, default_value = "time")]
        theorem: Theorem,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        beta: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rate curve along one parameter given as a grid (start:stop:step or a comma list).
    Sweep {
        theorem: Theorem,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<String>,
        /// Also write a gnuplot script for the CSV to this path.
        #[arg(long)]
        plot_script: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write every standard figure panel as CSV plus a gnuplot script into a directory.
    Figures {
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        #[arg(long, env = "BBM_LAB_OUT_DIR", hide_env_values = true)]
        out_dir: Option<PathBuf>,
    },
    /// Run a verification suite; exits with status 1 if any check fails.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        tol: Option<f64>,
        /// Per-point oracle comparisons as JSON (oracle suite only).
        #[arg(long)]
        records: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit the decay rate of P(X_max(t) <= sqrt2 alpha t) from an FKPP solve.
    FkppSlope {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value = "10:40:5")]
        t: String,
        #[arg(long, default_value_t = 0.05)]
        dx: f64,
        /// key = value grid file; overrides --dx.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dump the solution as CSV to this path.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        dump_t_stride: usize,
        #[arg(long, default_value_t = 10)]
        dump_x_stride: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Constrained probabilities via the first-branching decomposition, with a rate fit.
    Decompose {
        #[arg(long, default_value = "time")]
        theorem: Theorem,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        #[arg(long, default_value = "10,20,30,40")]
        t: String,
        #[arg(long, default_value_t = decomposition::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.05)]
        dx: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Direct Monte Carlo of the branching tree.
    Simulate {
        /// Event slope; omit for no conditioning.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        replicas: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = mc::DEFAULT_POPULATION_CAP)]
        population_cap: usize,
        #[arg(long, default_value_t = mc::DEFAULT_MAX_T)]
        max_t: f64,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Per-replica CSV (replica, hit, tau_over_t, y_over_t).
        #[arg(long)]
        records: Option<PathBuf>,
        /// Report population moments against the Yule values instead.
        #[arg(long)]
        population: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Suite {
    Identities,
    Continuity,
    Oracle,
    Laplace,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Exact,
    Asymptotic,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Asymptotic => Mode::Asymptotic,
        }
    }
}

/// Distinguishes "ran, but a check failed" from errors.
enum Status {
    Ok,
    ChecksFailed,
}

fn resolve(path: &Path, out_dir: Option<&Path>) -> PathBuf {
    match out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn create(path: &Path, force: bool) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let f = opts.open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::AlreadyExists {
            anyhow!("{} exists; pass --force to overwrite", path.display())
        } else {
            anyhow!("opening {}: {e}", path.display())
        }
    })?;
    Ok(BufWriter::new(f))
}

impl OutputArgs {
    fn writer(&self) -> Result<Box<dyn Write>> {
        match &self.out {
            Some(p) => Ok(Box::new(create(&resolve(p, self.out_dir.as_deref()), self.force)?)),
            None => Ok(Box::new(io::stdout().lock())),
        }
    }

    fn side_file(&self, p: &Path) -> Result<BufWriter<File>> {
        create(&resolve(p, self.out_dir.as_deref()), self.force)
    }

    fn json<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut w = self.writer()?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// JSON, or CSV rows from `(header, rows)`.
    fn emit<T: Serialize>(&self, value: &T, header: &str, rows: &[String]) -> Result<()> {
        match self.format {
            Format::Json => self.json(value),
            Format::Csv => {
                let mut w = self.writer()?;
                writeln!(w, "{header}")?;
                for r in rows {
                    writeln!(w, "{r}")?;
                }
                w.flush()?;
                Ok(())
            }
        }
    }
}

fn opt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn eval(theorem: Theorem, alpha: f64, gamma: f64, beta: f64, output: &OutputArgs) -> Result<Status> {
    let ev = QueryParams::new(alpha, gamma, beta).evaluate(theorem)?;
    let row = format!(
        "{theorem},{alpha},{gamma},{beta},{},{},{},{},{}",
        ev.value, ev.regime.case_index, ev.regime.region, ev.opt_tau_fraction, ev.opt_loc_coeff
    );
    output.emit(&ev, "theorem,alpha,gamma,beta,value,case,region,tau_over_t,y_over_t", &[row])?;
    Ok(Status::Ok)
}

fn default_var(theorem: Theorem) -> SweepVar {
    match theorem {
        Theorem::Unconstrained => SweepVar::Alpha,
        Theorem::Time | Theorem::TimeLate => SweepVar::Gamma,
        Theorem::LocBelow | Theorem::LocAbove => SweepVar::Beta,
    }
}

fn sweep(
    theorem: Theorem,
    alpha: Option<&str>,
    gamma: Option<&str>,
    beta: Option<&str>,
    plot_script: Option<&Path>,
    output: &OutputArgs,
) -> Result<Status> {
    let is_grid = |s: &Option<&str>| s.is_some_and(|s| s.contains(':') || s.contains(','));
    let flagged: Vec<SweepVar> = [(SweepVar::Alpha, &alpha), (SweepVar::Gamma, &gamma), (SweepVar::Beta, &beta)]
        .into_iter()
        .filter(|(_, s)| is_grid(s))
        .map(|(v, _)| v)
        .collect();
    let var = match flagged.as_slice() {
        [] => default_var(theorem),
        [v] => *v,
        _ => bail!("only one of --alpha, --gamma, --beta may be a grid"),
    };
    let scalar = |name: &str, s: Option<&str>, default: f64| -> Result<f64> {
        match s {
            None => Ok(default),
            Some(s) => s.trim().parse().with_context(|| format!("--{name} expects a number, got '{s}'")),
        }
    };
    let text = match var {
        SweepVar::Alpha => alpha,
        SweepVar::Gamma => gamma,
        SweepVar::Beta => beta,
    }
    .ok_or_else(|| anyhow!("{theorem} sweeps need a grid for --{}", var_name(var)))?;
    let grid = parse_grid(text)?;
    let a = if var == SweepVar::Alpha { 0.0 } else { scalar("alpha", alpha, f64::NAN)? };
    if var != SweepVar::Alpha && a.is_nan() {
        bail!("--alpha is required");
    }
    let g = if var == SweepVar::Gamma { 1.0 } else { scalar("gamma", gamma, 1.0)? };
    let b = if var == SweepVar::Beta { 1.0 } else { scalar("beta", beta, 1.0)? };
    let rows = figures::sweep(theorem, var, a, g, b, &grid)?;
    match output.format {
        Format::Csv => {
            let mut w = output.writer()?;
            figures::write_sweep_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Format::Json => output.json(&rows)?,
    }
    if let Some(p) = plot_script {
        let csv = output.out.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "sweep.csv".into());
        let mut w = output.side_file(p)?;
        w.write_all(figures::gnuplot_script(&csv, &format!("{theorem}")).as_bytes())?;
        w.flush()?;
    }
    Ok(Status::Ok)
}

fn var_name(v: SweepVar) -> &'static str {
    match v {
        SweepVar::Alpha => "alpha",
        SweepVar::Gamma => "gamma",
        SweepVar::Beta => "beta",
    }
}

fn write_figures(dir: Option<&Path>, force: bool, out_dir: Option<&Path>) -> Result<Status> {
    let dir = match (dir, out_dir) {
        (Some(d), od) => resolve(d, od),
        (None, Some(od)) => od.to_path_buf(),
        (None, None) => bail!("give --dir or set BBM_LAB_OUT_DIR"),
    };
    for panel in figures::standard_panels() {
        let rows = panel.rows()?;
        let csv = dir.join(format!("{}.csv", panel.name));
        let mut w = create(&csv, force)?;
        figures::write_sweep_csv(&rows, &mut w)?;
        w.flush()?;
        let mut s = create(&dir.join(format!("{}.gp", panel.name)), force)?;
        s.write_all(figures::gnuplot_script(&format!("{}.csv", panel.name), &panel.name).as_bytes())?;
        s.flush()?;
        eprintln!("wrote {}", csv.display());
    }
    Ok(Status::Ok)
}

fn run_verify(
    suite: Suite,
    draws: usize,
    seed: u64,
    tol: Option<f64>,
    records: Option<&Path>,
    output: &OutputArgs,
) -> Result<Status> {
    let report = match suite {
        Suite::Identities => verify::identity_suite(draws, seed, tol.unwrap_or(1e-10)),
        Suite::Continuity => verify::continuity_suite(draws, seed, tol.unwrap_or(1e-10))?,
        Suite::Oracle => {
            let (report, recs) = verify::oracle_suite(tol.unwrap_or(1e-5))?;
            if let Some(p) = records {
                let mut w = output.side_file(p)?;
                serde_json::to_writer_pretty(&mut w, &recs)?;
                w.flush()?;
            }
            report
        }
        Suite::Laplace => verify::laplace_suite()?,
    };
    let rows: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{},{},{},{},{},{}", report.suite, c.name, c.count, c.worst_error, c.tol, c.pass))
        .collect();
    output.emit(&report, "suite,check,count,worst_error,tol,pass", &rows)?;
    Ok(if report.pass { Status::Ok } else { Status::ChecksFailed })
}

#[derive(Serialize)]
struct SlopeReport {
    alpha: f64,
    t: Vec<f64>,
    ln_prob: Vec<f64>,
    rate: f64,
    target: f64,
    relative_error: f64,
    log_coeff: f64,
    intercept: f64,
    residuals: Vec<f64>,
    rms_residual: f64,
}

#[allow(clippy::too_many_arguments)]
fn fkpp_slope(
    alpha: f64,
    t: &str,
    dx: f64,
    config: Option<&Path>,
    dump: Option<(&Path, usize, usize)>,
    output: &OutputArgs,
) -> Result<Status> {
    let ts = parse_grid(t)?;
    let t_max = ts.iter().copied().fold(f64::NAN, f64::max);
    if !t_max.is_finite() {
        bail!("--t must list at least one horizon");
    }
    let cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            FkppConfig::from_kv_str(&text)?
        }
        None => FkppConfig::for_horizon_with(alpha, t_max, dx)?,
    };
    let sol = fkpp::solve(&cfg)?;
    if let Some((p, ts_, xs_)) = dump {
        let mut w = output.side_file(p)?;
        sol.write_csv(&mut w, ts_, xs_)?;
        w.flush()?;
    }
    let fit = fkpp::slope_estimate_from(&sol, alpha, &ts)?;
    let ln_prob = ts.iter().map(|&t| sol.query(t, rates::SQRT2 * alpha * t)).collect::<bbm_lowmax::Result<Vec<_>>>()?;
    let target = rates::psi(alpha)?;
    let report = SlopeReport {
        alpha,
        t: ts.clone(),
        ln_prob: ln_prob.clone(),
        rate: fit.rate,
        target,
        relative_error: (fit.rate - target).abs() / target,
        log_coeff: fit.log_coeff,
        intercept: fit.intercept,
        residuals: fit.residuals.clone(),
        rms_residual: fit.rms_residual,
    };
    let rows: Vec<String> = ts
        .iter()
        .zip(&ln_prob)
        .map(|(t, l)| format!("{alpha},{t},{l},{}", -l / t))
        .collect();
    output.emit(&report, "alpha,t,ln_prob,minus_log_over_t", &rows)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct DecomposeReport {
    theorem: Theorem,
    alpha: f64,
    gamma: f64,
    beta: Option<f64>,
    mode: String,
    epsilon: f64,
    estimates: Vec<DecomposeRow>,
    fit: Option<decomposition::SlopeFit>,
    target: Option<f64>,
    relative_error: Option<f64>,
}

#[derive(Serialize)]
struct DecomposeRow {
    t: f64,
    ln_prob: f64,
    minus_log_over_t: f64,
    quadrature_error: f64,
}

#[allow(clippy::too_many_arguments)]
fn decompose(
    theorem: Theorem,
    alpha: f64,
    gamma: f64,
    beta: f64,
    mode: Mode,
    t: &str,
    epsilon: f64,
    dx: f64,
    output: &OutputArgs,
) -> Result<Status> {
    let ts = parse_grid(t)?;
    let t_max = ts.iter().copied().fold(f64::NAN, f64::max);
    if !t_max.is_finite() {
        bail!("--t must list at least one horizon");
    }
    // validates the parameters and gives the target rate
    let target = QueryParams::new(alpha, gamma, beta).evaluate(theorem)?.value;
    let spec = constraint_for(theorem, gamma, beta, epsilon);
    let sol = match mode {
        Mode::Exact => Some(fkpp::solve(&FkppConfig::for_horizon_with(alpha, t_max, dx)?)?),
        Mode::Asymptotic => None,
    };
    let mut estimates = Vec::with_capacity(ts.len());
    for &t in &ts {
        let e = decomposition::constrained_prob(&DecompositionQuery::new(alpha, t, spec, mode), sol.as_ref())?;
        estimates.push(DecomposeRow {
            t,
            ln_prob: e.ln_prob,
            minus_log_over_t: e.minus_log_over_t,
            quadrature_error: e.quadrature_error,
        });
    }
    let fit = if ts.len() >= 4 {
        Some(decomposition::slope_fit(&ts, &estimates.iter().map(|e| e.ln_prob).collect::<Vec<_>>())?)
    } else {
        None
    };
    let uses_beta = matches!(theorem, Theorem::LocBelow | Theorem::LocAbove);
    let rows: Vec<String> = estimates
        .iter()
        .map(|e| {
            format!(
                "{alpha},{gamma},{},{},{mode},{},{}",
                if uses_beta { opt_num(beta) } else { String::new() },
                e.t,
                e.ln_prob,
                e.minus_log_over_t
            )
        })
        .collect();
    let report = DecomposeReport {
        theorem,
        alpha,
        gamma,
        beta: uses_beta.then_some(beta),
        mode: mode.to_string(),
        epsilon,
        relative_error: fit.as_ref().map(|f| (f.rate - target).abs() / target),
        fit,
        target: Some(target),
        estimates,
    };
    output.emit(&report, "alpha,gamma,beta,t,mode,ln_prob,minus_log_over_t", &rows)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct SimulateReport {
    config: McConfig,
    p_hat: f64,
    std_err: f64,
    hits: usize,
    replicas: usize,
    conditional: Option<mc::ConditionalSummary>,
    note: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    alpha: Option<f64>,
    t: f64,
    replicas: usize,
    seed: u64,
    population_cap: usize,
    max_t: f64,
    bins: usize,
    records: Option<&Path>,
    population: bool,
    output: &OutputArgs,
) -> Result<Status> {
    if population {
        let rep = mc::sanity_population(t, replicas, seed)?;
        let row = format!(
            "{},{},{},{},{},{},{}",
            rep.t, rep.replicas, rep.mean, rep.variance, rep.expected_mean, rep.expected_variance, rep.flagged
        );
        output.emit(&rep, "t,replicas,mean,variance,expected_mean,expected_variance,flagged", &[row])?;
        return Ok(if rep.flagged { Status::ChecksFailed } else { Status::Ok });
    }
    let mut cfg = McConfig::new(t, alpha.unwrap_or(f64::INFINITY), replicas, seed);
    cfg.population_cap = population_cap;
    cfg.max_t = max_t;
    let recs = mc::run_replicas(&cfg)?;
    if let Some(p) = records {
        let mut w = output.side_file(p)?;
        mc::write_records_csv(&recs, &mut w)?;
        w.flush()?;
    }
    let est = mc::McEstimate::from_records(&recs);
    let (conditional, note) = match mc::summarize_conditional(&est, t, bins) {
        Ok(s) => (Some(s), None),
        Err(e @ bbm_lowmax::Error::TooFewHits { .. }) => {
            (None, Some(format!("{e}; raise --replicas or --alpha for a conditional summary")))
        }
        Err(e) => return Err(e.into()),
    };
    let row = format!("{},{},{},{},{},{}", t, opt_num(cfg.alpha), est.p_hat, est.std_err, est.hits, est.replicas);
    let report = SimulateReport {
        config: cfg,
        p_hat: est.p_hat,
        std_err: est.std_err,
        hits: est.hits,
        replicas: est.replicas,
        conditional,
        note,
    };
    output.emit(&report, "t,alpha,p_hat,std_err,hits,replicas", &[row])?;
    Ok(Status::Ok)
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Eval { theorem, alpha, gamma, beta, output } => eval(theorem, alpha, gamma, beta, &output),
        Command::Sweep { theorem, alpha, gamma, beta, plot_script, output } => sweep(
            theorem,
            alpha.as_deref(),
            gamma.as_deref(),
            beta.as_deref(),
            plot_script.as_deref(),
            &output,
        ),
        Command::Figures { dir, force, out_dir } => write_figures(dir.as_deref(), force, out_dir.as_deref()),
        Command::Verify { suite, draws, seed, tol, records, output } => {
            run_verify(suite, draws, seed, tol, records.as_deref(), &output)
        }
        Command::FkppSlope { alpha, t, dx, config, dump, dump_t_stride, dump_x_stride, output } => fkpp_slope(
            alpha,
            &t,
            dx,
            config.as_deref(),
            dump.as_deref().map(|p| (p, dump_t_stride, dump_x_stride)),
            &output,
        ),
        Command::Decompose { theorem, alpha, gamma, beta, mode, t, epsilon, dx, output } => {
            decompose(theorem, alpha, gamma, beta, mode.into(), &t, epsilon, dx, &output)
        }
        Command::Simulate {
            alpha,
            t,
            replicas,
            seed,
            population_cap,
            max_t,
            bins,
            records,
            population,
            output,
        } => simulate(alpha, t, replicas, seed, population_cap, max_t, bins, records.as_deref(), population, &output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
