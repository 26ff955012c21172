//! The `randlsv` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::random_system::{symbolic_orbit, SystemParams, RNG_ALGORITHM};
use crate::tower::{self, base_partition, pure_backward, tail_from_profile, ExpectationProfile, N_ENUM};
use crate::transfer::{
    annealed_matrix, correlation_mc, correlation_operator, local_exponent_near_zero, stationary_density,
    McCorrelationConfig, Observable, PartitionGrid,
};
use crate::verify::{self, fit_power_law, Suite, SuiteConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FORMAT: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "randlsv", version, about = "Random compositions of two LSV maps")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Exponent of the faster map (selected with probability p1)
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Exponent of the slower map
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Probability of the alpha map
    #[arg(long, global = true)]
    pub p1: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-identical reruns
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// key=value file supplying defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Orbit of the skew product
    Simulate(SimulateArgs),
    /// Base partition of the tower
    Tower(TowerArgs),
    /// E(x_n), the return-time tail and their exponents
    Asymptotics(AsymptoticsArgs),
    /// Stationary density of the annealed Ulam operator
    Density(DensityArgs),
    /// Correlation sequence, from the operator and by simulation
    Correlation(CorrelationArgs),
    /// Lemma checks
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TowerArgs {
    #[arg(long)]
    pub i_max: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AsymptoticsArgs {
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Monte Carlo paths beyond the enumeration limit
    #[arg(long)]
    pub samples: Option<usize>,
    /// Lower end of the fit windows
    #[arg(long)]
    pub fit_lo: Option<f64>,
    /// Expectation table; the tail table and JSON summary go next to it
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Uniform,
    Geometric,
}

#[derive(Debug, Args)]
pub struct GridOpts {
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, value_enum)]
    pub grid: Option<GridArg>,
    /// Exponent of the geometric grid (default max(2, 1/alpha))
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub grid: GridOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelationArgs {
    #[command(flatten)]
    pub grid: GridOpts,
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Observable evaluated at time n: x, cos2pi, indicator_right_half, one
    #[arg(long)]
    pub phi: Option<String>,
    /// Observable evaluated at time 0 (must be Holder)
    #[arg(long)]
    pub psi: Option<String>,
    /// Accept a non-Holder psi
    #[arg(long)]
    pub allow_irregular_psi: bool,
    /// Largest lag estimated by simulation (0 disables it)
    #[arg(long)]
    pub mc_n_max: Option<usize>,
    #[arg(long)]
    pub mc_chains: Option<usize>,
    #[arg(long)]
    pub mc_pairs: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub fit_lo: Option<f64>,
    #[arg(long)]
    pub fit_hi: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Domination,
    Bounds,
    K0,
    Hoeffding,
    Distortion,
    Schwarzian,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Domination => Suite::Domination,
            SuiteArg::Bounds => Suite::Bounds,
            SuiteArg::K0 => Suite::K0,
            SuiteArg::Hoeffding => Suite::Hoeffding,
            SuiteArg::Distortion => Suite::Distortion,
            SuiteArg::Schwarzian => Suite::Schwarzian,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: SuiteArg,
    /// Word length of the exhaustive checks
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub distortion_i_max: Option<usize>,
    #[arg(long)]
    pub distortion_pairs: Option<usize>,
    /// CSV of the distortion samples
    #[arg(long)]
    pub distortion_csv: Option<PathBuf>,
    /// JSON ledger (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::usage(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::usage(format!("json error: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `key=value` lines; `#` starts a comment. Keys use the long flag
/// names, with `_` and `-` interchangeable.
pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value", no + 1)))?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(rest));
        }
    }
    None
}

/// Appends `--key=value` for config entries the command line does not set.
fn merge_config(mut args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text)?;
    let cmd = Cli::command();
    let sub_name = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| cmd.find_subcommand(a).is_some());
    let mut known: Vec<(String, bool)> = Vec::new();
    let mut collect = |c: &clap::Command| {
        for a in c.get_arguments() {
            if let Some(l) = a.get_long() {
                let takes_value = !matches!(
                    a.get_action(),
                    clap::ArgAction::SetTrue | clap::ArgAction::SetFalse
                );
                known.push((l.to_string(), takes_value));
            }
        }
    };
    collect(&cmd);
    let all_subs: Vec<&clap::Command> = cmd.get_subcommands().collect();
    let active = sub_name.as_deref().and_then(|n| cmd.find_subcommand(n));
    if let Some(sub) = active {
        collect(sub);
    }
    let mut every: Vec<String> = known.iter().map(|k| k.0.clone()).collect();
    for sub in &all_subs {
        every.extend(sub.get_arguments().filter_map(|a| a.get_long().map(str::to_string)));
    }
    let present: Vec<String> = args
        .iter()
        .filter_map(|a| {
            let s = a.to_string_lossy();
            s.strip_prefix("--")
                .map(|r| r.split('=').next().unwrap_or("").to_string())
        })
        .collect();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        if !every.contains(&key) {
            return Err(CliError::usage(format!("unknown config key {key:?}")));
        }
        if present.contains(&key) {
            continue;
        }
        if let Some((_, takes_value)) = known.iter().find(|k| k.0 == key) {
            if *takes_value {
                args.push(format!("--{key}={value}").into());
            } else if matches!(value.as_str(), "true" | "1" | "yes") {
                args.push(format!("--{key}").into());
            }
        }
    }
    Ok(args)
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return e.code;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn system_params(g: &GlobalOpts) -> CliResult<SystemParams> {
    let alpha = g.alpha.unwrap_or(0.5);
    let beta = g.beta.unwrap_or(0.7);
    let p1 = g.p1.unwrap_or(0.6);
    let p = if beta <= 1.0 {
        SystemParams::strict(alpha, beta, p1)
    } else {
        SystemParams::new(alpha, beta, p1)
    };
    Ok(p?)
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    let p = system_params(&cli.global)?;
    let seed = cli.global.seed.unwrap_or(0);
    let threads = cli.global.threads;
    if threads == Some(0) {
        return Err(CliError::usage("--threads must be >= 1"));
    }
    let ctx = Ctx {
        p,
        seed,
        threads: threads.unwrap_or_else(rayon::current_num_threads),
        start: Instant::now(),
    };
    let job = move || match cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Tower(a) => cmd_tower(&ctx, a),
        Command::Asymptotics(a) => cmd_asymptotics(&ctx, a),
        Command::Density(a) => cmd_density(&ctx, a),
        Command::Correlation(a) => cmd_correlation(&ctx, a),
        Command::Verify(a) => cmd_verify(&ctx, a),
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

struct Ctx {
    p: SystemParams,
    seed: u64,
    threads: usize,
    start: Instant,
}

impl Ctx {
    fn header(&self, command: &str, extra: &[(&str, String)]) -> Vec<String> {
        let r = self.p.record();
        let mut h = vec![
            format!("format={FORMAT}"),
            format!("tool=randlsv {VERSION}"),
            format!("command={command}"),
            format!(
                "params alpha={} beta={} p1={} p2={} strict_regime={}",
                r.alpha, r.beta, r.p1, r.p2, r.strict_regime
            ),
            format!("seed={}", self.seed),
            format!("rng={RNG_ALGORITHM}"),
        ];
        h.extend(extra.iter().map(|(k, v)| format!("{k}={v}")));
        h
    }

    fn meta(&self, command: &str) -> serde_json::Value {
        json!({
            "format": FORMAT,
            "tool": "randlsv",
            "version": VERSION,
            "command": command,
            "params": self.p.record(),
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
            "threads": self.threads,
            "runtime_seconds": self.start.elapsed().as_secs_f64(),
        })
    }

    /// Writes the sidecar `<out>.meta.json` (or prints it to stderr).
    fn finish_csv(&self, command: &str, out: Option<&Path>, extra: serde_json::Value) -> CliResult<()> {
        let mut meta = self.meta(command);
        if let (Some(m), Some(e)) = (meta.as_object_mut(), extra.as_object()) {
            for (k, v) in e {
                m.insert(k.clone(), v.clone());
            }
        }
        match out {
            Some(path) => {
                let mut name = path.as_os_str().to_owned();
                name.push(".meta.json");
                fs::write(PathBuf::from(name), serde_json::to_string_pretty(&meta)? + "\n")?;
            }
            None => eprintln!("{}", serde_json::to_string(&meta)?),
        }
        Ok(())
    }
}

/// Real number with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct CsvOut {
    w: Box<dyn Write>,
}

impl CsvOut {
    fn create(path: Option<&Path>, header: &[String], columns: &[&str]) -> CliResult<Self> {
        let w: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|e| {
                CliError::usage(format!("cannot create {}: {e}", p.display()))
            })?)),
            None => Box::new(BufWriter::new(io::stdout())),
        };
        let mut c = CsvOut { w };
        for line in header {
            writeln!(c.w, "# {line}")?;
        }
        writeln!(c.w, "{}", columns.join(","))?;
        Ok(c)
    }

    fn row(&mut self, fields: &[String]) -> CliResult<()> {
        writeln!(self.w, "{}", fields.join(","))?;
        Ok(())
    }

    fn done(mut self) -> CliResult<()> {
        self.w.flush()?;
        Ok(())
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, a: SimulateArgs) -> CliResult<i32> {
    let x0 = a.x0.unwrap_or(0.3);
    let steps = a.steps.unwrap_or(1000);
    let rows = symbolic_orbit(x0, a.omega0, steps, ctx.seed, &ctx.p)?;
    let header = ctx.header(
        "simulate",
        &[
            ("x0", fmt_real(x0)),
            ("omega0", a.omega0.map_or("random".into(), fmt_real)),
            ("steps", steps.to_string()),
        ],
    );
    let mut csv = CsvOut::create(a.out.as_deref(), &header, &["step", "x", "omega", "symbol"])?;
    for (t, r) in rows.iter().enumerate() {
        csv.row(&[
            t.to_string(),
            fmt_real(r.x),
            fmt_real(r.omega),
            r.symbol.as_char().to_string(),
        ])?;
    }
    csv.done()?;
    ctx.finish_csv("simulate", a.out.as_deref(), json!({ "steps": steps }))?;
    Ok(EXIT_OK)
}

fn cmd_tower(ctx: &Ctx, a: TowerArgs) -> CliResult<i32> {
    let i_max = a.i_max.unwrap_or(4);
    if i_max == 0 || i_max > 20 {
        return Err(CliError::usage("--i-max must be in 1..=20"));
    }
    let cells = base_partition(i_max, &ctx.p)?;
    let header = ctx.header("tower", &[("i_max", i_max.to_string())]);
    let mut csv = CsvOut::create(
        a.out.as_deref(),
        &header,
        &["i", "j_word", "omega_lo", "omega_hi", "xprime_i", "xprime_im1"],
    )?;
    for c in &cells {
        csv.row(&[
            c.cell.i.to_string(),
            c.cell.word.to_string(),
            fmt_real(c.omega.lo),
            fmt_real(c.omega.hi),
            fmt_real(c.x_lo),
            fmt_real(c.x_hi),
        ])?;
    }
    csv.done()?;
    let total: f64 = cells.iter().map(|c| c.measure()).sum();
    ctx.finish_csv(
        "tower",
        a.out.as_deref(),
        json!({ "cells": cells.len(), "total_measure": total }),
    )?;
    Ok(EXIT_OK)
}

/// `n = 1..=n_max` thinned to about `per_decade` log-spaced values.
fn log_grid(lo: usize, hi: usize, per_decade: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if hi < lo || lo == 0 {
        return out;
    }
    let steps = ((hi as f64 / lo as f64).log10() * per_decade as f64).ceil() as usize;
    for k in 0..=steps {
        let n = (lo as f64 * 10f64.powf(k as f64 / per_decade as f64)).round() as usize;
        let n = n.clamp(lo, hi);
        if out.last() != Some(&n) {
            out.push(n);
        }
    }
    if out.last() != Some(&hi) {
        out.push(hi);
    }
    out
}

fn fit_json(fit: &Result<verify::PowerLawFit, Error>, expected: f64) -> serde_json::Value {
    match fit {
        Ok(f) => json!({
            "exponent": f.exponent,
            "stderr": f.stderr,
            "window": [f.window.0, f.window.1],
            "r_squared": f.r_squared,
            "n_points": f.n_points,
            "expected": expected,
        }),
        Err(e) => json!({ "error": e.to_string(), "expected": expected }),
    }
}

fn cmd_asymptotics(ctx: &Ctx, a: AsymptoticsArgs) -> CliResult<i32> {
    let n_max = a.n_max.unwrap_or(10_000);
    if n_max < 100 {
        return Err(CliError::usage("--n-max must be at least 100 for exponent fitting"));
    }
    let samples = a.samples.unwrap_or(tower::DEFAULT_MC_SAMPLES);
    if samples == 0 {
        return Err(CliError::usage("--samples must be positive"));
    }
    let fit_lo = a.fit_lo.unwrap_or(100.0);
    let p = &ctx.p;
    let alpha = p.alpha().gamma();

    let mc = tower::expectation_mc_profile(n_max, samples, ctx.seed, p);
    let profile = ExpectationProfile::from_mc(n_max, &mc, samples, ctx.seed, p)?;
    let xa = pure_backward(p.alpha(), n_max);
    let xb = pure_backward(p.beta(), n_max);

    let e_fit = fit_power_law(
        &(1..=n_max).map(|n| n as f64).collect::<Vec<_>>(),
        profile.values(),
        Some(&(1..=n_max).map(|n| profile.se(n)).collect::<Vec<_>>()),
        (fit_lo, n_max as f64),
    );
    let tail_grid = log_grid(1, n_max / 4, 40);
    let tail = tail_from_profile(&tail_grid, &profile, p)?;
    let tail_fit = fit_power_law(&tail.ns(), &tail.values(), None, (fit_lo.min(verify::DEFAULT_FIT_MIN_N), (n_max / 4) as f64));
    let er_full = profile.mean_return_time(n_max);
    let er_half = profile.mean_return_time(n_max / 2);

    let header = ctx.header(
        "asymptotics",
        &[
            ("n_max", n_max.to_string()),
            ("samples", samples.to_string()),
            ("n_enum", N_ENUM.to_string()),
        ],
    );
    let mut csv = CsvOut::create(
        a.out.as_deref(),
        &header,
        &["n", "E_exact", "E_mc", "se", "x_n_alpha", "x_n_beta"],
    )?;
    for n in log_grid(1, n_max, 40) {
        let exact = if n <= N_ENUM { fmt_real(profile.e(n)) } else { String::new() };
        csv.row(&[
            n.to_string(),
            exact,
            fmt_real(mc[n - 1].mean),
            fmt_real(mc[n - 1].se),
            fmt_real(xa[n - 1]),
            fmt_real(xb[n - 1]),
        ])?;
    }
    csv.done()?;

    if let Some(out) = a.out.as_deref() {
        let tail_path = sibling(out, ".tail.csv");
        let mut t = CsvOut::create(
            Some(&tail_path),
            &header,
            &["n", "tail", "k_max", "converged", "remainder_bound", "certified"],
        )?;
        for r in &tail.rows {
            t.row(&[
                r.n.to_string(),
                fmt_real(r.value),
                r.k_max.to_string(),
                r.converged.to_string(),
                fmt_real(r.remainder_bound),
                r.certified.to_string(),
            ])?;
        }
        t.done()?;
    }

    let mut summary = ctx.meta("asymptotics");
    let extra = json!({
        "n_max": n_max,
        "samples": samples,
        "n_enum": N_ENUM,
        "exponent_expectation": fit_json(&e_fit, -1.0 / alpha),
        "exponent_tail": fit_json(&tail_fit, 1.0 - 1.0 / alpha),
        "tail_method": tail.method,
        "tail_rows_converged": tail.rows.iter().filter(|r| r.converged).count(),
        "tail_rows_certified": tail.rows.iter().filter(|r| r.certified).count(),
        "tail_rows": tail.rows.len(),
        "mean_return_time": {
            "k_max": n_max,
            "value": er_full,
            "value_half_k": er_half,
            "relative_change": (er_full / er_half - 1.0).abs(),
        },
    });
    merge(&mut summary, extra);
    let summary_path = a.out.as_deref().map(|o| sibling(o, ".summary.json"));
    match summary_path {
        Some(p) => write_json(Some(&p), &summary)?,
        None => eprintln!("{}", serde_json::to_string(&summary)?),
    }
    Ok(EXIT_OK)
}

fn merge(dst: &mut serde_json::Value, src: serde_json::Value) {
    if let (Some(d), serde_json::Value::Object(s)) = (dst.as_object_mut(), src) {
        for (k, v) in s {
            d.insert(k, v);
        }
    }
}

fn build_grid(p: &SystemParams, g: &GridOpts) -> CliResult<PartitionGrid> {
    let bins = g.bins.unwrap_or(4096);
    Ok(match g.grid.unwrap_or(GridArg::Uniform) {
        GridArg::Uniform => PartitionGrid::uniform(bins)?,
        GridArg::Geometric => match g.q {
            Some(q) => PartitionGrid::geometric(bins, q)?,
            None => PartitionGrid::geometric_for(bins, p.alpha().gamma())?,
        },
    })
}

#[derive(Serialize)]
struct GridSummary {
    kind: String,
    bins: usize,
    exponent: Option<f64>,
}

fn grid_summary(g: &PartitionGrid) -> GridSummary {
    GridSummary {
        kind: g.kind.to_string(),
        bins: g.n_bins(),
        exponent: g.exponent,
    }
}

fn cmd_density(ctx: &Ctx, a: DensityArgs) -> CliResult<i32> {
    let grid = build_grid(&ctx.p, &a.grid)?;
    let tol = a.grid.tol.unwrap_or(crate::transfer::DEFAULT_DENSITY_TOL);
    let max_iter = a.grid.max_iter.unwrap_or(crate::transfer::DEFAULT_DENSITY_MAX_ITER);
    let m = annealed_matrix(&ctx.p, &grid);
    let d = stationary_density(&m, tol, max_iter)?;
    let header = ctx.header(
        "density",
        &[
            ("grid", grid.kind.to_string()),
            ("bins", grid.n_bins().to_string()),
            ("tol", fmt_real(tol)),
        ],
    );
    let mut csv = CsvOut::create(a.out.as_deref(), &header, &["bin_lo", "bin_hi", "f_value"])?;
    for k in 0..grid.n_bins() {
        let (lo, hi) = grid.bin(k);
        csv.row(&[fmt_real(lo), fmt_real(hi), fmt_real(d.values[k])])?;
    }
    csv.done()?;
    let local = local_exponent_near_zero(&d, 1e-3, 5e-2);
    let mut summary = ctx.meta("density");
    merge(
        &mut summary,
        json!({
            "grid": grid_summary(&grid),
            "tol": tol,
            "residual": d.residual,
            "iterations": d.iterations,
            "total_mass": d.total_mass(),
            "mass_below_1_16": d.mass_below(1.0 / 16.0),
            "local_exponent_near_zero": fit_json(&local, f64::NAN),
        }),
    );
    match a.out.as_deref() {
        Some(o) => write_json(Some(&sibling(o, ".summary.json")), &summary)?,
        None => eprintln!("{}", serde_json::to_string(&summary)?),
    }
    Ok(EXIT_OK)
}

fn cmd_correlation(ctx: &Ctx, a: CorrelationArgs) -> CliResult<i32> {
    let grid = build_grid(&ctx.p, &a.grid)?;
    let tol = a.grid.tol.unwrap_or(crate::transfer::DEFAULT_DENSITY_TOL);
    let max_iter = a.grid.max_iter.unwrap_or(crate::transfer::DEFAULT_DENSITY_MAX_ITER);
    let n_max = a.n_max.unwrap_or(1000);
    let phi = Observable::by_name(a.phi.as_deref().unwrap_or("x"))?;
    let psi = Observable::by_name(a.psi.as_deref().unwrap_or("x"))?;
    let mc_n_max = a.mc_n_max.unwrap_or(20).min(n_max);
    let m = annealed_matrix(&ctx.p, &grid);
    let d = stationary_density(&m, tol, max_iter)?;
    let cor = correlation_operator(&m, &d, &phi, &psi, n_max, a.allow_irregular_psi)?;
    let mc_cfg = McCorrelationConfig {
        chains: a.mc_chains.unwrap_or(64),
        pairs_per_chain: a.mc_pairs.unwrap_or(100_000),
        burn_in: a.burn_in.unwrap_or(10_000),
        seed: ctx.seed,
    };
    let mc = if a.mc_n_max != Some(0) {
        Some(correlation_mc(&ctx.p, &phi, &psi, mc_n_max, &mc_cfg)?)
    } else {
        None
    };
    let header = ctx.header(
        "correlation",
        &[
            ("grid", grid.kind.to_string()),
            ("bins", grid.n_bins().to_string()),
            ("phi", phi.name().to_string()),
            ("psi", psi.name().to_string()),
            ("mc_chains", mc_cfg.chains.to_string()),
            ("mc_pairs", mc_cfg.pairs_per_chain.to_string()),
            ("burn_in", mc_cfg.burn_in.to_string()),
        ],
    );
    let mut csv = CsvOut::create(a.out.as_deref(), &header, &["n", "cor_operator", "cor_mc", "se"])?;
    for (n, c) in cor.iter().enumerate() {
        let (m, s) = match mc.as_ref().and_then(|v| v.get(n)) {
            Some(e) => (fmt_real(e.mean), fmt_real(e.se)),
            None => (String::new(), String::new()),
        };
        csv.row(&[n.to_string(), fmt_real(*c), m, s])?;
    }
    csv.done()?;
    let window = (
        a.fit_lo.unwrap_or(verify::DEFAULT_FIT_MIN_N),
        a.fit_hi.unwrap_or(n_max as f64),
    );
    let ns: Vec<f64> = (0..=n_max).map(|n| n as f64).collect();
    let abs: Vec<f64> = cor.iter().map(|c| c.abs()).collect();
    let fit = fit_power_law(&ns, &abs, None, window);
    let mut summary = ctx.meta("correlation");
    merge(
        &mut summary,
        json!({
            "grid": grid_summary(&grid),
            "residual": d.residual,
            "iterations": d.iterations,
            "phi": phi.name(),
            "psi": psi.name(),
            "n_max": n_max,
            "mc": mc_cfg,
            "mc_n_max": if mc.is_some() { mc_n_max } else { 0 },
            "slope": fit_json(&fit, 1.0 - 1.0 / ctx.p.alpha().gamma()),
            "slope_beta_reference": 1.0 - 1.0 / ctx.p.beta().gamma(),
        }),
    );
    match a.out.as_deref() {
        Some(o) => write_json(Some(&sibling(o, ".summary.json")), &summary)?,
        None => eprintln!("{}", serde_json::to_string(&summary)?),
    }
    Ok(EXIT_OK)
}

fn cmd_verify(ctx: &Ctx, a: VerifyArgs) -> CliResult<i32> {
    let defaults = SuiteConfig::default();
    let cfg = SuiteConfig {
        depth: a.depth.unwrap_or(defaults.depth),
        distortion_i_max: a.distortion_i_max.unwrap_or(defaults.distortion_i_max),
        distortion_pairs: a.distortion_pairs.unwrap_or(defaults.distortion_pairs),
        seed: ctx.seed,
        ..defaults
    };
    if cfg.depth == 0 || cfg.depth > 24 {
        return Err(CliError::usage("--depth must be in 1..=24"));
    }
    let ledger = verify::run_suite(&ctx.p, a.suite.into(), &cfg);
    if let Some(path) = a.distortion_csv.as_deref() {
        let report = verify::distortion_scan(&ctx.p, cfg.distortion_i_max, cfg.distortion_pairs, ctx.seed)?;
        let header = ctx.header(
            "verify-distortion",
            &[
                ("i_max", cfg.distortion_i_max.to_string()),
                ("pairs_per_cell", cfg.distortion_pairs.to_string()),
                ("theta", fmt_real(verify::THETA)),
            ],
        );
        let mut csv = CsvOut::create(
            Some(path),
            &header,
            &["i", "word", "x1", "x2", "ratio_minus_1", "s", "theta_pow_s", "log_ratio_over_gap"],
        )?;
        for s in &report.samples {
            csv.row(&[
                s.i.to_string(),
                s.word.clone(),
                fmt_real(s.x1),
                fmt_real(s.x2),
                fmt_real(s.ratio_minus_1),
                s.s.to_string(),
                fmt_real(s.theta_pow_s),
                fmt_real(s.log_ratio_over_gap),
            ])?;
        }
        csv.done()?;
        ctx.finish_csv(
            "verify-distortion",
            Some(path),
            json!({ "c_estimate": report.c_estimate, "c_relative_change": report.c_relative_change }),
        )?;
    }
    let mut doc = ctx.meta("verify");
    merge(
        &mut doc,
        json!({
            "suite": format!("{:?}", a.suite).to_lowercase(),
            "depth": cfg.depth,
            "pass": ledger.pass(),
            "entries": ledger.entries,
        }),
    );
    write_json(a.out.as_deref(), &doc)?;
    for e in &ledger.entries {
        eprintln!(
            "{:<22} {:>4}  cases={:<10} worst_margin={:e}",
            e.check,
            if e.pass { "pass" } else { "FAIL" },
            e.n_cases,
            e.worst_margin
        );
    }
    Ok(if ledger.pass() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c = parse_config("# preset\nalpha = 0.4\nn_max=200 # comment\n\n").unwrap();
        assert_eq!(c["alpha"], "0.4");
        assert_eq!(c["n-max"], "200");
        assert!(parse_config("alpha").is_err());
    }

    #[test]
    fn real_format() {
        assert_eq!(fmt_real(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_real(0.5), "5.0000000000000000e-1");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn log_grid_covers_ends() {
        let g = log_grid(1, 1000, 10);
        assert_eq!(g[0], 1);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
