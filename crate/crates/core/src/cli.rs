//! Command-line front end. Every output echoes the resolved command and seed,
//! so re-running it reproduces the file byte for byte.

use std::ffi::OsString;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::adversary::{
    bakhvalov_lower_bound, event_probability, fooling_family, gap_identity_check, lipschitz_check,
};
use crate::config::{parse_functional, parse_measure, RatesConfig};
use crate::error::{Error, Result};
use crate::experiments::{kl_tail_width, rate_fit, run_rate_experiment, width_estimate, RatePoint, Transform};
use crate::io::{load_codebook, save_codebook, write_atomic};
use crate::measures::{reference_value, MeasureSpec};
use crate::paths::{make_kl_subspace, NormKind};
use crate::quadrature::{
    classical_mc, cost_of, euler_mc, galg_schedule, gaussian_subspace_mc, t8_schedule, voronoi_quadrature, vr_mc,
    QuadratureResult, SmallBallProfile,
};
use crate::quantize::{
    exact_voronoi_weights, lloyd, lloyd_with_report, product_quantizer_bm, voronoi_weights, Codebook, LloydOptions,
};
use crate::rng::SeedSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser, Serialize)]
#[command(name = "quantquad", version, about = "Quadrature of Lipschitz functionals on finite-dimensional and path spaces")]
pub struct Cli {
    /// Master seed; all random streams derive from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Build a codebook and write it in codebook-file format.
    Quantize(QuantizeArgs),
    /// Run one quadrature algorithm.
    Quad(QuadArgs),
    /// Run one of the lower-bound checks.
    Adversary(AdversaryArgs),
    /// Run a rate experiment described by a TOML file.
    Rates(RatesArgs),
    /// Average distances of samples to nested KL subspaces.
    Widths(WidthsArgs),
    /// Print version information.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Exact when available, Monte Carlo otherwise.
    Auto,
    Exact,
    Mc,
    None,
}

#[derive(Debug, Args, Serialize)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub measure: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub r: f64,
    #[arg(long)]
    pub norm: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Greedy product quantizer on the KL coefficients (needs `brownian_kl:k:G`).
    #[arg(long)]
    pub product: bool,
    #[arg(long, value_enum, default_value_t = WeightMode::Auto)]
    pub weights: WeightMode,
    #[arg(long, default_value_t = 1_000_000)]
    pub weight_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadAlgo {
    Voronoi,
    Mc,
    Vrmc,
    Euler,
    GaussSub,
}

#[derive(Debug, Args, Serialize)]
pub struct QuadArgs {
    #[arg(long, value_enum)]
    pub algo: QuadAlgo,
    #[arg(long, default_value = "gbm:0.1:0.2:1")]
    pub measure: String,
    #[arg(long, default_value = "sup_norm")]
    pub functional: String,
    /// Cost budget N; sets n and k through the algorithm's schedule.
    #[arg(long, conflicts_with_all = ["n", "k"])]
    pub budget: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Codebook file for `voronoi` and `vrmc`.
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub weight_samples: usize,
    /// Lloyd pool size when `vrmc` builds its own codebook.
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    GapIdentity,
    Lipschitz,
    Events,
    Bakhvalov,
}

#[derive(Debug, Args, Serialize)]
pub struct AdversaryArgs {
    #[arg(long, value_enum)]
    pub check: CheckKind,
    #[arg(long, default_value = "uniform_cube:1")]
    pub measure: String,
    /// Codebook size (gap identity) or algorithm size (Bakhvalov bound).
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Functional for the Lipschitz check; the fooling family when absent.
    #[arg(long)]
    pub functional: Option<String>,
    #[arg(long)]
    pub norm: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub ell: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct RatesArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct WidthsArgs {
    #[arg(long, default_value = "brownian:1025")]
    pub measure: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub ks: Vec<usize>,
    #[arg(long, default_value = "l2")]
    pub norm: String,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct InfoArgs {
    /// Print only the version line.
    #[arg(long)]
    pub version: bool,
}

/// What a subcommand produced: the text to emit and whether its check passed.
struct Outcome {
    text: String,
    pass: bool,
}

impl Outcome {
    fn ok(text: String) -> Outcome {
        Outcome { text, pass: true }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric { .. } | Error::Eval { .. } => EXIT_NUMERIC,
        Error::Config(_) | Error::Parse { .. } | Error::Io(_) => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be >= 1");
            return EXIT_USAGE;
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    match dispatch(&cli) {
        Ok(outcome) => match emit(cli.out.as_deref(), &outcome.text, &cli.command) {
            Ok(()) if outcome.pass => EXIT_OK,
            Ok(()) => EXIT_CHECK_FAILED,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: Option<&FsPath>, text: &str, command: &Command) -> Result<()> {
    match (out, command) {
        // quantize writes its own file
        (_, Command::Quantize(_)) | (None, _) => {
            print!("{text}");
            Ok(())
        }
        (Some(path), _) => write_atomic(path, text),
    }
}

fn echo(cli: &Cli) -> Value {
    serde_json::to_value(cli).expect("arguments serialize")
}

fn to_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn parse_norm(s: Option<&str>) -> Result<Option<NormKind>> {
    s.map(str::parse).transpose()
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let seed = SeedSpec::new(cli.seed);
    match &cli.command {
        Command::Quantize(a) => quantize(cli, a, seed),
        Command::Quad(a) => quad(cli, a, seed),
        Command::Adversary(a) => adversary(cli, a, seed),
        Command::Rates(a) => rates(cli, a, seed),
        Command::Widths(a) => widths(cli, a, seed),
        Command::Info(a) => Ok(Outcome::ok(if a.version {
            format!("quantquad {}\n", env!("CARGO_PKG_VERSION"))
        } else {
            format!(
                "quantquad {}\nsubcommands: quantize, quad, adversary, rates, widths, info\nthreads: {}\n",
                env!("CARGO_PKG_VERSION"),
                rayon::current_num_threads()
            )
        })),
    }
}

fn attach_weights(cb: &mut Codebook, measure: &MeasureSpec, mode: WeightMode, samples: usize, seed: SeedSpec) -> Result<Option<Value>> {
    match mode {
        WeightMode::None => {
            cb.clear_weights();
            Ok(None)
        }
        WeightMode::Exact => {
            let w = exact_voronoi_weights(cb, measure)?;
            cb.set_weights(w)?;
            Ok(Some(json!({"mode": "exact"})))
        }
        WeightMode::Mc => {
            let rep = voronoi_weights(cb, measure, samples, seed)?;
            Ok(Some(json!({"mode": "mc", "samples": rep.sample_count, "empty_cells": rep.empty_cells})))
        }
        WeightMode::Auto => match exact_voronoi_weights(cb, measure) {
            Ok(w) => {
                cb.set_weights(w)?;
                Ok(Some(json!({"mode": "exact"})))
            }
            Err(_) => attach_weights(cb, measure, WeightMode::Mc, samples, seed),
        },
    }
}

fn quantize(cli: &Cli, a: &QuantizeArgs, seed: SeedSpec) -> Result<Outcome> {
    let arg = parse_measure(&a.measure)?;
    let norm = parse_norm(a.norm.as_deref())?;
    let (mut cb, mut summary) = if a.product {
        let MeasureSpec::BrownianKl(kl) = &arg.measure else {
            return Err(Error::Config("--product needs a brownian_kl measure".into()));
        };
        if a.r != 2.0 || norm.is_some_and(|n| n != NormKind::L2) {
            return Err(Error::Config("--product builds L2 quantizers of order 2 only".into()));
        }
        let cb = product_quantizer_bm(a.n, kl.k_terms(), kl.grid())?;
        (cb, json!({"method": "product"}))
    } else {
        let opts = LloydOptions {
            iters: a.iters,
            tol: a.tol,
            restarts: a.restarts,
            pool: a.pool,
            norm,
        };
        let rep = lloyd_with_report(&arg.measure, a.n, a.r, &opts, seed.derive_label("quantize"))?;
        let summary = json!({
            "method": "lloyd",
            "pool_size": rep.pool_size,
            "iterations": rep.history.len(),
            "pool_distortion": rep.history.last(),
            "restart_objectives": rep.restart_objectives,
        });
        (rep.codebook, summary)
    };
    if cb.weights().is_none() || a.weights != WeightMode::Auto {
        let w = attach_weights(&mut cb, &arg.measure, a.weights, a.weight_samples, seed.derive_label("weights"))?;
        summary["weights"] = json!(w);
    } else {
        summary["weights"] = json!({"mode": "exact"});
    }
    let echo = echo(cli);
    match &cli.out {
        Some(path) => {
            let comments = vec![format!("command: {}", serde_json::to_string(&echo).unwrap())];
            save_codebook(&cb, path, &comments)?;
            summary["codebook"] = json!(path.display().to_string());
        }
        None => {
            summary["points"] = json!(cb.points().iter().map(|p| p.raw().to_vec()).collect::<Vec<_>>());
            summary["weights_values"] = json!(cb.weights());
        }
    }
    Ok(Outcome::ok(to_text(&json!({"command": echo, "seed": cli.seed, "result": summary}))))
}

fn result_json(r: &QuadratureResult) -> Value {
    let cost = cost_of(r);
    json!({
        "estimate": r.estimate,
        "stderr": r.stderr,
        "n": r.n,
        "k": r.k,
        "oracle_cost": cost.oracle_cost,
        "oracle_calls": cost.oracle_calls,
        "rng_calls": cost.rng_calls,
        "arithmetic_proxy": cost.arithmetic_proxy,
    })
}

fn need_n(a: &QuadArgs) -> Result<usize> {
    match (a.budget, a.n) {
        (Some(b), None) => Ok(b as usize),
        (None, Some(n)) => Ok(n),
        _ => Err(Error::Config("give --budget or --n".into())),
    }
}

fn need_nk(a: &QuadArgs, schedule: impl Fn(u64) -> Result<(usize, usize)>) -> Result<(usize, usize)> {
    match (a.budget, a.n, a.k) {
        (Some(b), None, None) => schedule(b),
        (None, Some(n), Some(k)) => Ok((n, k)),
        _ => Err(Error::Config("give --budget, or both --n and --k".into())),
    }
}

fn quad(cli: &Cli, a: &QuadArgs, seed: SeedSpec) -> Result<Outcome> {
    let arg = parse_measure(&a.measure)?;
    let f = parse_functional(&a.functional)?;
    let seed = seed.derive_label("quad");
    let result = match a.algo {
        QuadAlgo::Voronoi => {
            let path = a
                .codebook
                .as_ref()
                .ok_or_else(|| Error::Config("voronoi needs --codebook".into()))?;
            let mut cb = load_codebook(path)?;
            if cb.weights().is_none() {
                attach_weights(&mut cb, &arg.measure, WeightMode::Auto, a.weight_samples, seed.derive_label("weights"))?;
            }
            voronoi_quadrature(&cb, &f)?
        }
        QuadAlgo::Mc => classical_mc(&arg.measure, &f, need_n(a)?, seed)?,
        QuadAlgo::Vrmc => {
            let (mut cb, n) = match (&a.codebook, a.budget, a.n) {
                (Some(path), None, Some(n)) => (load_codebook(path)?, n),
                (None, budget, n) if budget.is_some() != n.is_some() => {
                    // a budget is split evenly between codebook and samples
                    let (m, n) = match (budget, n) {
                        (Some(b), _) => ((b as usize / 2).max(1), (b as usize - b as usize / 2).max(1)),
                        (_, Some(n)) => (n, n),
                        _ => unreachable!(),
                    };
                    let opts = LloydOptions {
                        pool: a.pool,
                        restarts: a.restarts,
                        ..LloydOptions::default()
                    };
                    let cb = lloyd(&arg.measure, m, 2.0, &opts, seed.derive_label("codebook"))?;
                    (cb, n)
                }
                _ => return Err(Error::Config("vrmc needs --budget, --n, or --codebook with --n".into())),
            };
            if cb.weights().is_none() {
                attach_weights(&mut cb, &arg.measure, WeightMode::Auto, a.weight_samples, seed.derive_label("weights"))?;
            }
            vr_mc(&cb, &arg.measure, &f, n, seed)?
        }
        QuadAlgo::Euler => {
            let spec = arg
                .diffusion
                .as_ref()
                .ok_or_else(|| Error::Config("euler needs a diffusion measure (gbm:... or brownian)".into()))?;
            let (n, k) = need_nk(a, t8_schedule)?;
            euler_mc(spec, &f, k, n, arg.grid.as_ref().unwrap(), seed)?
        }
        QuadAlgo::GaussSub => {
            let grid = arg
                .grid
                .as_ref()
                .ok_or_else(|| Error::Config("gauss-sub needs a path measure".into()))?;
            let profile = SmallBallProfile::new(a.alpha, a.beta)?;
            let (n, k) = need_nk(a, |b| galg_schedule(b, profile))?;
            gaussian_subspace_mc(&make_kl_subspace(grid, k)?, &f, n, seed)?
        }
    };
    Ok(Outcome::ok(to_text(&json!({
        "command": echo(cli),
        "seed": cli.seed,
        "result": result_json(&result),
    }))))
}

fn adversary(cli: &Cli, a: &AdversaryArgs, seed: SeedSpec) -> Result<Outcome> {
    let seed = seed.derive_label("adversary");
    let (pass, result) = match a.check {
        CheckKind::GapIdentity => {
            let arg = parse_measure(&a.measure)?;
            let opts = LloydOptions {
                norm: parse_norm(a.norm.as_deref())?,
                ..LloydOptions::default()
            };
            let cb = lloyd(&arg.measure, a.n, 1.0, &opts, seed.derive_label("codebook"))?;
            let rep = gap_identity_check(&cb, &arg.measure, a.samples, seed.derive_label("gap"))?;
            (rep.pass, json!(rep))
        }
        CheckKind::Lipschitz => {
            let arg = parse_measure(&a.measure)?;
            let norm = parse_norm(a.norm.as_deref())?.unwrap_or(if arg.measure.is_path_measure() {
                NormKind::Sup
            } else {
                NormKind::Euclidean
            });
            let fs = match &a.functional {
                Some(s) => vec![parse_functional(s)?],
                None => {
                    let cb = lloyd(&arg.measure, a.n, 1.0, &LloydOptions { norm: Some(norm), ..LloydOptions::default() }, seed.derive_label("codebook"))?;
                    fooling_family(&cb, norm)?.functionals
                }
            };
            let mut rows = Vec::new();
            let mut pass = true;
            for (i, f) in fs.iter().enumerate() {
                let rep = lipschitz_check(f, &arg.measure, norm, a.pairs, seed.derive(i as u64))?;
                pass &= !rep.flagged;
                rows.push(json!({"functional": f.name(), "report": rep}));
            }
            (pass, json!(rows))
        }
        CheckKind::Events => {
            let mut rows = Vec::new();
            let mut pass = true;
            for &ell in &a.ell {
                let rep = event_probability(ell, a.eps, a.samples, seed.derive(ell as u64))?;
                pass &= rep.pass;
                rows.push(json!({"ell": ell, "report": rep}));
            }
            (pass, json!(rows))
        }
        CheckKind::Bakhvalov => {
            let arg = parse_measure(&a.measure)?;
            let norm = parse_norm(a.norm.as_deref())?;
            let opts = LloydOptions { norm, ..LloydOptions::default() };
            let cb = lloyd(&arg.measure, 4 * a.n, 1.0, &opts, seed.derive_label("codebook"))?;
            let family = fooling_family(&cb, cb.norm())?;
            let means = family
                .functionals
                .iter()
                .enumerate()
                .map(|(i, f)| reference_value(f, &arg.measure, a.samples, seed.derive_label("means").derive(i as u64)))
                .collect::<Result<Vec<_>>>()?;
            let bound = bakhvalov_lower_bound(a.n, &means)?;
            (bound > 0.0, json!({"lower_bound": bound, "family_means": means}))
        }
    };
    Ok(Outcome {
        text: to_text(&json!({"command": echo(cli), "seed": cli.seed, "pass": pass, "result": result})),
        pass,
    })
}

fn rates(cli: &Cli, a: &RatesArgs, seed: SeedSpec) -> Result<Outcome> {
    let text = std::fs::read_to_string(&a.config)?;
    let cfg = RatesConfig::from_toml(&text)?;
    let report = run_rate_experiment(&cfg.build(seed)?)?;
    let pass = report.pass;
    let mut out = String::new();
    out.push_str(&format!("# command: {}\n", serde_json::to_string(&echo(cli)).unwrap()));
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        out.push_str(&format!("# config: {}\n", line.trim()));
    }
    out.push_str(&report.to_csv());
    if cli.out.is_some() {
        eprint!("{}", to_text(&json!({"name": report.name, "pass": pass, "fit": report.fit})));
    }
    Ok(Outcome { text: out, pass })
}

fn widths(cli: &Cli, a: &WidthsArgs, seed: SeedSpec) -> Result<Outcome> {
    let arg = parse_measure(&a.measure)?;
    let grid = arg
        .grid
        .as_ref()
        .ok_or_else(|| Error::Config("widths need a path measure".into()))?;
    let norm: NormKind = a.norm.parse()?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &k in &a.ks {
        let sub = make_kl_subspace(grid, k)?;
        // the same samples for every k keeps the sequence monotone
        let pt = width_estimate(&arg.measure, &sub, norm, a.p, a.samples, seed.derive_label("widths"))?;
        rows.push(json!({"k": k, "width": pt.error, "stderr": pt.stderr, "kl_tail_width": kl_tail_width(k)}));
        points.push(RatePoint { size: k as f64, ..pt });
    }
    let fit = if points.len() >= 4 { Some(rate_fit(&points, Transform::LogLog)?) } else { None };
    Ok(Outcome::ok(to_text(&json!({
        "command": echo(cli),
        "seed": cli.seed,
        "rows": rows,
        "fit": fit,
    }))))
}
