mod commands;
mod config;
mod formats;
mod manifest;

use clap::{Args, Parser, Subcommand};
use config::{Method, RunConfig};
use epinet::em::Selection;
use epinet::evaluation::Resample;
use epinet::latent::EStepMethod;
use epinet::simulate::Latent;
use std::path::PathBuf;
use std::process::ExitCode;

/// Sparse Gaussian copula graphical models for ordinal genotype data.
#[derive(Parser, Debug)]
#[command(name = "epinet", version)]
struct Cli {
    /// TOML configuration file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (falls back to EPINET_THREADS, then the config file).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a network and genotypes from it.
    Simulate(SimulateArgs),
    /// Fit a penalty path and select a network.
    Fit(FitArgs),
    /// Bootstrap edge-sign stability of the selected network.
    Bootstrap(BootstrapArgs),
    /// Score an estimated edge list against the true one.
    Evaluate(EvaluateArgs),
    /// ROC points of a fitted path against the true network.
    Roc(RocArgs),
    /// Convert genotype files between CSV and TSV, or an edge list to
    /// GraphML or DOT (chosen by the output extension).
    Convert(ConvertArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long, value_parser = parse_latent)]
    latent: Option<Latent>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Genotype file (CSV, or TSV by extension).
    #[arg(long = "in")]
    input: PathBuf,
    /// Map file with columns marker, chromosome, position.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    missing_cap: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct EstimationArgs {
    #[arg(long, value_parser = parse_estep)]
    estep: Option<EStepMethod>,
    #[arg(long)]
    em_max_iter: Option<usize>,
    #[arg(long)]
    em_tol: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    warm_burn_in: Option<usize>,
    /// Record this many chains per E-step for stationarity diagnostics.
    #[arg(long)]
    trace: Option<usize>,
    /// Selection rule: ebic or stars.
    #[arg(long, value_parser = ["ebic", "stars"])]
    select: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    subsamples: Option<usize>,
    #[arg(long)]
    stars_cut: Option<f64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    est: EstimationArgs,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    floor: Option<f64>,
    /// Explicit comma-separated descending penalty grid.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct BootstrapArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    est: EstimationArgs,
    #[arg(long)]
    replicates: Option<usize>,
    /// Reuse the original rows in every replicate.
    #[arg(long)]
    no_resample: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Estimated edge list.
    #[arg(long)]
    est: PathBuf,
    /// True edge list.
    #[arg(long = "true")]
    truth: PathBuf,
    /// Path triplets, for the AUC column.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Method label written in the metrics row.
    #[arg(long, default_value = "copula")]
    method: String,
}

#[derive(Args, Debug)]
struct RocArgs {
    #[arg(long)]
    path: PathBuf,
    #[arg(long = "true")]
    truth: PathBuf,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file; its extension picks the format.
    #[arg(long = "to")]
    to: PathBuf,
    #[arg(long)]
    map: Option<PathBuf>,
}

fn parse_latent(s: &str) -> Result<Latent, String> {
    match s {
        "normal" => Ok(Latent::Normal),
        "t3" => Ok(Latent::T3),
        _ => Err(format!("unknown latent `{s}` (normal, t3)")),
    }
}

fn parse_estep(s: &str) -> Result<EStepMethod, String> {
    match s {
        "gibbs" => Ok(EStepMethod::Gibbs),
        "approx" => Ok(EStepMethod::Approx),
        _ => Err(format!("unknown E-step `{s}` (gibbs, approx)")),
    }
}

pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<epinet::Error> for Failure {
    fn from(e: epinet::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn apply_input(cfg: &mut RunConfig, a: &InputArgs) {
    if let Some(v) = a.states {
        cfg.data.states = Some(v);
    }
    if let Some(v) = a.missing_cap {
        cfg.data.missing_cap = v;
    }
}

fn apply_estimation(cfg: &mut RunConfig, a: &EstimationArgs) -> Result<(), Failure> {
    let em = &mut cfg.em;
    if let Some(v) = a.estep {
        em.e_step = v;
    }
    if let Some(v) = a.em_max_iter {
        em.em_max_iter = v;
    }
    if let Some(v) = a.em_tol {
        em.em_tol = v;
    }
    if let Some(v) = a.sweeps {
        em.gibbs.sweeps = v;
    }
    if let Some(v) = a.burn_in {
        em.gibbs.burn_in = v;
    }
    if let Some(v) = a.warm_burn_in {
        em.gibbs.warm_burn_in = v;
    }
    if let Some(v) = a.trace {
        em.gibbs.trace = v;
    }
    let method = a.select.as_deref().unwrap_or(match cfg.select {
        Selection::Ebic { .. } => "ebic",
        Selection::Stars { .. } => "stars",
    });
    cfg.select = match (method, &cfg.select) {
        ("ebic", current) => {
            let base = match current {
                Selection::Ebic { gamma } => *gamma,
                _ => 0.5,
            };
            Selection::Ebic {
                gamma: a.gamma.unwrap_or(base),
            }
        }
        (_, current) => {
            let (s, c) = match current {
                Selection::Stars { subsamples, cut } => (*subsamples, *cut),
                _ => (20, 0.05),
            };
            Selection::Stars {
                subsamples: a.subsamples.unwrap_or(s),
                cut: a.stars_cut.unwrap_or(c),
            }
        }
    };
    if a.gamma.is_some() && method != "ebic" {
        return Err(Failure::Usage("--gamma applies to eBIC selection only".into()));
    }
    Ok(())
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    cfg.em.gibbs.seed = epinet::rng::derive_seed(cfg.seed(), &[commands::FIT_TAG]);
    match &cli.command {
        Command::Simulate(a) => {
            let s = &mut cfg.simulate;
            s.p = a.p.unwrap_or(s.p);
            s.n = a.n.unwrap_or(s.n);
            s.k = a.k.unwrap_or(s.k);
            s.groups = a.groups.unwrap_or(s.groups);
            s.latent = a.latent.unwrap_or(s.latent);
            s.alpha = a.alpha.unwrap_or(s.alpha);
            s.beta = a.beta.unwrap_or(s.beta);
        }
        Command::Fit(a) => {
            apply_input(&mut cfg, &a.input);
            apply_estimation(&mut cfg, &a.est)?;
            if let Some(m) = a.method {
                cfg.fit.method = m;
            }
            if let Some(v) = a.grid {
                cfg.path.grid = v;
            }
            if let Some(v) = a.floor {
                cfg.path.floor = v;
            }
            if let Some(v) = &a.lambdas {
                cfg.path.lambdas = Some(v.clone());
            }
        }
        Command::Bootstrap(a) => {
            apply_input(&mut cfg, &a.input);
            apply_estimation(&mut cfg, &a.est)?;
            if let Some(v) = a.replicates {
                cfg.bootstrap.replicates = v;
            }
            if a.no_resample {
                cfg.bootstrap.resample = Resample::Identity;
            }
        }
        Command::Evaluate(_) | Command::Roc(_) | Command::Convert(_) => {}
    }
    Ok(cfg)
}

fn threads(cli: &Cli, cfg: &RunConfig) -> Result<usize, Failure> {
    let env = match std::env::var("EPINET_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Failure::Usage(format!("EPINET_THREADS=`{v}` is not a count")))?,
        ),
        Err(_) => None,
    };
    let t = cli
        .threads
        .or(env)
        .or(cfg.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if t == 0 {
        return Err(Failure::Usage("thread count must be positive".into()));
    }
    Ok(t)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = resolve(&cli)?;
    let threads = threads(&cli, &cfg)?;
    cfg.threads = Some(threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", cli.out.display())))?;
    let ctx = commands::Context {
        out: cli.out.clone(),
        config_file: cli.config.clone(),
        cfg,
        threads,
    };
    pool.install(|| match &cli.command {
        Command::Simulate(_) => commands::simulate(&ctx),
        Command::Fit(a) => commands::fit(&ctx, &a.input.input, a.input.map.as_deref()),
        Command::Bootstrap(a) => commands::bootstrap(&ctx, &a.input.input, a.input.map.as_deref()),
        Command::Evaluate(a) => commands::evaluate(&ctx, &a.est, &a.truth, a.path.as_deref(), &a.method),
        Command::Roc(a) => commands::roc(&ctx, &a.path, &a.truth),
        Command::Convert(a) => commands::convert(&ctx, &a.input, &a.to, a.map.as_deref()),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
