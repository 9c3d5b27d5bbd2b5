//! Command-line front end: training, deployment sweeps, variance maps and the
//! session server.
//!
//! Every subcommand starts from a [`RunConfig`]: the defaults, then the file
//! given with `--config`, then individual flags.

pub mod commands;
pub mod server;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hitl_core::harness::RunConfig;
use hitl_core::learner::{AlphaMode, MUpdateMode};
use hitl_core::ObservationMode;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hitl_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("server: {0}")]
    Server(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "hitl", version, about = "Train variance-aware tabular agents and deploy them with an expert on call")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train Q and second-moment tables without an expert and save them.
    Train(TrainArgs),
    /// Deploy saved tables at one threshold and write the episode traces.
    Eval(EvalArgs),
    /// Sweep the variance threshold and write the calls-vs-return curve.
    SweepThreshold(SweepThresholdArgs),
    /// Train one call-penalty agent per penalty and write its curve.
    SweepPenalty(SweepPenaltyArgs),
    /// Write a per-cell variance map from the tables, rollouts or exact evaluation.
    VarianceMap(VarianceMapArgs),
    /// Compare the learned variance ranking with a ground-truth ranking.
    Topn(TopnArgs),
    /// Serve step-by-step sessions over HTTP.
    Serve(ServeArgs),
}

/// Flags shared by every experiment subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Sectioned TOML file with `[run]`, `[env]`, `[train]`, `[deploy]` and `[penalty]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in map name or path to a map file.
    #[arg(long)]
    pub map: Option<String>,
    /// `full` or `patch`.
    #[arg(long)]
    pub mode: Option<ObservationMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability that the intended move is executed.
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<u32>,
    /// Output directory; falls back to the config file, then `HITL_OUT_DIR`, then `out`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// Training episode budget.
    #[arg(long)]
    pub train_episodes: Option<usize>,
    /// `constant` or `visit_decay`.
    #[arg(long)]
    pub alpha_mode: Option<AlphaMode>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `corrected` or `literal`.
    #[arg(long)]
    pub m_update_mode: Option<MUpdateMode>,
    #[arg(long)]
    pub explore_fraction: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Where to write the tables; defaults to `<out>/<map>.table`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Saved table file.
    #[arg(long)]
    pub table: PathBuf,
    /// Variance threshold; `inf` never calls the expert.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub epsilon: f64,
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepThresholdArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub table: PathBuf,
    /// Comma-separated thresholds; defaults to a geometric grid up to the largest table variance.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Rolling-mean window for the smoothed curve.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepPenaltyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Comma-separated call penalties, each at most zero.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceSource {
    Learned,
    Mc,
    Exact,
}

#[derive(Debug, Clone, Args)]
pub struct VarianceMapArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_enum, default_value_t = VarianceSource::Learned)]
    pub source: VarianceSource,
    /// Rollouts per cell for `mc`.
    #[arg(long, default_value_t = 10_000)]
    pub rollouts: usize,
    /// Where to write the map; defaults to `<out>/<map>_variance_<source>.txt`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TruthSource {
    Mc,
    Exact,
}

#[derive(Debug, Clone, Args)]
pub struct TopnArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_enum, default_value_t = TruthSource::Exact)]
    pub truth: TruthSource,
    /// Comma-separated list sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub rollouts: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(map) = &self.map {
            cfg.run.map = map.clone();
        }
        if let Some(mode) = self.mode {
            cfg.run.mode = mode;
        }
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(out) = &self.out_dir {
            cfg.run.out_dir = Some(out.clone());
        }
        if let Some(psi) = self.psi {
            cfg.env.psi = psi;
        }
        if let Some(gamma) = self.gamma {
            cfg.env.gamma = gamma;
        }
        if let Some(max_steps) = self.max_steps {
            cfg.env.max_steps = max_steps;
        }
        Ok(cfg)
    }
}

impl TrainFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        if let Some(n) = self.train_episodes {
            t.max_episodes = n;
        }
        if let Some(mode) = self.alpha_mode {
            t.alpha_mode = mode;
        }
        if let Some(alpha) = self.alpha {
            t.alpha = alpha;
        }
        if let Some(mode) = self.m_update_mode {
            t.m_update_mode = mode;
        }
        if let Some(f) = self.explore_fraction {
            t.explore_fraction = f;
        }
    }
}

/// Runs one parsed command line, returning a short summary for the terminal.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train(args) => commands::train(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::SweepThreshold(args) => commands::sweep_threshold(&args),
        Command::SweepPenalty(args) => commands::sweep_penalty(&args),
        Command::VarianceMap(args) => commands::variance_map(&args),
        Command::Topn(args) => commands::topn(&args),
        Command::Serve(args) => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(server::serve(args.addr))?;
            Ok(String::new())
        }
    }
}
