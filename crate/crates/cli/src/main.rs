use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use btrank::scores::Method;

mod commands;
mod input;
mod manifest;

/// Bradley-Terry ratings, grouped-lasso paths, empirical Bayes rankings and
/// simulation grids for paired-comparison data.
#[derive(Debug, Parser)]
#[command(name = "btrank", version)]
struct Cli {
    /// Seed recorded in the manifest; overrides a simulation config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = "btrank-out")]
    out_dir: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Decide from the file: `.json` is a dataset, a CSV with `winner` and
    /// `loser` columns is a match log, any other CSV a citation matrix.
    Auto,
    Dataset,
    Citations,
    Matches,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset JSON written by `ingest`, a citation matrix CSV or a match log CSV.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputKind::Auto)]
    pub kind: InputKind,
    /// One player label per line; fixes the player order of a match log.
    #[arg(long)]
    pub players: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    Weak,
    Half,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse raw data into a canonical dataset plus a summary.
    Ingest(DataArgs),
    /// Rate and rank players with any of the seven methods.
    Rank {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated subset of MLE, KWPM, KWPMs, KWPR, RMLE, B, WB.
        #[arg(long, value_delimiter = ',', default_values_t = Method::ALL.to_vec())]
        methods: Vec<Method>,
        /// Bandwidth of the smoothed posterior means (default: Silverman's rule).
        #[arg(long)]
        bandwidth: Option<f64>,
        /// How shared atoms count in posterior rank probabilities.
        #[arg(long, value_enum, default_value_t = Ties::Weak)]
        ties: Ties,
        /// Compute posterior mean ranks under the mixing distribution
        /// smoothed at this scale.
        #[arg(long)]
        rank_smoothing: Option<f64>,
        /// Points of the mixing distribution's support grid.
        #[arg(long, default_value_t = 301)]
        grid_points: usize,
        /// Penalty grid for RMLE (default: 0 and 50 log-spaced values up to lambda_max).
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Grouped-lasso solution path with BIC selection.
    Path {
        #[command(flatten)]
        data: DataArgs,
        /// Increasing penalties (default: 0 and 50 log-spaced values up to lambda_max).
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Run a simulation grid.
    Simulate {
        /// TOML configuration file.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in configuration, e.g. smoke, dirac-ls, paper-grid-reduced.
        #[arg(long)]
        preset: Option<String>,
        /// Override the number of replications per cell.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Write a synthetic journal citation matrix with one dominant journal.
    Fixture {
        #[arg(long, default_value_t = 86)]
        journals: usize,
    },
}

/// Exit status for input problems (bad files, options or configs).
const EXIT_INPUT: u8 = 2;
/// Exit status for estimation failures.
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<btrank::Error>())
        .map_or(EXIT_INPUT, |e| {
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            }
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("btrank: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = commands::Context {
        out_dir: cli.out_dir,
        format: cli.format,
        seed: cli.seed,
    };
    match cli.command {
        Command::Ingest(data) => commands::ingest(&ctx, &data),
        Command::Rank {
            data,
            methods,
            bandwidth,
            ties,
            rank_smoothing,
            grid_points,
            lambdas,
        } => commands::rank(
            &ctx,
            &data,
            &commands::RankSettings {
                methods,
                bandwidth,
                ties,
                rank_smoothing,
                grid_points,
                lambdas,
            },
        ),
        Command::Path { data, lambdas } => commands::path(&ctx, &data, lambdas),
        Command::Simulate {
            config,
            preset,
            replications,
        } => commands::simulate(&ctx, config.as_deref(), preset.as_deref(), replications),
        Command::Fixture { journals } => commands::fixture(&ctx, journals),
    }
}
