//! Argument parsing and command dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use tabfm_core::models::ModelKind;

use crate::config::{extract_dotted, RunConfig};
use crate::error::{CliError, Result, EXIT_BUDGET, EXIT_OK, EXIT_USAGE};
use crate::pipeline::{Outcome, Runner, CLEANED};

/// Build, fine-tune and benchmark tabular generative models.
///
/// Any setting can be given as `--section.key=value`, for example
/// `--train.epochs=50` or `--model.size=small`. Flags override the config
/// file, which overrides the defaults.
#[derive(Debug, Parser)]
#[command(name = "tabfm", version)]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the benchmark grid (0 uses every core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    Ctgan,
    Tvae,
    Stvae,
    Stvaem,
    Great,
}

impl From<Method> for ModelKind {
    fn from(m: Method) -> Self {
        match m {
            Method::Ctgan => ModelKind::Ctgan,
            Method::Tvae => ModelKind::Tvae,
            Method::Stvae => ModelKind::Stvae,
            Method::Stvaem => ModelKind::Stvaem,
            Method::Great => ModelKind::Great,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitMode {
    Random,
    Domain,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Infer schemas and clean every CSV of a corpus directory.
    Clean {
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        /// Defaults to `<work_dir>/cleaned`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Split the cleaned corpus into train / val / test tables.
    Split {
        #[arg(long)]
        clean_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<SplitMode>,
        /// Train, val and test fractions, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        ratios: Option<Vec<f64>>,
        /// Cluster count for domain splits.
        #[arg(long)]
        k: Option<usize>,
        /// JSON map from table name to embedding vector.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Pretrain one model on the train part of the split.
    Pretrain {
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Fine-tune a pretrained checkpoint on one table.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Cleaned table name or CSV path.
        #[arg(long)]
        table: String,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Train a fresh model on one table.
    TrainScratch {
        #[arg(long)]
        table: String,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Draw synthetic rows from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a synthetic CSV against a real one.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full method × regime × table grid and render the leaderboard.
    Benchmark {
        /// Methods to compare, comma separated.
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Re-render the leaderboard and delta exports from task reports.
    Report,
}

fn kind_json(m: Method) -> Value {
    json!(ModelKind::from(m).name())
}

/// Settings implied by ordinary flags, applied on top of the dotted ones.
fn flag_settings(cli: &Cli) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    let mut set = |k: &str, v: Value| out.push((k.to_string(), v));
    if let Some(s) = cli.seed {
        set("seed", json!(s));
    }
    if let Some(w) = cli.workers {
        set("workers", json!(w));
    }
    if let Some(d) = &cli.work_dir {
        set("paths.work_dir", json!(d));
    }
    match &cli.command {
        Command::Clean { corpus_dir: Some(d), .. } => set("paths.corpus_dir", json!(d)),
        Command::Split { mode, ratios, k, embeddings, .. } => {
            if let Some(m) = mode {
                set("split.mode", json!(if matches!(m, SplitMode::Domain) { "domain" } else { "random" }));
            }
            if let Some(r) = ratios {
                set("split.ratios", json!(r));
            }
            if let Some(k) = k {
                set("split.k", json!(k));
            }
            if let Some(e) = embeddings {
                set("split.embeddings", json!(e));
            }
        }
        Command::Pretrain { method: Some(m) } | Command::TrainScratch { method: Some(m), .. } => set("model.kind", kind_json(*m)),
        Command::Benchmark { methods: Some(ms) } => set("benchmark.methods", Value::Array(ms.iter().map(|m| kind_json(*m)).collect())),
        _ => {}
    }
    out
}

fn dispatch(cli: &Cli, runner: &Runner) -> Result<Outcome> {
    let config = &runner.config;
    match &cli.command {
        Command::Clean { out_dir, .. } => {
            let out = out_dir.clone().unwrap_or_else(|| config.work(CLEANED));
            runner.clean(&config.paths.corpus_dir, &out)
        }
        Command::Split { clean_dir, .. } => Ok(runner.split(clean_dir.as_deref())?.1),
        Command::Pretrain { .. } => runner.pretrain(config.model.kind),
        Command::Finetune { checkpoint, table, method } => runner.finetune(checkpoint, table, method.map(ModelKind::from)),
        Command::TrainScratch { table, .. } => runner.train_scratch(table, config.model.kind),
        Command::Sample { checkpoint, rows, out } => runner.sample(checkpoint, *rows, out.as_deref()),
        Command::Evaluate { real, synthetic, out } => runner.evaluate(real, synthetic, out.as_deref()),
        Command::Benchmark { .. } => runner.benchmark(),
        Command::Report => runner.report(),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    match try_run(args) {
        Ok(out) => {
            for line in &out.lines {
                println!("{line}");
            }
            if out.budget_exceeded {
                eprintln!("error: wall-clock budget exceeded; outputs hold the last completed epoch");
                EXIT_BUDGET
            } else {
                EXIT_OK
            }
        }
        Err(Parsed::Clap(e)) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
        Err(Parsed::Run(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

enum Parsed {
    Clap(clap::Error),
    Run(CliError),
}

fn try_run(args: Vec<String>) -> std::result::Result<Outcome, Parsed> {
    let (rest, mut settings) = extract_dotted(args).map_err(Parsed::Run)?;
    let cli = Cli::try_parse_from(rest).map_err(Parsed::Clap)?;
    settings.extend(flag_settings(&cli));
    let config = RunConfig::resolve(cli.config.as_deref(), &settings).map_err(Parsed::Run)?;
    let runner = Runner::new(config).map_err(Parsed::Run)?;
    dispatch(&cli, &runner).map_err(Parsed::Run)
}
