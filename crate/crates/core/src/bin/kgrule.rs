use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgrule::commands;
use kgrule::config::RunConfig;
use kgrule::kg::Split;
use kgrule::{Error, Result};

#[derive(Parser)]
#[command(name = "kgrule", version, about = "Context-aware rule mining over knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set dim=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset and write vocabularies and statistics.
    Prepare(Common),
    /// Train a model; checkpoints go to the configured output directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Filtered ranking on a split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Decode, aggregate and write ranked rules.
    MineRules {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        split: Split,
    },
    /// Standard confidence of a rule file and its top-K averages.
    ScoreRules {
        #[command(flatten)]
        common: Common,
        rules: PathBuf,
        #[arg(short, long, value_delimiter = ',', default_value = "20,50")]
        k: Vec<usize>,
    },
    /// Per-step relation weights for the listed triplets.
    ExportAttention {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `head<TAB>relation<TAB>tail` lines.
        triplets: PathBuf,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&common.overrides)?;
    cfg.validate()?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(common) => {
            let stats = commands::prepare(&resolve(&common)?)?;
            print!("{stats}");
        }
        Command::Train { common, resume } => {
            let summary = commands::train(&resolve(&common)?, resume)?;
            if let Some(m) = summary.resumed_mrr {
                println!("resumed valid mrr = {m:.6}");
            }
            let o = summary.outcome;
            println!("best valid mrr = {:.6} at epoch {}", o.best_mrr, o.best_epoch);
        }
        Command::Evaluate { common, checkpoint, split } => {
            let m = commands::evaluate(&resolve(&common)?, checkpoint.as_deref(), split)?;
            println!("{m}");
        }
        Command::MineRules { common, checkpoint, split } => {
            let cfg = resolve(&common)?;
            let rules = commands::mine_rules(&cfg, checkpoint.as_deref(), split)?;
            println!("{} rules written to {}", rules.len(), cfg.out.join("rules.tsv").display());
        }
        Command::ScoreRules { common, rules, k } => {
            let report = commands::score_rules(&resolve(&common)?, &rules, &k)?;
            for (k, avg, n) in report.top_k {
                match avg {
                    Some(a) => println!("top-{k} average sc = {a:.4} ({n} rules)"),
                    None => println!("top-{k} average sc = none"),
                }
            }
        }
        Command::ExportAttention {
            common,
            checkpoint,
            triplets,
        } => {
            let cfg = resolve(&common)?;
            let rows = commands::export_attention(&cfg, checkpoint.as_deref(), &triplets)?;
            println!("{} queries written to {}", rows.len(), cfg.out.join("attention.tsv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
