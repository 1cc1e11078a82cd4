//! Filtered link prediction with random tie ranks on the test split, using
//! a checkpoint written by `train_umls`.
//!
//! cargo run --release --example evaluate_checkpoint -- [RUN_DIR]

use std::path::PathBuf;

use kgrule::commands;
use kgrule::config::RunConfig;
use kgrule::kg::Split;

fn main() -> kgrule::Result<()> {
    let run = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/example".into()));
    let mut cfg = RunConfig::load(&run.join(commands::CONFIG_FILE))?;
    cfg.out = run;
    let metrics = commands::evaluate(&cfg, None, Split::Test)?;
    println!("{metrics}");
    println!("per-query ranks in {}", cfg.out.join("ranks.tsv").display());
    Ok(())
}
