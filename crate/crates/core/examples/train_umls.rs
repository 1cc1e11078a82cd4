//! Trains a reduced-width model on UMLS and writes the best checkpoint.
//!
//! cargo run --release --example train_umls -- [OUT_DIR] [EPOCHS]

use std::path::PathBuf;

use kgrule::commands;
use kgrule::config::RunConfig;

fn main() -> kgrule::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "runs/example".into());
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);

    let mut cfg = RunConfig {
        data: PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/umls"),
        out: PathBuf::from(out),
        dim: 64,
        lr: 1e-3,
        max_epochs: epochs,
        valid_limit: 200,
        ..RunConfig::default()
    };
    cfg.apply_preset("umls")?;
    cfg.validate()?;
    let summary = commands::train(&cfg, false)?;
    for e in &summary.outcome.log {
        println!("epoch {:>3}  loss {:>12.2}  valid mrr {:.4}", e.epoch, e.loss, e.valid_mrr);
    }
    println!("best checkpoint (epoch {}) in {}", summary.outcome.best_epoch, cfg.out.display());
    Ok(())
}
