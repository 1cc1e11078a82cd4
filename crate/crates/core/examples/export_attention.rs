//! Writes the per-step relation weights the decoder produces for a few test
//! queries and prints the strongest relation at each step.
//!
//! cargo run --release --example export_attention -- [RUN_DIR]

use std::path::PathBuf;

use kgrule::commands::{self, Workspace};
use kgrule::config::RunConfig;

fn main() -> kgrule::Result<()> {
    let run = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/example".into()));
    let mut cfg = RunConfig::load(&run.join(commands::CONFIG_FILE))?;
    cfg.out = run;
    let ws = Workspace::load(&cfg)?;
    let (model, _) = commands::load_model(&cfg.out, &ws.model_config(&cfg))?;
    let queries = &ws.dataset.test[..5.min(ws.dataset.test.len())];
    let rows = commands::export_attention_in(&cfg, &ws, &model, queries)?;
    let path = cfg.out.join("attention.tsv");
    commands::write_attention(&path, &ws, &rows)?;

    let space = ws.kg.relations();
    for row in &rows {
        let steps: Vec<String> = row
            .weights
            .iter()
            .map(|w| {
                let best = kgrule::model::argmax(w);
                format!("{} ({:.2})", ws.dataset.relation_name(space, best), w[best])
            })
            .collect();
        println!("{}: {}", row.query, steps.join(" -> "));
    }
    println!("full weights in {}", path.display());
    Ok(())
}
