//! Decodes relation weights for every training query, parses and
//! aggregates rules, and reports standard confidence of the best ones.
//!
//! cargo run --release --example mine_and_score_rules -- [RUN_DIR]

use std::path::PathBuf;

use kgrule::commands::{self, Workspace};
use kgrule::config::RunConfig;
use kgrule::kg::Split;
use kgrule::rules::format_rules;

fn main() -> kgrule::Result<()> {
    let run = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs/example".into()));
    let mut cfg = RunConfig::load(&run.join(commands::CONFIG_FILE))?;
    cfg.out = run;
    let ws = Workspace::load(&cfg)?;
    let (model, _) = commands::load_model(&cfg.out, &ws.model_config(&cfg))?;
    let rules = commands::mine_rules_in(&cfg, &ws, &model, Split::Train)?;
    println!("{} distinct rules; the ten most confident:", rules.len());
    print!("{}", format_rules(&ws.dataset, &ws.kg, &rules[..rules.len().min(10)]));

    let report = commands::score_rules_in(&ws, &rules, &[20, 50]);
    for (k, avg, n) in report.top_k {
        match avg {
            Some(a) => println!("top-{k} average standard confidence {a:.4} over {n} rules"),
            None => println!("top-{k}: no rule has a defined standard confidence"),
        }
    }
    Ok(())
}
