//! Sparse chain reasoning with hand-set relation weights on a small family
//! graph, then rule extraction from the same weights and their standard
//! confidence.
//!
//! cargo run --release --example tensorlog_reasoning

use kgrule::kg::{Dataset, Triplet, Vocab};
use kgrule::reasoner::{reason_chain, score};
use kgrule::rules::{parse_rules, standard_confidence, RuleTable};

fn main() -> kgrule::Result<()> {
    let people = ["ann", "bob", "cat", "dan", "eve"];
    let relations = ["parent", "grandparent"];
    let facts = [(0, 0, 1), (1, 0, 2), (0, 1, 2), (3, 0, 4), (2, 0, 3), (1, 1, 3)];
    let train = facts.iter().map(|&(h, r, t)| Triplet::new(h, r, t)).collect();
    let ds = Dataset::from_triplets(Vocab::from_tokens(people), Vocab::from_tokens(relations), train, vec![], vec![]);
    let kg = ds.build_graph()?;
    let space = kg.relations();
    let view = kg.view(None);

    // Two steps, both mostly `parent` with a little self-loop mass.
    let mut step = vec![0.0; space.count()];
    step[0] = 0.8;
    step[space.self_loop()] = 0.2;
    let weights = vec![step.clone(), step];

    let z = reason_chain(&view, 0, &weights)?;
    println!("scores for (ann, grandparent, ?):");
    for (e, v) in z.iter().enumerate() {
        println!("  {:<4} z = {v:.3}  log-score = {:.3}", people[e], score(&z, e, 1e-20));
    }

    let mut table = RuleTable::new();
    table.extend(1, parse_rules(&view, 0, &weights, 0.1));
    for rule in table.aggregate() {
        let body: Vec<String> = rule.body.iter().map(|&b| ds.relation_name(space, b)).collect();
        let sc = standard_confidence(&kg, rule.head, &rule.body);
        println!(
            "grandparent <- {}   confidence {:.3}  sc {}",
            body.join(", "),
            rule.confidence,
            sc.map_or("undefined".into(), |s| format!("{s:.3}"))
        );
    }
    Ok(())
}
