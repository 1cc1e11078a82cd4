//! Extracts the capped neighborhood of a training query with the query
//! edge hidden, and prints the resulting token sequence.
//!
//! cargo run --release --example subgraph_context -- [TRIPLET_INDEX]

use std::path::PathBuf;

use kgrule::kg::Dataset;
use kgrule::subgraph::{extract_subgraph, to_node_sequence, SubgraphCaps};

fn main() -> kgrule::Result<()> {
    let index: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let ds = Dataset::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/umls"))?;
    let kg = ds.build_graph()?;
    let q = ds.train[index % ds.train.len()];
    let space = kg.relations();
    println!(
        "query ({}, {}, ?) with answer {}",
        ds.entities.name(q.head),
        ds.relation_name(space, q.rel),
        ds.entities.name(q.tail)
    );

    let caps = SubgraphCaps::new(16, 4, 2)?;
    let sub = extract_subgraph(&kg, q.head, caps, Some(q), 7);
    let seq = to_node_sequence(&sub, 20)?;
    println!("{} context entities, {} edges among them", sub.len(), sub.edges.len());
    for (i, (tok, dist)) in seq.tokens.iter().zip(&seq.distances).enumerate() {
        match (tok, dist) {
            (Some(e), Some(d)) => {
                let via = sub.discovered_by[i]
                    .map(|(p, r)| format!(" via {} from {}", ds.relation_name(space, r), ds.entities.name(sub.nodes[p])))
                    .unwrap_or_default();
                println!("  {i:>2} hop {d} {}{via}", ds.entities.name(*e));
            }
            _ => println!("  {i:>2} blank"),
        }
    }
    println!("answer in context: {}", sub.nodes.contains(&q.tail));
    Ok(())
}
