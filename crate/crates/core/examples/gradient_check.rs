//! Finite-difference check of the full training loss in 64-bit mode on a
//! five-entity graph, reported per parameter block.
//!
//! cargo run --release --example gradient_check

use kgrule::kg::{KnowledgeGraph, Triplet};
use kgrule::model::{Model, ModelConfig, TypeFeatures};
use kgrule::numerics::{grad_check, Graph};
use kgrule::reasoner::{bidirectional, Reasoner, ReasonerConfig};
use kgrule::subgraph::SubgraphCaps;

fn main() -> kgrule::Result<()> {
    let edges = [(0, 0, 1), (1, 1, 2), (2, 0, 3), (3, 1, 4), (0, 1, 2), (4, 0, 0)];
    let train: Vec<Triplet> = edges.iter().map(|&(h, r, t)| Triplet::new(h, r, t)).collect();
    let kg = KnowledgeGraph::build(&train, 5, 2)?;
    let features = TypeFeatures::from_graph(&kg);
    let config = ModelConfig {
        dim: 8,
        heads: 2,
        ff_dim: 12,
        dropout: 0.0,
        rule_len: 2,
        hops: 2,
        ..ModelConfig::new(5, 2)
    };
    let model = Model::<f64>::new(config, 1)?;
    let rc = ReasonerConfig {
        caps: SubgraphCaps::new(5, 10, 2)?,
        seq_len: 5,
        rule_len: 2,
        gamma: 1e-20,
        normalize: true,
    };
    let reasoner = Reasoner::new(&kg, &features, &model.arch, rc)?;
    let queries = bidirectional(&kg, &train[..3]);

    let report = grad_check(
        &model.params,
        |params, mut grads| {
            let mut total = 0.0;
            for (i, &q) in queries.iter().enumerate() {
                let view = kg.view(Some(q));
                let mut g = Graph::new(params);
                let loss = reasoner.query_loss(&mut g, &view, q, i as u64)?;
                g.status()?;
                total += g.value(loss).data()[0];
                if let Some(gr) = grads.as_deref_mut() {
                    g.backward(loss, gr);
                }
            }
            Ok(total)
        },
        1e-5,
        1e-6,
        None,
        0,
    )?;
    for (name, err) in &report.per_param {
        println!("{name:<24} {err:.2e}");
    }
    println!("max relative error {:.2e} over {} coordinates", report.max_rel_error, report.coordinates);
    Ok(())
}
