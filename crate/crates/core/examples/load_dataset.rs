//! Loads a dataset directory (`train.txt`, `valid.txt`, `test.txt`) and
//! prints its statistics and the densest relations.
//!
//! cargo run --release --example load_dataset -- [DATA_DIR]

use std::path::PathBuf;

use kgrule::kg::Dataset;

fn main() -> kgrule::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/umls"));
    let ds = Dataset::load(&dir)?;
    print!("{}", ds.stats());
    let kg = ds.build_graph()?;
    let space = kg.relations();
    let mut by_size: Vec<(usize, usize)> = (0..space.base_count()).map(|r| (kg.adjacency(r).nnz(), r)).collect();
    by_size.sort_unstable_by(|a, b| b.cmp(a));
    println!("largest relations:");
    for (nnz, r) in by_size.iter().take(5) {
        println!("  {:<28} {nnz} edges", ds.relation_name(space, *r));
    }
    Ok(())
}
