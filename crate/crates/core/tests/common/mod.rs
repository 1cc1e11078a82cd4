//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;

use kgrule::kg::{Dataset, KnowledgeGraph, Triplet, Vocab};
use kgrule::model::{Model, ModelConfig, TypeFeatures};
use kgrule::numerics::{Graph, Grads, ParamStore};
use kgrule::reasoner::{Reasoner, ReasonerConfig};
use kgrule::subgraph::SubgraphCaps;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn umls_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/umls")
}

/// Five entities, two relations, every relation used in both directions.
pub fn toy_triplets() -> Vec<Triplet> {
    [(0, 0, 1), (1, 1, 2), (2, 0, 3), (3, 1, 4), (0, 1, 2), (4, 0, 0), (1, 0, 3)]
        .iter()
        .map(|&(h, r, t)| Triplet::new(h, r, t))
        .collect()
}

pub fn toy_graph() -> KnowledgeGraph {
    KnowledgeGraph::build(&toy_triplets(), 5, 2).unwrap()
}

pub fn toy_model_config(num_entities: usize, num_base_relations: usize) -> ModelConfig {
    ModelConfig {
        num_entities,
        num_base_relations,
        dim: 8,
        heads: 2,
        encoder_layers: 2,
        decoder_layers: 2,
        ff_dim: 12,
        dropout: 0.0,
        rule_len: 2,
        hops: 2,
    }
}

pub fn toy_reasoner_config(max_context: usize, rule_len: usize) -> ReasonerConfig {
    ReasonerConfig {
        caps: SubgraphCaps::new(max_context, 10, 2).unwrap(),
        seq_len: max_context,
        rule_len,
        gamma: 1e-20,
        normalize: false,
    }
}

/// Summed masked training loss of `queries`, evaluated deterministically.
#[allow(clippy::too_many_arguments)]
pub fn toy_loss(
    normalize: bool,
    kg: &KnowledgeGraph,
    features: &TypeFeatures,
    model: &Model<f64>,
    queries: &[Triplet],
    params: &ParamStore<f64>,
    grads: Option<&mut Grads<f64>>,
) -> kgrule::Result<f64> {
    let mut config = toy_reasoner_config(5, model.arch.config.rule_len);
    config.normalize = normalize;
    let reasoner = Reasoner::new(kg, features, &model.arch, config)?;
    let mut total = 0.0;
    let mut grads = grads;
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
}

/// Random graph with `n` entities and `r` base relations, each possible
/// edge present with probability `p`. At least one edge is always present.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, r: usize, p: f64) -> (Vec<Triplet>, KnowledgeGraph) {
    let mut t = Vec::new();
    for h in 0..n {
        for rel in 0..r {
            for tl in 0..n {
                if rng.gen::<f64>() < p {
                    t.push(Triplet::new(h, rel, tl));
                }
            }
        }
    }
    if t.is_empty() {
        t.push(Triplet::new(0, 0, n - 1));
    }
    let kg = KnowledgeGraph::build(&t, n, r).unwrap();
    (t, kg)
}

/// Exhaustive weighted-path enumeration: the mass at each entity after
/// walking every relation sequence from `head`, each path weighted by the
/// product of its step weights.
pub fn enumerate_paths(triplets: &[Triplet], n: usize, r: usize, head: usize, weights: &[Vec<f64>]) -> Vec<f64> {
    // Augmented edge list: base, inverse, self-loop.
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for t in triplets {
        edges.push((t.head, t.rel, t.tail));
        edges.push((t.tail, t.rel + r, t.head));
    }
    edges.sort();
    edges.dedup();
    for e in 0..n {
        edges.push((e, 2 * r, e));
    }
    fn walk(edges: &[(usize, usize, usize)], at: usize, step: usize, w: f64, weights: &[Vec<f64>], out: &mut [f64]) {
        if step == weights.len() {
            out[at] += w;
            return;
        }
        for &(h, rel, t) in edges {
            if h == at {
                walk(edges, t, step + 1, w * weights[step][rel], weights, out);
            }
        }
    }
    let mut out = vec![0.0; n];
    walk(&edges, head, 0, 1.0, weights, &mut out);
    out
}

/// Standard confidence by listing every `(X, Y)` pair and every path.
pub fn sc_oracle(triplets: &[Triplet], n: usize, r: usize, head: usize, body: &[usize]) -> Option<f64> {
    let mut facts: HashSet<(usize, usize, usize)> = HashSet::new();
    for t in triplets {
        facts.insert((t.head, t.rel, t.tail));
        facts.insert((t.tail, t.rel + r, t.head));
    }
    for e in 0..n {
        facts.insert((e, 2 * r, e));
    }
    let (mut support, mut hits) = (0, 0);
    for x in 0..n {
        for y in 0..n {
            // Does some entity sequence x = z0, z1, .., zk = y ground the body?
            let mut frontier: HashSet<usize> = [x].into_iter().collect();
            for &b in body {
                frontier = (0..n).filter(|&v| frontier.iter().any(|&u| facts.contains(&(u, b, v)))).collect();
            }
            if frontier.contains(&y) {
                support += 1;
                if facts.contains(&(x, head, y)) {
                    hits += 1;
                }
            }
        }
    }
    (support > 0).then(|| hits as f64 / support as f64)
}

/// A dataset over generated names `e0..` and `r0..`.
pub fn named_dataset(n: usize, r: usize, train: Vec<Triplet>, valid: Vec<Triplet>, test: Vec<Triplet>) -> Dataset {
    Dataset::from_triplets(
        Vocab::from_tokens((0..n).map(|i| format!("e{i}"))),
        Vocab::from_tokens((0..r).map(|i| format!("r{i}"))),
        train,
        valid,
        test,
    )
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random distribution over `k` outcomes with some exact zeros.
pub fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen::<f64>() }).collect();
    let s: f64 = w.iter().sum();
    if s == 0.0 {
        w[0] = 1.0;
        return w;
    }
    w.iter_mut().for_each(|x| *x /= s);
    w
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Chained sparse reasoning and the model's own `predict_all` against path
/// enumeration on `trials` random graphs. Returns the largest discrepancy
/// (scaled by `max(1, |z|)`) seen by each.
pub fn tensorlog_oracle(trials: usize, seed: u64) -> (f64, f64) {
    use kgrule::reasoner::{reason_chain, Reasoner};
    let mut rng = rng(seed);
    let (mut chain_err, mut predict_err) = (0.0f64, 0.0f64);
    for trial in 0..trials {
        let n = rng.gen_range(2..=10);
        let r = rng.gen_range(1..=4);
        let p = rng.gen_range(0.05..0.4);
        let (triplets, kg) = random_graph(&mut rng, n, r, p);
        let steps = rng.gen_range(1..=3);
        let head = rng.gen_range(0..n);
        let weights: Vec<Vec<f64>> = (0..steps).map(|_| random_distribution(&mut rng, 2 * r + 1)).collect();
        let z = reason_chain(&kg.view(None), head, &weights).unwrap();
        let want = enumerate_paths(&triplets, n, r, head, &weights);
        for (a, b) in z.iter().zip(&want) {
            chain_err = chain_err.max((a - b).abs() / b.abs().max(1.0));
        }

        let mut config = toy_model_config(n, r);
        config.rule_len = steps;
        let model = Model::<f64>::new(config, trial as u64).unwrap();
        let features = TypeFeatures::from_graph(&kg);
        let mut rc = toy_reasoner_config(n, steps);
        rc.gamma = 1e-300;
        // The training-time rescaling must not leak into predictions.
        rc.normalize = trial % 2 == 1;
        let reasoner = Reasoner::new(&kg, &features, &model.arch, rc).unwrap();
        let rel = rng.gen_range(0..2 * r);
        let pred = reasoner.predict_all(&model.params, head, rel, trial as u64).unwrap();
        let want = enumerate_paths(&triplets, n, r, head, &pred.weights);
        for (s, b) in pred.scores.iter().zip(&want) {
            let a = s.exp();
            let b = b.max(rc.gamma);
            predict_err = predict_err.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    (chain_err, predict_err)
}

/// Standard confidence against exhaustive pair enumeration. Returns the
/// number of trials that disagreed (compared bitwise).
pub fn sc_oracle_mismatches(trials: usize, seed: u64) -> usize {
    use kgrule::rules::standard_confidence;
    let mut rng = rng(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let n = rng.gen_range(1..=6);
        let r = rng.gen_range(1..=3);
        let p = rng.gen_range(0.05..0.5);
        let (triplets, kg) = random_graph(&mut rng, n, r, p);
        let head = rng.gen_range(0..2 * r);
        let len = rng.gen_range(1..=3);
        let body: Vec<usize> = (0..len).map(|_| rng.gen_range(0..=2 * r)).collect();
        let got = standard_confidence(&kg, head, &body);
        let want = sc_oracle(&triplets, n, r, head, &body);
        if got.map(f64::to_bits) != want.map(f64::to_bits) {
            eprintln!("sc mismatch: n={n} r={r} head={head} body={body:?} got={got:?} want={want:?} edges={triplets:?}");
            bad += 1;
        }
    }
    bad
}

/// Share of `draws` in which the target, tied with one other candidate,
/// lands at rank 1.
pub fn tie_rank_one_frequency(draws: usize, seed: u64) -> f64 {
    use kgrule::eval::filtered_rank;
    let mut rng = rng(seed);
    let scores = [-1.0, 0.5, 0.5, -3.0];
    let ones = (0..draws).filter(|_| filtered_rank(&scores, 1, None, &mut rng) == 1).count();
    ones as f64 / draws as f64
}

pub fn within(a: f64, b: f64, tol: f64) -> bool {
    close(a, b, tol)
}

/// Writes `train.txt`, `valid.txt` and `test.txt` of named triplets.
pub fn write_dataset(dir: &std::path::Path, train: &[(&str, &str, &str)], valid: &[(&str, &str, &str)], test: &[(&str, &str, &str)]) {
    std::fs::create_dir_all(dir).unwrap();
    for (name, rows) in [("train.txt", train), ("valid.txt", valid), ("test.txt", test)] {
        let text: String = rows.iter().map(|(h, r, t)| format!("{h}\t{r}\t{t}\n")).collect();
        std::fs::write(dir.join(name), text).unwrap();
    }
}

/// Disjoint chains `a_i -p-> b_i -q-> c_i` with `s(a_i, c_i)`, plus a few
/// `n` edges between chains. The only multi-step pattern behind `s` is
/// `s <- p, q`. Chains 10 and 11 hold out their `s` edge for valid/test.
pub fn write_planted_dataset(dir: &std::path::Path) {
    let names: Vec<[String; 3]> = (0..12).map(|i| [format!("a{i}"), format!("b{i}"), format!("c{i}")]).collect();
    let mut train = Vec::new();
    for (i, [a, b, c]) in names.iter().enumerate() {
        train.push((a.clone(), "p".to_string(), b.clone()));
        train.push((b.clone(), "q".to_string(), c.clone()));
        if i < 10 {
            train.push((a.clone(), "s".to_string(), c.clone()));
        }
        if i % 3 == 0 {
            train.push((c.clone(), "n".to_string(), names[(i + 4) % 12][1].clone()));
        }
    }
    let as_ref = |v: &[(String, String, String)]| -> Vec<(String, String, String)> { v.to_vec() };
    let train = as_ref(&train);
    let t: Vec<(&str, &str, &str)> = train.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())).collect();
    write_dataset(dir, &t, &[("a10", "s", "c10")], &[("a11", "s", "c11")]);
}

/// Small, fast settings for toy datasets.
pub fn toy_run_config(data: &std::path::Path, out: &std::path::Path) -> kgrule::config::RunConfig {
    kgrule::config::RunConfig {
        data: data.to_path_buf(),
        out: out.to_path_buf(),
        rule_len: 2,
        dim: 16,
        heads: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        dropout: 0.0,
        lr: 5e-3,
        max_context: 12,
        max_neighbors: 6,
        batch_size: 16,
        max_epochs: 60,
        patience: 1000,
        ..kgrule::config::RunConfig::default()
    }
}
