//! Filtered link-prediction ranking.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::{Dataset, EntityId, KnowledgeGraph, RelId, RelationSpace, Triplet};
use crate::numerics::{ParamStore, Real};
use crate::reasoner::{query_seed, Reasoner};

/// Every known tail for `(head, augmented relation)` across all splits,
/// including the inverse direction of each triplet.
#[derive(Debug, Clone, Default)]
pub struct KnownAnswers {
    map: HashMap<(EntityId, RelId), HashSet<EntityId>>,
}

impl KnownAnswers {
    pub fn new(space: RelationSpace, splits: &[&[Triplet]]) -> Self {
        let mut map: HashMap<(EntityId, RelId), HashSet<EntityId>> = HashMap::new();
        for t in splits.iter().flat_map(|s| s.iter()) {
            map.entry((t.head, t.rel)).or_default().insert(t.tail);
            map.entry((t.tail, space.inverse(t.rel))).or_default().insert(t.head);
        }
        Self { map }
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        Self::new(RelationSpace::new(ds.relations.len()), &[&ds.train, &ds.valid, &ds.test])
    }

    pub fn get(&self, head: EntityId, rel: RelId) -> Option<&HashSet<EntityId>> {
        self.map.get(&(head, rel))
    }
}

/// `1 + #{better} + U{0..=#{tied}}`, ignoring other known answers.
/// Non-finite scores count as the lowest possible score.
pub fn filtered_rank<R: Rng>(scores: &[f64], target: EntityId, known: Option<&HashSet<EntityId>>, rng: &mut R) -> usize {
    let clean = |s: f64| if s.is_nan() { f64::NEG_INFINITY } else { s };
    let st = clean(scores[target]);
    let mut better = 0;
    let mut tied = 0;
    for (e, &s) in scores.iter().enumerate() {
        if e == target || known.is_some_and(|k| k.contains(&e)) {
            continue;
        }
        let s = clean(s);
        if s > st {
            better += 1;
        } else if s == st {
            tied += 1;
        }
    }
    1 + better + rng.gen_range(0..=tied)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub count: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Empty("rank list"));
        }
        let n = ranks.len() as f64;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Ok(Self {
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            count: ranks.len(),
        })
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "queries = {}", self.count)?;
        writeln!(f, "mrr = {:.4}", self.mrr)?;
        writeln!(f, "hits@1 = {:.4}", self.hits1)?;
        writeln!(f, "hits@3 = {:.4}", self.hits3)?;
        write!(f, "hits@10 = {:.4}", self.hits10)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankRecord {
    pub head: EntityId,
    pub rel: RelId,
    pub tail: EntityId,
    pub rank: usize,
}

/// Seed shared by every evaluation of `(head, rel)` so repeated runs
/// extract the same context.
pub fn context_seed(seed: u64, head: EntityId, rel: RelId) -> u64 {
    query_seed(seed, head as u64, rel as u64)
}

/// Ranks both directions of every triplet: `(h, r, ?)` against `t` and
/// `(t, r⁻¹, ?)` against `h`.
pub fn evaluate<F: Real>(
    reasoner: &Reasoner<'_>,
    params: &ParamStore<F>,
    triplets: &[Triplet],
    known: &KnownAnswers,
    seed: u64,
) -> Result<(Metrics, Vec<RankRecord>)> {
    let space = reasoner.kg.relations();
    let queries: Vec<Triplet> = triplets
        .iter()
        .flat_map(|t| [*t, Triplet::new(t.tail, space.inverse(t.rel), t.head)])
        .collect();
    let records: Vec<RankRecord> = queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let pred = reasoner.predict_all(params, q.head, q.rel, context_seed(seed, q.head, q.rel))?;
            let mut rng = ChaCha8Rng::seed_from_u64(query_seed(seed ^ 0x5EED, i as u64, q.tail as u64));
            let rank = filtered_rank(&pred.scores, q.tail, known.get(q.head, q.rel), &mut rng);
            Ok(RankRecord {
                head: q.head,
                rel: q.rel,
                tail: q.tail,
                rank,
            })
        })
        .collect::<Result<_>>()?;
    let ranks: Vec<usize> = records.iter().map(|r| r.rank).collect();
    Ok((Metrics::from_ranks(&ranks)?, records))
}

/// Tab-separated `head relation tail rank` lines with names.
pub fn write_ranks(path: &Path, ds: &Dataset, kg: &KnowledgeGraph, records: &[RankRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            ds.entities.name(r.head),
            ds.relation_name(kg.relations(), r.rel),
            ds.entities.name(r.tail),
            r.rank
        )
        .expect("in-memory write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
