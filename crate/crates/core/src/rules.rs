//! Symbolic rules decoded from per-step relation weights, their
//! aggregation across queries, and closed-world standard confidence.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{Dataset, EntityId, GraphView, KnowledgeGraph, RelId};

/// Live-path budget per query; the lowest-confidence paths go first.
pub const MAX_LIVE_PATHS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub head: RelId,
    pub body: Vec<RelId>,
    pub confidence: f64,
    /// Number of observations averaged into `confidence`.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub relations: Vec<RelId>,
    pub entities: Vec<EntityId>,
    pub weight: f64,
}

/// Expands relation paths from `head` step by step. At each step the
/// weights are divided by their maximum, and every relation whose scaled
/// weight is strictly above `thr` extends each live path to all entities
/// reachable through it. Returns the surviving paths after the last step.
pub fn expand_paths(view: &GraphView<'_>, head: EntityId, weights: &[Vec<f64>], thr: f64) -> Vec<PathState> {
    let mut live = vec![PathState {
        relations: Vec::new(),
        entities: vec![head],
        weight: 1.0,
    }];
    for w in weights {
        let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max.is_nan() || max <= 0.0 {
            return Vec::new();
        }
        let picked: Vec<(RelId, f64)> = w
            .iter()
            .enumerate()
            .map(|(r, &x)| (r, x / max))
            .filter(|&(_, s)| s > thr)
            .collect();
        let mut next = Vec::new();
        for path in &live {
            let last = *path.entities.last().expect("paths start at the head");
            for &(r, s) in &picked {
                for n in view.neighbors(r, last) {
                    let mut relations = path.relations.clone();
                    relations.push(r);
                    let mut entities = path.entities.clone();
                    entities.push(n);
                    next.push(PathState {
                        relations,
                        entities,
                        weight: path.weight * s,
                    });
                }
            }
        }
        if next.len() > MAX_LIVE_PATHS {
            // Stable sort keeps discovery order among equal weights.
            next.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap_or(Ordering::Equal));
            next.truncate(MAX_LIVE_PATHS);
        }
        live = next;
        if live.is_empty() {
            break;
        }
    }
    live
}

/// Rule bodies and confidences for one query: one entry per surviving path,
/// with self-loop steps removed. Paths that consist only of self-loops are
/// dropped.
pub fn parse_rules(view: &GraphView<'_>, head: EntityId, weights: &[Vec<f64>], thr: f64) -> Vec<(Vec<RelId>, f64)> {
    let self_loop = view.kg().relations().self_loop();
    expand_paths(view, head, weights, thr)
        .into_iter()
        .filter_map(|p| {
            let body: Vec<RelId> = p.relations.into_iter().filter(|&r| r != self_loop).collect();
            (!body.is_empty()).then_some((body, p.weight))
        })
        .collect()
}

/// Confidence observations keyed by `(head relation, body)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleTable {
    map: BTreeMap<(RelId, Vec<RelId>), Vec<f64>>,
}

impl RuleTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, head: RelId, body: Vec<RelId>, confidence: f64) {
        self.map.entry((head, body)).or_default().push(confidence);
    }

    pub fn extend(&mut self, head: RelId, parsed: Vec<(Vec<RelId>, f64)>) {
        for (body, c) in parsed {
            self.add(head, body, c);
        }
    }

    /// Appends every observation of `other`.
    pub fn merge(&mut self, other: RuleTable) {
        for (k, v) in other.map {
            self.map.entry(k).or_default().extend(v);
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Mean confidence per rule, best first. Ties go to the rule with more
    /// observations, then to the lexicographically smaller (head, body).
    pub fn aggregate(&self) -> Vec<Rule> {
        let mut rules: Vec<Rule> = self
            .map
            .iter()
            .map(|((head, body), obs)| Rule {
                head: *head,
                body: body.clone(),
                confidence: obs.iter().sum::<f64>() / obs.len() as f64,
                support: obs.len(),
            })
            .collect();
        rules.sort_by(|a, b| {
            b.confidence
                .partial_cmp(&a.confidence)
                .unwrap_or(Ordering::Equal)
                .then(b.support.cmp(&a.support))
                .then_with(|| (a.head, &a.body).cmp(&(b.head, &b.body)))
        });
        rules
    }
}

/// Fraction of body-connected pairs `(X, Y)` that are also linked by the
/// head relation. `None` when no pair supports the body.
pub fn standard_confidence(kg: &KnowledgeGraph, head: RelId, body: &[RelId]) -> Option<f64> {
    assert!(!body.is_empty(), "rule body must be nonempty");
    let n = kg.num_entities();
    let mut stamp = vec![usize::MAX; n];
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    let (mut support, mut hits) = (0u64, 0u64);
    let mut tag = 0usize;
    for x in 0..n {
        frontier.clear();
        frontier.push(x);
        for &r in body {
            tag += 1;
            next.clear();
            let adj = kg.adjacency(r);
            for &u in &frontier {
                for &v in adj.row(u) {
                    let v = v as usize;
                    if stamp[v] != tag {
                        stamp[v] = tag;
                        next.push(v);
                    }
                }
            }
            std::mem::swap(&mut frontier, &mut next);
            if frontier.is_empty() {
                break;
            }
        }
        support += frontier.len() as u64;
        hits += frontier.iter().filter(|&&y| kg.adjacency(head).contains(x, y)).count() as u64;
    }
    (support > 0).then(|| hits as f64 / support as f64)
}

/// Mean standard confidence over the first `k` rules whose confidence is
/// defined. Returns the mean and how many rules it covers; fewer than `k`
/// is logged as a warning. `None` if no rule has a defined value.
pub fn topk_average_sc(kg: &KnowledgeGraph, rules: &[Rule], k: usize) -> Option<(f64, usize)> {
    let scores: Vec<f64> = rules
        .iter()
        .filter_map(|r| standard_confidence(kg, r.head, &r.body))
        .take(k)
        .collect();
    if scores.len() < k {
        log::warn!("only {} rules with defined confidence for top-{k}", scores.len());
    }
    if scores.is_empty() {
        return None;
    }
    Some((scores.iter().sum::<f64>() / scores.len() as f64, scores.len()))
}

/// `confidence<TAB>head<TAB>r1,r2,...` per rule.
pub fn format_rules(ds: &Dataset, kg: &KnowledgeGraph, rules: &[Rule]) -> String {
    let space = kg.relations();
    let mut out = String::new();
    for r in rules {
        let body: Vec<String> = r.body.iter().map(|&b| ds.relation_name(space, b)).collect();
        writeln!(out, "{:.6}\t{}\t{}", r.confidence, ds.relation_name(space, r.head), body.join(",")).expect("string write");
    }
    out
}

pub fn write_rules(path: &Path, ds: &Dataset, kg: &KnowledgeGraph, rules: &[Rule]) -> Result<()> {
    std::fs::write(path, format_rules(ds, kg, rules)).map_err(|e| Error::io(path, e))
}

/// Parses a rule file. Every relation name must be known; errors carry the
/// 1-based line number.
pub fn read_rules(path: &Path, ds: &Dataset, kg: &KnowledgeGraph) -> Result<Vec<Rule>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let space = kg.relations();
    let mut rules = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let confidence: f64 = fields[0].parse().map_err(|_| bad(format!("bad confidence `{}`", fields[0])))?;
        let head = ds.relation_id(space, fields[1]).map_err(|e| bad(e.to_string()))?;
        let body = fields[2]
            .split(',')
            .map(|name| ds.relation_id(space, name.trim()).map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if body.is_empty() || fields[2].trim().is_empty() {
            return Err(bad("empty rule body".into()));
        }
        if !seen.insert((head, body.clone())) {
            log::warn!("{}:{}: duplicate rule", path.display(), i + 1);
        }
        rules.push(Rule {
            head,
            body,
            confidence,
            support: 1,
        });
    }
    Ok(rules)
}
