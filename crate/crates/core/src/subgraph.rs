//! Capped k-hop neighborhoods and their linearization into node sequences.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelId, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubgraphCaps {
    pub max_context_entities: usize,
    pub max_neighbors_per_relation: usize,
    pub hops: usize,
}

impl SubgraphCaps {
    pub fn new(max_context_entities: usize, max_neighbors_per_relation: usize, hops: usize) -> Result<Self> {
        if max_context_entities == 0 || max_neighbors_per_relation == 0 || hops == 0 {
            return Err(Error::Config("subgraph caps must be positive".into()));
        }
        Ok(Self {
            max_context_entities,
            max_neighbors_per_relation,
            hops,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    /// Entities in discovery order; `nodes[0]` is the head.
    pub nodes: Vec<EntityId>,
    /// Hop distance from the head, aligned with `nodes`.
    pub distance: Vec<usize>,
    /// Base-relation edges `(src index, relation, dst index)` among `nodes`.
    pub edges: Vec<(usize, RelId, usize)>,
    /// For every node but the head: the node index and augmented relation
    /// through which it was first reached.
    pub discovered_by: Vec<Option<(usize, RelId)>>,
}

impl Subgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Level-synchronous BFS from `head` over base and inverse relations.
///
/// Per expanded node and relation at most `max_neighbors_per_relation`
/// neighbors are followed (uniform sample when over the cap). When a new
/// level would overflow `max_context_entities` a uniform subset of it fills
/// the remaining slots. The edge hidden by `query_mask` is never traversed
/// nor listed.
pub fn extract_subgraph(
    kg: &KnowledgeGraph,
    head: EntityId,
    caps: SubgraphCaps,
    query_mask: Option<Triplet>,
    seed: u64,
) -> Subgraph {
    let view = kg.view(query_mask);
    let space = kg.relations();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index: Vec<Option<usize>> = vec![None; kg.num_entities()];
    index[head] = Some(0);
    let mut nodes = vec![head];
    let mut distance = vec![0];
    let mut discovered_by = vec![None];
    let mut frontier = vec![0usize];
    let walk_relations = 2 * space.base_count();

    for level in 1..=caps.hops {
        if nodes.len() >= caps.max_context_entities || frontier.is_empty() {
            break;
        }
        let mut candidates: Vec<(EntityId, usize, RelId)> = Vec::new();
        let mut pending = vec![false; kg.num_entities()];
        for &u in &frontier {
            let e = nodes[u];
            for rel in 0..walk_relations {
                let mut nbrs: Vec<EntityId> = view.neighbors(rel, e).collect();
                if nbrs.len() > caps.max_neighbors_per_relation {
                    let mut keep = sample(&mut rng, nbrs.len(), caps.max_neighbors_per_relation).into_vec();
                    keep.sort_unstable();
                    nbrs = keep.into_iter().map(|k| nbrs[k]).collect();
                }
                for v in nbrs {
                    if index[v].is_none() && !pending[v] {
                        pending[v] = true;
                        candidates.push((v, u, rel));
                    }
                }
            }
        }
        let room = caps.max_context_entities - nodes.len();
        if candidates.len() > room {
            let mut keep = sample(&mut rng, candidates.len(), room).into_vec();
            keep.sort_unstable();
            candidates = keep.into_iter().map(|k| candidates[k]).collect();
        }
        frontier.clear();
        for (v, parent, rel) in candidates {
            index[v] = Some(nodes.len());
            frontier.push(nodes.len());
            nodes.push(v);
            distance.push(level);
            discovered_by.push(Some((parent, rel)));
        }
    }

    let mut edges = Vec::new();
    for (i, &e) in nodes.iter().enumerate() {
        for rel in 0..space.base_count() {
            for v in view.neighbors(rel, e) {
                if let Some(j) = index[v] {
                    edges.push((i, rel, j));
                }
            }
        }
    }
    Subgraph {
        nodes,
        distance,
        edges,
        discovered_by,
    }
}

/// Fixed-length token sequence: real nodes first, then `None` (blank).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSequence {
    pub tokens: Vec<Option<EntityId>>,
    pub distances: Vec<Option<usize>>,
    pub mask: Vec<bool>,
}

impl NodeSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

pub fn to_node_sequence(sub: &Subgraph, seq_len: usize) -> Result<NodeSequence> {
    if sub.nodes.len() > seq_len {
        return Err(Error::Config(format!(
            "subgraph has {} nodes but the sequence length is {seq_len}",
            sub.nodes.len()
        )));
    }
    let pad = seq_len - sub.nodes.len();
    let tokens = sub.nodes.iter().map(|&e| Some(e)).chain(std::iter::repeat_n(None, pad)).collect();
    let distances = sub.distance.iter().map(|&d| Some(d)).chain(std::iter::repeat_n(None, pad)).collect();
    let mask = std::iter::repeat_n(true, sub.nodes.len()).chain(std::iter::repeat_n(false, pad)).collect();
    Ok(NodeSequence { tokens, distances, mask })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps(max_ctx: usize, max_nb: usize, hops: usize) -> SubgraphCaps {
        SubgraphCaps::new(max_ctx, max_nb, hops).unwrap()
    }

    #[test]
    fn isolated_head() {
        let kg = KnowledgeGraph::build(&[Triplet::new(1, 0, 2)], 3, 1).unwrap();
        let sub = extract_subgraph(&kg, 0, caps(10, 5, 3), None, 1);
        assert_eq!(sub.nodes, vec![0]);
        assert!(sub.edges.is_empty());
    }

    #[test]
    fn chain_respects_hop_bound() {
        let kg = KnowledgeGraph::build(&[Triplet::new(0, 0, 1), Triplet::new(1, 0, 2)], 3, 1).unwrap();
        let sub = extract_subgraph(&kg, 0, caps(10, 5, 1), None, 1);
        assert_eq!(sub.nodes, vec![0, 1]);
        assert_eq!(sub.edges, vec![(0, 0, 1)]);
        assert_eq!(sub.distance, vec![0, 1]);
    }

    #[test]
    fn star_is_capped_per_relation() {
        let train: Vec<Triplet> = (1..=50).map(|i| Triplet::new(0, 0, i)).collect();
        let kg = KnowledgeGraph::build(&train, 51, 1).unwrap();
        let sub = extract_subgraph(&kg, 0, caps(140, 40, 2), None, 7);
        assert_eq!(sub.nodes.len(), 41);
        assert_eq!(sub.edges.len(), 40);
    }

    #[test]
    fn query_edge_is_hidden() {
        let kg = KnowledgeGraph::build(&[Triplet::new(0, 0, 1), Triplet::new(0, 1, 2)], 3, 2).unwrap();
        let sub = extract_subgraph(&kg, 0, caps(10, 5, 2), Some(Triplet::new(0, 0, 1)), 0);
        assert_eq!(sub.nodes, vec![0, 2]);
        assert_eq!(sub.edges, vec![(0, 1, 1)]);
    }

    #[test]
    fn context_cap_truncates_frontier() {
        let train: Vec<Triplet> = (1..=30).map(|i| Triplet::new(0, i % 3, i)).collect();
        let kg = KnowledgeGraph::build(&train, 31, 3).unwrap();
        let sub = extract_subgraph(&kg, 0, caps(10, 40, 2), None, 3);
        assert_eq!(sub.nodes.len(), 10);
        assert_eq!(sub, extract_subgraph(&kg, 0, caps(10, 40, 2), None, 3));
    }

    #[test]
    fn padding_and_overflow() {
        let one = Subgraph {
            nodes: vec![4],
            distance: vec![0],
            edges: vec![],
            discovered_by: vec![None],
        };
        let seq = to_node_sequence(&one, 4).unwrap();
        assert_eq!(seq.tokens, vec![Some(4), None, None, None]);
        assert_eq!(seq.distances[0], Some(0));
        assert_eq!(seq.mask, vec![true, false, false, false]);

        let three = Subgraph {
            nodes: vec![0, 1, 2],
            distance: vec![0, 1, 1],
            edges: vec![],
            discovered_by: vec![None, Some((0, 0)), Some((0, 0))],
        };
        assert!(to_node_sequence(&three, 3).unwrap().mask.iter().all(|&m| m));
        let mut four = three.clone();
        four.nodes.push(3);
        four.distance.push(2);
        assert!(to_node_sequence(&four, 3).is_err());
    }
}
