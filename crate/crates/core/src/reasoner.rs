//! Differentiable multi-hop reasoning: an entity distribution is pushed
//! through relation adjacencies mixed by the decoder's per-step weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, GraphView, KnowledgeGraph, RelId, Triplet};
use crate::model::{Architecture, EncoderInput, TypeFeatures};
use crate::numerics::{Graph, Mat, ParamStore, Real, RelationOperator, Var};
use crate::subgraph::{extract_subgraph, to_node_sequence, SubgraphCaps};

/// Default floor applied before taking the log of a reasoning score.
pub const SCORE_FLOOR: f64 = 1e-20;

impl<F: Real> RelationOperator<F> for GraphView<'_> {
    fn dim(&self) -> usize {
        self.kg().num_entities()
    }

    fn relation_count(&self) -> usize {
        self.kg().augmented_relation_count()
    }

    fn apply(&self, rel: usize, z: &[F], scale: F, out: &mut [F]) {
        self.kg().adjacency(rel).spvm_acc(z, scale, self.skip_cell(rel), out);
    }

    fn apply_transposed(&self, rel: usize, g: &[F], out: &mut [F]) {
        self.kg().adjacency(rel).spmv_into(g, self.skip_cell(rel), out);
    }
}

/// `z' = Σ_r w_r · (z · M_r)`.
pub fn reasoning_step<F: Real>(view: &GraphView<'_>, z: &[F], weights: &[F]) -> Result<Vec<F>> {
    let n = view.kg().num_entities();
    let nrel = view.kg().augmented_relation_count();
    if z.len() != n || weights.len() != nrel {
        return Err(Error::Shape {
            op: "reasoning_step",
            detail: format!("z has {} entries (want {n}), weights {} (want {nrel})", z.len(), weights.len()),
        });
    }
    let mut out = vec![F::zero(); n];
    for (r, &w) in weights.iter().enumerate() {
        if w != F::zero() {
            RelationOperator::apply(view, r, z, w, &mut out);
        }
    }
    Ok(out)
}

/// Runs `weights.len()` steps from the one-hot vector of `head`.
pub fn reason_chain<F: Real>(view: &GraphView<'_>, head: EntityId, weights: &[Vec<F>]) -> Result<Vec<F>> {
    let mut z = one_hot(view.kg().num_entities(), head);
    for w in weights {
        z = reasoning_step(view, &z, w)?;
    }
    Ok(z)
}

/// `log(max(z[target], gamma))`.
pub fn score<F: Real>(z: &[F], target: EntityId, gamma: f64) -> f64 {
    z[target].f64().max(gamma).ln()
}

fn one_hot<F: Real>(n: usize, i: usize) -> Vec<F> {
    let mut z = vec![F::zero(); n];
    z[i] = F::one();
    z
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReasonerConfig {
    pub caps: SubgraphCaps,
    /// Encoder sequence length; at least `caps.max_context_entities`.
    pub seq_len: usize,
    pub rule_len: usize,
    pub gamma: f64,
    /// Train against the entity vector rescaled to unit mass after every
    /// step. Predictions always report raw path mass; the rescaling is a
    /// positive factor per query and leaves rankings unchanged.
    pub normalize: bool,
}

/// One query's forward pass: per-step relation weights and the final
/// entity vector.
#[derive(Debug, Clone)]
pub struct QueryTrace {
    pub weights: Vec<Var>,
    pub chosen: Vec<RelId>,
    pub z: Var,
}

/// Ties the encoder/decoder to the reasoning operator for one graph.
pub struct Reasoner<'k> {
    pub kg: &'k KnowledgeGraph,
    pub features: &'k TypeFeatures,
    pub arch: &'k Architecture,
    pub config: ReasonerConfig,
}

impl<'k> Reasoner<'k> {
    pub fn new(kg: &'k KnowledgeGraph, features: &'k TypeFeatures, arch: &'k Architecture, config: ReasonerConfig) -> Result<Self> {
        if config.gamma.is_nan() || config.gamma <= 0.0 {
            return Err(Error::Config(format!("score floor {} must be positive", config.gamma)));
        }
        if config.seq_len < config.caps.max_context_entities {
            return Err(Error::Config(format!(
                "sequence length {} below the context cap {}",
                config.seq_len, config.caps.max_context_entities
            )));
        }
        if arch.relation_count() != kg.augmented_relation_count() {
            return Err(Error::Config("model and graph disagree on the relation count".into()));
        }
        if arch.config.num_entities != kg.num_entities() {
            return Err(Error::Config("model and graph disagree on the entity count".into()));
        }
        Ok(Self {
            kg,
            features,
            arch,
            config,
        })
    }

    /// Encoder input for a query from `head`, hiding `mask` when given.
    pub fn encoder_input(&self, head: EntityId, mask: Option<Triplet>, seed: u64) -> Result<EncoderInput> {
        let sub = extract_subgraph(self.kg, head, self.config.caps, mask, seed);
        let seq = to_node_sequence(&sub, self.config.seq_len)?;
        Ok(EncoderInput::new(&sub, seq, self.kg.augmented_relation_count()))
    }

    /// Forward pass for `(head, rel, ?)` over `view`, optionally rescaling
    /// the entity vector to unit mass after each step.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<'g, F: Real>(
        &self,
        g: &mut Graph<'g, F>,
        view: &'g GraphView<'g>,
        head: EntityId,
        rel: RelId,
        seed: u64,
        normalize: bool,
    ) -> Result<QueryTrace> {
        let input = self.encoder_input(head, view.excluded(), seed)?;
        let memory = self.arch.memory(g, self.features, &input);
        let (weights, chosen) = self.arch.unroll(g, rel, &memory, self.config.rule_len);
        let mut z = g.constant(Mat::row_vector(one_hot(self.kg.num_entities(), head)));
        for &w in &weights {
            z = g.mix(z, w, view);
            if normalize {
                z = g.normalize_l1(z, F::of(self.config.gamma));
            }
        }
        Ok(QueryTrace { weights, chosen, z })
    }

    /// `-log(max(z_T[tail], γ))` for a training triplet (with `z_T` at unit
    /// mass when `normalize` is set), with the triplet
    /// itself (and its inverse) hidden from context and reasoning.
    pub fn query_loss<'g, F: Real>(&self, g: &mut Graph<'g, F>, view: &'g GraphView<'g>, t: Triplet, seed: u64) -> Result<Var> {
        let trace = self.forward(g, view, t.head, t.rel, seed, self.config.normalize)?;
        let phi = g.log_clamp_pick(trace.z, t.tail, F::of(self.config.gamma));
        Ok(g.scale(phi, -F::one()))
    }

    /// Scores `log(max(z_T[e], γ))` for every entity `e` given `(head, rel)`
    /// on the unmasked graph, plus the decoded weights.
    pub fn predict_all<F: Real>(&self, params: &ParamStore<F>, head: EntityId, rel: RelId, seed: u64) -> Result<Prediction> {
        let view = self.kg.view(None);
        let mut g = Graph::new(params);
        let trace = self.forward(&mut g, &view, head, rel, seed, false)?;
        g.status()?;
        let gamma = self.config.gamma;
        let scores = g.value(trace.z).data().iter().map(|v| v.f64().max(gamma).ln()).collect();
        let weights = trace
            .weights
            .iter()
            .map(|&w| g.value(w).data().iter().map(|v| v.f64()).collect())
            .collect();
        Ok(Prediction {
            scores,
            weights,
            chosen: trace.chosen,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub scores: Vec<f64>,
    /// Per step, the distribution over augmented relations.
    pub weights: Vec<Vec<f64>>,
    pub chosen: Vec<RelId>,
}

/// Both directions of every training triplet, `(h, r, t)` and `(t, r⁻¹, h)`.
pub fn bidirectional(kg: &KnowledgeGraph, triplets: &[Triplet]) -> Vec<Triplet> {
    let space = kg.relations();
    triplets
        .iter()
        .flat_map(|t| [*t, Triplet::new(t.tail, space.inverse(t.rel), t.head)])
        .collect()
}

/// Deterministic per-query seed.
pub fn query_seed(base: u64, epoch: u64, index: u64) -> u64 {
    let mut x = base ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^= x >> 33;
    x
}

/// Shuffled order of `n` items for an epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(query_seed(seed, epoch, u64::MAX)));
    idx
}
