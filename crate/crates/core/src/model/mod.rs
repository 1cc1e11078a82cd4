//! Context encoder and rule decoder.
//!
//! The encoder reads the entity sequence of a query's neighborhood with
//! relation-aware self-attention. The decoder emits, one step at a time, a
//! probability distribution over augmented relations that the reasoner uses
//! to weight its sparse operators.

mod attention;
mod embed;

use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::RelId;
use crate::numerics::{EdgeList, Graph, Mat, ParamId, ParamStore, Real, SoftmaxMask, Var};
use crate::subgraph::{NodeSequence, Subgraph};

pub use attention::{AttentionLayerIds, AttentionMode};
pub use embed::TypeFeatures;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_entities: usize,
    pub num_base_relations: usize,
    pub dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// Number of reasoning steps (rule body length).
    pub rule_len: usize,
    /// Largest hop distance a context node can have.
    pub hops: usize,
}

impl ModelConfig {
    pub fn new(num_entities: usize, num_base_relations: usize) -> Self {
        Self {
            num_entities,
            num_base_relations,
            dim: 200,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ff_dim: 400,
            dropout: 0.1,
            rule_len: 3,
            hops: 3,
        }
    }

    pub fn relation_count(&self) -> usize {
        2 * self.num_base_relations + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.rule_len == 0 || self.hops == 0 || self.ff_dim == 0 {
            return Err(Error::Config("rule_len, hops and ff_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.num_entities == 0 || self.num_base_relations == 0 {
            return Err(Error::Config("empty entity or relation vocabulary".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DecoderLayerIds {
    pub self_attn: [ParamId; 3],
    pub cross_attn: [ParamId; 3],
    pub ln: [(ParamId, ParamId); 3],
    pub ff: [ParamId; 4],
}

/// Parameter handles, independent of the scalar type.
#[derive(Debug, Clone)]
pub struct Layout {
    /// `(E + 1) × d`; the last row is the blank token.
    pub entity_free: ParamId,
    pub relation_domain: ParamId,
    pub relation_range: ParamId,
    /// `(2R + 1) × d`, shared by encoder attention and decoder inputs.
    pub relation_embed: ParamId,
    /// `(hops + 2) × d`; the last row is the blank position.
    pub hop_position: ParamId,
    /// `(rule_len + 1) × d` decoder step positions.
    pub step_position: ParamId,
    pub encoder: Vec<AttentionLayerIds>,
    pub decoder: Vec<DecoderLayerIds>,
    pub head: [ParamId; 4],
}

/// Model structure without parameter values; forward passes read values
/// from whatever store the graph was built on.
#[derive(Debug, Clone)]
pub struct Architecture {
    pub config: ModelConfig,
    pub layout: Layout,
}

#[derive(Debug, Clone)]
pub struct Model<F: Real> {
    pub arch: Architecture,
    pub params: ParamStore<F>,
}

fn xavier<F: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<F> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| F::of(rng.gen_range(-a..a))).collect())
}

fn embedding<F: Real>(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Mat<F> {
    let a = (3.0 / dim as f64).sqrt();
    Mat::from_vec(rows, dim, (0..rows * dim).map(|_| F::of(rng.gen_range(-a..a))).collect())
}

fn layer_norm_params<F: Real>(store: &mut ParamStore<F>, prefix: &str, dim: usize) -> (ParamId, ParamId) {
    let g = store.add(format!("{prefix}.gain"), Mat::from_vec(1, dim, vec![F::one(); dim]));
    let b = store.add(format!("{prefix}.bias"), Mat::zeros(1, dim));
    (g, b)
}

fn ff_params<F: Real>(store: &mut ParamStore<F>, rng: &mut ChaCha8Rng, prefix: &str, dim: usize, hidden: usize) -> [ParamId; 4] {
    [
        store.add(format!("{prefix}.w1"), xavier(rng, dim, hidden)),
        store.add(format!("{prefix}.b1"), Mat::zeros(1, hidden)),
        store.add(format!("{prefix}.w2"), xavier(rng, hidden, dim)),
        store.add(format!("{prefix}.b2"), Mat::zeros(1, dim)),
    ]
}

impl<F: Real> Model<F> {
    /// Freshly initialized model (Xavier-uniform weights, unit LayerNorm
    /// gains, zero biases).
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let d = config.dim;
        let nrel = config.relation_count();
        let entity_free = s.add("entity.free", embedding(&mut rng, config.num_entities + 1, d));
        let relation_domain = s.add("relation.domain", embedding(&mut rng, config.num_base_relations, d));
        let relation_range = s.add("relation.range", embedding(&mut rng, config.num_base_relations, d));
        let relation_embed = s.add("relation.embed", embedding(&mut rng, nrel, d));
        let hop_position = s.add("position.hop", embedding(&mut rng, config.hops + 2, d));
        let step_position = s.add("position.step", embedding(&mut rng, config.rule_len + 1, d));
        let mut encoder = Vec::new();
        for l in 0..config.encoder_layers {
            let p = format!("encoder.{l}");
            let mut proj = |name: &str| s.add(format!("{p}.{name}"), xavier(&mut rng, d, d));
            let q = proj("wq");
            let k = proj("wk");
            let v = proj("wv");
            let kr = proj("wk_rel");
            let vr = proj("wv_rel");
            let ln1 = layer_norm_params(&mut s, &format!("{p}.ln1"), d);
            let ff = ff_params(&mut s, &mut rng, &format!("{p}.ff"), d, config.ff_dim);
            let ln2 = layer_norm_params(&mut s, &format!("{p}.ln2"), d);
            encoder.push(AttentionLayerIds {
                wq: q,
                wk: k,
                wv: v,
                wk_rel: kr,
                wv_rel: vr,
                ln1,
                ff,
                ln2,
            });
        }
        let mut decoder = Vec::new();
        for l in 0..config.decoder_layers {
            let p = format!("decoder.{l}");
            let mut proj = |name: &str| s.add(format!("{p}.{name}"), xavier(&mut rng, d, d));
            let self_attn = [proj("self.wq"), proj("self.wk"), proj("self.wv")];
            let cross_attn = [proj("cross.wq"), proj("cross.wk"), proj("cross.wv")];
            let ln = [
                layer_norm_params(&mut s, &format!("{p}.ln1"), d),
                layer_norm_params(&mut s, &format!("{p}.ln2"), d),
                layer_norm_params(&mut s, &format!("{p}.ln3"), d),
            ];
            let ff = ff_params(&mut s, &mut rng, &format!("{p}.ff"), d, config.ff_dim);
            decoder.push(DecoderLayerIds {
                self_attn,
                cross_attn,
                ln,
                ff,
            });
        }
        let head = [
            s.add("output.w1", xavier(&mut rng, d, d)),
            s.add("output.b1", Mat::zeros(1, d)),
            s.add("output.w2", xavier(&mut rng, d, nrel)),
            s.add("output.b2", Mat::zeros(1, nrel)),
        ];
        let layout = Layout {
            entity_free,
            relation_domain,
            relation_range,
            relation_embed,
            hop_position,
            step_position,
            encoder,
            decoder,
            head,
        };
        Ok(Self {
            arch: Architecture { config, layout },
            params: s,
        })
    }

    /// Rebinds a parameter store (e.g. loaded from a checkpoint) to this
    /// model's layout after checking every name and shape.
    pub fn with_params(&self, params: ParamStore<F>) -> Result<Self> {
        for (id, name, value) in self.params.iter() {
            let other = params
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if other != id || params.get(other).shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    params.get(other).shape(),
                    value.shape()
                )));
            }
        }
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.params.len(),
                params.len()
            )));
        }
        Ok(Self {
            arch: self.arch.clone(),
            params,
        })
    }
}

/// Everything the encoder needs about one query's neighborhood.
#[derive(Debug, Clone)]
pub struct EncoderInput {
    pub sequence: NodeSequence,
    /// Augmented edges between sequence positions, both directions.
    pub edges: Rc<EdgeList>,
}

impl EncoderInput {
    pub fn new(sub: &Subgraph, sequence: NodeSequence, relation_count: usize) -> Self {
        Self {
            edges: Rc::new(attention_edges(sub, sequence.len(), relation_count)),
            sequence,
        }
    }
}

/// Each base edge `(i, r, j)` becomes `(i, r, j)` and `(j, r⁻¹, i)`; the
/// self-loop relation carries no attention term.
pub fn attention_edges(sub: &Subgraph, n: usize, relation_count: usize) -> EdgeList {
    let base = (relation_count - 1) / 2;
    let mut edges = Vec::with_capacity(2 * sub.edges.len());
    for &(i, r, j) in &sub.edges {
        edges.push((i as u32, r as u32, j as u32));
        edges.push((j as u32, (r + base) as u32, i as u32));
    }
    EdgeList {
        n,
        relations: relation_count,
        edges,
    }
}

/// Cached encoder output and per-layer cross-attention keys/values.
#[derive(Debug, Clone)]
pub struct DecoderMemory {
    pub context: Var,
    keys: Vec<Var>,
    values: Vec<Var>,
    key_mask: SoftmaxMask,
}

static DISTRIBUTIONS_CHECKED: AtomicU64 = AtomicU64::new(0);
static DISTRIBUTION_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// `(checked, violations)` counts of decoder outputs that were audited for
/// being a probability distribution (non-negative, sum within 1e-6 of 1).
pub fn distribution_audit() -> (u64, u64) {
    (
        DISTRIBUTIONS_CHECKED.load(Ordering::Relaxed),
        DISTRIBUTION_VIOLATIONS.load(Ordering::Relaxed),
    )
}

fn audit_distribution<F: Real>(w: &[F]) {
    DISTRIBUTIONS_CHECKED.fetch_add(1, Ordering::Relaxed);
    let sum: f64 = w.iter().map(|x| x.f64()).sum();
    if w.iter().any(|x| x.f64().is_nan() || x.f64() < 0.0) || (sum - 1.0).abs() > 1e-6 {
        DISTRIBUTION_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
        log::error!("relation weights do not form a distribution (sum {sum})");
    }
}

impl Architecture {
    pub fn relation_count(&self) -> usize {
        self.config.relation_count()
    }

    /// Input embeddings `X` for a sequence: type-aggregated entity vectors
    /// plus hop-distance positions. Blank tokens use the blank rows.
    pub fn embed_sequence<F: Real>(&self, g: &mut Graph<'_, F>, features: &TypeFeatures, seq: &NodeSequence) -> Var {
        let l = &self.layout;
        let blank = self.config.num_entities;
        let blank_pos = self.config.hops + 1;
        let tokens: Vec<usize> = seq.tokens.iter().map(|t| t.unwrap_or(blank)).collect();
        let positions: Vec<usize> = seq
            .distances
            .iter()
            .map(|d| d.map_or(blank_pos, |d| d.min(self.config.hops)))
            .collect();
        let (dom, ran) = features.rows::<F>(&seq.tokens);
        let dom = g.constant(dom);
        let ran = g.constant(ran);
        let rd = g.param(l.relation_domain);
        let rr = g.param(l.relation_range);
        let a = g.matmul(dom, rd);
        let b = g.matmul(ran, rr);
        let y = g.gather(l.entity_free, tokens);
        let p = g.gather(l.hop_position, positions);
        let x = g.add(a, b);
        let x = g.add(x, y);
        g.add(x, p)
    }

    pub fn encode<F: Real>(&self, g: &mut Graph<'_, F>, features: &TypeFeatures, input: &EncoderInput) -> Var {
        self.encode_with(g, features, input, AttentionMode::Relational)
    }

    pub fn encode_with<F: Real>(
        &self,
        g: &mut Graph<'_, F>,
        features: &TypeFeatures,
        input: &EncoderInput,
        mode: AttentionMode,
    ) -> Var {
        let mut x = self.embed_sequence(g, features, &input.sequence);
        let xr = g.param(self.layout.relation_embed);
        let mask = SoftmaxMask {
            valid_cols: Some(input.sequence.mask.clone()),
            causal: false,
        };
        for ids in &self.layout.encoder {
            x = attention::encoder_layer(g, &self.config, ids, x, xr, &input.edges, &mask, mode);
        }
        x
    }

    /// Encodes the context and precomputes cross-attention keys/values.
    pub fn memory<F: Real>(&self, g: &mut Graph<'_, F>, features: &TypeFeatures, input: &EncoderInput) -> DecoderMemory {
        let context = self.encode(g, features, input);
        self.memory_from(g, context, &input.sequence)
    }

    pub fn memory_from<F: Real>(&self, g: &mut Graph<'_, F>, context: Var, seq: &NodeSequence) -> DecoderMemory {
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for ids in &self.layout.decoder {
            let wk = g.param(ids.cross_attn[1]);
            let wv = g.param(ids.cross_attn[2]);
            keys.push(g.matmul(context, wk));
            values.push(g.matmul(context, wv));
        }
        DecoderMemory {
            context,
            keys,
            values,
            key_mask: SoftmaxMask {
                valid_cols: Some(seq.mask.clone()),
                causal: false,
            },
        }
    }

    /// Distribution over augmented relations given the relation prefix
    /// `rule_seq` (starting with the query relation). Returns a `1 × (2R+1)`
    /// variable.
    pub fn decode_step<F: Real>(&self, g: &mut Graph<'_, F>, rule_seq: &[RelId], memory: &DecoderMemory) -> Var {
        assert!(!rule_seq.is_empty(), "decoder needs at least the query relation");
        assert!(rule_seq.len() <= self.config.rule_len + 1, "prefix longer than the rule length");
        let cfg = &self.config;
        let l = &self.layout;
        let t = rule_seq.len();
        let r = g.gather(l.relation_embed, rule_seq.to_vec());
        let p = g.gather(l.step_position, (0..t).collect());
        let mut h = g.add(r, p);
        let causal = SoftmaxMask {
            valid_cols: None,
            causal: true,
        };
        for (ids, (&k, &v)) in l.decoder.iter().zip(memory.keys.iter().zip(&memory.values)) {
            let wq = g.param(ids.self_attn[0]);
            let wk = g.param(ids.self_attn[1]);
            let wv = g.param(ids.self_attn[2]);
            let q = g.matmul(h, wq);
            let sk = g.matmul(h, wk);
            let sv = g.matmul(h, wv);
            let a = attention::multi_head(g, cfg, q, sk, sv, &causal);
            h = attention::residual_norm(g, cfg, h, a, ids.ln[0]);
            let wq = g.param(ids.cross_attn[0]);
            let q = g.matmul(h, wq);
            let a = attention::multi_head(g, cfg, q, k, v, &memory.key_mask);
            h = attention::residual_norm(g, cfg, h, a, ids.ln[1]);
            let f = attention::feed_forward(g, cfg, h, &ids.ff);
            h = attention::residual_norm(g, cfg, h, f, ids.ln[2]);
        }
        let last = g.slice_rows(h, t - 1, 1);
        let [w1, b1, w2, b2] = l.head;
        let w1 = g.param(w1);
        let b1 = g.param(b1);
        let w2 = g.param(w2);
        let b2 = g.param(b2);
        let z = g.matmul(last, w1);
        let z = g.add_row(z, b1);
        let z = g.gelu(z);
        let z = g.dropout(z, cfg.dropout);
        let z = g.matmul(z, w2);
        let logits = g.add_row(z, b2);
        let w = g.softmax_rows(logits, &SoftmaxMask::none());
        audit_distribution(g.value(w).data());
        w
    }

    /// Greedy unroll for `steps` steps: each step feeds back the argmax
    /// relation (lowest id on ties). Returns the per-step distributions and
    /// the chosen relations.
    pub fn unroll<F: Real>(
        &self,
        g: &mut Graph<'_, F>,
        query_rel: RelId,
        memory: &DecoderMemory,
        steps: usize,
    ) -> (Vec<Var>, Vec<RelId>) {
        let mut prefix = vec![query_rel];
        let mut weights = Vec::with_capacity(steps);
        for _ in 0..steps {
            let w = self.decode_step(g, &prefix, memory);
            let next = argmax(g.value(w).data());
            weights.push(w);
            prefix.push(next);
        }
        prefix.remove(0);
        (weights, prefix)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<F: Real>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
