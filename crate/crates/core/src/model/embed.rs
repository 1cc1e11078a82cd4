use crate::kg::{EntityId, KnowledgeGraph};
use crate::numerics::{Mat, ParamStore, Real};

use super::Architecture;

/// Normalized domain/range relation mixtures per entity, computed once
/// from training adjacency. Entities without outgoing (incoming) edges
/// have an empty domain (range) mixture.
#[derive(Debug, Clone)]
pub struct TypeFeatures {
    relations: usize,
    domain: Vec<Vec<(usize, f64)>>,
    range: Vec<Vec<(usize, f64)>>,
}

impl TypeFeatures {
    pub fn from_graph(kg: &KnowledgeGraph) -> Self {
        let (out_deg, in_deg) = kg.relation_degrees();
        let normalize = |counts: &Vec<u32>| -> Vec<(usize, f64)> {
            let total: u32 = counts.iter().sum();
            if total == 0 {
                return Vec::new();
            }
            counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(r, &c)| (r, c as f64 / total as f64))
                .collect()
        };
        Self {
            relations: kg.relations().base_count(),
            domain: out_deg.iter().map(normalize).collect(),
            range: in_deg.iter().map(normalize).collect(),
        }
    }

    pub fn domain(&self, e: EntityId) -> &[(usize, f64)] {
        &self.domain[e]
    }

    pub fn range(&self, e: EntityId) -> &[(usize, f64)] {
        &self.range[e]
    }

    /// Dense `(n × R)` domain and range weight rows for a token sequence;
    /// blank tokens get zero rows.
    pub fn rows<F: Real>(&self, tokens: &[Option<EntityId>]) -> (Mat<F>, Mat<F>) {
        let mut dom = Mat::zeros(tokens.len(), self.relations);
        let mut ran = Mat::zeros(tokens.len(), self.relations);
        for (i, t) in tokens.iter().enumerate() {
            if let Some(e) = *t {
                for &(r, w) in &self.domain[e] {
                    dom.set(i, r, F::of(w));
                }
                for &(r, w) in &self.range[e] {
                    ran.set(i, r, F::of(w));
                }
            }
        }
        (dom, ran)
    }
}

impl Architecture {
    /// Type-aggregated embedding of one entity, evaluated directly on the
    /// parameter values.
    pub fn embed_entity<F: Real>(&self, params: &ParamStore<F>, features: &TypeFeatures, e: EntityId) -> Vec<F> {
        let l = &self.layout;
        let mut x = params.get(l.entity_free).row(e).to_vec();
        for &(r, w) in features.domain(e) {
            for (xi, &v) in x.iter_mut().zip(params.get(l.relation_domain).row(r)) {
                *xi += F::of(w) * v;
            }
        }
        for &(r, w) in features.range(e) {
            for (xi, &v) in x.iter_mut().zip(params.get(l.relation_range).row(r)) {
                *xi += F::of(w) * v;
            }
        }
        x
    }
}
