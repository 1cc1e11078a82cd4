//! Mini-batch training with early stopping on validation MRR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{evaluate, KnownAnswers};
use crate::kg::Triplet;
use crate::model::Model;
use crate::numerics::{Adam, AdamConfig, Graph, Grads, ParamStore};
use crate::reasoner::{bidirectional, epoch_order, query_seed, Reasoner};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Validation rounds without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Queries per parallel work item. Gradients are merged in work-item
    /// order, so results do not depend on the thread count.
    pub chunk: usize,
    /// Evaluate on at most this many validation triplets (all if `None`).
    pub valid_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 64,
            max_epochs: 1000,
            patience: 20,
            seed: 0,
            chunk: 8,
            valid_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub valid_mrr: f64,
}

/// Where a run picks up: optimizer moments, the last finished epoch and
/// the best validation MRR so far.
#[derive(Debug, Clone)]
pub struct ResumeState {
    pub adam: Adam<f32>,
    pub epoch: usize,
    pub best_mrr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ParamStore<f32>,
    pub best_mrr: f64,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Loss and parameter gradients of a batch. Every query hides its own edge
/// from context and reasoning.
pub fn batch_gradients(
    reasoner: &Reasoner<'_>,
    params: &ParamStore<f32>,
    batch: &[Triplet],
    seeds: &[u64],
    chunk: usize,
) -> Result<(f64, Grads<f32>)> {
    let parts: Vec<(f64, Grads<f32>)> = batch
        .par_chunks(chunk.max(1))
        .zip(seeds.par_chunks(chunk.max(1)))
        .map(|(queries, seeds)| {
            let mut grads = Grads::for_store(params);
            let mut total = 0.0;
            for (&q, &seed) in queries.iter().zip(seeds) {
                let view = reasoner.kg.view(Some(q));
                let mut g = Graph::training(params, ChaCha8Rng::seed_from_u64(seed ^ 0xD20F));
                let loss = reasoner.query_loss(&mut g, &view, q, seed)?;
                g.status()?;
                let value = g.value(loss).data()[0] as f64;
                if !value.is_finite() {
                    return Err(Error::NonFinite { op: "loss" });
                }
                total += value;
                g.backward(loss, &mut grads);
            }
            Ok((total, grads))
        })
        .collect::<Result<_>>()?;
    let mut grads = Grads::for_store(params);
    let mut total = 0.0;
    for (l, g) in parts {
        total += l;
        grads.merge(g);
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite { op: "gradient" });
    }
    Ok((total, grads))
}

/// One pass over the bidirectional training queries in a seeded order.
/// Returns the summed loss.
pub fn train_epoch(
    reasoner: &Reasoner<'_>,
    model: &mut Model<f32>,
    adam: &mut Adam<f32>,
    queries: &[Triplet],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let order = epoch_order(queries.len(), cfg.seed, epoch as u64);
    let mut total = 0.0;
    for (b, idx) in order.chunks(cfg.batch_size.max(1)).enumerate() {
        let batch: Vec<Triplet> = idx.iter().map(|&i| queries[i]).collect();
        let seeds: Vec<u64> = idx.iter().map(|&i| query_seed(cfg.seed, epoch as u64, i as u64)).collect();
        let (loss, grads) = batch_gradients(reasoner, &model.params, &batch, &seeds, cfg.chunk).map_err(|e| {
            log::error!("epoch {epoch} batch {b}: {e}; first query {:?}", batch.first());
            e
        })?;
        adam.step(&mut model.params, &grads);
        total += loss;
    }
    Ok(total)
}

/// Trains until `max_epochs` or until validation MRR has not improved for
/// `patience` rounds. `on_epoch` runs after every epoch and is told
/// whether it set a new best.
#[allow(clippy::too_many_arguments)]
pub fn train(
    reasoner: &Reasoner<'_>,
    model: &mut Model<f32>,
    resume: Option<ResumeState>,
    train: &[Triplet],
    valid: &[Triplet],
    known: &KnownAnswers,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &Model<f32>, &Adam<f32>, bool) -> Result<()>,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let queries = bidirectional(reasoner.kg, train);
    let valid = match cfg.valid_limit {
        Some(n) => &valid[..n.min(valid.len())],
        None => valid,
    };
    let ResumeState {
        mut adam,
        epoch: start,
        mut best_mrr,
    } = resume.unwrap_or_else(|| ResumeState {
        adam: Adam::new(
            &model.params,
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
        ),
        epoch: 0,
        best_mrr: f64::NEG_INFINITY,
    });
    adam.config.lr = cfg.lr;
    let mut best = model.params.clone();
    let mut best_epoch = start;
    let mut stale = 0;
    let mut log = Vec::new();
    for epoch in start + 1..=cfg.max_epochs {
        let loss = train_epoch(reasoner, model, &mut adam, &queries, cfg, epoch)?;
        let valid_mrr = if valid.is_empty() {
            -loss
        } else {
            evaluate(reasoner, &model.params, valid, known, cfg.seed)?.0.mrr
        };
        let entry = EpochLog { epoch, loss, valid_mrr };
        log::info!("epoch {epoch}: loss {loss:.4} valid mrr {valid_mrr:.4}");
        let improved = valid_mrr > best_mrr;
        if improved {
            best_mrr = valid_mrr;
            best_epoch = epoch;
            best = model.params.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        log.push(entry);
        on_epoch(&entry, model, &adam, improved)?;
        if stale >= cfg.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_mrr,
        best_epoch,
        log,
    })
}
