//! Operator-facing workflows shared by the binary and the examples. Each
//! command reads a [`RunConfig`] and writes its artifacts under `cfg.out`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{context_seed, evaluate as run_evaluation, write_ranks, KnownAnswers, Metrics};
use crate::kg::{Dataset, DatasetStats, KnowledgeGraph, Split, Triplet};
use crate::model::{Model, ModelConfig, TypeFeatures};
use crate::numerics::{read_checkpoint, write_checkpoint, Adam, Mat, ParamStore};
use crate::reasoner::{bidirectional, Reasoner};
use crate::rules::{parse_rules, read_rules, standard_confidence, topk_average_sc, write_rules, Rule, RuleTable};
use crate::train::{train as run_training, EpochLog, ResumeState, TrainOutcome};

pub const MODEL_FILE: &str = "model.ckpt";
pub const META_FILE: &str = "model.meta";
pub const OPTIMIZER_FILE: &str = "optimizer.ckpt";
pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "train.log";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the resolved configuration beside a command's outputs.
pub fn echo_config(cfg: &RunConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join(CONFIG_FILE), &cfg.to_string())
}

/// Everything a command needs about the data: splits, train graph,
/// type features and the filter set.
pub struct Workspace {
    pub dataset: Dataset,
    pub kg: KnowledgeGraph,
    pub features: TypeFeatures,
    pub known: KnownAnswers,
}

impl Workspace {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        Self::from_dataset(Dataset::load(&cfg.data)?)
    }

    pub fn from_dataset(dataset: Dataset) -> Result<Self> {
        let kg = dataset.build_graph()?;
        let features = TypeFeatures::from_graph(&kg);
        let known = KnownAnswers::from_dataset(&dataset);
        Ok(Self {
            dataset,
            kg,
            features,
            known,
        })
    }

    pub fn model_config(&self, cfg: &RunConfig) -> ModelConfig {
        cfg.model_config(self.kg.num_entities(), self.kg.relations().base_count())
    }

    pub fn reasoner<'k>(&'k self, cfg: &RunConfig, model: &'k Model<f32>) -> Result<Reasoner<'k>> {
        Reasoner::new(&self.kg, &self.features, &model.arch, cfg.reasoner_config()?)
    }
}

/// Loads the dataset, writes vocabularies and statistics to `cfg.out`.
pub fn prepare(cfg: &RunConfig) -> Result<DatasetStats> {
    cfg.validate()?;
    let ds = Dataset::load(&cfg.data)?;
    let stats = ds.stats();
    echo_config(cfg)?;
    ds.entities.write(&cfg.out.join("entities.txt"))?;
    ds.relations.write(&cfg.out.join("relations.txt"))?;
    write_text(&cfg.out.join("stats.txt"), &format!("{stats}\n"))?;
    let (ue, ur) = ds.unseen_counts();
    if ue + ur > 0 {
        log::warn!("{ue} entities and {ur} relations appear only outside the training split");
    }
    Ok(stats)
}

/// Sidecar contents stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub epoch: usize,
    pub valid_mrr: f64,
    pub seed: u64,
}

impl CheckpointMeta {
    fn render(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        for (k, v) in [
            ("num_entities", m.num_entities.to_string()),
            ("num_base_relations", m.num_base_relations.to_string()),
            ("dim", m.dim.to_string()),
            ("heads", m.heads.to_string()),
            ("encoder_layers", m.encoder_layers.to_string()),
            ("decoder_layers", m.decoder_layers.to_string()),
            ("ff_dim", m.ff_dim.to_string()),
            ("dropout", m.dropout.to_string()),
            ("rule_len", m.rule_len.to_string()),
            ("hops", m.hops.to_string()),
            ("epoch", self.epoch.to_string()),
            ("valid_mrr", self.valid_mrr.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            writeln!(s, "{k} = {v}").expect("string write");
        }
        s
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("{}: bad line `{line}`", path.display())))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
            map.get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("sidecar lacks a valid `{key}`")))
        }
        Ok(Self {
            model: ModelConfig {
                num_entities: get(&map, "num_entities")?,
                num_base_relations: get(&map, "num_base_relations")?,
                dim: get(&map, "dim")?,
                heads: get(&map, "heads")?,
                encoder_layers: get(&map, "encoder_layers")?,
                decoder_layers: get(&map, "decoder_layers")?,
                ff_dim: get(&map, "ff_dim")?,
                dropout: get(&map, "dropout")?,
                rule_len: get(&map, "rule_len")?,
                hops: get(&map, "hops")?,
            },
            epoch: get(&map, "epoch")?,
            valid_mrr: get(&map, "valid_mrr")?,
            seed: get(&map, "seed")?,
        })
    }
}

pub fn save_model(dir: &Path, model: &Model<f32>, meta: &CheckpointMeta) -> Result<()> {
    create_dir(dir)?;
    let tensors: Vec<(String, &Mat<f32>)> = model.params.iter().map(|(_, n, m)| (n.to_string(), m)).collect();
    write_checkpoint(&dir.join(MODEL_FILE), &tensors)?;
    write_text(&dir.join(META_FILE), &meta.render())
}

pub fn save_optimizer(dir: &Path, model: &Model<f32>, adam: &Adam<f32>) -> Result<()> {
    let step = Mat::scalar(adam.step as f32);
    let mut tensors: Vec<(String, &Mat<f32>)> = vec![("adam.step".into(), &step)];
    for (id, name, _) in model.params.iter() {
        tensors.push((format!("adam.m.{name}"), &adam.first[id.index()]));
        tensors.push((format!("adam.v.{name}"), &adam.second[id.index()]));
    }
    write_checkpoint(&dir.join(OPTIMIZER_FILE), &tensors)
}

/// Loads `dir`'s checkpoint, refusing it unless its architecture matches
/// the one `cfg` describes for this dataset.
pub fn load_model(dir: &Path, expected: &ModelConfig) -> Result<(Model<f32>, CheckpointMeta)> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = CheckpointMeta::parse(&text, &meta_path)?;
    let mut want = expected.clone();
    want.dropout = meta.model.dropout;
    if meta.model != want {
        return Err(Error::Checkpoint(format!(
            "architecture mismatch: checkpoint has {:?}, configuration asks for {:?}",
            meta.model, expected
        )));
    }
    let template = Model::<f32>::new(expected.clone(), 0)?;
    let mut store = ParamStore::new();
    for (name, m) in read_checkpoint::<f32>(&dir.join(MODEL_FILE))? {
        store.add(name, m);
    }
    Ok((template.with_params(store)?, meta))
}

pub fn load_optimizer(dir: &Path, model: &Model<f32>, cfg: &RunConfig) -> Result<Adam<f32>> {
    let tensors: BTreeMap<String, Mat<f32>> = read_checkpoint::<f32>(&dir.join(OPTIMIZER_FILE))?.into_iter().collect();
    let mut adam = Adam::new(&model.params, cfg.adam_config());
    adam.step = tensors
        .get("adam.step")
        .map(|m| m.data()[0] as u64)
        .ok_or_else(|| Error::Checkpoint("optimizer state lacks `adam.step`".into()))?;
    for (id, name, value) in model.params.iter() {
        for (prefix, slot) in [("m", &mut adam.first), ("v", &mut adam.second)] {
            let key = format!("adam.{prefix}.{name}");
            let t = tensors
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("optimizer state lacks `{key}`")))?;
            if t.shape() != value.shape() {
                return Err(Error::Checkpoint(format!("`{key}` has the wrong shape")));
            }
            slot[id.index()] = t.clone();
        }
    }
    Ok(adam)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub outcome: TrainOutcome,
    /// Validation MRR measured on the restored model before resuming.
    pub resumed_mrr: Option<f64>,
}

/// Trains a model, keeping the best checkpoint (and its optimizer state)
/// in `cfg.out` and appending one `epoch loss valid_mrr` line per epoch to
/// the log. With `resume`, continues from the checkpoint in `cfg.out`.
pub fn train(cfg: &RunConfig, resume: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    let ws = Workspace::load(cfg)?;
    train_in(cfg, &ws, resume)
}

pub fn train_in(cfg: &RunConfig, ws: &Workspace, resume: bool) -> Result<TrainSummary> {
    echo_config(cfg)?;
    let mconf = ws.model_config(cfg);
    let tcfg = cfg.train_config();
    let valid = match tcfg.valid_limit {
        Some(n) => &ws.dataset.valid[..n.min(ws.dataset.valid.len())],
        None => &ws.dataset.valid[..],
    };
    let (mut model, state, resumed_mrr) = if resume {
        let (model, meta) = load_model(&cfg.out, &mconf)?;
        let adam = load_optimizer(&cfg.out, &model, cfg)?;
        let reasoner = ws.reasoner(cfg, &model)?;
        let mrr = if valid.is_empty() {
            meta.valid_mrr
        } else {
            run_evaluation(&reasoner, &model.params, valid, &ws.known, cfg.seed)?.0.mrr
        };
        log::info!("resumed at epoch {} (recorded mrr {}, measured {mrr})", meta.epoch, meta.valid_mrr);
        let state = ResumeState {
            adam,
            epoch: meta.epoch,
            best_mrr: meta.valid_mrr,
        };
        (model, Some(state), Some(mrr))
    } else {
        (Model::<f32>::new(mconf, cfg.seed)?, None, None)
    };
    let log_path = cfg.out.join(LOG_FILE);
    let mut log_text = if resume {
        fs::read_to_string(&log_path).unwrap_or_default()
    } else {
        "epoch\tloss\tvalid_mrr\n".to_string()
    };
    let arch = model.arch.clone();
    let reasoner = Reasoner::new(&ws.kg, &ws.features, &arch, cfg.reasoner_config()?)?;
    let dir = cfg.out.clone();
    let seed = cfg.seed;
    let outcome = run_training(
        &reasoner,
        &mut model,
        state,
        &ws.dataset.train,
        &ws.dataset.valid,
        &ws.known,
        &tcfg,
        |entry: &EpochLog, model, adam, improved| {
            writeln!(log_text, "{}\t{:.6}\t{:.6}", entry.epoch, entry.loss, entry.valid_mrr).expect("string write");
            write_text(&log_path, &log_text)?;
            if improved {
                let meta = CheckpointMeta {
                    model: model.arch.config.clone(),
                    epoch: entry.epoch,
                    valid_mrr: entry.valid_mrr,
                    seed,
                };
                save_model(&dir, model, &meta)?;
                save_optimizer(&dir, model, adam)?;
            }
            Ok(())
        },
    )?;
    Ok(TrainSummary { outcome, resumed_mrr })
}

/// Loads the checkpoint in `checkpoint` (or `cfg.out`), ranks `split`, and
/// writes `metrics.txt` and `ranks.tsv` to `cfg.out`.
pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, split: Split) -> Result<Metrics> {
    cfg.validate()?;
    let ws = Workspace::load(cfg)?;
    let dir = checkpoint.unwrap_or(&cfg.out);
    let (model, _) = load_model(dir, &ws.model_config(cfg))?;
    let metrics = evaluate_in(cfg, &ws, &model, split)?;
    Ok(metrics)
}

pub fn evaluate_in(cfg: &RunConfig, ws: &Workspace, model: &Model<f32>, split: Split) -> Result<Metrics> {
    echo_config(cfg)?;
    let reasoner = ws.reasoner(cfg, model)?;
    let (metrics, ranks) = run_evaluation(&reasoner, &model.params, ws.dataset.split(split), &ws.known, cfg.seed)?;
    write_text(&cfg.out.join("metrics.txt"), &format!("{metrics}\n"))?;
    write_ranks(&cfg.out.join("ranks.tsv"), &ws.dataset, &ws.kg, &ranks)?;
    Ok(metrics)
}

/// Decodes rules from every query of `split` (both directions), aggregates
/// them and writes `rules.tsv` to `cfg.out`.
pub fn mine_rules(cfg: &RunConfig, checkpoint: Option<&Path>, split: Split) -> Result<Vec<Rule>> {
    cfg.validate()?;
    let ws = Workspace::load(cfg)?;
    let (model, _) = load_model(checkpoint.unwrap_or(&cfg.out), &ws.model_config(cfg))?;
    let rules = mine_rules_in(cfg, &ws, &model, split)?;
    echo_config(cfg)?;
    write_rules(&cfg.out.join("rules.tsv"), &ws.dataset, &ws.kg, &rules)?;
    Ok(rules)
}

/// Training-split queries see the same masked graph as during training,
/// both for their context and for path expansion.
pub fn mine_rules_in(cfg: &RunConfig, ws: &Workspace, model: &Model<f32>, split: Split) -> Result<Vec<Rule>> {
    let reasoner = ws.reasoner(cfg, model)?;
    let queries = bidirectional(&ws.kg, ws.dataset.split(split));
    let masked = split == Split::Train;
    let tables: Vec<RuleTable> = queries
        .par_chunks(64)
        .map(|chunk| {
            let mut table = RuleTable::new();
            for &q in chunk {
                let view = ws.kg.view(masked.then_some(q));
                let weights = query_weights(&reasoner, model, &view, q, cfg.seed)?;
                table.extend(q.rel, parse_rules(&view, q.head, &weights, cfg.thr));
            }
            Ok(table)
        })
        .collect::<Result<_>>()?;
    let mut all = RuleTable::new();
    for t in tables {
        all.merge(t);
    }
    Ok(all.aggregate())
}

fn query_weights(
    reasoner: &Reasoner<'_>,
    model: &Model<f32>,
    view: &crate::kg::GraphView<'_>,
    q: Triplet,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut g = crate::numerics::Graph::new(&model.params);
    let input = reasoner.encoder_input(q.head, view.excluded(), context_seed(seed, q.head, q.rel))?;
    let memory = model.arch.memory(&mut g, reasoner.features, &input);
    let (ws, _) = model.arch.unroll(&mut g, q.rel, &memory, reasoner.config.rule_len);
    g.status()?;
    Ok(ws.iter().map(|&w| g.value(w).data().iter().map(|&x| x as f64).collect()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    /// Standard confidence per rule, in file order.
    pub per_rule: Vec<Option<f64>>,
    /// `(K, mean SC, rules averaged)` per requested K.
    pub top_k: Vec<(usize, Option<f64>, usize)>,
}

/// Computes standard confidence against the training graph for every rule
/// in `rule_file` and the top-K averages; writes `sc_report.txt`.
pub fn score_rules(cfg: &RunConfig, rule_file: &Path, ks: &[usize]) -> Result<ScoreReport> {
    let ws = Workspace::load(cfg)?;
    let rules = read_rules(rule_file, &ws.dataset, &ws.kg)?;
    let report = score_rules_in(&ws, &rules, ks);
    let space = ws.kg.relations();
    let mut text = String::new();
    for (k, avg, n) in &report.top_k {
        match avg {
            Some(a) => writeln!(text, "top{k}_average_sc = {a:.6} # over {n} rules"),
            None => writeln!(text, "top{k}_average_sc = none"),
        }
        .expect("string write");
    }
    for (r, sc) in rules.iter().zip(&report.per_rule) {
        let body: Vec<String> = r.body.iter().map(|&b| ws.dataset.relation_name(space, b)).collect();
        let sc = sc.map_or("none".to_string(), |v| format!("{v:.6}"));
        writeln!(text, "{sc}\t{}\t{}", ws.dataset.relation_name(space, r.head), body.join(",")).expect("string write");
    }
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("sc_report.txt"), &text)?;
    Ok(report)
}

pub fn score_rules_in(ws: &Workspace, rules: &[Rule], ks: &[usize]) -> ScoreReport {
    let per_rule = rules.iter().map(|r| standard_confidence(&ws.kg, r.head, &r.body)).collect();
    let top_k = ks
        .iter()
        .map(|&k| match topk_average_sc(&ws.kg, rules, k) {
            Some((avg, n)) => (k, Some(avg), n),
            None => (k, None, 0),
        })
        .collect();
    ScoreReport { per_rule, top_k }
}

/// One exported query: its name and per-step relation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRows {
    pub query: String,
    pub weights: Vec<Vec<f64>>,
}

/// Reads `head<TAB>relation<TAB>tail` lines by name.
pub fn read_named_triplets(path: &Path, ds: &Dataset, kg: &KnowledgeGraph) -> Result<Vec<Triplet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", f.len()),
            });
        }
        out.push(Triplet::new(
            ds.entity_id(f[0])?,
            ds.relation_id(kg.relations(), f[1])?,
            ds.entity_id(f[2])?,
        ));
    }
    Ok(out)
}

/// Writes the decoded weights of each listed triplet to
/// `cfg.out/attention.tsv`: a header of relation names, then one row per
/// triplet and step.
pub fn export_attention(cfg: &RunConfig, checkpoint: Option<&Path>, triplets: &Path) -> Result<Vec<AttentionRows>> {
    cfg.validate()?;
    let ws = Workspace::load(cfg)?;
    let (model, _) = load_model(checkpoint.unwrap_or(&cfg.out), &ws.model_config(cfg))?;
    let queries = read_named_triplets(triplets, &ws.dataset, &ws.kg)?;
    let rows = export_attention_in(cfg, &ws, &model, &queries)?;
    echo_config(cfg)?;
    write_attention(&cfg.out.join("attention.tsv"), &ws, &rows)?;
    Ok(rows)
}

pub fn export_attention_in(cfg: &RunConfig, ws: &Workspace, model: &Model<f32>, queries: &[Triplet]) -> Result<Vec<AttentionRows>> {
    let reasoner = ws.reasoner(cfg, model)?;
    let space = ws.kg.relations();
    queries
        .iter()
        .map(|q| {
            let p = reasoner.predict_all(&model.params, q.head, q.rel, context_seed(cfg.seed, q.head, q.rel))?;
            Ok(AttentionRows {
                query: format!(
                    "{}|{}|{}",
                    ws.dataset.entities.name(q.head),
                    ws.dataset.relation_name(space, q.rel),
                    ws.dataset.entities.name(q.tail)
                ),
                weights: p.weights,
            })
        })
        .collect()
}

pub fn write_attention(path: &Path, ws: &Workspace, rows: &[AttentionRows]) -> Result<()> {
    let space = ws.kg.relations();
    let mut text = String::from("query\tstep");
    for r in 0..space.count() {
        text.push('\t');
        text.push_str(&ws.dataset.relation_name(space, r));
    }
    text.push('\n');
    for q in rows {
        for (t, w) in q.weights.iter().enumerate() {
            write!(text, "{}\t{}", q.query, t + 1).expect("string write");
            for v in w {
                write!(text, "\t{v:.10}").expect("string write");
            }
            text.push('\n');
        }
    }
    write_text(path, &text)
}

/// Parses an attention export back into rows, checking the header width.
pub fn read_attention(path: &Path) -> Result<(Vec<String>, Vec<AttentionRows>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or(Error::Empty("attention file"))?
        .split('\t')
        .skip(2)
        .map(str::to_string)
        .collect();
    let mut rows: Vec<AttentionRows> = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != header.len() + 2 {
            return Err(bad(format!("expected {} fields, found {}", header.len() + 2, f.len())));
        }
        let w = f[2..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad number `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        match rows.last_mut() {
            Some(r) if r.query == f[0] => r.weights.push(w),
            _ => rows.push(AttentionRows {
                query: f[0].to_string(),
                weights: vec![w],
            }),
        }
    }
    Ok((header, rows))
}

