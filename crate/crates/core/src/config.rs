//! Run configuration: `key = value` text with `#` comments, dataset
//! presets, and command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::AdamConfig;
use crate::reasoner::{ReasonerConfig, SCORE_FLOOR};
use crate::subgraph::SubgraphCaps;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub rule_len: usize,
    pub dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Feed-forward width; `2 * dim` when unset.
    pub ff_dim: Option<usize>,
    pub dropout: f64,
    pub lr: f64,
    pub gamma: f64,
    /// Train against the reasoning vector rescaled to unit mass after
    /// every step.
    pub normalize: bool,
    pub max_context: usize,
    pub max_neighbors: usize,
    /// Neighborhood radius; the rule length when unset.
    pub hops: Option<usize>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub thr: f64,
    pub seed: u64,
    /// Worker threads; 0 lets the thread pool decide.
    pub workers: usize,
    pub chunk: usize,
    /// Validation triplets used for early stopping; 0 means all.
    pub valid_limit: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data/umls"),
            out: PathBuf::from("runs/umls"),
            rule_len: 3,
            dim: 200,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ff_dim: None,
            dropout: 0.1,
            lr: 1e-4,
            gamma: SCORE_FLOOR,
            normalize: true,
            max_context: 140,
            max_neighbors: 40,
            hops: None,
            batch_size: 64,
            max_epochs: 1000,
            patience: 20,
            thr: 0.1,
            seed: 0,
            workers: 0,
            chunk: 8,
            valid_limit: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "preset",
    "data",
    "out",
    "rule_len",
    "dim",
    "heads",
    "encoder_layers",
    "decoder_layers",
    "ff_dim",
    "dropout",
    "lr",
    "gamma",
    "normalize",
    "max_context",
    "max_neighbors",
    "hops",
    "batch_size",
    "max_epochs",
    "patience",
    "thr",
    "seed",
    "workers",
    "chunk",
    "valid_limit",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    /// Context caps and radius used for a named dataset.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        match name.to_ascii_lowercase().as_str() {
            "umls" => {
                self.max_context = 140;
                self.max_neighbors = 40;
                self.hops = None;
            }
            "fb15k-237" | "fb15k237" => {
                self.max_context = 70;
                self.max_neighbors = 40;
                self.hops = Some(1);
            }
            "wn18rr" => {
                self.max_context = 40;
                self.max_neighbors = 10;
                self.hops = Some(2);
            }
            other => return Err(Error::Config(format!("unknown preset `{other}`"))),
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "preset" => self.apply_preset(value)?,
            "data" => self.data = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "rule_len" => self.rule_len = num(key, value)?,
            "dim" => self.dim = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "encoder_layers" => self.encoder_layers = num(key, value)?,
            "decoder_layers" => self.decoder_layers = num(key, value)?,
            "ff_dim" => self.ff_dim = Some(num(key, value)?),
            "dropout" => self.dropout = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "normalize" => self.normalize = num(key, value)?,
            "max_context" => self.max_context = num(key, value)?,
            "max_neighbors" => self.max_neighbors = num(key, value)?,
            "hops" => self.hops = Some(num(key, value)?),
            "batch_size" => self.batch_size = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "thr" => self.thr = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "chunk" => self.chunk = num(key, value)?,
            "valid_limit" => self.valid_limit = num(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown key `{other}` (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines in order. Blank lines and `#` comments
    /// are ignored.
    pub fn parse_into(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.parse_into(&text, path)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides, as given on the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn hops(&self) -> usize {
        self.hops.unwrap_or(self.rule_len)
    }

    pub fn ff_dim(&self) -> usize {
        self.ff_dim.unwrap_or(2 * self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rule_len", self.rule_len),
            ("dim", self.dim),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim()),
            ("max_context", self.max_context),
            ("max_neighbors", self.max_neighbors),
            ("hops", self.hops()),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("chunk", self.chunk),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("`lr` must be a finite non-negative number, got {}", self.lr)));
        }
        if self.gamma.is_nan() || self.gamma <= 0.0 {
            return Err(Error::Config("`gamma` must be positive".into()));
        }
        if !(self.thr > 0.0 && self.thr <= 1.0) {
            return Err(Error::Config(format!("`thr` must lie in (0, 1], got {}", self.thr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("`dropout` must lie in [0, 1), got {}", self.dropout)));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("`dim` {} is not divisible by `heads` {}", self.dim, self.heads)));
        }
        Ok(())
    }

    pub fn model_config(&self, num_entities: usize, num_base_relations: usize) -> ModelConfig {
        ModelConfig {
            num_entities,
            num_base_relations,
            dim: self.dim,
            heads: self.heads,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            ff_dim: self.ff_dim(),
            dropout: self.dropout,
            rule_len: self.rule_len,
            hops: self.hops(),
        }
    }

    pub fn reasoner_config(&self) -> Result<ReasonerConfig> {
        Ok(ReasonerConfig {
            caps: SubgraphCaps::new(self.max_context, self.max_neighbors, self.hops())?,
            seq_len: self.max_context,
            rule_len: self.rule_len,
            gamma: self.gamma,
            normalize: self.normalize,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            chunk: self.chunk,
            valid_limit: (self.valid_limit > 0).then_some(self.valid_limit),
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Fully resolved `key = value` listing, parseable by [`RunConfig::load`].
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "data = {}", self.data.display())?;
        writeln!(f, "out = {}", self.out.display())?;
        writeln!(f, "rule_len = {}", self.rule_len)?;
        writeln!(f, "dim = {}", self.dim)?;
        writeln!(f, "heads = {}", self.heads)?;
        writeln!(f, "encoder_layers = {}", self.encoder_layers)?;
        writeln!(f, "decoder_layers = {}", self.decoder_layers)?;
        writeln!(f, "ff_dim = {}", self.ff_dim())?;
        writeln!(f, "dropout = {}", self.dropout)?;
        writeln!(f, "lr = {:e}", self.lr)?;
        writeln!(f, "gamma = {:e}", self.gamma)?;
        writeln!(f, "normalize = {}", self.normalize)?;
        writeln!(f, "max_context = {}", self.max_context)?;
        writeln!(f, "max_neighbors = {}", self.max_neighbors)?;
        writeln!(f, "hops = {}", self.hops())?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "max_epochs = {}", self.max_epochs)?;
        writeln!(f, "patience = {}", self.patience)?;
        writeln!(f, "thr = {}", self.thr)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "workers = {}", self.workers)?;
        writeln!(f, "chunk = {}", self.chunk)?;
        writeln!(f, "valid_limit = {}", self.valid_limit)
    }
}
