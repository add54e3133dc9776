//! Audit configuration: one JSON document describing the corpus, slices,
//! models and analysis cutoffs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias::{EmbedBiasParams, OccupationScope};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::kg::TripleFormat;
use crate::model::{ModelKind, Norm};
use crate::slice::{SliceConfig, SpecialIds};
use crate::train::{Corruption, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Relative paths are resolved against the config file's directory.
    pub triples: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub format: TripleFormat,
}

/// Training settings shared by every model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negatives: Option<usize>,
    pub corruption: Corruption,
    pub unit_norm_entities: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            dim: d.dim,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            negatives: d.negatives,
            corruption: d.corruption,
            unit_norm_entities: d.unit_norm_entities,
        }
    }
}

/// Per-kind overrides of [`TrainSettings`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negatives: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corruption: Option<Corruption>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit_norm_entities: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSettings {
    pub alpha: f64,
    pub steps: usize,
    /// Uniform steps of the threshold grid between 0 and max |theta|.
    pub threshold_steps: usize,
    pub occupation_scope: OccupationScope,
}

impl Default for BiasSettings {
    fn default() -> Self {
        let p = EmbedBiasParams::default();
        Self {
            alpha: p.alpha,
            steps: p.steps,
            threshold_steps: 100,
            occupation_scope: p.scope,
        }
    }
}

impl BiasSettings {
    pub fn params(&self) -> EmbedBiasParams {
        EmbedBiasParams {
            alpha: self.alpha,
            steps: self.steps,
            scope: self.occupation_scope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub corpus: CorpusConfig,
    pub ids: SpecialIds,
    pub slices: Vec<SliceConfig>,
    pub models: Vec<ModelKind>,
    pub train: TrainSettings,
    /// Keyed by model name (`transe`, `transe-l2`, `complex`, `distmult`).
    pub train_overrides: BTreeMap<String, TrainPatch>,
    pub eval: EvalConfig,
    /// Fraction of merged-graph triples held out for link prediction.
    pub holdout_fraction: f64,
    pub bias: BiasSettings,
    /// Cutoffs for model-vs-model Jaccard.
    pub k: Vec<usize>,
    pub rank_deviation_k: usize,
    pub similarity_k: usize,
    pub entropy_k: usize,
    pub top_similar: usize,
    /// Relative to the working directory.
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            ids: SpecialIds::default(),
            slices: Vec::new(),
            models: vec![ModelKind::TransE(Norm::L1), ModelKind::ComplEx],
            train: TrainSettings::default(),
            train_overrides: BTreeMap::new(),
            eval: EvalConfig::default(),
            holdout_fraction: 0.1,
            bias: BiasSettings::default(),
            k: vec![20, 50, 80],
            rank_deviation_k: 20,
            similarity_k: 20,
            entropy_k: 50,
            top_similar: 3,
            output_dir: PathBuf::from("audit-out"),
            seed: 0,
            base_dir: PathBuf::new(),
        }
    }
}

fn safe_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl AuditConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: AuditConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Resolve a corpus path against the config file's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn train_config(&self, kind: ModelKind, seed: u64) -> TrainConfig {
        let s = &self.train;
        let p = self.train_overrides.get(&kind.to_string()).cloned().unwrap_or_default();
        TrainConfig {
            kind,
            dim: p.dim.unwrap_or(s.dim),
            epochs: p.epochs.unwrap_or(s.epochs),
            batch_size: p.batch_size.unwrap_or(s.batch_size),
            learning_rate: p.learning_rate.unwrap_or(s.learning_rate),
            negatives: p.negatives.or(s.negatives),
            seed,
            corruption: p.corruption.unwrap_or(s.corruption),
            unit_norm_entities: p.unit_norm_entities.unwrap_or(s.unit_norm_entities),
        }
    }

    /// Structural checks, run before any work.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.models.is_empty() {
            return bad("at least one model kind is required".into());
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].contains(m) {
                return bad(format!("model `{m}` listed twice"));
            }
            self.train_config(*m, 0).validate()?;
        }
        for key in self.train_overrides.keys() {
            let kind: ModelKind = key.parse()?;
            if kind.to_string() != *key {
                return bad(format!("train override `{key}` must use the canonical name `{kind}`"));
            }
        }
        if self.slices.is_empty() {
            return bad("at least one slice is required".into());
        }
        for (i, s) in self.slices.iter().enumerate() {
            if !safe_name(&s.name) {
                return bad(format!("slice name `{}` must be non-empty ASCII letters, digits, - or _", s.name));
            }
            if self.slices[..i].iter().any(|o| o.name == s.name) {
                return bad(format!("slice `{}` listed twice", s.name));
            }
            if s.countries.is_empty() {
                return bad(format!("slice `{}` has no countries", s.name));
            }
        }
        if self.k.is_empty() || self.k[0] == 0 || self.k.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("K values must be positive and strictly ascending, got {:?}", self.k));
        }
        if self.rank_deviation_k == 0 || self.similarity_k == 0 || self.entropy_k == 0 || self.top_similar == 0 {
            return bad("analysis cutoffs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!("holdout fraction must lie in [0, 1), got {}", self.holdout_fraction));
        }
        if self.eval.trials == 0 || self.eval.negatives == 0 || self.eval.test_size == 0 {
            return bad("eval trials, negatives and test size must be positive".into());
        }
        if self.eval.hits_at.is_empty() || self.eval.hits_at[0] == 0 || self.eval.hits_at.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("hits_at must be positive and strictly ascending, got {:?}", self.eval.hits_at));
        }
        if !(self.bias.alpha >= 0.0 && self.bias.alpha.is_finite()) || self.bias.steps == 0 {
            return bad("bias alpha must be finite and non-negative, steps positive".into());
        }
        if self.bias.threshold_steps < 2 {
            return bad("threshold grid needs at least 2 steps".into());
        }
        Ok(())
    }

    /// Checks that referenced corpus files exist.
    pub fn validate_paths(&self) -> Result<()> {
        let triples = self.resolve(&self.corpus.triples);
        if !triples.is_file() {
            return Err(Error::Config(format!("triple file {} does not exist", triples.display())));
        }
        if let Some(labels) = &self.corpus.labels {
            let labels = self.resolve(labels);
            if !labels.is_file() {
                return Err(Error::Config(format!("label file {} does not exist", labels.display())));
            }
        }
        Ok(())
    }
}
