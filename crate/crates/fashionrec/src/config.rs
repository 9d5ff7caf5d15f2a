//! Run configuration: one JSON document with a section per concern. Any leaf
//! can be overridden with `--set section.key=value`; the value is parsed as
//! JSON and falls back to a plain string.

use std::path::{Path, PathBuf};

use fashionrec_core::losses::LossConfig;
use fashionrec_core::model::ModelConfig;
use fashionrec_core::retrieval::FitbScoring;
use fashionrec_core::synth::SynthConfig;
use fashionrec_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io::read_text;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Stub encoder output dimensions.
    pub image_dim: usize,
    pub text_dim: usize,
    pub seed: u64,
}

impl Default for EmbeddingsSection {
    fn default() -> Self {
        EmbeddingsSection {
            path: None,
            image_dim: 64,
            text_dim: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub k: usize,
    pub scoring: FitbScoring,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category_filter: Option<String>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            k: 10,
            scoring: FitbScoring::Distance,
            category_filter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub embeddings: EmbeddingsSection,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub retrieval: RetrievalSection,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
}

/// Sets `path` (dot-separated) inside `root`, creating objects on the way.
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("--set expects key=value, got `{assignment}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Usage(format!("bad config path `{path}`")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            return Err(Error::Usage(format!("`{path}`: `{key}` is not a section")));
        }
        node = node
            .as_object_mut()
            .expect("checked object")
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(keys[keys.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(Error::Usage(format!(
            "`{path}` does not name a config leaf"
        ))),
    }
}

impl RunConfig {
    pub fn from_value(value: Value, origin: &str) -> Result<Self> {
        serde_json::from_value(value)
            .map_err(|e| fashionrec_core::Error::Config(format!("{origin}: {e}")).into())
    }

    /// File (or defaults), then `--set` assignments, then `--seed`/`--epochs`.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut value = match path {
            Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| Error::json(p, e))?,
            None => serde_json::to_value(RunConfig::default())
                .map_err(|e| Error::Internal(e.to_string()))?,
        };
        if !value.is_object() {
            return Err(
                fashionrec_core::Error::Config("config must be a JSON object".into()).into(),
            );
        }
        for s in &overrides.sets {
            apply_set(&mut value, s)?;
        }
        let origin = path.map_or_else(|| "config".to_string(), |p| p.display().to_string());
        let mut cfg = Self::from_value(value, &origin)?;
        if let Some(seed) = overrides.seed {
            cfg.corpus.synth.seed = seed;
            cfg.embeddings.seed = seed;
            cfg.model.seed = seed;
            cfg.train.seed = seed;
        }
        if let Some(epochs) = overrides.epochs {
            cfg.train.epochs = epochs;
        }
        Ok(cfg)
    }
}
