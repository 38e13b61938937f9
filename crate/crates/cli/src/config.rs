//! Optional TOML config file. Every field may be overridden by a flag; values
//! missing from both fall back to the library defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub score: ScoreSection,
    pub properties: PropertiesSection,
    pub encoder: EncoderSection,
    pub trainer: TrainerSection,
    pub augment: AugmentSection,
    pub annotate: AnnotateSection,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreSection {
    pub backend: Option<String>,
    pub metric: Option<String>,
    pub prompt_style: Option<String>,
    pub batch_size: Option<usize>,
    pub store: Option<PathBuf>,
    pub url: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub concat_question: Option<bool>,
    pub rouge_mode: Option<String>,
    pub bleu_smoothing: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropertiesSection {
    pub variance_floor: Option<f64>,
    pub variance_kind: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub dim: Option<usize>,
    pub out_dim: Option<usize>,
    pub normalize: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub temperature: Option<f64>,
    pub peak_lr: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub weight_decay: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub loss_form: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub wordnet_dir: Option<PathBuf>,
    pub frequencies: Option<PathBuf>,
    pub descriptions_cache: Option<PathBuf>,
    pub generate_url: Option<String>,
    pub max_retries: Option<u32>,
    pub max_in_flight: Option<usize>,
    pub templates_per_sample: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotateSection {
    pub annotators: Option<Vec<String>>,
    pub required: Option<usize>,
    pub keep_rule: Option<String>,
    pub addr: Option<String>,
    pub static_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag, then config file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Parses a snake_case enum name through its serde representation.
pub fn parse_name<T: DeserializeOwned>(what: &str, s: &str) -> anyhow::Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| anyhow::anyhow!("unknown {what} `{s}`"))
}
