//! Flat JSON run configuration. Command-line overrides are merged over the
//! file before deserialization, so unknown keys are rejected from both.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use seqtag_core::corpus::IobMode;
use seqtag_core::embeddings::{DropoutScope, OovPolicy, PretrainConfig};
use seqtag_core::tagger::{DevMetric, ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,

    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Declared entity types; discovered from train and dev when absent.
    pub entity_types: Option<Vec<String>>,
    pub iob_mode: IobMode,

    pub vectors: Option<PathBuf>,
    pub oov_policy: OovPolicy,
    pub lm_forward: Option<PathBuf>,
    pub lm_backward: Option<PathBuf>,
    pub d_char: usize,
    pub d_lm: usize,
    pub embedding_dropout: f64,
    pub dropout_scope: DropoutScope,

    pub hidden: usize,
    pub fine_tune_lm: bool,
    pub constrain_decoding: bool,
    pub sigma_sq: Option<f64>,

    pub initial_lr: f64,
    pub anneal_factor: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub max_seq_len: usize,
    pub max_epochs: usize,
    pub min_lr: f64,
    pub dev_metric: DevMetric,
    pub clip: Option<f64>,

    pub text: Option<PathBuf>,
    pub lm_lr: f64,
    pub lm_epochs: usize,
    pub bptt_window: usize,
    pub lm_batch: usize,
    pub lm_clip: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::default();
        let p = PretrainConfig::default();
        RunConfig {
            seed: 1,
            out: None,
            train: None,
            dev: None,
            test: None,
            entity_types: None,
            iob_mode: IobMode::default(),
            vectors: None,
            oov_policy: OovPolicy::default(),
            lm_forward: None,
            lm_backward: None,
            d_char: p.d_char,
            d_lm: p.d_lm,
            embedding_dropout: t.embedding_dropout,
            dropout_scope: DropoutScope::default(),
            hidden: m.hidden,
            fine_tune_lm: m.fine_tune_lm,
            constrain_decoding: m.constrain_decoding,
            sigma_sq: m.sigma_sq,
            initial_lr: t.initial_lr,
            anneal_factor: t.anneal_factor,
            patience: t.patience,
            batch_size: t.batch_size,
            max_seq_len: t.max_seq_len,
            max_epochs: t.max_epochs,
            min_lr: t.min_lr,
            dev_metric: t.dev_metric,
            clip: t.clip,
            text: None,
            lm_lr: p.lr,
            lm_epochs: p.epochs,
            bptt_window: p.bptt_window,
            lm_batch: p.batch,
            lm_clip: p.clip,
        }
    }
}

impl RunConfig {
    /// Reads `file` (if any), applies `overrides` in order, and validates
    /// the result against the schema.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, serde_json::Value)]) -> Result<RunConfig> {
        let mut doc = match file {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let value: serde_json::Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
                if !value.is_object() {
                    bail!("config {} must be a JSON object", path.display());
                }
                value
            }
            None => serde_json::json!({}),
        };
        for (key, value) in overrides {
            doc[key.as_str()] = value.clone();
        }
        serde_json::from_value(doc).context("invalid configuration")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            initial_lr: self.initial_lr,
            anneal_factor: self.anneal_factor,
            patience: self.patience,
            batch_size: self.batch_size,
            max_seq_len: self.max_seq_len,
            embedding_dropout: self.embedding_dropout,
            max_epochs: self.max_epochs,
            min_lr: self.min_lr,
            seed: self.seed,
            dev_metric: self.dev_metric,
            clip: self.clip,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            fine_tune_lm: self.fine_tune_lm,
            constrain_decoding: self.constrain_decoding,
            max_seq_len: self.max_seq_len,
            sigma_sq: self.sigma_sq,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            d_char: self.d_char,
            d_lm: self.d_lm,
            lr: self.lm_lr,
            epochs: self.lm_epochs,
            bptt_window: self.bptt_window,
            batch: self.lm_batch,
            clip: self.lm_clip,
            seed: self.seed,
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().context("no output directory (set `out` or pass --out)")
    }

    /// Writes the fully resolved configuration to `<out>/config.json`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join("config.json"), text).context("writing resolved config")?;
        Ok(())
    }
}

/// The path under `key`, which must be set and exist.
pub fn existing(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = path.clone().with_context(|| format!("`{key}` is not set"))?;
    if !p.exists() {
        bail!("`{key}` path {} does not exist", p.display());
    }
    Ok(p)
}

/// Like [`existing`], for optional inputs.
pub fn optional_existing(path: &Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
    match path {
        Some(_) => existing(path, key).map(Some),
        None => Ok(None),
    }
}

/// Parses `key=value`; the value is read as JSON when it parses, else as a
/// string.
pub fn parse_override(s: &str) -> Result<(String, serde_json::Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
    Ok((k.trim().replace('-', "_"), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::resolve(None, &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.initial_lr, 0.1);
        assert_eq!(c.hidden, 256);
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"seed": 3, "hidden": 8}"#).unwrap();
        let c = RunConfig::resolve(Some(&path), &[parse_override("hidden=16").unwrap()]).unwrap();
        assert_eq!((c.seed, c.hidden), (3, 16));
        assert!(RunConfig::resolve(Some(&path), &[parse_override("hiden=16").unwrap()]).is_err());
        fs::write(&path, r#"{"bogus": 1}"#).unwrap();
        assert!(RunConfig::resolve(Some(&path), &[]).is_err());
    }

    #[test]
    fn override_values() {
        assert_eq!(parse_override("dev_metric=loss").unwrap().1, serde_json::json!("loss"));
        assert_eq!(parse_override("clip=null").unwrap().1, serde_json::Value::Null);
        assert_eq!(parse_override("max-epochs=5").unwrap().0, "max_epochs");
        assert!(parse_override("nothing").is_err());
    }
}
