use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use treesum_core::model::ModelConfig;
use treesum_core::train_eval::TrainOptions;
use treesum_core::Traversal;

/// Everything a run needs, read from one JSON file. Missing fields take
/// their defaults; unknown fields are rejected.
///
/// | field | default |
/// |---|---|
/// | `model` | see [`ModelConfig`] (d_model 64, heads 4, 2+2 layers, d_ff 128, δ 5/5, max_len 24, seed 42, lr 1e-3) |
/// | `data` | none |
/// | `checkpoint` | none |
/// | `out` | none |
/// | `traversal` | `"pot"` |
/// | `beam` | 1 (greedy) |
/// | `batch_size` | 8 |
/// | `epochs` | 300 |
/// | `patience` | 10 |
/// | `min_freq` | 1 |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub traversal: Traversal,
    pub beam: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub min_freq: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainOptions::default();
        RunConfig {
            model: t.model,
            data: None,
            checkpoint: None,
            out: None,
            traversal: Traversal::Pot,
            beam: 1,
            batch_size: t.batch_size,
            epochs: t.epochs,
            patience: t.patience,
            min_freq: t.min_freq,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn train_options(&self) -> Result<TrainOptions, String> {
        if self.traversal != Traversal::Pot {
            return Err("training requires traversal \"pot\"".into());
        }
        self.model.validate_shape().map_err(|e| e.to_string())?;
        for (name, v) in [("batch_size", self.batch_size), ("epochs", self.epochs), ("min_freq", self.min_freq)] {
            if v == 0 {
                return Err(format!("{name} must be >= 1"));
            }
        }
        Ok(TrainOptions {
            model: self.model.clone(),
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            min_freq: self.min_freq,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.model.heads, 4);
        assert_eq!(c.patience, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"epoch": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"model": {"layers": 3}}"#).is_err());
    }

    #[test]
    fn odd_heads_and_sbt_training_are_config_errors() {
        let mut c = RunConfig::default();
        c.model.heads = 3;
        assert!(c.train_options().unwrap_err().contains("even"));
        let mut c = RunConfig::default();
        c.traversal = Traversal::Sbt;
        assert!(c.train_options().is_err());
    }
}
