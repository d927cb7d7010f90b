use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{ParamStore, Tensor};
use crate::scalar::Scalar;

use super::{param_specs, Model, ModelConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("parameter `{0}` is missing or has the wrong shape")]
    ShapeMismatch(String),
    #[error("invalid config in checkpoint: {0}")]
    Config(String),
}

/// Everything needed to rebuild a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: ModelConfig,
    pub vocab_src: Vec<String>,
    pub vocab_tgt: Vec<String>,
    pub step: u64,
    pub params: ParamStore<T>,
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    vocab_src: Vec<String>,
    vocab_tgt: Vec<String>,
    step: u64,
    params: BTreeMap<String, ParamFile>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn model(&self) -> Model<T> {
        Model {
            config: self.config.clone(),
            params: self.params.clone(),
        }
    }

    /// Single-line JSON document; parameter names sorted.
    pub fn to_json(&self) -> String {
        let params = self
            .params
            .iter()
            .map(|(name, p)| {
                (
                    name.to_string(),
                    ParamFile {
                        shape: p.value.shape().to_vec(),
                        data: p.value.data().iter().map(|x| x.as_f64()).collect(),
                    },
                )
            })
            .collect();
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab_src: self.vocab_src.clone(),
            vocab_tgt: self.vocab_tgt.clone(),
            step: self.step,
            params,
        };
        serde_json::to_string(&file).expect("checkpoint serialization is infallible")
    }

    pub fn from_json(doc: &str) -> Result<Self, CheckpointError> {
        let probe: serde_json::Value = serde_json::from_str(doc)?;
        let found = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut file: CheckpointFile = serde_json::from_value(probe)?;
        file.config
            .validate()
            .map_err(|e| CheckpointError::Config(e.to_string()))?;
        if file.vocab_src.len() != file.config.src_vocab || file.vocab_tgt.len() != file.config.tgt_vocab {
            return Err(CheckpointError::Config(
                "vocabulary lengths disagree with the config".into(),
            ));
        }
        let specs = param_specs(&file.config);
        let mut params = ParamStore::new();
        for (name, (shape, _)) in &specs {
            let pf = file
                .params
                .remove(name)
                .ok_or_else(|| CheckpointError::ShapeMismatch(name.clone()))?;
            if &pf.shape != shape {
                return Err(CheckpointError::ShapeMismatch(name.clone()));
            }
            let data = pf.data.into_iter().map(T::of).collect();
            let tensor = Tensor::from_vec(shape, data)
                .map_err(|_| CheckpointError::ShapeMismatch(name.clone()))?;
            params
                .insert(name.clone(), tensor)
                .map_err(|_| CheckpointError::ShapeMismatch(name.clone()))?;
        }
        if let Some(extra) = file.params.keys().next() {
            return Err(CheckpointError::ShapeMismatch(extra.clone()));
        }
        Ok(Checkpoint {
            config: file.config,
            vocab_src: file.vocab_src,
            vocab_tgt: file.vocab_tgt,
            step: file.step,
            params,
        })
    }
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, ckpt: &Checkpoint<T>) -> Result<(), CheckpointError> {
    fs::write(path, ckpt.to_json())?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>, CheckpointError> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{input_for, tiny_config};
    use crate::model::{init_params, BOS};

    fn sample() -> Checkpoint<f64> {
        let config = tiny_config();
        let vocab = |n: usize| (0..n).map(|i| format!("t{i}")).collect::<Vec<_>>();
        Checkpoint {
            params: init_params(&config, 3).unwrap(),
            vocab_src: vocab(config.src_vocab),
            vocab_tgt: vocab(config.tgt_vocab),
            step: 17,
            config,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let ckpt = sample();
        save_checkpoint(&path, &ckpt).unwrap();
        let back: Checkpoint<f64> = load_checkpoint(&path).unwrap();
        for (name, p) in ckpt.params.iter() {
            let q = back.params.value(name).unwrap();
            let bits = |t: &Tensor<f64>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&p.value), bits(q), "{name}");
        }
        assert_eq!(back.step, 17);
        assert_eq!(back.to_json(), ckpt.to_json());
    }

    #[test]
    fn logits_survive_reload() {
        let ckpt = sample();
        let input = input_for("fn f(a) { return a; }", &ckpt.config);
        let before = ckpt.model().decode_train(&ckpt.model().encode(&input).unwrap(), &[BOS, 5]).unwrap();
        let back: Checkpoint<f64> = Checkpoint::from_json(&ckpt.to_json()).unwrap();
        let m = back.model();
        let after = m.decode_train(&m.encode(&input).unwrap(), &[BOS, 5]).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn missing_parameter_is_named() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["params"].as_object_mut().unwrap().remove("out.b");
        match Checkpoint::<f64>::from_json(&v.to_string()) {
            Err(CheckpointError::ShapeMismatch(name)) => assert_eq!(name, "out.b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_and_garbage() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["version"] = 2.into();
        assert!(matches!(
            Checkpoint::<f64>::from_json(&v.to_string()),
            Err(CheckpointError::Version { found: 2, .. })
        ));
        assert!(matches!(Checkpoint::<f64>::from_json("{oops"), Err(CheckpointError::Json(_))));
        assert!(matches!(
            load_checkpoint::<f64>("/nonexistent/ckpt.json"),
            Err(CheckpointError::Io(_))
        ));
    }
}
