use serde::{Deserialize, Serialize};

use crate::relations::HeadLayout;

use super::ModelError;

/// Every model hyperparameter. Vocabulary sizes are normally filled in from
/// the vocabularies built at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_ff: usize,
    pub delta_anc: usize,
    pub delta_sib: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub seed: u64,
    pub lr: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            d_ff: 128,
            delta_anc: 5,
            delta_sib: 5,
            src_vocab: 0,
            tgt_vocab: 0,
            max_len: 24,
            dropout: 0.0,
            seed: 42,
            lr: 1e-3,
        }
    }
}

impl ModelConfig {
    pub fn head_layout(&self) -> HeadLayout {
        HeadLayout {
            heads: self.heads,
            delta_anc: self.delta_anc,
            delta_sib: self.delta_sib,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads.max(1)
    }

    /// Checks everything except vocabulary sizes.
    pub fn validate_shape(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.heads == 0 || self.heads % 2 != 0 {
            return err(format!("heads must be even and >= 2, got {}", self.heads));
        }
        if self.d_model == 0 || self.d_model % self.heads != 0 {
            return err(format!(
                "d_model ({}) must be a positive multiple of heads ({})",
                self.d_model, self.heads
            ));
        }
        for (name, v) in [
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("d_ff", self.d_ff),
            ("delta_anc", self.delta_anc),
            ("delta_sib", self.delta_sib),
            ("max_len", self.max_len),
        ] {
            if v < 1 {
                return err(format!("{name} must be >= 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return err(format!("lr must be a finite non-negative number, got {}", self.lr));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.validate_shape()?;
        if self.src_vocab < super::RESERVED || self.tgt_vocab < super::RESERVED {
            return Err(ModelError::Config(format!(
                "vocabularies need at least the {} reserved tokens (src {}, tgt {})",
                super::RESERVED,
                self.src_vocab,
                self.tgt_vocab
            )));
        }
        Ok(())
    }
}
