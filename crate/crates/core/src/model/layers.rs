use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{ParamStore, Tape, Var};
use crate::scalar::Scalar;

use super::{EncoderInput, ModelConfig, ModelError};

const LN_EPS: f64 = 1e-5;

/// Per-head key restriction and optional relative-bias lookup.
struct HeadMask {
    allow: Option<Arc<[bool]>>,
    bias: Option<(String, Arc<[usize]>)>,
}

/// One forward pass: a tape, the parameters bound onto it by name, and the
/// dropout stream when dropout is active.
pub(crate) struct Forward<'p, T: Scalar> {
    pub tape: Tape<'p, T>,
    params: &'p ParamStore<T>,
    config: &'p ModelConfig,
    bound: HashMap<String, Var>,
    rng: Option<&'p mut ChaCha8Rng>,
}

impl<'p, T: Scalar> Forward<'p, T> {
    pub fn new(
        params: &'p ParamStore<T>,
        config: &'p ModelConfig,
        rng: Option<&'p mut ChaCha8Rng>,
    ) -> Self {
        Forward {
            tape: Tape::new(),
            params,
            config,
            bound: HashMap::new(),
            rng,
        }
    }

    fn p(&mut self, name: &str) -> Result<Var, ModelError> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let v = self.tape.borrowed(self.params.value(name)?);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Parameters touched by this pass, with their tape handles.
    pub fn bound(&self) -> impl Iterator<Item = (&str, Var)> {
        self.bound.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn dropout(&mut self, x: Var) -> Result<Var, ModelError> {
        let rate = self.config.dropout;
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x);
        };
        if rate <= 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask = (0..self.tape.value(x).len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        Ok(self.tape.dropout(x, mask)?)
    }

    fn norm(&mut self, x: Var, prefix: &str) -> Result<Var, ModelError> {
        let g = self.p(&format!("{prefix}.gamma"))?;
        let b = self.p(&format!("{prefix}.beta"))?;
        Ok(self.tape.layer_norm(x, g, b, T::of(LN_EPS))?)
    }

    fn ffn(&mut self, x: Var, prefix: &str) -> Result<Var, ModelError> {
        let w1 = self.p(&format!("{prefix}.w1"))?;
        let b1 = self.p(&format!("{prefix}.b1"))?;
        let w2 = self.p(&format!("{prefix}.w2"))?;
        let b2 = self.p(&format!("{prefix}.b2"))?;
        let h = self.tape.linear(x, w1, b1)?;
        let h = self.tape.relu(h);
        Ok(self.tape.linear(h, w2, b2)?)
    }

    /// `x + sublayer` followed by layer norm, with dropout on the sublayer.
    fn add_norm(&mut self, x: Var, sub: Var, prefix: &str) -> Result<Var, ModelError> {
        let sub = self.dropout(sub)?;
        let sum = self.tape.add(x, sub)?;
        self.norm(sum, prefix)
    }

    fn attention(
        &mut self,
        xq: Var,
        xkv: Var,
        prefix: &str,
        heads: &[HeadMask],
    ) -> Result<Var, ModelError> {
        let dh = self.config.head_dim();
        let proj = |fw: &mut Self, x: Var, w: &str, b: &str| -> Result<Var, ModelError> {
            let w = fw.p(&format!("{prefix}.{w}"))?;
            let b = fw.p(&format!("{prefix}.{b}"))?;
            Ok(fw.tape.linear(x, w, b)?)
        };
        let q = proj(self, xq, "wq", "bq")?;
        let wk = self.p(&format!("{prefix}.wk"))?;
        let k = self.tape.matmul(xkv, wk)?;
        let v = proj(self, xkv, "wv", "bv")?;
        let n = self.tape.value(xq).rows();
        let m = self.tape.value(xkv).rows();
        let scale = T::one() / T::of(dh as f64).sqrt();

        let mut outs = Vec::with_capacity(heads.len());
        for (h, mask) in heads.iter().enumerate() {
            let qh = self.tape.slice_cols(q, h * dh, dh)?;
            let kh = self.tape.slice_cols(k, h * dh, dh)?;
            let vh = self.tape.slice_cols(v, h * dh, dh)?;
            let s = self.tape.matmul_t(qh, kh)?;
            let mut s = self.tape.scale(s, scale);
            if let (Some((table, index)), Some(allow)) = (&mask.bias, &mask.allow) {
                let t = self.p(table)?;
                let b = self.tape.bias_lookup(t, index.clone(), allow.clone(), n, m)?;
                s = self.tape.add(s, b)?;
            }
            let w = self.tape.masked_softmax(s, mask.allow.as_deref())?;
            outs.push(self.tape.matmul(w, vh)?);
        }
        let cat = self.tape.concat_cols(&outs)?;
        proj(self, cat, "wo", "bo")
    }

    /// Encoder stack over one tree; returns the `n × d_model` states.
    pub fn encoder(&mut self, input: &EncoderInput) -> Result<Var, ModelError> {
        if input.is_empty() {
            return Err(ModelError::Empty("source sequence"));
        }
        if input.patterns.len() != self.config.heads {
            return Err(ModelError::Config(format!(
                "{} attention patterns for {} heads",
                input.patterns.len(),
                self.config.heads
            )));
        }
        let table = self.p("src_embed")?;
        let mut x = self.tape.gather_rows(table, &input.ids)?;
        for l in 0..self.config.enc_layers {
            let heads: Vec<HeadMask> = input
                .patterns
                .iter()
                .map(|p| HeadMask {
                    allow: Some(p.allow.clone()),
                    bias: Some((format!("enc.{l}.rel_bias.{}", p.head), p.bias_index.clone())),
                })
                .collect();
            let a = self.attention(x, x, &format!("enc.{l}.attn"), &heads)?;
            x = self.add_norm(x, a, &format!("enc.{l}.ln1"))?;
            let f = self.ffn(x, &format!("enc.{l}.ffn"))?;
            x = self.add_norm(x, f, &format!("enc.{l}.ln2"))?;
        }
        Ok(x)
    }

    /// Decoder stack; returns `m × V_tgt` next-token logits.
    pub fn decoder(&mut self, memory: Var, tgt_in: &[usize]) -> Result<Var, ModelError> {
        let m = tgt_in.len();
        if m == 0 {
            return Err(ModelError::Empty("decoder input"));
        }
        if m > self.config.max_len {
            return Err(ModelError::Length {
                len: m,
                max_len: self.config.max_len,
            });
        }
        if let Some(&bad) = tgt_in.iter().find(|&&t| t >= self.config.tgt_vocab) {
            return Err(ModelError::Vocab(format!(
                "target id {bad} outside vocabulary of {}",
                self.config.tgt_vocab
            )));
        }
        let emb = self.p("tgt_embed")?;
        let pos = self.p("tgt_pos")?;
        let e = self.tape.gather_rows(emb, tgt_in)?;
        let positions: Vec<usize> = (0..m).collect();
        let p = self.tape.gather_rows(pos, &positions)?;
        let mut y = self.tape.add(e, p)?;

        let causal: Arc<[bool]> = (0..m * m).map(|k| k % m <= k / m).collect();
        let self_heads: Vec<HeadMask> = (0..self.config.heads)
            .map(|_| HeadMask {
                allow: Some(causal.clone()),
                bias: None,
            })
            .collect();
        let cross_heads: Vec<HeadMask> = (0..self.config.heads)
            .map(|_| HeadMask {
                allow: None,
                bias: None,
            })
            .collect();
        for l in 0..self.config.dec_layers {
            let a = self.attention(y, y, &format!("dec.{l}.self"), &self_heads)?;
            y = self.add_norm(y, a, &format!("dec.{l}.ln1"))?;
            let c = self.attention(y, memory, &format!("dec.{l}.cross"), &cross_heads)?;
            y = self.add_norm(y, c, &format!("dec.{l}.ln2"))?;
            let f = self.ffn(y, &format!("dec.{l}.ffn"))?;
            y = self.add_norm(y, f, &format!("dec.{l}.ln3"))?;
        }
        let w = self.p("out.w")?;
        let b = self.p("out.b")?;
        Ok(self.tape.linear(y, w, b)?)
    }
}
