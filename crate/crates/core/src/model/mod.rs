//! The encoder-decoder: relation-masked self-attention over the pre-order
//! sequence with learned relative biases, a standard causal decoder with
//! cross-attention, greedy and beam decoding, and checkpoints.

mod checkpoint;
mod config;
mod decode;
mod layers;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ast::Ast;
use crate::linearize::{LinearSeq, Traversal};
use crate::nn::{NnError, ParamStore, Tensor};
use crate::relations::{self, AttentionPattern, RelationError, RelationMatrices};
use crate::scalar::Scalar;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use decode::Hypothesis;
use layers::Forward;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
/// Number of reserved ids at the start of every vocabulary.
pub const RESERVED: usize = 4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config error: {0}")]
    Config(String),
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("decoder input of length {len} exceeds max_len {max_len}")]
    Length { len: usize, max_len: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Uniform,
    Zeros,
    Ones,
}

/// Half-width of the uniform initializer.
pub const INIT_RANGE: f64 = 0.08;

/// Names, shapes and initializers of every parameter for `config`, sorted by
/// name.
pub fn param_specs(config: &ModelConfig) -> BTreeMap<String, (Vec<usize>, Init)> {
    let d = config.d_model;
    let mut specs = BTreeMap::new();
    let mut add = |name: String, shape: Vec<usize>, init: Init| {
        specs.insert(name, (shape, init));
    };

    add("src_embed".into(), vec![config.src_vocab, d], Init::Uniform);
    add("tgt_embed".into(), vec![config.tgt_vocab, d], Init::Uniform);
    add("tgt_pos".into(), vec![config.max_len, d], Init::Uniform);
    add("out.w".into(), vec![d, config.tgt_vocab], Init::Uniform);
    add("out.b".into(), vec![config.tgt_vocab], Init::Zeros);

    let attention = |add: &mut dyn FnMut(String, Vec<usize>, Init), prefix: String| {
        for w in ["wq", "wk", "wv", "wo"] {
            add(format!("{prefix}.{w}"), vec![d, d], Init::Uniform);
        }
        for b in ["bq", "bv", "bo"] {
            add(format!("{prefix}.{b}"), vec![d], Init::Zeros);
        }
    };
    let norm = |add: &mut dyn FnMut(String, Vec<usize>, Init), prefix: String| {
        add(format!("{prefix}.gamma"), vec![d], Init::Ones);
        add(format!("{prefix}.beta"), vec![d], Init::Zeros);
    };
    let ffn = |add: &mut dyn FnMut(String, Vec<usize>, Init), prefix: String| {
        add(format!("{prefix}.w1"), vec![d, config.d_ff], Init::Uniform);
        add(format!("{prefix}.b1"), vec![config.d_ff], Init::Zeros);
        add(format!("{prefix}.w2"), vec![config.d_ff, d], Init::Uniform);
        add(format!("{prefix}.b2"), vec![d], Init::Zeros);
    };

    let layout = config.head_layout();
    for l in 0..config.enc_layers {
        attention(&mut add, format!("enc.{l}.attn"));
        for h in 0..config.heads {
            add(
                format!("enc.{l}.rel_bias.{h}"),
                vec![layout.bias_table_len(h)],
                Init::Zeros,
            );
        }
        norm(&mut add, format!("enc.{l}.ln1"));
        ffn(&mut add, format!("enc.{l}.ffn"));
        norm(&mut add, format!("enc.{l}.ln2"));
    }
    for l in 0..config.dec_layers {
        attention(&mut add, format!("dec.{l}.self"));
        norm(&mut add, format!("dec.{l}.ln1"));
        attention(&mut add, format!("dec.{l}.cross"));
        norm(&mut add, format!("dec.{l}.ln2"));
        ffn(&mut add, format!("dec.{l}.ffn"));
        norm(&mut add, format!("dec.{l}.ln3"));
    }
    specs
}

/// Fresh parameters: uniform(−0.08, 0.08) weights and embeddings drawn from a
/// ChaCha stream seeded with `seed`, in sorted name order; zero biases and
/// relative-bias tables; unit layer-norm gains.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ParamStore<T>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, (shape, init)) in param_specs(config) {
        let len: usize = shape.iter().product();
        let data: Vec<T> = match init {
            Init::Uniform => (0..len)
                .map(|_| T::of(rng.gen_range(-INIT_RANGE..INIT_RANGE)))
                .collect(),
            Init::Zeros => vec![T::zero(); len],
            Init::Ones => vec![T::one(); len],
        };
        store.insert(name, Tensor::from_vec(&shape, data)?)?;
    }
    Ok(store)
}

/// Encoder input for one tree: source token ids (one per pre-order node) and
/// the per-head attention patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub ids: Vec<usize>,
    pub patterns: Arc<[AttentionPattern]>,
}

impl EncoderInput {
    pub fn new(
        ast: &Ast,
        seq: &LinearSeq,
        ids: Vec<usize>,
        config: &ModelConfig,
    ) -> Result<Self, ModelError> {
        if seq.kind != Traversal::Pot {
            return Err(RelationError::KindMismatch(seq.kind).into());
        }
        if ids.len() != seq.len() {
            return Err(ModelError::Vocab(format!(
                "{} ids for a sequence of {}",
                ids.len(),
                seq.len()
            )));
        }
        if ids.is_empty() {
            return Err(ModelError::Empty("source sequence"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= config.src_vocab) {
            return Err(ModelError::Vocab(format!(
                "source id {bad} outside vocabulary of {}",
                config.src_vocab
            )));
        }
        let rel = RelationMatrices::new(ast, seq)?;
        let patterns = relations::build_head_masks(&rel, &config.head_layout())?;
        Ok(EncoderInput {
            ids,
            patterns: patterns.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Hidden states for every source position plus the patterns that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<T> {
    pub states: Tensor<T>,
    pub patterns: Arc<[AttentionPattern]>,
}

/// One training pair: encoder input and summary ids (without BOS/EOS).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub input: EncoderInput,
    pub summary: Vec<usize>,
}

/// Teacher-forcing decoder input `[BOS, w…]` and target `[w…, EOS]`, with the
/// summary cut to `max_len − 1` words.
pub fn teacher_forcing(summary: &[usize], max_len: usize) -> (Vec<usize>, Vec<usize>) {
    let k = summary.len().min(max_len.saturating_sub(1));
    let mut input = Vec::with_capacity(k + 1);
    input.push(BOS);
    input.extend_from_slice(&summary[..k]);
    let mut target = summary[..k].to_vec();
    target.push(EOS);
    (input, target)
}

/// A group of samples with teacher-forcing sequences padded to a common
/// length. Samples never attend to each other.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub samples: Vec<Sample>,
    pub tgt_in: Vec<Vec<usize>>,
    pub tgt_out: Vec<Vec<usize>>,
}

impl Batch {
    pub fn new(samples: Vec<Sample>, max_len: usize) -> Self {
        let pairs: Vec<_> = samples
            .iter()
            .map(|s| teacher_forcing(&s.summary, max_len))
            .collect();
        let width = pairs.iter().map(|(i, _)| i.len()).max().unwrap_or(0);
        let pad = |mut v: Vec<usize>| {
            v.resize(width, PAD);
            v
        };
        let (tgt_in, tgt_out) = pairs.into_iter().map(|(i, o)| (pad(i), pad(o))).unzip();
        Batch {
            samples,
            tgt_in,
            tgt_out,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Loss of one batch: token-mean cross-entropy plus per-sample sums.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss<T> {
    pub loss: T,
    pub tokens: usize,
    /// `(summed token loss, token count)` per sample, in batch order.
    pub per_sample: Vec<(T, usize)>,
}

/// Model configuration with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let params = init_params(&config, config.seed)?;
        Ok(Model { config, params })
    }

    pub fn encode(&self, input: &EncoderInput) -> Result<EncoderOutput<T>, ModelError> {
        let mut fw = Forward::new(&self.params, &self.config, None);
        let states = fw.encoder(input)?;
        Ok(EncoderOutput {
            states: fw.tape.value(states).clone(),
            patterns: input.patterns.clone(),
        })
    }

    /// Next-token logits (`m × V_tgt`) for a BOS-prefixed decoder input.
    pub fn decode_train(&self, enc: &EncoderOutput<T>, tgt_in: &[usize]) -> Result<Tensor<T>, ModelError> {
        let mut fw = Forward::new(&self.params, &self.config, None);
        let memory = fw.tape.constant(enc.states.clone());
        let logits = fw.decoder(memory, tgt_in)?;
        Ok(fw.tape.value(logits).clone())
    }

    fn run_batch<'p>(
        &'p self,
        batch: &Batch,
        rng: Option<&'p mut ChaCha8Rng>,
    ) -> Result<(Forward<'p, T>, crate::nn::Var, BatchLoss<T>), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Empty("batch"));
        }
        let mut fw = Forward::new(&self.params, &self.config, rng);
        let mut sums = Vec::with_capacity(batch.len());
        let mut per_sample = Vec::with_capacity(batch.len());
        for (i, sample) in batch.samples.iter().enumerate() {
            let memory = fw.encoder(&sample.input)?;
            let logits = fw.decoder(memory, &batch.tgt_in[i])?;
            let (ce, count) = fw.tape.cross_entropy_sum(logits, &batch.tgt_out[i], PAD)?;
            per_sample.push((fw.tape.value(ce).item(), count));
            sums.push(ce);
        }
        let mut root = sums[0];
        for &s in &sums[1..] {
            root = fw.tape.add(root, s)?;
        }
        let tokens: usize = per_sample.iter().map(|p| p.1).sum();
        let loss = fw.tape.value(root).item() / T::of(tokens as f64);
        Ok((
            fw,
            root,
            BatchLoss {
                loss,
                tokens,
                per_sample,
            },
        ))
    }

    /// Loss without gradients (dropout disabled).
    pub fn loss(&self, batch: &Batch) -> Result<BatchLoss<T>, ModelError> {
        Ok(self.run_batch(batch, None)?.2)
    }

    /// Mean token loss over the batch; gradients of that mean replace the
    /// stored gradients. `rng` drives dropout when the config enables it.
    pub fn forward_loss(
        &mut self,
        batch: &Batch,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<BatchLoss<T>, ModelError> {
        let (grads, result) = {
            let (fw, root, result) = self.run_batch(batch, rng)?;
            let seed = T::one() / T::of(result.tokens as f64);
            let mut g = fw.tape.backward(root, seed);
            let grads: Vec<(String, Option<Tensor<T>>)> = fw
                .bound()
                .map(|(name, var)| (name.to_string(), g.take(var)))
                .collect();
            (grads, result)
        };
        self.params.zero_grad();
        for (name, g) in grads {
            if let Some(g) = g {
                self.params.accumulate_grad(&name, &g)?;
            }
        }
        Ok(result)
    }
}
