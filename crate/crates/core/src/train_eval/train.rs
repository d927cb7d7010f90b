use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linearize::preorder;
use crate::model::{Batch, Checkpoint, EncoderInput, Model, ModelConfig, ModelError, Sample};
use crate::nn::{adam_step, AdamConfig, NnError};
use crate::scalar::Scalar;
use crate::SourceUnit;

use super::{build_vocab, Corpus, CorpusError, Vocabulary};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("config error: {0}")]
    Config(String),
}

/// Training-loop settings around a model config.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub min_freq: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            model: ModelConfig::default(),
            batch_size: 8,
            epochs: 300,
            patience: 10,
            min_freq: 1,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest monitored loss.
    pub checkpoint: Checkpoint<T>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Builds the encoder input and summary ids for one unit.
pub fn encode_unit(
    unit: &SourceUnit,
    src: &Vocabulary,
    tgt: &Vocabulary,
    config: &ModelConfig,
) -> Result<Sample, TrainError> {
    let ast = unit.tree().map_err(|e| CorpusError::Ast {
        id: unit.id.clone(),
        message: e.to_string(),
    })?;
    let seq = preorder(&ast);
    let ids = src.encode(&seq.tokens);
    Ok(Sample {
        id: unit.id.clone(),
        input: EncoderInput::new(&ast, &seq, ids, config)?,
        summary: tgt.encode(&unit.summary),
    })
}

fn batch_indices(n: usize, batch_size: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(rng) = rng {
        order.shuffle(rng);
    }
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Groups samples into padded batches, shuffled when `rng` is given. The
/// last batch may be short.
pub fn batchify(
    samples: &[Sample],
    batch_size: usize,
    max_len: usize,
    rng: Option<&mut ChaCha8Rng>,
) -> Vec<Batch> {
    batch_indices(samples.len(), batch_size, rng)
        .into_iter()
        .map(|idx| Batch::new(idx.iter().map(|&i| samples[i].clone()).collect(), max_len))
        .collect()
}

/// Token-weighted loss over `samples`, summed in sample order.
fn eval_loss<T: Scalar>(
    model: &Model<T>,
    samples: &[Sample],
    batch_size: usize,
) -> Result<f64, TrainError> {
    let (mut sum, mut count) = (0.0, 0);
    for batch in batchify(samples, batch_size, model.config.max_len, None) {
        for (s, c) in model.loss(&batch)?.per_sample {
            sum += s.as_f64();
            count += c;
        }
    }
    Ok(sum / count as f64)
}

pub fn train<T: Scalar>(options: &TrainOptions, corpus: &Corpus) -> Result<TrainOutcome<T>, TrainError> {
    train_with(options, corpus, |_| {})
}

/// Trains from scratch, calling `on_epoch` after every epoch. Best-checkpoint
/// selection and early stopping use the validation loss, or the training
/// loss when there is no validation split.
pub fn train_with<T: Scalar>(
    options: &TrainOptions,
    corpus: &Corpus,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>, TrainError> {
    if options.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be >= 1".into()));
    }
    if options.epochs == 0 {
        return Err(TrainError::Config("epochs must be >= 1".into()));
    }
    let (src, tgt) = build_vocab(corpus, options.min_freq)?;
    let mut config = options.model.clone();
    config.src_vocab = src.len();
    config.tgt_vocab = tgt.len();
    config.validate()?;

    let encode = |split: crate::ast::Split| -> Result<Vec<Sample>, TrainError> {
        corpus
            .split(split)
            .into_iter()
            .map(|u| encode_unit(u, &src, &tgt, &config))
            .collect()
    };
    let train_set = encode(crate::ast::Split::Train)?;
    let valid_set = encode(crate::ast::Split::Valid)?;

    let mut model = Model::<T>::new(config.clone())?;
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    let mut log = Vec::new();
    let mut step = 0u64;
    let mut best: Option<(f64, usize, u64, Model<T>)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 1..=options.epochs {
        let mut per_sample = vec![(0.0, 0); train_set.len()];
        for idx in batch_indices(train_set.len(), options.batch_size, Some(&mut shuffle_rng)) {
            let batch = Batch::new(idx.iter().map(|&i| train_set[i].clone()).collect(), config.max_len);
            let out = model.forward_loss(&batch, Some(&mut dropout_rng))?;
            step += 1;
            adam_step(&mut model.params, &adam, step)?;
            for (&i, (s, c)) in idx.iter().zip(out.per_sample) {
                per_sample[i] = (s.as_f64(), c);
            }
        }
        let tokens: usize = per_sample.iter().map(|p| p.1).sum();
        let train_loss = per_sample.iter().map(|p| p.0).sum::<f64>() / tokens as f64;
        let valid_loss = if valid_set.is_empty() {
            None
        } else {
            Some(eval_loss(&model, &valid_set, options.batch_size)?)
        };
        if !train_loss.is_finite() || valid_loss.is_some_and(|v| !v.is_finite()) {
            return Err(NnError::NonFinite.into());
        }
        let entry = EpochLog {
            epoch,
            train_loss,
            valid_loss,
        };
        on_epoch(&entry);
        log.push(entry);

        let monitored = valid_loss.unwrap_or(train_loss);
        if best.as_ref().map_or(true, |b| monitored < b.0) {
            best = Some((monitored, epoch, step, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= options.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, best_step, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config,
            vocab_src: src.tokens().to_vec(),
            vocab_tgt: tgt.tokens().to_vec(),
            step: best_step,
            params: best_model.params,
        },
        log,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train_eval::parse_corpus;

    fn small_corpus() -> Corpus {
        parse_corpus(
            r#"{"id":"1","code":"fn add(a, b) { return a + b; }","summary":"add two numbers"}
{"id":"2","code":"fn neg(x) { return 0 - x; }","summary":"negate a number"}
{"id":"3","code":"fn one() { return 1; }","summary":"return one"}
{"id":"4","code":"fn sq(x) { return x * x; }","summary":"square a number"}
{"id":"5","code":"fn id(x) { return x; }","summary":"return the input"}"#,
        )
        .unwrap()
    }

    fn options() -> TrainOptions {
        TrainOptions {
            model: ModelConfig {
                d_model: 8,
                heads: 2,
                enc_layers: 1,
                dec_layers: 1,
                d_ff: 16,
                delta_anc: 3,
                delta_sib: 3,
                max_len: 8,
                ..ModelConfig::default()
            },
            batch_size: 2,
            epochs: 3,
            patience: 10,
            min_freq: 1,
        }
    }

    #[test]
    fn batch_sizes_and_reproducible_shuffle() {
        let sizes: Vec<usize> = batch_indices(5, 2, None).iter().map(Vec::len).collect();
        assert_eq!(sizes, [2, 2, 1]);
        let a = batch_indices(9, 4, Some(&mut ChaCha8Rng::seed_from_u64(3)));
        let b = batch_indices(9, 4, Some(&mut ChaCha8Rng::seed_from_u64(3)));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_learning_rate_keeps_loss() {
        let mut o = options();
        o.model.lr = 0.0;
        let out = train::<f64>(&o, &small_corpus()).unwrap();
        assert_eq!(out.log.len(), 3);
        assert!(out.log.iter().all(|e| e.train_loss == out.log[0].train_loss));
        assert!(out.log[0].valid_loss.is_none());
    }

    #[test]
    fn runs_are_identical() {
        let a = train::<f64>(&options(), &small_corpus()).unwrap();
        let b = train::<f64>(&options(), &small_corpus()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.checkpoint.to_json(), b.checkpoint.to_json());
        assert!(a.log[2].train_loss < a.log[0].train_loss);
    }

    #[test]
    fn patience_stops_training() {
        let mut o = options();
        o.model.lr = 0.0;
        o.patience = 1;
        o.epochs = 10;
        let out = train::<f64>(&o, &small_corpus()).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.log.len(), 2);
        assert_eq!(out.best_epoch, 1);
    }
}
