//! Corpus ingestion, vocabularies, batching, the training loop, and the
//! BLEU / ROUGE-L / METEOR-lite evaluation.

mod corpus;
pub mod metrics;
mod report;
mod train;
mod vocab;

pub use corpus::{load_corpus, parse_corpus, tokenize_summary, Corpus, CorpusError};
pub use metrics::{bleu, lcs_len, meteor_lite, rouge_l};
pub use report::{
    evaluate, BaselineRow, BaselineTable, Decoding, LanguageScores, MetricReport, SampleScore,
    PAPER_NOTE,
};
pub use train::{batchify, encode_unit, train, train_with, EpochLog, TrainError, TrainOptions, TrainOutcome};
pub use vocab::{build_vocab, Vocabulary, RESERVED_TOKENS};
