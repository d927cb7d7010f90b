use std::collections::HashSet;

use treesum_core::ast::parse_source;
use treesum_core::model::{load_checkpoint, save_checkpoint, ModelConfig, EOS};
use treesum_core::train_eval::{
    build_vocab, evaluate, load_corpus, train, BaselineTable, Decoding, TrainOptions,
};
use treesum_core::Checkpoint;

fn corpus_path() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/overfit32.jsonl")
}

fn short_options() -> TrainOptions {
    TrainOptions {
        model: ModelConfig {
            d_model: 16,
            heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            d_ff: 32,
            max_len: 12,
            ..ModelConfig::default()
        },
        epochs: 2,
        ..TrainOptions::default()
    }
}

#[test]
fn source_vocab_counts_distinct_rendered_tokens() {
    let corpus = load_corpus(corpus_path()).unwrap();
    let mut distinct = HashSet::new();
    for u in &corpus.units {
        let ast = parse_source(&u.code).unwrap();
        for node in &ast.nodes {
            distinct.insert(node.value.clone().unwrap_or_else(|| node.label.clone()));
        }
    }
    let (src, tgt) = build_vocab(&corpus, 1).unwrap();
    assert_eq!(src.len(), distinct.len() + 4);
    let words: HashSet<&String> = corpus.units.iter().flat_map(|u| &u.summary).collect();
    assert_eq!(tgt.len(), words.len() + 4);
}

#[test]
fn checkpoint_round_trip_keeps_predictions() {
    let corpus = load_corpus(corpus_path()).unwrap();
    let out = train::<f64>(&short_options(), &corpus).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.json");
    save_checkpoint(&path, &out.checkpoint).unwrap();
    let back: Checkpoint = load_checkpoint(&path).unwrap();
    assert_eq!(back.to_json(), out.checkpoint.to_json());
    let units = corpus.train();
    let a = evaluate(&out.checkpoint, &units[..4], Decoding::Greedy).unwrap();
    let b = evaluate(&back, &units[..4], Decoding::Greedy).unwrap();
    assert_eq!(a, b);
}

#[test]
fn silent_model_scores_zero_and_report_lists_reference_rows() {
    let corpus = load_corpus(corpus_path()).unwrap();
    let mut ckpt = train::<f64>(&short_options(), &corpus).unwrap().checkpoint;
    ckpt.params.value_mut("out.b").unwrap().data_mut()[EOS] = 1e3;
    let units = corpus.train();
    let report = evaluate(&ckpt, &units, Decoding::Beam(3)).unwrap();
    assert_eq!(report.samples, 32);
    assert_eq!((report.bleu, report.rouge_l, report.meteor), (0.0, 0.0, 0.0));
    let text = report.render_text(&BaselineTable::bundled());
    assert!(text.contains("this-run - 0.00 0.00 0.00"));
    assert!(text.contains("AST-MHSA (paper) Python 32.52 20.12 44.23"));
    assert!(evaluate(&ckpt, &[], Decoding::Greedy).is_err());
}
