mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treesum_core::ast::parse_source;
use treesum_core::linearize::preorder;
use treesum_core::model::EncoderInput;
use treesum_core::relations::{ancestor_matrix, sibling_matrix};
use treesum_core::Model;

#[test]
fn sparse_model_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ast = random_tree(&mut rng, 10);
        let cfg = tiny_config(12, 10);
        let mut model = Model::new(cfg.clone()).unwrap();
        randomize(&mut model.params, &mut rng, 0.5);
        let ids = random_ids(&mut rng, ast.len(), 12);
        let input = EncoderInput::new(&ast, &preorder(&ast), ids.clone(), &cfg).unwrap();
        let enc = model.encode(&input).unwrap();

        let dense = Dense {
            params: &model.params,
            config: &cfg,
        };
        let states = dense.encoder(&ast, &ids);
        worst = worst.max(max_abs_diff(&states, enc.states.data()));

        let summary = random_ids(&mut rng, 5, 10);
        let tgt_in = decoder_input(&summary);
        let logits = model.decode_train(&enc, &tgt_in).unwrap();
        worst = worst.max(max_abs_diff(&dense.decoder(&states, &tgt_in), logits.data()));
    }
    assert!(worst <= 1e-9, "max deviation {worst:e}");
}

#[test]
fn small_function_tree_matches_dense_reference() {
    // FunctionDef(Param, Block(Assign(..), Return(..)))
    let ast = parse_source("fn f(a) { b = a; return b; }").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = tiny_config(12, 10);
    let mut model = Model::new(cfg.clone()).unwrap();
    randomize(&mut model.params, &mut rng, 0.5);
    let ids = random_ids(&mut rng, ast.len(), 12);
    let input = EncoderInput::new(&ast, &preorder(&ast), ids.clone(), &cfg).unwrap();
    let enc = model.encode(&input).unwrap();
    let dense = Dense {
        params: &model.params,
        config: &cfg,
    };
    assert!(max_abs_diff(&dense.encoder(&ast, &ids), enc.states.data()) <= 1e-9);
}

#[test]
fn relation_matrices_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let ast = random_tree(&mut rng, 12);
        let seq = preorder(&ast);
        let a = ancestor_matrix(&ast, &seq).unwrap();
        let s = sibling_matrix(&ast, &seq).unwrap();
        for i in 0..ast.len() {
            for j in 0..ast.len() {
                assert_eq!(a.get(i, j), oracle_ancestor(&ast, i, j), "A[{i}][{j}]");
                assert_eq!(s.get(i, j), oracle_sibling(&ast, i, j), "S[{i}][{j}]");
            }
        }
    }
}
