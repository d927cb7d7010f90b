//! Shared test helpers: random trees, brute-force relation oracles and a
//! dense reference implementation of the model written with plain loops.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use treesum_core::ast::AstTree;
use treesum_core::model::{ModelConfig, Sample, BOS};
use treesum_core::nn::ParamStore;
use treesum_core::{Ast, Relation};

type Mat = Vec<Vec<f64>>;

const LABELS: [&str; 6] = ["FunctionDef", "Block", "Name", "Num", "BinOp", "Call"];

/// A tree built from a parent list: node `k > 0` hangs under `parents[k-1]`
/// (an earlier node), children in insertion order.
pub fn tree_from_parents(parents: &[usize], labels: &[usize]) -> Ast {
    let n = parents.len() + 1;
    let mut kids = vec![Vec::new(); n];
    for (k, &p) in parents.iter().enumerate() {
        kids[p % (k + 1)].push(k + 1);
    }
    fn build(i: usize, kids: &[Vec<usize>], labels: &[usize]) -> AstTree {
        let l = labels.get(i).copied().unwrap_or(i);
        AstTree {
            label: LABELS[l % LABELS.len()].to_string(),
            value: (l % 3 == 0).then(|| format!("v{}", l % 5)),
            children: kids[i].iter().map(|&c| build(c, kids, labels)).collect(),
        }
    }
    Ast::from_tree(&build(0, &kids, labels))
}

pub fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize) -> Ast {
    let n = rng.gen_range(1..=max_nodes);
    let parents: Vec<usize> = (1..n).map(|k| rng.gen_range(0..k)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..30)).collect();
    tree_from_parents(&parents, &labels)
}

/// Parent of every node, found by scanning all child lists.
fn parent_of(ast: &Ast, i: usize) -> Option<usize> {
    (0..ast.len()).find(|&p| ast.nodes[p].children.contains(&i))
}

/// `+k` if `j` is the k-th ancestor of `i`, `-k` if `i` is the k-th ancestor
/// of `j`, 0 on the diagonal.
pub fn oracle_ancestor(ast: &Ast, i: usize, j: usize) -> Option<i32> {
    if i == j {
        return Some(0);
    }
    let steps_up = |from: usize, to: usize| {
        let mut cur = from;
        let mut k = 0;
        while let Some(p) = parent_of(ast, cur) {
            k += 1;
            if p == to {
                return Some(k);
            }
            cur = p;
        }
        None
    };
    steps_up(i, j).or_else(|| steps_up(j, i).map(|k| -k))
}

/// Position difference among the children of a shared parent.
pub fn oracle_sibling(ast: &Ast, i: usize, j: usize) -> Option<i32> {
    if i == j {
        return Some(0);
    }
    let (pi, pj) = (parent_of(ast, i)?, parent_of(ast, j)?);
    if pi != pj {
        return None;
    }
    let kids = &ast.nodes[pi].children;
    let pos = |x| kids.iter().position(|&c| c == x).unwrap() as i32;
    Some(pos(j) - pos(i))
}

/// Allow flag and bias slot for one pair under one relation.
pub fn oracle_pair(ast: &Ast, relation: Relation, delta: usize, i: usize, j: usize) -> (bool, usize) {
    if i == j {
        return (true, 2 * delta + 1);
    }
    let d = match relation {
        Relation::Ancestor => oracle_ancestor(ast, i, j),
        Relation::Sibling => oracle_sibling(ast, i, j),
    };
    match d {
        Some(d) if d.unsigned_abs() as usize <= delta => (true, (d + delta as i32) as usize),
        _ => (false, 2 * delta + 2),
    }
}

pub fn randomize(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    let names: Vec<String> = store.names().map(String::from).collect();
    for name in names {
        for x in store.value_mut(&name).unwrap().data_mut() {
            *x = rng.gen_range(-scale..scale);
        }
    }
}

pub fn tiny_config(src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        heads: 2,
        enc_layers: 1,
        dec_layers: 1,
        d_ff: 16,
        delta_anc: 3,
        delta_sib: 3,
        src_vocab,
        tgt_vocab,
        max_len: 8,
        ..ModelConfig::default()
    }
}

/// Reference forward pass over dense matrices.
pub struct Dense<'a> {
    pub params: &'a ParamStore<f64>,
    pub config: &'a ModelConfig,
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut out = vec![vec![0.0; b[0].len()]; a.len()];
    for i in 0..a.len() {
        for k in 0..b.len() {
            for j in 0..b[0].len() {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

impl Dense<'_> {
    fn mat(&self, name: &str) -> Mat {
        let t = self.params.value(name).unwrap();
        let cols = *t.shape().last().unwrap();
        t.data().chunks(cols).map(<[f64]>::to_vec).collect()
    }

    fn vec(&self, name: &str) -> Vec<f64> {
        self.params.value(name).unwrap().data().to_vec()
    }

    fn linear(&self, x: &Mat, w: &str, b: &str) -> Mat {
        let bias = self.vec(b);
        matmul(x, &self.mat(w))
            .into_iter()
            .map(|r| r.iter().zip(&bias).map(|(v, c)| v + c).collect())
            .collect()
    }

    fn norm(&self, x: &Mat, prefix: &str) -> Mat {
        let g = self.vec(&format!("{prefix}.gamma"));
        let b = self.vec(&format!("{prefix}.beta"));
        x.iter()
            .map(|r| {
                let n = r.len() as f64;
                let mean = r.iter().sum::<f64>() / n;
                let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = (var + 1e-5).sqrt();
                (0..r.len()).map(|k| (r[k] - mean) / sd * g[k] + b[k]).collect()
            })
            .collect()
    }

    fn ffn(&self, x: &Mat, prefix: &str) -> Mat {
        let h: Mat = self
            .linear(x, &format!("{prefix}.w1"), &format!("{prefix}.b1"))
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
            .collect();
        self.linear(&h, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
    }

    /// Multi-head attention; `extra(h, i, j)` returns the additive logit
    /// term (bias or −1e9).
    fn attention(&self, xq: &Mat, xkv: &Mat, prefix: &str, extra: &dyn Fn(usize, usize, usize) -> f64) -> Mat {
        let p = |s: &str| format!("{prefix}.{s}");
        let q = self.linear(xq, &p("wq"), &p("bq"));
        let k = matmul(xkv, &self.mat(&p("wk")));
        let v = self.linear(xkv, &p("wv"), &p("bv"));
        let dh = self.config.d_model / self.config.heads;
        let mut cat = vec![vec![0.0; self.config.d_model]; xq.len()];
        for h in 0..self.config.heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..xq.len() {
                let logits: Vec<f64> = (0..xkv.len())
                    .map(|j| {
                        let dot: f64 = cols.clone().map(|c| q[i][c] * k[j][c]).sum();
                        dot / (dh as f64).sqrt() + extra(h, i, j)
                    })
                    .collect();
                let w = softmax(&logits);
                for c in cols.clone() {
                    cat[i][c] = (0..xkv.len()).map(|j| w[j] * v[j][c]).sum();
                }
            }
        }
        self.linear(&cat, &p("wo"), &p("bo"))
    }

    pub fn encoder(&self, ast: &Ast, ids: &[usize]) -> Mat {
        let emb = self.mat("src_embed");
        let mut x: Mat = ids.iter().map(|&t| emb[t].clone()).collect();
        let layout = self.config.head_layout();
        for l in 0..self.config.enc_layers {
            let tables: Vec<Vec<f64>> = (0..self.config.heads)
                .map(|h| self.vec(&format!("enc.{l}.rel_bias.{h}")))
                .collect();
            let extra = |h: usize, i: usize, j: usize| {
                let rel = layout.relation(h);
                let (ok, idx) = oracle_pair(ast, rel, layout.delta(rel), i, j);
                if ok {
                    tables[h][idx]
                } else {
                    -1e9
                }
            };
            let a = self.attention(&x, &x, &format!("enc.{l}.attn"), &extra);
            x = self.norm(&add(&x, &a), &format!("enc.{l}.ln1"));
            let f = self.ffn(&x, &format!("enc.{l}.ffn"));
            x = self.norm(&add(&x, &f), &format!("enc.{l}.ln2"));
        }
        x
    }

    pub fn decoder(&self, memory: &Mat, tgt_in: &[usize]) -> Mat {
        let emb = self.mat("tgt_embed");
        let pos = self.mat("tgt_pos");
        let mut y: Mat = tgt_in
            .iter()
            .enumerate()
            .map(|(t, &w)| emb[w].iter().zip(&pos[t]).map(|(a, b)| a + b).collect())
            .collect();
        let causal = |_h: usize, i: usize, j: usize| if j > i { -1e9 } else { 0.0 };
        let none = |_h: usize, _i: usize, _j: usize| 0.0;
        for l in 0..self.config.dec_layers {
            let a = self.attention(&y, &y, &format!("dec.{l}.self"), &causal);
            y = self.norm(&add(&y, &a), &format!("dec.{l}.ln1"));
            let c = self.attention(&y, memory, &format!("dec.{l}.cross"), &none);
            y = self.norm(&add(&y, &c), &format!("dec.{l}.ln2"));
            let f = self.ffn(&y, &format!("dec.{l}.ffn"));
            y = self.norm(&add(&y, &f), &format!("dec.{l}.ln3"));
        }
        self.linear(&y, "out.w", "out.b")
    }
}

/// Random source ids for a tree and a random summary.
pub fn random_ids(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(4..vocab)).collect()
}

pub fn decoder_input(summary: &[usize]) -> Vec<usize> {
    std::iter::once(BOS).chain(summary.iter().copied()).collect()
}

pub fn max_abs_diff(a: &Mat, b: &[f64]) -> f64 {
    a.iter()
        .flatten()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn sample(id: &str, input: treesum_core::model::EncoderInput, summary: Vec<usize>) -> Sample {
    Sample {
        id: id.into(),
        input,
        summary,
    }
}
