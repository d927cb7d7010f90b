//! Sequential views of an [`Ast`]: pre-order traversal (POT) and the bracketed
//! structure-based traversal (SBT).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::Ast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Traversal {
    Pot,
    Sbt,
}

impl std::str::FromStr for Traversal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pot" => Ok(Traversal::Pot),
            "sbt" => Ok(Traversal::Sbt),
            other => Err(format!("unknown traversal `{other}` (expected pot or sbt)")),
        }
    }
}

/// Token sequence aligned to the nodes that produced each token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearSeq {
    pub kind: Traversal,
    pub tokens: Vec<String>,
    pub node_ids: Vec<usize>,
}

impl LinearSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One token per node, in id order.
pub fn preorder(ast: &Ast) -> LinearSeq {
    LinearSeq {
        kind: Traversal::Pot,
        tokens: ast.nodes.iter().map(|n| n.render().to_string()).collect(),
        node_ids: (0..ast.len()).collect(),
    }
}

/// `( v children... ) v` for every node, so exactly four tokens per node.
pub fn sbt(ast: &Ast) -> LinearSeq {
    enum Step {
        Open(usize),
        Close(usize),
    }
    let mut tokens = Vec::with_capacity(4 * ast.len());
    let mut node_ids = Vec::with_capacity(4 * ast.len());
    if ast.is_empty() {
        return LinearSeq { kind: Traversal::Sbt, tokens, node_ids };
    }
    let mut stack = vec![Step::Open(0)];
    while let Some(step) = stack.pop() {
        match step {
            Step::Open(v) => {
                tokens.push("(".to_string());
                tokens.push(ast.render(v).to_string());
                node_ids.extend([v, v]);
                stack.push(Step::Close(v));
                stack.extend(ast.children(v).iter().rev().map(|&c| Step::Open(c)));
            }
            Step::Close(v) => {
                tokens.push(")".to_string());
                tokens.push(ast.render(v).to_string());
                node_ids.extend([v, v]);
            }
        }
    }
    LinearSeq { kind: Traversal::Sbt, tokens, node_ids }
}

pub fn linearize(ast: &Ast, kind: Traversal) -> LinearSeq {
    match kind {
        Traversal::Pot => preorder(ast),
        Traversal::Sbt => sbt(ast),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no sequences given")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthSummary {
    pub count: usize,
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceStats {
    pub pot: Option<LengthSummary>,
    pub sbt: Option<LengthSummary>,
    /// Mean SBT length over mean POT length, when both kinds are present.
    pub sbt_to_pot: Option<f64>,
}

fn summarize(lengths: &[usize]) -> Option<LengthSummary> {
    if lengths.is_empty() {
        return None;
    }
    Some(LengthSummary {
        count: lengths.len(),
        min: *lengths.iter().min().unwrap(),
        mean: lengths.iter().sum::<usize>() as f64 / lengths.len() as f64,
        max: *lengths.iter().max().unwrap(),
    })
}

pub fn sequence_stats(seqs: &[LinearSeq]) -> Result<SequenceStats, StatsError> {
    if seqs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let lengths = |kind| -> Vec<usize> {
        seqs.iter().filter(|s| s.kind == kind).map(LinearSeq::len).collect()
    };
    let pot = summarize(&lengths(Traversal::Pot));
    let sbt = summarize(&lengths(Traversal::Sbt));
    let sbt_to_pot = match (pot, sbt) {
        (Some(p), Some(s)) if p.mean > 0.0 => Some(s.mean / p.mean),
        _ => None,
    };
    Ok(SequenceStats { pot, sbt, sbt_to_pot })
}
