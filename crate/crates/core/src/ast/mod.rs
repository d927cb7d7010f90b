//! Abstract syntax trees: data model, MiniLang front end, JSON interchange and
//! structural validation.

mod json;
mod lexer;
mod parser;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::{ast_from_json, ast_to_json, AstTree};
pub use lexer::{tokenize_minilang, Token, TokenKind};
pub use parser::{parse_minilang, parse_source};
pub use validate::{validate_ast, Diagnostic, DiagnosticKind};

/// Node labels produced by the MiniLang parser.
pub mod labels {
    pub const PROGRAM: &str = "Program";
    pub const FUNCTION_DEF: &str = "FunctionDef";
    pub const PARAM: &str = "Param";
    pub const BLOCK: &str = "Block";
    pub const IF: &str = "If";
    pub const WHILE: &str = "While";
    pub const RETURN: &str = "Return";
    pub const ASSIGN: &str = "Assign";
    pub const BIN_OP: &str = "BinOp";
    pub const CALL: &str = "Call";
    pub const NAME: &str = "Name";
    pub const NUM: &str = "Num";
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("lex error at {line}:{column}: unexpected character {ch:?}")]
pub struct LexError {
    pub line: usize,
    pub column: usize,
    pub ch: char,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum AstError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// One node of an [`Ast`]. Ids are canonical pre-order positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub node_id: usize,
    pub label: String,
    pub value: Option<String>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl AstNode {
    /// The single token this node contributes to a linearization: its value
    /// when present, otherwise its label.
    pub fn render(&self) -> &str {
        self.value.as_deref().unwrap_or(&self.label)
    }
}

/// Rooted ordered tree, nodes indexed by `node_id` in pre-order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ast {
    pub nodes: Vec<AstNode>,
}

impl Ast {
    /// Builds an [`Ast`] from a nested tree, assigning pre-order ids.
    pub fn from_tree(tree: &AstTree) -> Ast {
        let mut nodes: Vec<AstNode> = Vec::new();
        // (subtree, parent id)
        let mut stack: Vec<(&AstTree, Option<usize>)> = vec![(tree, None)];
        while let Some((t, parent)) = stack.pop() {
            let id = nodes.len();
            nodes.push(AstNode {
                node_id: id,
                label: t.label.clone(),
                value: t.value.clone(),
                parent,
                children: Vec::with_capacity(t.children.len()),
            });
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            for child in t.children.iter().rev() {
                stack.push((child, Some(id)));
            }
        }
        Ast { nodes }
    }

    /// Nested view of the tree rooted at node 0.
    pub fn to_tree(&self) -> AstTree {
        self.subtree(0)
    }

    fn subtree(&self, id: usize) -> AstTree {
        let node = &self.nodes[id];
        AstTree {
            label: node.label.clone(),
            value: node.value.clone(),
            children: node.children.iter().map(|&c| self.subtree(c)).collect(),
        }
    }

    /// Node count `N`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &AstNode {
        &self.nodes[id]
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.nodes[id].children
    }

    pub fn render(&self, id: usize) -> &str {
        self.nodes[id].render()
    }

    /// Edge count from the root to `id`.
    pub fn depth(&self, id: usize) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            d += 1;
            cur = p;
        }
        d
    }
}

/// Partition a corpus unit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// A code sample with its reference summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceUnit {
    pub id: String,
    pub code: String,
    pub summary: Vec<String>,
    pub ast: Option<Ast>,
    pub split: Split,
}

impl SourceUnit {
    /// The pre-supplied tree if present, otherwise the parse of `code`.
    pub fn tree(&self) -> Result<Ast, AstError> {
        match &self.ast {
            Some(ast) => Ok(ast.clone()),
            None => parse_source(&self.code),
        }
    }
}
