use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::ast::{ast_from_json, parse_source, validate_ast, Split};
use crate::SourceUnit;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("duplicate unit id `{0}`")]
    DuplicateId(String),
    #[error("unit `{id}`: {message}")]
    Ast { id: String, message: String },
    #[error("training split is empty")]
    EmptyCorpus,
    #[error("no units to evaluate")]
    EmptySplit,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    #[serde(default)]
    code: String,
    summary: String,
    #[serde(default)]
    ast: Option<Value>,
    #[serde(default = "default_split")]
    split: Split,
}

fn default_split() -> Split {
    Split::Train
}

/// Code units in file order. Every unit carries a validated tree.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub units: Vec<SourceUnit>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<&SourceUnit> {
        self.units.iter().filter(|u| u.split == split).collect()
    }

    pub fn train(&self) -> Vec<&SourceUnit> {
        self.split(Split::Train)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Lowercases and splits on whitespace; each punctuation character becomes
/// its own token.
pub fn tokenize_summary(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() || ch.is_ascii_punctuation() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        } else {
            word.push(ch);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Parses a JSONL corpus: one `{"id","code","summary","ast"?,"split"?}`
/// object per non-blank line.
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut seen = HashSet::new();
    let mut units = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(raw).map_err(|e| CorpusError::Line {
            line,
            message: e.to_string(),
        })?;
        if rec.id.is_empty() {
            return Err(CorpusError::Line {
                line,
                message: "empty id".into(),
            });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateId(rec.id));
        }
        let summary = tokenize_summary(&rec.summary);
        if summary.is_empty() {
            return Err(CorpusError::Line {
                line,
                message: format!("unit `{}` has an empty summary", rec.id),
            });
        }
        let fail = |message: String| CorpusError::Line { line, message };
        let ast = match &rec.ast {
            Some(v) => ast_from_json(&v.to_string()).map_err(|e| fail(e.to_string()))?,
            None => parse_source(&rec.code).map_err(|e| fail(e.to_string()))?,
        };
        if let Some(d) = validate_ast(&ast).first() {
            return Err(fail(d.message.clone()));
        }
        units.push(SourceUnit {
            id: rec.id,
            code: rec.code,
            summary,
            ast: Some(ast),
            split: rec.split,
        });
    }
    Ok(Corpus { units })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    parse_corpus(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_tokens() {
        assert_eq!(
            tokenize_summary("Returns the SUM, of a+b."),
            ["returns", "the", "sum", ",", "of", "a", "+", "b", "."]
        );
        assert!(tokenize_summary("  ").is_empty());
    }

    #[test]
    fn loads_code_and_supplied_trees() {
        let c = parse_corpus(
            r#"{"id":"a","code":"fn f(x) { return x; }","summary":"identity","split":"valid"}

{"id":"b","summary":"leaf","ast":{"label":"Name","value":"x","children":[]}}"#,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.split(Split::Valid).len(), 1);
        assert_eq!(c.units[1].ast.as_ref().unwrap().len(), 1);
        assert_eq!(c.units[1].split, Split::Train);
    }

    #[test]
    fn rejects_bad_lines() {
        let dup = r#"{"id":"a","code":"fn f() { }","summary":"x"}
{"id":"a","code":"fn g() { }","summary":"y"}"#;
        assert!(matches!(parse_corpus(dup), Err(CorpusError::DuplicateId(_))));
        let bad = "{\"id\":\"a\",\"code\":\"fn f( {\",\"summary\":\"x\"}";
        assert!(matches!(parse_corpus(bad), Err(CorpusError::Line { line: 1, .. })));
        assert!(matches!(parse_corpus("\n{oops"), Err(CorpusError::Line { line: 2, .. })));
    }
}
