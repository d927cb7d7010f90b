use std::collections::HashMap;

use crate::model::{RESERVED, UNK};

use super::{Corpus, CorpusError};

pub const RESERVED_TOKENS: [&str; RESERVED] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token ↔ id map with the four reserved ids first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_freq` times, ordered by frequency
    /// (descending) then lexicographically.
    pub fn from_counts(counts: &HashMap<String, usize>, min_freq: usize) -> Self {
        let mut kept: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(t, &c)| c >= min_freq && !RESERVED_TOKENS.contains(&t.as_str()))
            .map(|(t, &c)| (t, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = RESERVED_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.clone()))
            .collect();
        Self::from_tokens(tokens).expect("reserved prefix present")
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.len() < RESERVED || tokens[..RESERVED] != RESERVED_TOKENS {
            return Err(format!("vocabulary must start with {RESERVED_TOKENS:?}"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(format!("duplicate token {t:?}"));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(RESERVED_TOKENS[UNK], String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.tokens).expect("string list serializes")
    }
}

/// Source vocabulary over rendered tree tokens and target vocabulary over
/// summary tokens, both from the training split.
pub fn build_vocab(corpus: &Corpus, min_freq: usize) -> Result<(Vocabulary, Vocabulary), CorpusError> {
    let train = corpus.train();
    if train.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut src: HashMap<String, usize> = HashMap::new();
    let mut tgt: HashMap<String, usize> = HashMap::new();
    for unit in train {
        let ast = unit.tree().map_err(|e| CorpusError::Ast {
            id: unit.id.clone(),
            message: e.to_string(),
        })?;
        for node in &ast.nodes {
            *src.entry(node.render().to_string()).or_default() += 1;
        }
        for t in &unit.summary {
            *tgt.entry(t.clone()).or_default() += 1;
        }
    }
    Ok((
        Vocabulary::from_counts(&src, min_freq),
        Vocabulary::from_counts(&tgt, min_freq),
    ))
}
