//! Token/id mapping over character tokens and the five specials.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::corpus::CharLine;

pub const PAD: u32 = 0;
pub const MASK: u32 = 1;
pub const UNK: u32 = 2;
pub const START: u32 = 3;
pub const END: u32 = 4;

/// Special token literals, index = id.
pub const SPECIALS: [&str; 5] = ["<pad>", "<mask>", "<unk>", "<s>", "</s>"];

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("id {0} out of range for vocabulary of size {1}")]
    IdOutOfRange(u32, usize),
    #[error("duplicate token {0:?} in serialized vocabulary")]
    DuplicateToken(String),
    #[error("serialized vocabulary must start with the specials {SPECIALS:?}")]
    BadSpecials,
    #[error("vocabulary I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Dense token↔id map; specials occupy ids 0..5, observed tokens follow in
/// first-occurrence order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from corpus lines: specials first, then every distinct token in
    /// order of first occurrence.
    pub fn build(lines: &[CharLine]) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for line in lines {
            for tok in &line.tokens {
                if !index.contains_key(tok) {
                    index.insert(tok.clone(), tokens.len() as u32);
                    tokens.push(tok.clone());
                }
            }
        }
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id for a token; `None` when out of vocabulary.
    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Result<&str, VocabError> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(VocabError::IdOutOfRange(id, self.tokens.len()))
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }

    /// Ids of all non-special tokens.
    pub fn content_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (SPECIALS.len() as u32)..(self.tokens.len() as u32)
    }

    /// Per-token lookup; unknown tokens become [`UNK`].
    pub fn encode(&self, line: &CharLine) -> Vec<u32> {
        line.tokens
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<CharLine, VocabError> {
        let tokens = ids
            .iter()
            .map(|&id| self.token(id).map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CharLine { tokens })
    }

    /// Serializes as a JSON array of tokens (index = id).
    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        let json = serde_json::to_string_pretty(&self.tokens)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path)?;
        let tokens: Vec<String> = serde_json::from_str(&text)?;
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        if tokens.len() < SPECIALS.len()
            || SPECIALS.iter().zip(&tokens).any(|(s, t)| s != t)
        {
            return Err(VocabError::BadSpecials);
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::DuplicateToken(t.clone()));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
