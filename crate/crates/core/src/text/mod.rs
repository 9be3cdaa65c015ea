//! Text ingestion: tokenization, stemming, vocabulary and corpus statistics.

mod corpus;
pub mod porter;
mod stats;
mod tokenize;
mod vocab;

pub use corpus::{
    read_corpus, read_queries, write_queries, CandidateRecord, QueryRecord, RawQuestion,
};
pub use stats::{term_frequency_stats, word_importance, TermStats};
pub use tokenize::{normalize, normalize_question, tokenize};
pub use vocab::{build_vocabulary, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 128;

/// A preprocessed question: stemmed tokens and their vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
}

impl TokenSequence {
    pub fn from_tokens(tokens: Vec<String>, vocab: &Vocabulary) -> Self {
        let ids = tokens.iter().map(|t| vocab.id(t)).collect();
        Self { tokens, ids }
    }

    /// Sequence from raw ids, with tokens recovered from the vocabulary.
    pub fn from_ids(ids: Vec<usize>, vocab: &Vocabulary) -> Self {
        let tokens = ids
            .iter()
            .map(|&i| vocab.word(i).unwrap_or(UNK_TOKEN).to_string())
            .collect();
        Self { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Appends `n` padding positions.
    pub fn padded(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.tokens.extend(std::iter::repeat_n(PAD_TOKEN.to_string(), n));
        out.ids.extend(std::iter::repeat_n(PAD, n));
        out
    }

    pub fn pad_mask(&self) -> Vec<bool> {
        self.ids.iter().map(|&i| i == PAD).collect()
    }
}

/// Concatenates subject and body, normalizes, maps to ids and keeps the first `max_len` tokens.
pub fn preprocess_question(
    subject: &str,
    body: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<TokenSequence> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be >= 1".into()));
    }
    let mut tokens = normalize_question(subject, body);
    tokens.truncate(max_len);
    Ok(TokenSequence::from_tokens(tokens, vocab))
}
