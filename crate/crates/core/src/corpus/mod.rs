//! Tokenization, vocabulary, parallel corpora and a seeded synthetic stand-in
//! for an organic query→title click log.

mod io;
mod synthetic;
mod vocab;

pub use io::{read_corpus, read_corpus_with, read_keywords, read_lines, write_corpus, write_keywords, write_lines};
pub use synthetic::{generate_synthetic, synthetic_queries, SyntheticData, SyntheticSpec};
pub use vocab::{build_vocab, Vocabulary, RESERVED_TOKENS};

use crate::{Error, Result, TokenId, BOS, EOS};

/// Lowercases and splits on Unicode whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Canonical form of a piece of text: its tokens joined by single spaces.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Maps each token to its id, unknown tokens to UNK.
pub fn encode_tokens<S: AsRef<str>>(vocab: &Vocabulary, tokens: &[S]) -> Vec<TokenId> {
    tokens.iter().map(|t| vocab.id(t.as_ref())).collect()
}

/// An untokenized source/target text pair as found in a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawPair {
    pub source: String,
    pub target: String,
}

impl RawPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }
}

/// Query (source) and title or keyword (target) as id sequences, without
/// BOS/EOS markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelPair {
    source: Vec<TokenId>,
    target: Vec<TokenId>,
}

impl ParallelPair {
    pub fn new(source: Vec<TokenId>, target: Vec<TokenId>) -> Result<Self> {
        check_sequence(&source, "source")?;
        check_sequence(&target, "target")?;
        Ok(Self { source, target })
    }

    /// Tokenizes and encodes a raw pair. Fails if either side is empty.
    pub fn encode(vocab: &Vocabulary, raw: &RawPair) -> Result<Self> {
        Self::new(
            encode_tokens(vocab, &tokenize(&raw.source)),
            encode_tokens(vocab, &tokenize(&raw.target)),
        )
    }

    pub fn source(&self) -> &[TokenId] {
        &self.source
    }

    pub fn target(&self) -> &[TokenId] {
        &self.target
    }
}

fn check_sequence(seq: &[TokenId], context: &'static str) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::InvalidInput(format!("empty {context} sequence")));
    }
    if let Some(&id) = seq.iter().find(|&&id| id == BOS || id == EOS) {
        return Err(Error::ReservedToken { id, context });
    }
    Ok(())
}

/// Encodes every raw pair, dropping pairs with an empty side.
pub fn encode_corpus(vocab: &Vocabulary, raw: &[RawPair]) -> Vec<ParallelPair> {
    raw.iter()
        .filter_map(|pair| ParallelPair::encode(vocab, pair).ok())
        .collect()
}
