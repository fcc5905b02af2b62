//! Generative keyword retrieval into a closed keyword set.
//!
//! A small attention-based encoder-decoder is trained on query→title pairs
//! with a self-normalizing penalty on the softmax partition function. At
//! inference time queries are decoded directly into advertiser keywords by a
//! beam search whose candidate tokens are pruned with a prefix tree over the
//! keyword set, so every output is a member of that set.
//!
//! Modules:
//! - [`corpus`]: tokenization, vocabulary, corpus files, synthetic data.
//! - [`trie`]: the keyword prefix tree.
//! - [`model`]: the recurrent encoder-decoder, its losses, gradients and training.
//! - [`decode`]: beam search with trie pruning, self-normalized scoring and
//!   on-the-fly dropping of hypotheses below the output threshold.
//! - [`serve`]: frequency-split serving with an offline precomputed store.
//! - [`bench`]: decode-time and output-validity measurements.

pub mod bench;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod model;
pub mod serve;
pub mod trie;

pub use error::{Error, Result};

/// Token identifier. Ids below [`FIRST_TOKEN_ID`] are reserved.
pub type TokenId = u32;

/// Beginning-of-sequence marker fed to the decoder at the first step.
pub const BOS: TokenId = 0;
/// End-of-sequence marker; emitting it terminates a hypothesis.
pub const EOS: TokenId = 1;
/// Out-of-vocabulary token.
pub const UNK: TokenId = 2;
/// Smallest id given to a corpus token.
pub const FIRST_TOKEN_ID: TokenId = 3;

/// True for ids that must never appear inside a keyword path.
pub fn is_reserved(id: TokenId) -> bool {
    id < FIRST_TOKEN_ID
}
