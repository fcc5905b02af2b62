//! The attention-based recurrent encoder-decoder.
//!
//! Source tokens are embedded and run through a stack of recurrent layers.
//! The decoder consumes the previous token and an attention context over the
//! encoder states and produces unnormalized scores `s(w)` for every token.
//! Training minimizes the token-averaged `−log P + β (log Z)²`, which pushes
//! the partition function `Z = Σ exp(s)` towards one so that raw scores can
//! stand in for log-probabilities at decode time.

mod attention;
mod cell;
mod config;
mod io;
mod network;
mod params;
pub mod tensor;
mod train;

pub use attention::AttentionResult;
pub use cell::CellState;
pub use config::{AttentionKind, CellType, ModelConfig};
pub use io::{load_params, read_params, save_params, write_params, FORMAT_VERSION};
pub use network::{loss_and_grads, DecoderState, EncoderStates, LossParts, Readout};
pub use params::{AttentionParams, CellParams, Parameters};
pub use train::{mean_abs_log_z, split_holdout, train, train_with, EpochMetrics, TrainHyper, Trained};

use serde::{Deserialize, Serialize};

use crate::TokenId;

/// How per-token log-probabilities are derived from raw scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// `s(w) − log Σ exp(s)` over the full vocabulary.
    ExactSoftmax,
    /// `min(s(w), 0)`: the normalizer is taken to be one.
    SelfNorm,
}

/// Log-probabilities of the `allowed` tokens, in the order given.
///
/// `scores` must cover the whole vocabulary in exact mode; in self-norm mode
/// only the allowed entries are read.
pub fn restricted_log_probs(scores: &[f64], allowed: &[TokenId], mode: ScoreMode) -> Vec<(TokenId, f64)> {
    match mode {
        ScoreMode::ExactSoftmax => {
            let log_z = tensor::log_sum_exp(scores);
            allowed.iter().map(|&w| (w, scores[w as usize] - log_z)).collect()
        }
        ScoreMode::SelfNorm => allowed.iter().map(|&w| (w, scores[w as usize].min(0.0))).collect(),
    }
}

#[cfg(test)]
mod tests;
