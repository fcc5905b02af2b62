use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Gru,
    Lstm,
}

impl CellType {
    /// Number of stacked gate blocks in the cell's weight matrices.
    pub fn gates(self) -> usize {
        match self {
            CellType::Gru => 3,
            CellType::Lstm => 4,
        }
    }
}

/// Scoring function between the previous decoder state and each encoder state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    /// `vᵀ tanh(W k + U q + b)`
    Additive,
    /// `k · q`
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cell_type: CellType,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Add each layer's input to its output for every layer above the first.
    pub residual: bool,
    pub embed_dim: usize,
    /// Shared by encoder and decoder.
    pub hidden_dim: usize,
    pub attention: AttentionKind,
    pub vocab_size: usize,
}

impl ModelConfig {
    /// Single-layer GRU, embed 32, hidden 64: the online serving model.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            cell_type: CellType::Gru,
            encoder_layers: 1,
            decoder_layers: 1,
            residual: true,
            embed_dim: 32,
            hidden_dim: 64,
            attention: AttentionKind::Additive,
            vocab_size,
        }
    }

    /// Four-layer residual LSTM encoder and decoder with 512 hidden units.
    pub fn offline(vocab_size: usize) -> Self {
        Self {
            cell_type: CellType::Lstm,
            encoder_layers: 4,
            decoder_layers: 4,
            residual: true,
            embed_dim: 512,
            hidden_dim: 512,
            attention: AttentionKind::Additive,
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("{name} must be at least 1")));
        }
        if self.vocab_size <= crate::FIRST_TOKEN_ID as usize {
            return Err(Error::InvalidInput(format!(
                "vocab_size {} leaves no room for corpus tokens",
                self.vocab_size
            )));
        }
        if (self.encoder_layers > 1 || self.decoder_layers > 1) && !self.residual {
            return Err(Error::InvalidInput(
                "multi-layer stacks require residual connections".into(),
            ));
        }
        if self.vocab_size > u32::MAX as usize {
            return Err(Error::InvalidInput("vocab_size exceeds the id range".into()));
        }
        Ok(())
    }

    /// Width of the readout vector `[top decoder output; context; prev embedding]`.
    pub fn readout_dim(&self) -> usize {
        2 * self.hidden_dim + self.embed_dim
    }

    pub(crate) fn encoder_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim
        } else {
            self.hidden_dim
        }
    }

    pub(crate) fn decoder_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim + self.hidden_dim
        } else {
            self.hidden_dim
        }
    }
}
