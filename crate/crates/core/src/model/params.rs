use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Matrix;
use super::{AttentionKind, ModelConfig};
use crate::Result;

/// Weights of one recurrent layer. Gate blocks are stacked along the rows:
/// GRU `[update; reset; candidate]`, LSTM `[input; forget; cell; output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub input: Matrix,
    pub recurrent: Matrix,
    pub bias: Vec<f64>,
}

/// Feed-forward attention scorer `vᵀ tanh(W k + U q + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `W`, applied to the previous decoder state.
    pub query: Matrix,
    /// `U`, applied to each encoder state.
    pub key: Matrix,
    pub bias: Vec<f64>,
    /// `v`
    pub score: Vec<f64>,
}

/// All learnable tensors of the encoder-decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    config: ModelConfig,
    pub embedding: Matrix,
    pub encoder: Vec<CellParams>,
    pub decoder: Vec<CellParams>,
    pub attention: Option<AttentionParams>,
    /// Maps the readout vector to one unnormalized score per vocabulary entry.
    pub output: Matrix,
    pub output_bias: Vec<f64>,
}

impl CellParams {
    fn zeros(gates: usize, input: usize, hidden: usize) -> Self {
        Self {
            input: Matrix::zeros(gates * hidden, input),
            recurrent: Matrix::zeros(gates * hidden, hidden),
            bias: vec![0.0; gates * hidden],
        }
    }
}

impl Parameters {
    /// All-zero parameters of the given shape.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (e, h, v) = (config.embed_dim, config.hidden_dim, config.vocab_size);
        let gates = config.cell_type.gates();
        Ok(Self {
            config,
            embedding: Matrix::zeros(v, e),
            encoder: (0..config.encoder_layers)
                .map(|l| CellParams::zeros(gates, config.encoder_input_dim(l), h))
                .collect(),
            decoder: (0..config.decoder_layers)
                .map(|l| CellParams::zeros(gates, config.decoder_input_dim(l), h))
                .collect(),
            attention: match config.attention {
                AttentionKind::Additive => Some(AttentionParams {
                    query: Matrix::zeros(h, h),
                    key: Matrix::zeros(h, h),
                    bias: vec![0.0; h],
                    score: vec![0.0; h],
                }),
                AttentionKind::Dot => None,
            },
            output: Matrix::zeros(v, config.readout_dim()),
            output_bias: vec![0.0; v],
        })
    }

    /// Xavier-uniform weights, zero biases; deterministic in `seed`.
    ///
    /// Stacked gate matrices are initialized block by block, each block being
    /// one `hidden × input` weight matrix.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_dim;
        xavier_fill(
            &mut rng,
            params.embedding.data_mut(),
            config.vocab_size,
            config.embed_dim,
        );
        for cell in params.encoder.iter_mut().chain(params.decoder.iter_mut()) {
            for m in [&mut cell.input, &mut cell.recurrent] {
                let cols = m.cols();
                for block in m.data_mut().chunks_mut(h * cols) {
                    xavier_fill(&mut rng, block, h, cols);
                }
            }
        }
        if let Some(att) = params.attention.as_mut() {
            xavier_fill(&mut rng, att.query.data_mut(), h, h);
            xavier_fill(&mut rng, att.key.data_mut(), h, h);
            xavier_fill(&mut rng, &mut att.score, 1, h);
        }
        let readout = config.readout_dim();
        xavier_fill(&mut rng, params.output.data_mut(), config.vocab_size, readout);
        Ok(params)
    }

    /// Zero tensors with the same shapes, e.g. for gradients or optimizer moments.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config was validated at construction")
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Every tensor in declaration order (the on-disk order).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embedding.data()];
        for cell in self.encoder.iter().chain(&self.decoder) {
            out.extend([cell.input.data(), cell.recurrent.data(), &cell.bias[..]]);
        }
        if let Some(att) = &self.attention {
            out.extend([att.query.data(), att.key.data(), &att.bias[..], &att.score[..]]);
        }
        out.extend([self.output.data(), &self.output_bias[..]]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embedding.data_mut()];
        for cell in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(cell.input.data_mut());
            out.push(cell.recurrent.data_mut());
            out.push(&mut cell.bias[..]);
        }
        if let Some(att) = self.attention.as_mut() {
            out.push(att.query.data_mut());
            out.push(att.key.data_mut());
            out.push(&mut att.bias[..]);
            out.push(&mut att.score[..]);
        }
        out.push(self.output.data_mut());
        out.push(&mut self.output_bias[..]);
        out
    }

    /// Human-readable tensor names, parallel to [`Parameters::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = vec!["embedding".to_string()];
        for (side, cells) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for l in 0..cells.len() {
                for part in ["input", "recurrent", "bias"] {
                    out.push(format!("{side}.{l}.{part}"));
                }
            }
        }
        if self.attention.is_some() {
            for part in ["query", "key", "bias", "score"] {
                out.push(format!("attention.{part}"));
            }
        }
        out.extend(["output".to_string(), "output_bias".to_string()]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Uniform in `±√(6 / (fan_in + fan_out))`.
pub fn xavier_fill(rng: &mut impl Rng, data: &mut [f64], fan_out: usize, fan_in: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for x in data {
        *x = rng.random_range(-bound..bound);
    }
}
