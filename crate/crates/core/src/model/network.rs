//! Forward passes shared by inference and training, plus the teacher-forced
//! loss and its reverse-mode gradient.

use super::attention::{self, AttentionResult, AttentionTrace};
use super::cell::{self, CellState, CellTrace};
use super::params::Parameters;
use super::tensor::{add_assign, dot, gemv_acc, gemv_t_acc, outer_acc, softmax};
use crate::corpus::ParallelPair;
use crate::{Error, Result, TokenId, BOS, EOS};

/// Top-layer encoder outputs, one per source token.
#[derive(Debug, Clone)]
pub struct EncoderStates {
    states: Vec<Vec<f64>>,
    /// Attention key projections (additive attention only).
    keys: Vec<Vec<f64>>,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }
}

/// Per-layer recurrent state of the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    layers: Vec<CellState>,
}

impl DecoderState {
    pub fn layers(&self) -> &[CellState] {
        &self.layers
    }

    /// Hidden vector of the top layer (the attention query).
    pub fn top(&self) -> &[f64] {
        &self.layers.last().expect("at least one decoder layer").h
    }
}

/// `[top decoder output; attention context; previous-token embedding]`, the
/// input to the output projection. Scores are computed from it row by row,
/// so callers pay only for the tokens they ask about.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout(Vec<f64>);

impl Readout {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

struct EncoderTrace {
    source: Vec<TokenId>,
    layers: Vec<Vec<CellTrace>>,
    out: EncoderStates,
}

struct StepTrace {
    prev: TokenId,
    attention: AttentionTrace,
    cells: Vec<CellTrace>,
    readout: Vec<f64>,
}

impl Parameters {
    fn check_ids(&self, ids: &[TokenId], what: &str) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::InvalidInput(format!("empty {what} sequence")));
        }
        let vocab = self.config().vocab_size;
        match ids.iter().find(|&&id| id as usize >= vocab) {
            Some(id) => Err(Error::InvalidInput(format!(
                "{what} token id {id} outside vocabulary of {vocab}"
            ))),
            None => Ok(()),
        }
    }

    fn encode_traced(&self, source: &[TokenId]) -> Result<EncoderTrace> {
        self.check_ids(source, "source")?;
        let config = *self.config();
        let mut inputs: Vec<Vec<f64>> = source
            .iter()
            .map(|&id| self.embedding.row(id as usize).to_vec())
            .collect();
        let mut layers = Vec::with_capacity(config.encoder_layers);
        for (l, params) in self.encoder.iter().enumerate() {
            let mut state = CellState::zeros(config.cell_type, config.hidden_dim);
            let mut traces = Vec::with_capacity(inputs.len());
            let mut outputs = Vec::with_capacity(inputs.len());
            for x in inputs {
                let residual = (l > 0 && config.residual).then(|| x.clone());
                let trace = cell::forward(config.cell_type, params, x, &state);
                let mut out = trace.next.h.clone();
                if let Some(x) = residual {
                    add_assign(&mut out, &x);
                }
                state = trace.next.clone();
                traces.push(trace);
                outputs.push(out);
            }
            layers.push(traces);
            inputs = outputs;
        }
        let keys = attention::project_keys(self, &inputs);
        Ok(EncoderTrace {
            source: source.to_vec(),
            layers,
            out: EncoderStates { states: inputs, keys },
        })
    }

    fn step_traced(&self, prev: TokenId, state: &DecoderState, enc: &EncoderStates) -> (StepTrace, DecoderState) {
        let config = self.config();
        let att = attention::forward(self, state.top(), &enc.states, &enc.keys);
        let embedded = self.embedding.row(prev as usize);
        let mut x = Vec::with_capacity(config.embed_dim + config.hidden_dim);
        x.extend_from_slice(embedded);
        x.extend_from_slice(&att.result.context);
        let mut cells = Vec::with_capacity(self.decoder.len());
        let mut layers = Vec::with_capacity(self.decoder.len());
        for (l, params) in self.decoder.iter().enumerate() {
            let residual = (l > 0 && config.residual).then(|| x.clone());
            let trace = cell::forward(config.cell_type, params, x, &state.layers[l]);
            let mut out = trace.next.h.clone();
            if let Some(input) = residual {
                add_assign(&mut out, &input);
            }
            layers.push(trace.next.clone());
            cells.push(trace);
            x = out;
        }
        let mut readout = x;
        readout.extend_from_slice(&att.result.context);
        readout.extend_from_slice(embedded);
        (
            StepTrace {
                prev,
                attention: att,
                cells,
                readout,
            },
            DecoderState { layers },
        )
    }

    /// Runs the encoder stack over a non-empty source.
    pub fn encode(&self, source: &[TokenId]) -> Result<EncoderStates> {
        Ok(self.encode_traced(source)?.out)
    }

    /// Every decoder layer starts from the last encoder state.
    pub fn initial_state(&self, enc: &EncoderStates) -> DecoderState {
        let last = enc.states.last().expect("encoder states are never empty");
        DecoderState {
            layers: vec![CellState::from_hidden(self.config().cell_type, last.clone()); self.decoder.len()],
        }
    }

    /// Attention of the state's top hidden vector over the encoder states.
    pub fn attend(&self, state: &DecoderState, enc: &EncoderStates) -> AttentionResult {
        attention::forward(self, state.top(), &enc.states, &enc.keys).result
    }

    /// Consumes `prev` and returns the next state and its readout vector.
    pub fn step(&self, prev: TokenId, state: &DecoderState, enc: &EncoderStates) -> (DecoderState, Readout) {
        let (trace, next) = self.step_traced(prev, state, enc);
        (next, Readout(trace.readout))
    }

    /// Unnormalized score `s(w)` of a single token.
    pub fn score(&self, readout: &Readout, token: TokenId) -> f64 {
        let w = token as usize;
        self.output_bias[w] + dot(self.output.row(w), &readout.0)
    }

    /// Unnormalized scores of the whole vocabulary.
    pub fn score_all(&self, readout: &Readout) -> Vec<f64> {
        let mut scores = self.output_bias.clone();
        gemv_acc(&self.output, &readout.0, &mut scores);
        scores
    }

    /// One decoder step with raw scores over the full vocabulary.
    pub fn decode_step(&self, prev: TokenId, state: &DecoderState, enc: &EncoderStates) -> (DecoderState, Vec<f64>) {
        let (next, readout) = self.step(prev, state, enc);
        let scores = self.score_all(&readout);
        (next, scores)
    }

    fn forward_pair(&self, source: &[TokenId], target: &[TokenId]) -> Result<PairForward> {
        self.check_ids(target, "target")?;
        let enc = self.encode_traced(source)?;
        let mut state = self.initial_state(&enc.out);
        let mut steps = Vec::with_capacity(target.len() + 1);
        let mut prev = BOS;
        for &gold in target.iter().chain(std::iter::once(&EOS)) {
            let (trace, next) = self.step_traced(prev, &state, &enc.out);
            let mut scores = self.output_bias.clone();
            gemv_acc(&self.output, &trace.readout, &mut scores);
            let (probs, log_z) = softmax(&scores);
            steps.push(StepForward {
                trace,
                log_prob: scores[gold as usize] - log_z,
                probs,
                log_z,
                gold,
            });
            state = next;
            prev = gold;
        }
        Ok(PairForward { enc, steps })
    }

    /// Exact teacher-forced `log P(target | source)` under the full softmax,
    /// including the final EOS factor.
    pub fn sequence_logprob(&self, source: &[TokenId], target: &[TokenId]) -> Result<f64> {
        Ok(self
            .forward_pair(source, target)?
            .steps
            .iter()
            .map(|s| s.log_prob)
            .sum())
    }

    /// `log Σ exp(s)` at every teacher-forced step (including the EOS step).
    pub fn log_partitions(&self, source: &[TokenId], target: &[TokenId]) -> Result<Vec<f64>> {
        Ok(self
            .forward_pair(source, target)?
            .steps
            .iter()
            .map(|s| s.log_z)
            .collect())
    }
}

struct StepForward {
    trace: StepTrace,
    probs: Vec<f64>,
    log_z: f64,
    log_prob: f64,
    gold: TokenId,
}

struct PairForward {
    enc: EncoderTrace,
    steps: Vec<StepForward>,
}

/// Batch objective split into its parts (sums, not averages).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    /// `-Σ log P(kᵢ | k<ᵢ, Q)`
    pub nll: f64,
    /// `Σ (log Z)²`
    pub log_z_sq: f64,
    /// `Σ |log Z|`
    pub abs_log_z: f64,
    /// Predicted tokens including EOS.
    pub tokens: usize,
}

impl LossParts {
    pub fn loss(&self, beta: f64) -> f64 {
        (self.nll + beta * self.log_z_sq) / self.tokens.max(1) as f64
    }

    pub fn add(&mut self, other: &LossParts) {
        self.nll += other.nll;
        self.log_z_sq += other.log_z_sq;
        self.abs_log_z += other.abs_log_z;
        self.tokens += other.tokens;
    }
}

/// Token-averaged `−Σ log P + β Σ (log Z)²` over the batch and its gradient.
pub fn loss_and_grads(params: &Parameters, batch: &[ParallelPair], beta: f64) -> Result<(f64, Parameters)> {
    let (parts, grads) = loss_parts_and_grads(params, batch, beta)?;
    Ok((parts.loss(beta), grads))
}

pub(crate) fn loss_parts_and_grads(
    params: &Parameters,
    batch: &[ParallelPair],
    beta: f64,
) -> Result<(LossParts, Parameters)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let forwards = batch
        .iter()
        .map(|pair| params.forward_pair(pair.source(), pair.target()))
        .collect::<Result<Vec<_>>>()?;
    let mut parts = LossParts::default();
    for f in &forwards {
        for s in &f.steps {
            parts.nll -= s.log_prob;
            parts.log_z_sq += s.log_z * s.log_z;
            parts.abs_log_z += s.log_z.abs();
            parts.tokens += 1;
        }
    }
    let scale = 1.0 / parts.tokens as f64;
    let mut grads = params.zeros_like();
    for f in &forwards {
        backward_pair(params, f, beta, scale, &mut grads);
    }
    Ok((parts, grads))
}

/// Loss parts without gradients.
pub(crate) fn evaluate(params: &Parameters, pairs: &[ParallelPair]) -> Result<LossParts> {
    let mut parts = LossParts::default();
    for pair in pairs {
        for log_z in params.log_partitions(pair.source(), pair.target())? {
            parts.log_z_sq += log_z * log_z;
            parts.abs_log_z += log_z.abs();
            parts.tokens += 1;
        }
        parts.nll -= params.sequence_logprob(pair.source(), pair.target())?;
    }
    Ok(parts)
}

fn backward_pair(p: &Parameters, f: &PairForward, beta: f64, scale: f64, grads: &mut Parameters) {
    let config = *p.config();
    let (e, h) = (config.embed_dim, config.hidden_dim);
    let cell_type = config.cell_type;
    let states = &f.enc.out.states;
    let m = states.len();
    let top = config.decoder_layers - 1;

    let mut dstates = vec![vec![0.0; h]; m];
    let mut dkeys = vec![vec![0.0; h]; if p.attention.is_some() { m } else { 0 }];
    let mut dh_next = vec![vec![0.0; h]; config.decoder_layers];
    let mut dc_next = vec![vec![0.0; h]; config.decoder_layers];

    for step in f.steps.iter().rev() {
        // d/ds of −(s_gold − log Z) + β (log Z)²
        let coef = 1.0 + 2.0 * beta * step.log_z;
        let mut ds: Vec<f64> = step.probs.iter().map(|pw| pw * coef * scale).collect();
        ds[step.gold as usize] -= scale;
        add_assign(&mut grads.output_bias, &ds);
        let trace = &step.trace;
        outer_acc(&mut grads.output, &ds, &trace.readout);
        let mut dreadout = vec![0.0; config.readout_dim()];
        gemv_t_acc(&p.output, &ds, &mut dreadout);

        let mut dabove = dreadout[..h].to_vec();
        let mut dcontext = dreadout[h..2 * h].to_vec();
        let mut dembed = dreadout[2 * h..].to_vec();
        for l in (0..config.decoder_layers).rev() {
            let cell_trace = &trace.cells[l];
            let mut dh = dabove.clone();
            add_assign(&mut dh, &dh_next[l]);
            let mut dx = vec![0.0; cell_trace.x.len()];
            let mut dprev = CellState::zeros(cell_type, h);
            cell::backward(
                cell_type,
                &p.decoder[l],
                cell_trace,
                &dh,
                &dc_next[l],
                &mut grads.decoder[l],
                &mut dx,
                &mut dprev,
            );
            dh_next[l] = dprev.h;
            dc_next[l] = if dprev.c.is_empty() { vec![0.0; h] } else { dprev.c };
            if l > 0 {
                if config.residual {
                    add_assign(&mut dx, &dabove);
                }
                dabove = dx;
            } else {
                add_assign(&mut dembed, &dx[..e]);
                add_assign(&mut dcontext, &dx[e..]);
            }
        }

        let mut dquery = vec![0.0; h];
        attention::backward(
            p,
            &trace.attention,
            states,
            &dcontext,
            grads,
            &mut dquery,
            &mut dstates,
            &mut dkeys,
        );
        add_assign(&mut dh_next[top], &dquery);
        add_assign(grads.embedding.row_mut(trace.prev as usize), &dembed);
    }

    // every decoder layer was initialized from the last encoder state
    for dh in &dh_next {
        add_assign(&mut dstates[m - 1], dh);
    }
    if let (Some(att), Some(gatt)) = (&p.attention, grads.attention.as_mut()) {
        for (dk, (q, dq)) in dkeys.iter().zip(states.iter().zip(dstates.iter_mut())) {
            outer_acc(&mut gatt.key, dk, q);
            add_assign(&mut gatt.bias, dk);
            gemv_t_acc(&att.key, dk, dq);
        }
    }

    let mut dout = dstates;
    for l in (0..config.encoder_layers).rev() {
        let traces = &f.enc.layers[l];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dbelow = Vec::with_capacity(m);
        for t in (0..m).rev() {
            let mut dh = dout[t].clone();
            add_assign(&mut dh, &dh_next);
            let mut dx = vec![0.0; traces[t].x.len()];
            let mut dprev = CellState::zeros(cell_type, h);
            cell::backward(
                cell_type,
                &p.encoder[l],
                &traces[t],
                &dh,
                &dc_next,
                &mut grads.encoder[l],
                &mut dx,
                &mut dprev,
            );
            dh_next = dprev.h;
            dc_next = if dprev.c.is_empty() { vec![0.0; h] } else { dprev.c };
            if l > 0 && config.residual {
                add_assign(&mut dx, &dout[t]);
            }
            dbelow.push(dx);
        }
        dbelow.reverse();
        if l == 0 {
            for (&id, dx) in f.enc.source.iter().zip(&dbelow) {
                add_assign(grads.embedding.row_mut(id as usize), dx);
            }
        }
        dout = dbelow;
    }
}
