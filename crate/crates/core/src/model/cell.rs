//! GRU and LSTM cells with hand-derived backward passes.
//!
//! GRU: `z = σ(·)`, `r = σ(·)`, `n = tanh(Wₙx + Uₙ(r⊙h) + bₙ)`,
//! `h' = (1−z)⊙n + z⊙h`.
//! LSTM: `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.

use super::params::CellParams;
use super::tensor::{gemv_acc, gemv_rows_acc, gemv_t_acc, gemv_t_rows_acc, outer_acc, outer_rows_acc, sigmoid};
use super::CellType;

/// Hidden (and, for LSTM, memory) vectors of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    /// Empty for GRU.
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(cell: CellType, hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: match cell {
                CellType::Gru => Vec::new(),
                CellType::Lstm => vec![0.0; hidden],
            },
        }
    }

    /// Starts from a given hidden vector with zero memory.
    pub fn from_hidden(cell: CellType, h: Vec<f64>) -> Self {
        let c = match cell {
            CellType::Gru => Vec::new(),
            CellType::Lstm => vec![0.0; h.len()],
        };
        Self { h, c }
    }
}

/// Everything the backward pass needs from one cell application.
#[derive(Debug, Clone)]
pub struct CellTrace {
    pub x: Vec<f64>,
    pub prev: CellState,
    /// Activated gates, stacked like the weight rows.
    gates: Vec<f64>,
    /// GRU: `r⊙h`. LSTM: `tanh(c')`.
    aux: Vec<f64>,
    pub next: CellState,
}

pub fn forward(cell: CellType, p: &CellParams, x: Vec<f64>, prev: &CellState) -> CellTrace {
    match cell {
        CellType::Gru => gru_forward(p, x, prev),
        CellType::Lstm => lstm_forward(p, x, prev),
    }
}

fn gru_forward(p: &CellParams, x: Vec<f64>, prev: &CellState) -> CellTrace {
    let hd = prev.h.len();
    let mut gates = p.bias.clone();
    gemv_acc(&p.input, &x, &mut gates);
    gemv_rows_acc(&p.recurrent, 0..2 * hd, &prev.h, &mut gates[..2 * hd]);
    for g in &mut gates[..2 * hd] {
        *g = sigmoid(*g);
    }
    let rh: Vec<f64> = gates[hd..2 * hd].iter().zip(&prev.h).map(|(r, h)| r * h).collect();
    gemv_rows_acc(&p.recurrent, 2 * hd..3 * hd, &rh, &mut gates[2 * hd..]);
    let mut h = vec![0.0; hd];
    for j in 0..hd {
        let n = gates[2 * hd + j].tanh();
        gates[2 * hd + j] = n;
        let z = gates[j];
        h[j] = (1.0 - z) * n + z * prev.h[j];
    }
    CellTrace {
        x,
        prev: prev.clone(),
        gates,
        aux: rh,
        next: CellState { h, c: Vec::new() },
    }
}

fn lstm_forward(p: &CellParams, x: Vec<f64>, prev: &CellState) -> CellTrace {
    let hd = prev.h.len();
    let mut gates = p.bias.clone();
    gemv_acc(&p.input, &x, &mut gates);
    gemv_acc(&p.recurrent, &prev.h, &mut gates);
    for (k, g) in gates.iter_mut().enumerate() {
        *g = if (2 * hd..3 * hd).contains(&k) {
            g.tanh()
        } else {
            sigmoid(*g)
        };
    }
    let mut c = vec![0.0; hd];
    let mut tc = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
        c[j] = f * prev.c[j] + i * g;
        tc[j] = c[j].tanh();
        h[j] = o * tc[j];
    }
    CellTrace {
        x,
        prev: prev.clone(),
        gates,
        aux: tc,
        next: CellState { h, c },
    }
}

/// Backpropagates `dh` (and `dc` for LSTM) through one cell application.
/// Accumulates weight gradients into `grads`, input gradients into `dx`, and
/// overwrites `dprev` with the gradient for the previous state.
pub fn backward(
    cell: CellType,
    p: &CellParams,
    trace: &CellTrace,
    dh: &[f64],
    dc: &[f64],
    grads: &mut CellParams,
    dx: &mut [f64],
    dprev: &mut CellState,
) {
    match cell {
        CellType::Gru => gru_backward(p, trace, dh, grads, dx, dprev),
        CellType::Lstm => lstm_backward(p, trace, dh, dc, grads, dx, dprev),
    }
}

fn gru_backward(
    p: &CellParams,
    t: &CellTrace,
    dh: &[f64],
    grads: &mut CellParams,
    dx: &mut [f64],
    dprev: &mut CellState,
) {
    let hd = dh.len();
    let hprev = &t.prev.h;
    let mut dpre = vec![0.0; 3 * hd];
    let mut dhp = vec![0.0; hd];
    for j in 0..hd {
        let (z, n) = (t.gates[j], t.gates[2 * hd + j]);
        dpre[j] = dh[j] * (hprev[j] - n) * z * (1.0 - z);
        dpre[2 * hd + j] = dh[j] * (1.0 - z) * (1.0 - n * n);
        dhp[j] = dh[j] * z;
    }
    let mut drh = vec![0.0; hd];
    gemv_t_rows_acc(&p.recurrent, 2 * hd..3 * hd, &dpre[2 * hd..], &mut drh);
    outer_rows_acc(&mut grads.recurrent, 2 * hd, &dpre[2 * hd..], &t.aux);
    for j in 0..hd {
        let r = t.gates[hd + j];
        dpre[hd + j] = drh[j] * hprev[j] * r * (1.0 - r);
        dhp[j] += drh[j] * r;
    }
    outer_rows_acc(&mut grads.recurrent, 0, &dpre[..2 * hd], hprev);
    gemv_t_rows_acc(&p.recurrent, 0..2 * hd, &dpre[..2 * hd], &mut dhp);
    outer_acc(&mut grads.input, &dpre, &t.x);
    gemv_t_acc(&p.input, &dpre, dx);
    for (b, d) in grads.bias.iter_mut().zip(&dpre) {
        *b += d;
    }
    dprev.h = dhp;
    dprev.c.clear();
}

fn lstm_backward(
    p: &CellParams,
    t: &CellTrace,
    dh: &[f64],
    dc_in: &[f64],
    grads: &mut CellParams,
    dx: &mut [f64],
    dprev: &mut CellState,
) {
    let hd = dh.len();
    let mut dpre = vec![0.0; 4 * hd];
    let mut dcp = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (t.gates[j], t.gates[hd + j], t.gates[2 * hd + j], t.gates[3 * hd + j]);
        let tc = t.aux[j];
        let dc = dc_in.get(j).copied().unwrap_or(0.0) + dh[j] * o * (1.0 - tc * tc);
        dpre[j] = dc * g * i * (1.0 - i);
        dpre[hd + j] = dc * t.prev.c[j] * f * (1.0 - f);
        dpre[2 * hd + j] = dc * i * (1.0 - g * g);
        dpre[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
        dcp[j] = dc * f;
    }
    let mut dhp = vec![0.0; hd];
    gemv_t_acc(&p.recurrent, &dpre, &mut dhp);
    outer_acc(&mut grads.recurrent, &dpre, &t.prev.h);
    outer_acc(&mut grads.input, &dpre, &t.x);
    gemv_t_acc(&p.input, &dpre, dx);
    for (b, d) in grads.bias.iter_mut().zip(&dpre) {
        *b += d;
    }
    dprev.h = dhp;
    dprev.c = dcp;
}
