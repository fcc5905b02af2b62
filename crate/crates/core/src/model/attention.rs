//! Soft attention over the encoder states, scored against the previous
//! decoder hidden state.

use super::params::{AttentionParams, Parameters};
use super::tensor::{add_assign, axpy, dot, gemv_acc, gemv_t_acc, outer_acc, softmax};

/// Context vector and the attention distribution that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult {
    pub context: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    query: Vec<f64>,
    /// Additive attention: `tanh(W k + U qⱼ + b)` per position.
    hidden: Vec<Vec<f64>>,
    pub result: AttentionResult,
}

/// Per-source projections `U qⱼ + b`, computed once per encoded query.
pub fn project_keys(p: &Parameters, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match &p.attention {
        None => Vec::new(),
        Some(att) => states
            .iter()
            .map(|q| {
                let mut k = att.bias.clone();
                gemv_acc(&att.key, q, &mut k);
                k
            })
            .collect(),
    }
}

pub fn forward(p: &Parameters, query: &[f64], states: &[Vec<f64>], keys: &[Vec<f64>]) -> AttentionTrace {
    let (energies, hidden) = match &p.attention {
        None => (states.iter().map(|q| dot(query, q)).collect::<Vec<_>>(), Vec::new()),
        Some(att) => additive_energies(att, query, keys),
    };
    let (weights, _) = softmax(&energies);
    let mut context = vec![0.0; query.len()];
    for (a, q) in weights.iter().zip(states) {
        axpy(*a, q, &mut context);
    }
    AttentionTrace {
        query: query.to_vec(),
        hidden,
        result: AttentionResult { context, weights },
    }
}

fn additive_energies(att: &AttentionParams, query: &[f64], keys: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut projected = vec![0.0; query.len()];
    gemv_acc(&att.query, query, &mut projected);
    let hidden: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| k.iter().zip(&projected).map(|(a, b)| (a + b).tanh()).collect())
        .collect();
    let energies = hidden.iter().map(|t| dot(&att.score, t)).collect();
    (energies, hidden)
}

/// Backpropagates the context gradient. Accumulates into the attention
/// gradients, the query gradient, the encoder-state gradients and the
/// gradients of the projected keys (folded into `U` and `b` by the caller).
pub fn backward(
    p: &Parameters,
    trace: &AttentionTrace,
    states: &[Vec<f64>],
    dcontext: &[f64],
    grads: &mut Parameters,
    dquery: &mut [f64],
    dstates: &mut [Vec<f64>],
    dkeys: &mut [Vec<f64>],
) {
    let weights = &trace.result.weights;
    let dweights: Vec<f64> = states.iter().map(|q| dot(dcontext, q)).collect();
    let mean: f64 = weights.iter().zip(&dweights).map(|(a, d)| a * d).sum();
    for (ds, &a) in dstates.iter_mut().zip(weights) {
        axpy(a, dcontext, ds);
    }
    let denergy: Vec<f64> = weights.iter().zip(&dweights).map(|(a, d)| a * (d - mean)).collect();

    match &p.attention {
        None => {
            for ((q, ds), &de) in states.iter().zip(dstates.iter_mut()).zip(&denergy) {
                axpy(de, q, dquery);
                axpy(de, &trace.query, ds);
            }
        }
        Some(att) => {
            let g = grads.attention.as_mut().expect("gradient shape matches parameters");
            let mut dprojected = vec![0.0; dquery.len()];
            for ((t, dk), &de) in trace.hidden.iter().zip(dkeys.iter_mut()).zip(&denergy) {
                axpy(de, t, &mut g.score);
                let dpre: Vec<f64> = t
                    .iter()
                    .zip(&att.score)
                    .map(|(tj, vj)| de * vj * (1.0 - tj * tj))
                    .collect();
                add_assign(dk, &dpre);
                add_assign(&mut dprojected, &dpre);
            }
            outer_acc(&mut g.query, &dprojected, &trace.query);
            gemv_t_acc(&att.query, &dprojected, dquery);
        }
    }
}
