use proptest::prelude::*;

use super::*;
use crate::corpus::ParallelPair;
use crate::{EOS, FIRST_TOKEN_ID};

fn tiny(cell_type: CellType, attention: AttentionKind, layers: usize) -> ModelConfig {
    ModelConfig {
        cell_type,
        encoder_layers: layers,
        decoder_layers: layers,
        residual: true,
        embed_dim: 5,
        hidden_dim: 8,
        attention,
        vocab_size: 10,
    }
}

fn batch() -> Vec<ParallelPair> {
    vec![
        ParallelPair::new(vec![3, 4, 5], vec![6, 7]).unwrap(),
        ParallelPair::new(vec![8], vec![9, 3, 4]).unwrap(),
    ]
}

/// Scales the whole parameter vector so activations stay out of saturation
/// and the finite differences are well conditioned.
fn perturbed(config: ModelConfig, seed: u64) -> Parameters {
    let mut params = Parameters::init(config, seed).unwrap();
    // non-zero biases so their gradients are exercised off the origin
    for (i, t) in params.tensors_mut().into_iter().enumerate() {
        for (j, x) in t.iter_mut().enumerate() {
            if *x == 0.0 {
                *x = 0.05 * (((i * 31 + j * 17) % 11) as f64 - 5.0) / 5.0;
            }
        }
    }
    params
}

/// Central differences over every parameter, compared with the analytic gradient.
fn max_relative_error(params: &Parameters, beta: f64) -> f64 {
    let pairs = batch();
    let (_, grads) = loss_and_grads(params, &pairs, beta).unwrap();
    let analytic: Vec<f64> = grads.tensors().concat();
    let h = 1e-4;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    for ti in 0..params.tensors().len() {
        let len = params.tensors()[ti].len();
        for j in 0..len {
            let orig = probe.tensors()[ti][j];
            probe.tensors_mut()[ti][j] = orig + h;
            let plus = loss_and_grads(&probe, &pairs, beta).unwrap().0;
            probe.tensors_mut()[ti][j] = orig - h;
            let minus = loss_and_grads(&probe, &pairs, beta).unwrap().0;
            probe.tensors_mut()[ti][j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[flat];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            worst = worst.max(err);
            flat += 1;
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for cell in [CellType::Gru, CellType::Lstm] {
        for attention in [AttentionKind::Additive, AttentionKind::Dot] {
            for layers in [1, 2] {
                for beta in [0.0, 0.1] {
                    let params = perturbed(tiny(cell, attention, layers), 5);
                    let err = max_relative_error(&params, beta);
                    assert!(err < 1e-4, "{cell:?} {attention:?} layers={layers} beta={beta}: {err}");
                }
            }
        }
    }
}

#[test]
fn uniform_scores_give_uniform_sequence_probability() {
    let params = Parameters::zeros(tiny(CellType::Gru, AttentionKind::Additive, 1)).unwrap();
    for n in 1..4 {
        let target: Vec<TokenId> = (0..n).map(|i| FIRST_TOKEN_ID + i).collect();
        let lp = params.sequence_logprob(&[3, 4], &target).unwrap();
        let expected = (n + 1) as f64 * (1.0f64 / 10.0).ln();
        assert!((lp - expected).abs() < 1e-12);
    }
}

#[test]
fn beta_zero_loss_is_token_averaged_nll() {
    let params = perturbed(tiny(CellType::Gru, AttentionKind::Additive, 1), 2);
    let pair = ParallelPair::new(vec![3, 4], vec![5, 6, 7]).unwrap();
    let (loss, _) = loss_and_grads(&params, std::slice::from_ref(&pair), 0.0).unwrap();
    let lp = params.sequence_logprob(pair.source(), pair.target()).unwrap();
    assert!((loss + lp / 4.0).abs() < 1e-12);
}

#[test]
fn penalty_vanishes_when_partition_is_one() {
    // all-zero parameters except the output bias: s = log(1/V) everywhere
    let mut params = Parameters::zeros(tiny(CellType::Gru, AttentionKind::Dot, 1)).unwrap();
    params.output_bias.iter_mut().for_each(|b| *b = (0.1f64).ln());
    let pairs = batch();
    let (plain, _) = loss_and_grads(&params, &pairs, 0.0).unwrap();
    let (penalized, _) = loss_and_grads(&params, &pairs, 0.1).unwrap();
    assert!((plain - penalized).abs() < 1e-12);
}

#[test]
fn empty_batch_and_bad_ids_are_errors() {
    let params = perturbed(tiny(CellType::Gru, AttentionKind::Additive, 1), 2);
    assert!(loss_and_grads(&params, &[], 0.1).is_err());
    assert!(params.encode(&[]).is_err());
    assert!(params.encode(&[10]).is_err());
    assert!(params.sequence_logprob(&[3], &[]).is_err());
}

#[test]
fn zero_gru_encodes_to_zero_states() {
    let params = Parameters::zeros(tiny(CellType::Gru, AttentionKind::Additive, 2)).unwrap();
    let enc = params.encode(&[3, 4, 5, 6]).unwrap();
    assert_eq!(enc.len(), 4);
    assert!(enc.states().iter().flatten().all(|&x| x == 0.0));
    assert_eq!(params.encode(&[7]).unwrap().len(), 1);
}

#[test]
fn residual_passes_first_layer_output_through_zero_upper_layers() {
    let two = perturbed(tiny(CellType::Gru, AttentionKind::Additive, 2), 9);
    let mut one_config = *two.config();
    one_config.encoder_layers = 1;
    let mut one = Parameters::zeros(one_config).unwrap();
    one.embedding = two.embedding.clone();
    one.encoder[0] = two.encoder[0].clone();

    let mut stacked = two.clone();
    let zero = Parameters::zeros(*two.config()).unwrap();
    stacked.encoder[1] = zero.encoder[1].clone();
    let source = [3, 9, 4, 4];
    let top = stacked.encode(&source).unwrap();
    let first = one.encode(&source).unwrap();
    // a zero GRU starting from zero stays at zero, so out² = 0 + out¹
    assert_eq!(top.states(), first.states());
}

#[test]
fn attention_weights_are_a_distribution() {
    let params = perturbed(tiny(CellType::Lstm, AttentionKind::Additive, 2), 4);
    let enc = params.encode(&[3, 4, 5, 6, 7]).unwrap();
    let mut state = params.initial_state(&enc);
    for prev in [crate::BOS, 3, 4, 5] {
        let att = params.attend(&state, &enc);
        assert_eq!(att.weights.len(), 5);
        assert!(att.weights.iter().all(|&a| a >= 0.0));
        assert!((att.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        state = params.step(prev, &state, &enc).0;
    }
}

#[test]
fn dot_attention_hand_examples() {
    let mut params = Parameters::zeros(tiny(CellType::Gru, AttentionKind::Dot, 1)).unwrap();
    params.embedding.row_mut(3)[0] = 1.0;
    let enc = params.encode(&[3, 3]).unwrap();
    // equal encoder states: uniform weights and context equal to the state
    let state = params.initial_state(&enc);
    let att = params.attend(&state, &enc);
    assert_eq!(att.weights, vec![0.5, 0.5]);
    assert_eq!(att.context, enc.states()[0]);
}

#[test]
fn step_scores_cover_vocab_and_are_deterministic() {
    let params = perturbed(tiny(CellType::Gru, AttentionKind::Additive, 1), 4);
    let enc = params.encode(&[3, 4]).unwrap();
    let state = params.initial_state(&enc);
    assert_eq!(state.layers().len(), 1);
    let (next_a, scores_a) = params.decode_step(crate::BOS, &state, &enc);
    let (next_b, scores_b) = params.decode_step(crate::BOS, &state, &enc);
    assert_eq!(scores_a.len(), 10);
    assert_eq!((next_a, &scores_a), (next_b, &scores_b));
    let (_, readout) = params.step(crate::BOS, &state, &enc);
    for w in 0..10 {
        assert_eq!(params.score(&readout, w), scores_a[w as usize]);
    }
    let (probs, _) = tensor::softmax(&scores_a);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn restricted_log_prob_examples() {
    let uniform = restricted_log_probs(&[0.7; 4], &[0, 1, 2, 3], ScoreMode::ExactSoftmax);
    for (_, lp) in uniform {
        assert!((lp - 0.25f64.ln()).abs() < 1e-12);
    }
    let scores = [0.0, -1.2, 0.3, 5.0];
    assert_eq!(
        restricted_log_probs(&scores, &[1, 2], ScoreMode::SelfNorm),
        vec![(1, -1.2), (2, 0.0)]
    );
}

#[test]
fn offline_config_runs() {
    let config = ModelConfig {
        embed_dim: 16,
        hidden_dim: 16,
        ..ModelConfig::offline(12)
    };
    let params = Parameters::init(config, 1).unwrap();
    let lp = params.sequence_logprob(&[3, 4, 5], &[6, 7]).unwrap();
    assert!(lp < 0.0 && lp.is_finite());
    assert_eq!(params.initial_state(&params.encode(&[3]).unwrap()).layers().len(), 4);
}

fn teacher_forced_sum(params: &Parameters, source: &[TokenId], target: &[TokenId]) -> f64 {
    let enc = params.encode(source).unwrap();
    let mut state = params.initial_state(&enc);
    let mut prev = crate::BOS;
    let mut total = 0.0;
    for &w in target.iter().chain(std::iter::once(&EOS)) {
        let (next, scores) = params.decode_step(prev, &state, &enc);
        total += restricted_log_probs(&scores, &[w], ScoreMode::ExactSoftmax)[0].1;
        state = next;
        prev = w;
    }
    total
}

fn eos_term(params: &Parameters, source: &[TokenId], target: &[TokenId]) -> f64 {
    let enc = params.encode(source).unwrap();
    let mut state = params.initial_state(&enc);
    let mut prev = crate::BOS;
    for &w in target {
        state = params.step(prev, &state, &enc).0;
        prev = w;
    }
    let (_, scores) = params.decode_step(prev, &state, &enc);
    restricted_log_probs(&scores, &[EOS], ScoreMode::ExactSoftmax)[0].1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chain_rule_consistency(
        seed in 0u64..1000,
        source in prop::collection::vec(3u32..10, 1..5),
        target in prop::collection::vec(3u32..10, 1..5),
        lstm in any::<bool>(),
    ) {
        let cell = if lstm { CellType::Lstm } else { CellType::Gru };
        let params = Parameters::init(tiny(cell, AttentionKind::Additive, 2), seed).unwrap();
        let lp = params.sequence_logprob(&source, &target).unwrap();
        prop_assert!(lp <= 0.0);
        prop_assert!((lp - teacher_forced_sum(&params, &source, &target)).abs() < 1e-12);
        // A full sequence ends in EOS, so an extension is not always less
        // likely; the prefix probability (EOS factor left out) is.
        let prefix = |t: &[TokenId]| teacher_forced_sum(&params, &source, t) - eos_term(&params, &source, t);
        let mut longer = target.clone();
        longer.push(3);
        prop_assert!(prefix(&longer) < prefix(&target));
    }
}
