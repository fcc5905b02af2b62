//! Beam search invariants over random models, keyword sets and settings.

use std::collections::BTreeSet;

use kwgen::decode::{beam_search, beam_search_with_stats, BeamConfig, Strategy};
use kwgen::model::{AttentionKind, CellType, ModelConfig, Parameters};
use kwgen::trie::KeywordTrie;
use kwgen::{TokenId, FIRST_TOKEN_ID};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    params: Parameters,
    trie: KeywordTrie,
    query: Vec<TokenId>,
}

fn case(seed: u64, vocab_size: usize, keyword_count: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        cell_type: if rng.random_bool(0.5) {
            CellType::Gru
        } else {
            CellType::Lstm
        },
        encoder_layers: 1,
        decoder_layers: rng.random_range(1..=2),
        residual: true,
        embed_dim: 5,
        hidden_dim: 7,
        attention: if rng.random_bool(0.5) {
            AttentionKind::Additive
        } else {
            AttentionKind::Dot
        },
        vocab_size,
    };
    let mut params = Parameters::init(config, seed).unwrap();
    let scale = rng.random_range(1.0..3.0);
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|x| *x *= scale);
    }
    let token = |rng: &mut ChaCha8Rng| rng.random_range(FIRST_TOKEN_ID..vocab_size as TokenId);
    let keywords: BTreeSet<Vec<TokenId>> = (0..keyword_count)
        .map(|_| {
            let len = rng.random_range(1..=4);
            (0..len).map(|_| token(&mut rng)).collect()
        })
        .collect();
    let query = (0..rng.random_range(1..=5)).map(|_| token(&mut rng)).collect();
    Case {
        params,
        trie: KeywordTrie::build(keywords).unwrap(),
        query,
    }
}

fn strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    prop::sample::select(vec![
        Strategy::Trie,
        Strategy::SelfNormTrie,
        Strategy::SelfNormTrieDropOtf,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn output_is_bounded_ranked_and_closed(
        seed in any::<u64>(),
        vocab_size in 6usize..20,
        keyword_count in 1usize..60,
        beam in 1usize..30,
        strategy in strategy(),
        threshold in prop_oneof![Just(f64::NEG_INFINITY), -20.0f64..-0.1],
    ) {
        let c = case(seed, vocab_size, keyword_count);
        let config = BeamConfig { score_threshold: threshold, ..BeamConfig::new(beam, &c.trie).with_strategy(strategy) };
        let results = beam_search(&c.params, &c.query, Some(&c.trie), &config).unwrap();
        prop_assert!(results.len() <= beam);
        for (i, r) in results.iter().enumerate() {
            prop_assert!(c.trie.contains(&r.keyword));
            prop_assert_eq!(r.rank, i + 1);
            prop_assert!(r.score <= 0.0 && r.score > threshold);
        }
        prop_assert!(results.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn drop_otf_keeps_exactly_the_sn_tp_results_above_threshold(
        seed in any::<u64>(),
        vocab_size in 6usize..16,
        keyword_count in 1usize..80,
        threshold in -15.0f64..-0.5,
    ) {
        let c = case(seed, vocab_size, keyword_count);
        let beam = c.trie.keyword_count();
        let plain = BeamConfig::new(beam, &c.trie).with_strategy(Strategy::SelfNormTrie);
        let all = beam_search(&c.params, &c.query, Some(&c.trie), &plain).unwrap();
        let dropping = BeamConfig { score_threshold: threshold, ..plain.with_strategy(Strategy::SelfNormTrieDropOtf) };
        let kept = beam_search(&c.params, &c.query, Some(&c.trie), &dropping).unwrap();
        let expected: Vec<_> = all.iter().filter(|r| r.score > threshold).map(|r| (&r.keyword, r.score)).collect();
        let got: Vec<_> = kept.iter().map(|r| (&r.keyword, r.score)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn raising_the_threshold_never_adds_results(
        seed in any::<u64>(),
        vocab_size in 6usize..16,
        keyword_count in 1usize..80,
        low in -20.0f64..-1.0,
        gap in 0.0f64..10.0,
    ) {
        let c = case(seed, vocab_size, keyword_count);
        let at = |threshold: f64| -> BTreeSet<Vec<TokenId>> {
            let config = BeamConfig {
                score_threshold: threshold,
                ..BeamConfig::new(c.trie.keyword_count(), &c.trie).with_strategy(Strategy::SelfNormTrieDropOtf)
            };
            beam_search(&c.params, &c.query, Some(&c.trie), &config).unwrap().into_iter().map(|r| r.keyword).collect()
        };
        prop_assert!(at(low + gap).is_subset(&at(low)));
    }

    #[test]
    fn self_norm_trie_scores_only_trie_suffixes(
        seed in any::<u64>(),
        vocab_size in 6usize..20,
        keyword_count in 1usize..60,
        beam in 1usize..30,
    ) {
        let c = case(seed, vocab_size, keyword_count);
        // suffix sets recomputed from the keyword list: next tokens, plus EOS for complete keywords
        let keywords = c.trie.keywords();
        let suffixes = |prefix: &[TokenId]| -> usize {
            let next: BTreeSet<TokenId> = keywords
                .iter()
                .filter(|k| k.len() > prefix.len() && k.starts_with(prefix))
                .map(|k| k[prefix.len()])
                .collect();
            next.len() + usize::from(keywords.iter().any(|k| k.as_slice() == prefix))
        };
        let widest = keywords
            .iter()
            .flat_map(|k| (0..=k.len()).map(move |n| &k[..n]))
            .map(suffixes)
            .max()
            .unwrap();
        let config = BeamConfig::new(beam, &c.trie).with_strategy(Strategy::SelfNormTrie);
        let (_, stats) = beam_search_with_stats(&c.params, &c.query, Some(&c.trie), &config).unwrap();
        prop_assert_eq!(stats.score_evaluations[0], suffixes(&[]));
        for (hyps, evals) in stats.hypotheses.iter().zip(&stats.score_evaluations) {
            prop_assert!(*evals <= hyps * widest);
        }
        let exact = config.with_strategy(Strategy::Trie);
        let (_, exact_stats) = beam_search_with_stats(&c.params, &c.query, Some(&c.trie), &exact).unwrap();
        for (hyps, evals) in exact_stats.hypotheses.iter().zip(&exact_stats.score_evaluations) {
            prop_assert_eq!(*evals, hyps * vocab_size);
        }
    }
}
