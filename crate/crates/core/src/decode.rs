//! Beam search into the closed keyword set.
//!
//! The search can be run in every combination used by the benchmarks: full
//! vocabulary or trie-pruned candidates, exact softmax or self-normalized
//! scores, and with or without dropping hypotheses that fall below the
//! output threshold while decoding.
//!
//! Each step pools the extensions of all live hypotheses, EOS extensions
//! included, and keeps the best `B − |Out|` of them. Selected EOS extensions
//! move to the output set for good; the rest form the next beam. The last
//! step the budget allows offers only EOS, so hypotheses still live at the
//! cap are closed with their true EOS score rather than dropped. Ties are
//! broken by ascending token sequence so results are reproducible.

use std::cmp::Ordering;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::model::{restricted_log_probs, DecoderState, Parameters, ScoreMode};
use crate::trie::{KeywordTrie, NodeId};
use crate::{Error, Result, TokenId, BOS, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Log-space output threshold `s_min`; results must score strictly above it.
    pub score_threshold: f64,
    pub use_trie: bool,
    pub use_self_norm: bool,
    /// Discard extensions at or below the threshold as soon as they are scored.
    pub use_drop_otf: bool,
    /// Upper bound on decoder steps, the EOS step included. The final step
    /// only considers EOS.
    pub max_steps: usize,
}

impl BeamConfig {
    /// Full pruning and self-normalized scoring, no threshold, and a step
    /// budget of `2 × max_depth + 2` for the given trie.
    pub fn new(beam_size: usize, trie: &KeywordTrie) -> Self {
        Self {
            beam_size,
            score_threshold: f64::NEG_INFINITY,
            use_trie: true,
            use_self_norm: true,
            use_drop_otf: false,
            max_steps: default_max_steps(trie),
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        let (trie, self_norm, drop_otf) = strategy.flags();
        self.use_trie = trie;
        self.use_self_norm = self_norm;
        self.use_drop_otf = drop_otf;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::InvalidInput("beam size must be >= 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max steps must be >= 1".into()));
        }
        if self.score_threshold.is_nan() {
            return Err(Error::InvalidInput("score threshold is NaN".into()));
        }
        Ok(())
    }
}

/// `2 × max_depth + 2`
pub fn default_max_steps(trie: &KeywordTrie) -> usize {
    2 * trie.max_depth() + 2
}

/// The decoding variants compared in the speed benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Full vocabulary, exact softmax.
    Baseline,
    SelfNorm,
    Trie,
    SelfNormTrie,
    SelfNormTrieDropOtf,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Baseline,
        Strategy::SelfNorm,
        Strategy::Trie,
        Strategy::SelfNormTrie,
        Strategy::SelfNormTrieDropOtf,
    ];

    /// `(use_trie, use_self_norm, use_drop_otf)`
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Strategy::Baseline => (false, false, false),
            Strategy::SelfNorm => (false, true, false),
            Strategy::Trie => (true, false, false),
            Strategy::SelfNormTrie => (true, true, false),
            Strategy::SelfNormTrieDropOtf => (true, true, true),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::SelfNorm => "sn",
            Strategy::Trie => "tp",
            Strategy::SelfNormTrie => "sn+tp",
            Strategy::SelfNormTrieDropOtf => "sn+tp+dropotf",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.label() == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub keyword: Vec<TokenId>,
    pub score: f64,
    /// 1-based position in the output ordering.
    pub rank: usize,
}

/// Work done by one search.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Live hypotheses expanded at each step.
    pub hypotheses: Vec<usize>,
    /// Token scores `s(w)` evaluated at each step.
    pub score_evaluations: Vec<usize>,
}

impl DecodeStats {
    pub fn steps(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn total_score_evaluations(&self) -> usize {
        self.score_evaluations.iter().sum()
    }
}

struct Hypothesis {
    path: Vec<TokenId>,
    score: f64,
    node: NodeId,
    /// State before consuming the last token of `path`.
    state: Rc<DecoderState>,
}

struct Candidate {
    parent: usize,
    token: TokenId,
    score: f64,
}

pub fn beam_search(
    params: &Parameters,
    query: &[TokenId],
    trie: Option<&KeywordTrie>,
    config: &BeamConfig,
) -> Result<Vec<DecodeResult>> {
    Ok(beam_search_with_stats(params, query, trie, config)?.0)
}

pub fn beam_search_with_stats(
    params: &Parameters,
    query: &[TokenId],
    trie: Option<&KeywordTrie>,
    config: &BeamConfig,
) -> Result<(Vec<DecodeResult>, DecodeStats)> {
    config.validate()?;
    let trie = match (config.use_trie, trie) {
        (true, Some(trie)) => Some(trie),
        (true, None) => return Err(Error::InvalidInput("trie mode requires a keyword trie".into())),
        (false, Some(_)) => {
            return Err(Error::InvalidInput(
                "a keyword trie was given but trie mode is off".into(),
            ))
        }
        (false, None) => None,
    };
    let enc = params.encode(query)?;
    let vocab_size = params.config().vocab_size;
    let full_vocab: Vec<TokenId> = (0..vocab_size as TokenId).filter(|&w| w != BOS).collect();
    let eos_only = [EOS];
    let threshold = config.score_threshold;

    let mut stats = DecodeStats::default();
    let mut out: Vec<(Vec<TokenId>, f64)> = Vec::new();
    let mut beam = vec![Hypothesis {
        path: Vec::new(),
        score: 0.0,
        node: KeywordTrie::ROOT,
        state: Rc::new(params.initial_state(&enc)),
    }];
    let mut suffixes = Vec::new();

    while !beam.is_empty() && out.len() < config.beam_size && stats.steps() < config.max_steps {
        let mut candidates = Vec::new();
        let mut next_states = Vec::with_capacity(beam.len());
        let mut evaluations = 0;
        let last_step = stats.steps() + 1 == config.max_steps;
        for (i, hyp) in beam.iter().enumerate() {
            let prev = hyp.path.last().copied().unwrap_or(BOS);
            let (state, readout) = params.step(prev, &hyp.state, &enc);
            next_states.push(Rc::new(state));
            let allowed: &[TokenId] = match trie {
                Some(trie) => {
                    suffixes.clear();
                    suffixes.extend(trie.suffixes(hyp.node).filter(|&w| !last_step || w == EOS));
                    &suffixes
                }
                None if last_step => &eos_only,
                None => &full_vocab,
            };
            let scored: Vec<(TokenId, f64)> = if config.use_self_norm && trie.is_some() {
                // only the numerators of the allowed tokens are needed
                evaluations += allowed.len();
                allowed
                    .iter()
                    .map(|&w| (w, params.score(&readout, w).min(0.0)))
                    .collect()
            } else {
                evaluations += vocab_size;
                let mode = if config.use_self_norm {
                    ScoreMode::SelfNorm
                } else {
                    ScoreMode::ExactSoftmax
                };
                restricted_log_probs(&params.score_all(&readout), allowed, mode)
            };
            for (token, log_p) in scored {
                let score = hyp.score + log_p;
                if config.use_drop_otf && score <= threshold {
                    continue;
                }
                candidates.push(Candidate {
                    parent: i,
                    token,
                    score,
                });
            }
        }
        stats.hypotheses.push(beam.len());
        stats.score_evaluations.push(evaluations);

        let keep = config.beam_size - out.len();
        let order = |a: &Candidate, b: &Candidate| -> Ordering {
            b.score
                .total_cmp(&a.score)
                .then_with(|| beam[a.parent].path.cmp(&beam[b.parent].path))
                .then_with(|| a.token.cmp(&b.token))
        };
        if candidates.len() > keep {
            candidates.select_nth_unstable_by(keep - 1, order);
            candidates.truncate(keep);
        }
        candidates.sort_unstable_by(order);

        let mut next = Vec::with_capacity(candidates.len());
        for c in candidates {
            let parent = &beam[c.parent];
            if c.token == EOS {
                out.push((parent.path.clone(), c.score));
                continue;
            }
            let mut path = Vec::with_capacity(parent.path.len() + 1);
            path.extend_from_slice(&parent.path);
            path.push(c.token);
            let node = match trie {
                Some(trie) => trie.child(parent.node, c.token).expect("suffix is a child"),
                None => parent.node,
            };
            next.push(Hypothesis {
                path,
                score: c.score,
                node,
                state: Rc::clone(&next_states[c.parent]),
            });
        }
        beam = next;
    }

    out.retain(|(_, score)| *score > threshold);
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let results = out
        .into_iter()
        .enumerate()
        .map(|(i, (keyword, score))| DecodeResult {
            keyword,
            score,
            rank: i + 1,
        })
        .collect();
    Ok((results, stats))
}

/// Share of results that are members of the keyword set; 1 for no results.
pub fn validity_fraction(results: &[DecodeResult], trie: &KeywordTrie) -> f64 {
    if results.is_empty() {
        return 1.0;
    }
    let valid = results.iter().filter(|r| trie.contains(&r.keyword)).count();
    valid as f64 / results.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttentionKind, CellType, ModelConfig};

    fn config(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            cell_type: CellType::Gru,
            encoder_layers: 1,
            decoder_layers: 1,
            residual: true,
            embed_dim: 6,
            hidden_dim: 8,
            attention: AttentionKind::Additive,
            vocab_size,
        }
    }

    /// red shoes, red shirt, blue shoes (red=3, shoes=4, shirt=5, blue=6)
    fn fixture() -> KeywordTrie {
        KeywordTrie::build([vec![3, 4], vec![3, 5], vec![6, 4]]).unwrap()
    }

    fn exact(beam_size: usize, trie: &KeywordTrie) -> BeamConfig {
        BeamConfig::new(beam_size, trie).with_strategy(Strategy::Trie)
    }

    #[test]
    fn fixture_output_is_ranked_by_sequence_probability() {
        let trie = fixture();
        for seed in 0..5 {
            let params = Parameters::init(config(8), seed).unwrap();
            let results = beam_search(&params, &[3, 7], Some(&trie), &exact(10, &trie)).unwrap();
            let mut oracle: Vec<(Vec<TokenId>, f64)> = trie
                .keywords()
                .into_iter()
                .map(|k| {
                    let lp = params.sequence_logprob(&[3, 7], &k).unwrap();
                    (k, lp)
                })
                .collect();
            oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            assert_eq!(results.len(), 3);
            for (r, (k, lp)) in results.iter().zip(&oracle) {
                assert_eq!(&r.keyword, k);
                assert!((r.score - lp).abs() < 1e-12);
            }
            assert_eq!(results.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        }
    }

    #[test]
    fn greedy_trie_decode_is_a_keyword() {
        let trie = fixture();
        let params = Parameters::init(config(8), 3).unwrap();
        for strategy in [Strategy::Trie, Strategy::SelfNormTrie] {
            let cfg = BeamConfig::new(1, &trie).with_strategy(strategy);
            let results = beam_search(&params, &[5], Some(&trie), &cfg).unwrap();
            assert_eq!(results.len(), 1);
            assert!(trie.contains(&results[0].keyword));
        }
    }

    #[test]
    fn self_norm_trie_scores_only_valid_suffixes() {
        let trie = fixture();
        let params = Parameters::init(config(8), 1).unwrap();
        let cfg = BeamConfig::new(10, &trie).with_strategy(Strategy::SelfNormTrie);
        let (results, stats) = beam_search_with_stats(&params, &[4], Some(&trie), &cfg).unwrap();
        // root has {red, blue}; then red → {shoes, shirt}, blue → {shoes}; then EOS each
        assert_eq!(stats.hypotheses, vec![1, 2, 3]);
        assert_eq!(stats.score_evaluations, vec![2, 3, 3]);
        assert_eq!(results.len(), 3);
        assert!(results.iter().all(|r| r.score <= 0.0));
    }

    #[test]
    fn zero_threshold_with_drop_otf_yields_nothing() {
        let trie = fixture();
        let params = Parameters::init(config(8), 1).unwrap();
        for strategy in Strategy::ALL {
            let mut cfg = BeamConfig::new(10, &trie).with_strategy(strategy);
            cfg.use_drop_otf = true;
            cfg.score_threshold = 0.0;
            let t = cfg.use_trie.then_some(&trie);
            assert!(beam_search(&params, &[4], t, &cfg).unwrap().is_empty());
        }
    }

    #[test]
    fn output_never_exceeds_beam_and_is_ordered() {
        let trie = fixture();
        let params = Parameters::init(config(8), 2).unwrap();
        for beam in 1..6 {
            for strategy in Strategy::ALL {
                let cfg = BeamConfig::new(beam, &trie).with_strategy(strategy);
                let t = cfg.use_trie.then_some(&trie);
                let results = beam_search(&params, &[3, 4], t, &cfg).unwrap();
                assert!(results.len() <= beam);
                for pair in results.windows(2) {
                    assert!(
                        pair[0].score > pair[1].score
                            || (pair[0].score == pair[1].score && pair[0].keyword < pair[1].keyword)
                    );
                }
            }
        }
    }

    #[test]
    fn baseline_halts_within_max_steps() {
        let trie = fixture();
        let params = Parameters::zeros(config(8)).unwrap();
        let cfg = BeamConfig::new(4, &trie).with_strategy(Strategy::Baseline);
        let (results, stats) = beam_search_with_stats(&params, &[3], None, &cfg).unwrap();
        assert!(stats.steps() <= cfg.max_steps);
        assert_eq!(cfg.max_steps, 6);
        assert!(results.len() <= 4);
    }

    #[test]
    fn hypotheses_live_at_the_cap_end_with_eos() {
        // uniform scores: every factor is log(1/8), ties go to the lowest token
        let trie = fixture();
        let params = Parameters::zeros(config(8)).unwrap();
        let cfg = BeamConfig {
            max_steps: 2,
            ..BeamConfig::new(4, &trie).with_strategy(Strategy::Baseline)
        };
        let results = beam_search(&params, &[3], None, &cfg).unwrap();
        let keywords: Vec<&[TokenId]> = results.iter().map(|r| r.keyword.as_slice()).collect();
        assert_eq!(keywords, [&[][..], &[2], &[3], &[4]]);
        let factor = -(8f64.ln());
        assert!((results[0].score - factor).abs() < 1e-12);
        for r in &results[1..] {
            assert!((r.score - 2.0 * factor).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_requests_are_errors() {
        let trie = fixture();
        let params = Parameters::init(config(8), 1).unwrap();
        let cfg = BeamConfig::new(3, &trie);
        assert!(beam_search(&params, &[], Some(&trie), &cfg).is_err());
        assert!(beam_search(&params, &[3], None, &cfg).is_err());
        let baseline = cfg.with_strategy(Strategy::Baseline);
        assert!(beam_search(&params, &[3], Some(&trie), &baseline).is_err());
        assert!(beam_search(&params, &[3], Some(&trie), &BeamConfig { beam_size: 0, ..cfg }).is_err());
        assert!(beam_search(&params, &[3], Some(&trie), &BeamConfig { max_steps: 0, ..cfg }).is_err());
    }

    #[test]
    fn validity_fraction_examples() {
        let trie = fixture();
        assert_eq!(validity_fraction(&[], &trie), 1.0);
        let result = |keyword: Vec<TokenId>| DecodeResult {
            keyword,
            score: -1.0,
            rank: 1,
        };
        let mut results = vec![result(vec![3, 4]), result(vec![6, 4])];
        results.extend((0..6).map(|i| result(vec![7, i + 3])));
        assert_eq!(validity_fraction(&results, &trie), 0.25);
    }

    #[test]
    fn strategy_labels_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::from_label(s.label()), Some(s));
        }
        assert_eq!(Strategy::from_label("nope"), None);
    }
}
