//! Decode-time and output-validity measurements.
//!
//! Timing cells (strategy × beam size) run on the calling thread. Each cell
//! first runs its warm-up passes over the whole query set. Timed passes then
//! go round-robin over the cells, and each cell reports the median over its
//! passes of the per-query mean wall time.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decode::{beam_search_with_stats, default_max_steps, validity_fraction, BeamConfig, Strategy};
use crate::model::Parameters;
use crate::trie::KeywordTrie;
use crate::{Error, Result, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub warmup_passes: usize,
    pub repetitions: usize,
    /// Output threshold `s_min`, shared by every strategy.
    pub score_threshold: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            warmup_passes: 2,
            repetitions: 5,
            score_threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Default `s_min` for benchmarks and the CLI.
pub const DEFAULT_THRESHOLD: f64 = -8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub beam_size: usize,
    pub mean_decode_ms: f64,
    pub query_count: usize,
    /// Token scores evaluated per query.
    pub mean_score_evaluations: f64,
    /// Keywords returned per query.
    pub mean_results: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub environment: String,
}

impl BenchReport {
    pub fn row(&self, strategy: Strategy, beam_size: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.beam_size == beam_size)
    }

    /// `strategy,beam_size,mean_decode_ms,query_count`
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "strategy,beam_size,mean_decode_ms,query_count")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.4},{}",
                r.strategy.label(),
                r.beam_size,
                r.mean_decode_ms,
                r.query_count
            )?;
        }
        Ok(())
    }
}

/// OS, architecture and visible CPU count of the measuring machine.
pub fn environment() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{} {} ({cpus} logical cpus)",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

fn check_inputs(queries: &[Vec<TokenId>], beams: &[usize]) -> Result<()> {
    if queries.is_empty() {
        return Err(Error::NoData("benchmark needs at least one query"));
    }
    if queries.iter().any(|q| q.is_empty()) {
        return Err(Error::InvalidInput("benchmark query without tokens".into()));
    }
    if beams.is_empty() || beams.contains(&0) {
        return Err(Error::InvalidInput(
            "beam sizes must be a non-empty list of positive sizes".into(),
        ));
    }
    Ok(())
}

pub fn run_timing(
    params: &Parameters,
    trie: &KeywordTrie,
    queries: &[Vec<TokenId>],
    beams: &[usize],
    strategies: &[Strategy],
    config: &TimingConfig,
) -> Result<BenchReport> {
    check_inputs(queries, beams)?;
    if strategies.is_empty() {
        return Err(Error::InvalidInput("no strategies to benchmark".into()));
    }
    if config.repetitions == 0 {
        return Err(Error::InvalidInput("repetitions must be >= 1".into()));
    }
    struct Cell {
        strategy: Strategy,
        beam: BeamConfig,
        evaluations: usize,
        results: usize,
        pass_means: Vec<f64>,
    }
    let pass = |beam: &BeamConfig| -> Result<(usize, usize)> {
        let (mut evaluations, mut results) = (0, 0);
        for q in queries {
            let (r, stats) = beam_search_with_stats(params, q, beam.use_trie.then_some(trie), beam)?;
            evaluations += stats.total_score_evaluations();
            results += r.len();
        }
        Ok((evaluations, results))
    };

    let mut cells = Vec::with_capacity(strategies.len() * beams.len());
    for &strategy in strategies {
        for &beam_size in beams {
            let beam = BeamConfig {
                score_threshold: config.score_threshold,
                ..BeamConfig::new(beam_size, trie).with_strategy(strategy)
            };
            let (evaluations, results) = pass(&beam)?;
            for _ in 1..config.warmup_passes {
                pass(&beam)?;
            }
            cells.push(Cell {
                strategy,
                beam,
                evaluations,
                results,
                pass_means: Vec::with_capacity(config.repetitions),
            });
        }
    }
    // one timed pass per cell per round, starting each round at a different
    // cell, so slow stretches of machine time are shared across cells
    for round in 0..config.repetitions {
        let count = cells.len();
        for i in 0..count {
            let cell = &mut cells[(round + i) % count];
            let started = Instant::now();
            pass(&cell.beam)?;
            cell.pass_means
                .push(started.elapsed().as_secs_f64() * 1e3 / queries.len() as f64);
        }
    }

    let n = queries.len() as f64;
    let rows = cells
        .into_iter()
        .map(|mut cell| BenchRow {
            strategy: cell.strategy,
            beam_size: cell.beam.beam_size,
            mean_decode_ms: median(&mut cell.pass_means),
            query_count: queries.len(),
            mean_score_evaluations: cell.evaluations as f64 / n,
            mean_results: cell.results as f64 / n,
        })
        .collect();
    Ok(BenchReport {
        rows,
        environment: environment(),
    })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityPoint {
    pub beam_size: usize,
    /// Mean over queries of the share of full-vocabulary results that are keywords.
    pub validity_fraction: f64,
    /// The same with trie pruning (the control row).
    pub trie_validity_fraction: f64,
    /// Results per query without the trie.
    pub mean_results: f64,
}

/// Exact-softmax decoding with and without the trie at every beam size.
pub fn run_validity(
    params: &Parameters,
    trie: &KeywordTrie,
    queries: &[Vec<TokenId>],
    beams: &[usize],
    score_threshold: f64,
) -> Result<Vec<ValidityPoint>> {
    check_inputs(queries, beams)?;
    let n = queries.len() as f64;
    beams
        .iter()
        .map(|&beam_size| {
            let base = BeamConfig {
                score_threshold,
                max_steps: default_max_steps(trie),
                ..BeamConfig::new(beam_size, trie)
            };
            let free = base.with_strategy(Strategy::Baseline);
            let pruned = base.with_strategy(Strategy::Trie);
            let (mut free_sum, mut pruned_sum, mut results) = (0.0, 0.0, 0);
            for q in queries {
                let (r, _) = beam_search_with_stats(params, q, None, &free)?;
                free_sum += validity_fraction(&r, trie);
                results += r.len();
                let (r, _) = beam_search_with_stats(params, q, Some(trie), &pruned)?;
                pruned_sum += validity_fraction(&r, trie);
            }
            Ok(ValidityPoint {
                beam_size,
                validity_fraction: free_sum / n,
                trie_validity_fraction: pruned_sum / n,
                mean_results: results as f64 / n,
            })
        })
        .collect()
}

/// `beam_size,validity_fraction`
pub fn write_validity_csv(points: &[ValidityPoint], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "beam_size,validity_fraction")?;
    for p in points {
        writeln!(out, "{},{:.6}", p.beam_size, p.validity_fraction)?;
    }
    Ok(())
}
