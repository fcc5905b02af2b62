//! Online-offline serving.
//!
//! Frequent queries are answered from a store precomputed offline (possibly
//! with a larger model); everything else is decoded live with the small
//! online model. The split is decided by query frequency in a traffic log.

mod server;
mod store;
mod workload;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use server::{Client, Server, ServerHandle};
pub use store::{precompute, PrecomputedStore, SkipEntry};
pub use workload::{head_volume_share, zipf_workload};

use crate::corpus::{normalize, Vocabulary};
use crate::decode::{beam_search, BeamConfig, DecodeResult};
use crate::model::Parameters;
use crate::trie::KeywordTrie;
use crate::{Error, Result};

/// Query counts from a traffic log. Keys are normalized query strings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, query: &str) -> u64 {
        self.counts.get(&normalize(query)).copied().unwrap_or(0)
    }

    /// Queries by count descending, ties by query ascending.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut out: Vec<(&str, u64)> = self.counts.iter().map(|(q, &c)| (q.as_str(), c)).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out
    }

    /// Queries seen at least `threshold` times, in ranked order.
    pub fn frequent(&self, threshold: u64) -> Vec<String> {
        self.ranked()
            .into_iter()
            .take_while(|&(_, c)| c >= threshold)
            .map(|(q, _)| q.to_string())
            .collect()
    }

    /// Share of the logged volume carried by queries at or above `threshold`.
    pub fn volume_share(&self, threshold: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let head: u64 = self.counts.values().filter(|&&c| c >= threshold).sum();
        head as f64 / self.total as f64
    }

    /// Count threshold that selects the top `percent` of distinct queries
    /// (ties at the cut are included).
    pub fn threshold_for_top_percent(&self, percent: f64) -> Result<u64> {
        if !(percent > 0.0 && percent <= 100.0) {
            return Err(Error::InvalidInput(format!(
                "percentile must be in (0, 100], got {percent}"
            )));
        }
        let ranked = self.ranked();
        if ranked.is_empty() {
            return Err(Error::NoData("frequency table is empty"));
        }
        let take = ((percent / 100.0 * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len());
        Ok(ranked[take - 1].1)
    }

    /// TSV `query<TAB>count`, ranked order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (query, count) in self.ranked() {
            writeln!(out, "{query}\t{count}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = Self::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || {
                Error::format(
                    "frequency table",
                    format!("{}:{}: expected query<TAB>count", path.display(), i + 1),
                )
            };
            let (query, count) = line.rsplit_once('\t').ok_or_else(bad)?;
            let count: u64 = count.trim().parse().map_err(|_| bad())?;
            let query = normalize(query);
            if count == 0 || query.is_empty() {
                return Err(bad());
            }
            *table.counts.entry(query).or_default() += count;
            table.total += count;
        }
        Ok(table)
    }
}

/// Exact counts of the normalized queries; blank queries are ignored.
pub fn build_frequency_table<S: AsRef<str>>(log: &[S]) -> FrequencyTable {
    let mut table = FrequencyTable::default();
    for query in log {
        let query = normalize(query.as_ref());
        if query.is_empty() {
            continue;
        }
        *table.counts.entry(query).or_default() += 1;
        table.total += 1;
    }
    table
}

/// A keyword as returned to clients: detokenized text and log score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordHit {
    pub keyword: String,
    pub score: f64,
}

impl KeywordHit {
    pub fn from_results(vocab: &Vocabulary, results: &[DecodeResult]) -> Vec<Self> {
        results
            .iter()
            .map(|r| KeywordHit {
                keyword: vocab.detokenize(&r.keyword),
                score: r.score,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "offline-cache")]
    OfflineCache,
    #[serde(rename = "online-decode")]
    OnlineDecode,
}

/// One line of the wire protocol's response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub query: String,
    pub results: Vec<KeywordHit>,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouterConfig {
    /// Minimum log count for a query to be precomputed.
    pub frequency_threshold: u64,
    pub online_beam: BeamConfig,
    pub offline_beam: BeamConfig,
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frequency_threshold == 0 {
            return Err(Error::InvalidInput("frequency threshold must be >= 1".into()));
        }
        self.online_beam.validate()?;
        self.offline_beam.validate()
    }
}

/// Request counters, safe to read while serving.
#[derive(Debug, Default)]
pub struct RouterStats {
    hits: AtomicU64,
    misses: AtomicU64,
    hit_nanos: AtomicU64,
    miss_nanos: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub mean_hit_ms: f64,
    pub mean_miss_ms: f64,
}

impl StatsSnapshot {
    pub fn hit_rate(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.hits as f64 / self.requests as f64
        }
    }
}

impl RouterStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        let hits = self.hits.load(Ordering::SeqCst);
        let misses = self.misses.load(Ordering::SeqCst);
        let mean = |nanos: &AtomicU64, n: u64| {
            if n == 0 {
                0.0
            } else {
                nanos.load(Ordering::SeqCst) as f64 / n as f64 / 1e6
            }
        };
        StatsSnapshot {
            requests: hits + misses,
            hits,
            misses,
            mean_hit_ms: mean(&self.hit_nanos, hits),
            mean_miss_ms: mean(&self.miss_nanos, misses),
        }
    }
}

/// Routes each request to the store or to the online model.
pub struct Router {
    store: PrecomputedStore,
    online: Arc<Parameters>,
    vocab: Arc<Vocabulary>,
    trie: Arc<KeywordTrie>,
    config: RouterConfig,
    stats: RouterStats,
}

impl Router {
    pub fn new(
        store: PrecomputedStore,
        online: Arc<Parameters>,
        vocab: Arc<Vocabulary>,
        trie: Arc<KeywordTrie>,
        config: RouterConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            store,
            online,
            vocab,
            trie,
            config,
            stats: RouterStats::default(),
        })
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn store(&self) -> &PrecomputedStore {
        &self.store
    }

    pub fn serve_request(&self, query: &str) -> Response {
        let started = Instant::now();
        let (results, source) = match self.store.get(query) {
            Some(hits) => (hits.to_vec(), Source::OfflineCache),
            None => (
                decode_query(&self.online, &self.vocab, &self.trie, &self.config.online_beam, query)
                    .unwrap_or_default(),
                Source::OnlineDecode,
            ),
        };
        let nanos = started.elapsed().as_nanos() as u64;
        let (count, total) = match source {
            Source::OfflineCache => (&self.stats.hits, &self.stats.hit_nanos),
            Source::OnlineDecode => (&self.stats.misses, &self.stats.miss_nanos),
        };
        count.fetch_add(1, Ordering::SeqCst);
        total.fetch_add(nanos, Ordering::SeqCst);
        Response {
            query: query.to_string(),
            results,
            source,
        }
    }
}

/// Tokenizes and decodes one query string. Empty token sequences are an error.
pub fn decode_query(
    params: &Parameters,
    vocab: &Vocabulary,
    trie: &KeywordTrie,
    beam: &BeamConfig,
    query: &str,
) -> Result<Vec<KeywordHit>> {
    let ids = vocab.encode_text(query);
    if ids.is_empty() {
        return Err(Error::InvalidInput(format!("query {query:?} has no tokens")));
    }
    let results = beam_search(params, &ids, beam.use_trie.then_some(trie), beam)?;
    Ok(KeywordHit::from_results(vocab, &results))
}
