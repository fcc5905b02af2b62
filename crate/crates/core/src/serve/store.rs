//! The offline half: decode frequent queries ahead of time and persist them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{decode_query, KeywordHit};
use crate::corpus::{normalize, Vocabulary};
use crate::decode::BeamConfig;
use crate::model::Parameters;
use crate::trie::KeywordTrie;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedStore {
    entries: BTreeMap<String, Vec<KeywordHit>>,
    model_tag: String,
}

/// A query that could not be decoded during precompute. It is stored with an
/// empty result list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub query: String,
    pub reason: String,
}

#[derive(Serialize, Deserialize)]
struct StoreLine {
    query: String,
    results: Vec<KeywordHit>,
    model_tag: String,
}

impl PrecomputedStore {
    pub fn new(model_tag: impl Into<String>) -> Self {
        Self {
            entries: BTreeMap::new(),
            model_tag: model_tag.into(),
        }
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, query: &str) -> Option<&[KeywordHit]> {
        self.entries.get(&normalize(query)).map(Vec::as_slice)
    }

    pub fn insert(&mut self, query: &str, results: Vec<KeywordHit>) {
        self.entries.insert(normalize(query), results);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[KeywordHit])> {
        self.entries.iter().map(|(q, r)| (q.as_str(), r.as_slice()))
    }

    /// JSON-lines `{query, results, model_tag}`, sorted by query.
    pub fn write(&self, mut out: impl Write) -> Result<()> {
        for (query, results) in &self.entries {
            let line = StoreLine {
                query: query.clone(),
                results: results.clone(),
                model_tag: self.model_tag.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(input: impl BufRead) -> Result<Self> {
        let mut store: Option<Self> = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: StoreLine =
                serde_json::from_str(&line).map_err(|e| Error::format("store", format!("line {}: {e}", i + 1)))?;
            let store = store.get_or_insert_with(|| Self::new(parsed.model_tag.clone()));
            if parsed.model_tag != store.model_tag {
                return Err(Error::format(
                    "store",
                    format!(
                        "line {}: model tag {:?} differs from {:?}",
                        i + 1,
                        parsed.model_tag,
                        store.model_tag
                    ),
                ));
            }
            store.insert(&parsed.query, parsed.results);
        }
        Ok(store.unwrap_or_default())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file)).map_err(|e| match e {
            Error::Stream(e) => Error::io(path, e),
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file)).map_err(|e| match e {
            Error::Stream(e) => Error::io(path, e),
            other => other,
        })
    }
}

/// Decodes every query with the offline model. Failing queries are stored
/// with no results and listed in the returned skip report.
pub fn precompute<S: AsRef<str>>(
    queries: &[S],
    params: &Parameters,
    vocab: &Vocabulary,
    trie: &KeywordTrie,
    beam: &BeamConfig,
    model_tag: &str,
) -> Result<(PrecomputedStore, Vec<SkipEntry>)> {
    if !beam.use_trie {
        return Err(Error::InvalidInput(
            "precompute requires trie-constrained decoding".into(),
        ));
    }
    beam.validate()?;
    let mut store = PrecomputedStore::new(model_tag);
    let mut skipped = Vec::new();
    for query in queries {
        let query = query.as_ref();
        let results = match decode_query(params, vocab, trie, beam, query) {
            Ok(results) => results,
            Err(e) => {
                skipped.push(SkipEntry {
                    query: query.to_string(),
                    reason: e.to_string(),
                });
                Vec::new()
            }
        };
        store.insert(query, results);
    }
    Ok((store, skipped))
}
