use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::RawPair;
use crate::{Error, Result};

/// Reads non-empty lines (trailing `\r` stripped).
pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if !line.is_empty() {
            lines.push(line.to_string());
        }
    }
    Ok(lines)
}

pub fn write_lines<I, S>(path: impl AsRef<Path>, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{}", line.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a TAB-separated `source<TAB>target` corpus.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<RawPair>> {
    read_corpus_with(path, |title| title.to_string())
}

/// Like [`read_corpus`] but passes every target through `target_hook`
/// (e.g. to trim site names off crawled titles).
pub fn read_corpus_with(path: impl AsRef<Path>, target_hook: impl Fn(&str) -> String) -> Result<Vec<RawPair>> {
    let path = path.as_ref();
    read_lines(path)?
        .into_iter()
        .enumerate()
        .map(|(n, line)| {
            let mut fields = line.split('\t');
            match (fields.next(), fields.next(), fields.next()) {
                (Some(source), Some(target), None) => Ok(RawPair::new(source, target_hook(target))),
                _ => Err(Error::format(
                    "corpus",
                    format!("{}:{}: expected exactly one TAB", path.display(), n + 1),
                )),
            }
        })
        .collect()
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &[RawPair]) -> Result<()> {
    for pair in corpus {
        if pair.source.contains(['\t', '\n']) || pair.target.contains(['\t', '\n']) {
            return Err(Error::InvalidInput(format!(
                "pair {:?} contains a TAB or newline",
                pair
            )));
        }
    }
    write_lines(path, corpus.iter().map(|p| format!("{}\t{}", p.source, p.target)))
}

/// One keyword per line.
pub fn read_keywords(path: impl AsRef<Path>) -> Result<Vec<String>> {
    read_lines(path)
}

pub fn write_keywords<S: AsRef<str>>(path: impl AsRef<Path>, keywords: &[S]) -> Result<()> {
    write_lines(path, keywords.iter().map(AsRef::as_ref))
}
