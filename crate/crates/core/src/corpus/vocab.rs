use std::collections::HashMap;
use std::path::Path;

use super::{tokenize, RawPair};
use crate::{Error, Result, TokenId, FIRST_TOKEN_ID, UNK};

/// Surface forms of the reserved ids, in id order.
pub const RESERVED_TOKENS: [&str; 3] = ["<s>", "<e>", "<unk>"];

/// Bidirectional token↔id mapping. Ids 0..3 are BOS, EOS and UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary whose corpus tokens get consecutive ids in the
    /// given order. Duplicates and tokens spelled like reserved markers are
    /// rejected.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut id_to_token: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut token_to_id = HashMap::new();
        for token in tokens {
            let token = token.into();
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::format("vocabulary", format!("bad token {token:?}")));
            }
            if RESERVED_TOKENS.contains(&token.as_str()) {
                return Err(Error::format("vocabulary", format!("reserved token {token:?}")));
            }
            let id = id_to_token.len() as TokenId;
            if token_to_id.insert(token.clone(), id).is_some() {
                return Err(Error::format("vocabulary", format!("duplicate token {token:?}")));
            }
            id_to_token.push(token);
        }
        Ok(Self {
            token_to_id,
            id_to_token,
        })
    }

    /// Number of entries including the reserved ones.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// True when `token` has its own id.
    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// Tokenizes and encodes text.
    pub fn encode_text(&self, text: &str) -> Vec<TokenId> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Maps ids back to tokens; out-of-range ids render as `<unk>`.
    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(RESERVED_TOKENS[UNK as usize]))
            .collect()
    }

    /// Space-joined surface form of an id sequence.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        self.decode(ids).join(" ")
    }

    /// Corpus tokens in id order (reserved entries excluded).
    pub fn corpus_tokens(&self) -> impl Iterator<Item = &str> {
        self.id_to_token[FIRST_TOKEN_ID as usize..].iter().map(String::as_str)
    }

    /// One token per line, reserved entries first, so the line number is the id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        super::write_lines(path, self.id_to_token.iter())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let lines = super::read_lines(path)?;
        if lines.len() < RESERVED_TOKENS.len() || lines[..RESERVED_TOKENS.len()] != RESERVED_TOKENS[..] {
            return Err(Error::format(
                "vocabulary",
                "file must start with the reserved lines <s>, <e>, <unk>",
            ));
        }
        Self::from_tokens(lines.into_iter().skip(RESERVED_TOKENS.len()))
    }
}

/// Keeps the `max_size - 3` most frequent tokens over both sides of the
/// corpus. Frequency ties are broken by ascending token order.
pub fn build_vocab(corpus: &[RawPair], max_size: usize) -> Result<Vocabulary> {
    if max_size < RESERVED_TOKENS.len() {
        return Err(Error::InvalidInput(format!(
            "max vocabulary size {max_size} cannot hold the {} reserved tokens",
            RESERVED_TOKENS.len()
        )));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for pair in corpus {
        for token in tokenize(&pair.source).into_iter().chain(tokenize(&pair.target)) {
            *counts.entry(token).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::NoData("corpus has no tokens"));
    }
    let mut ranked: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(t, _)| !RESERVED_TOKENS.contains(&t.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - RESERVED_TOKENS.len());
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{BOS, EOS};
    use proptest::prelude::*;

    fn corpus(pairs: &[(&str, &str)]) -> Vec<RawPair> {
        pairs.iter().map(|(s, t)| RawPair::new(*s, *t)).collect()
    }

    #[test]
    fn keeps_all_tokens_when_room() {
        let vocab = build_vocab(&corpus(&[("a b", "a c")]), 10).unwrap();
        assert_eq!(vocab.len(), 6);
        // a:2, then b and c tied at 1 in lexicographic order
        assert_eq!(vocab.id("a"), 3);
        assert_eq!(vocab.id("b"), 4);
        assert_eq!(vocab.id("c"), 5);
    }

    #[test]
    fn truncates_by_frequency() {
        let vocab = build_vocab(&corpus(&[("a a", "b")]), 4).unwrap();
        assert_eq!(vocab.len(), 4);
        assert!(vocab.contains("a"));
        assert!(!vocab.contains("b"));
    }

    #[test]
    fn reserved_only_at_capacity_three() {
        let vocab = build_vocab(&corpus(&[("x y", "z")]), 3).unwrap();
        assert_eq!(vocab.len(), 3);
        assert_eq!(vocab.encode_text("x y z"), vec![UNK; 3]);
        assert_eq!(vocab.token(BOS), Some("<s>"));
        assert_eq!(vocab.token(EOS), Some("<e>"));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build_vocab(&[], 10), Err(Error::NoData(_))));
        assert!(matches!(build_vocab(&corpus(&[(" ", "")]), 10), Err(Error::NoData(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let vocab = build_vocab(&corpus(&[("red shoes", "red shirt")]), 50).unwrap();
        vocab.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<s>\n<e>\n<unk>\nred\n"));
        assert_eq!(Vocabulary::load(&path).unwrap(), vocab);
    }

    #[test]
    fn load_rejects_missing_reserved_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        std::fs::write(&path, "red\nshoes\n").unwrap();
        assert!(Vocabulary::load(&path).is_err());
    }

    proptest! {
        #[test]
        fn deterministic_and_invertible(
            words in prop::collection::vec("[a-e]{1,3}", 1..40),
            max_size in 3usize..20,
        ) {
            let raw: Vec<RawPair> = words
                .chunks(2)
                .map(|c| RawPair::new(c[0].clone(), c.last().unwrap().clone()))
                .collect();
            let v1 = build_vocab(&raw, max_size).unwrap();
            let v2 = build_vocab(&raw, max_size).unwrap();
            prop_assert_eq!(&v1, &v2);
            prop_assert!(v1.len() <= max_size);
            for token in v1.corpus_tokens() {
                let id = v1.id(token);
                prop_assert!(id >= FIRST_TOKEN_ID);
                prop_assert_eq!(v1.token(id), Some(token));
            }
            let known: Vec<&str> = v1.corpus_tokens().collect();
            let ids = super::super::encode_tokens(&v1, &known);
            prop_assert_eq!(v1.decode(&ids), known);
        }
    }
}
