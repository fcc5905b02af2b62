//! Token-keyed prefix tree over the closed keyword set.
//!
//! Terminal nodes expose EOS as a pseudo-child, so the suffix set of a node is
//! exactly the set of tokens a constrained decoder may emit next.

use std::io::Write;

use crate::corpus::Vocabulary;
use crate::{is_reserved, Error, Result, TokenId, EOS};

/// Index of a node inside a [`KeywordTrie`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

#[derive(Debug, Clone, Default)]
struct Node {
    /// Sorted by token id.
    children: Vec<(TokenId, NodeId)>,
    terminal: bool,
}

#[derive(Debug, Clone)]
pub struct KeywordTrie {
    nodes: Vec<Node>,
    keyword_count: usize,
    max_depth: usize,
}

/// Mean suffix-set size over the nodes of one depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerStat {
    pub depth: usize,
    pub avg_suffixes: f64,
}

impl KeywordTrie {
    pub const ROOT: NodeId = NodeId(0);

    /// Inserts every keyword; duplicates are stored once.
    pub fn build<I, K>(keywords: I) -> Result<Self>
    where
        I: IntoIterator<Item = K>,
        K: AsRef<[TokenId]>,
    {
        let mut trie = Self {
            nodes: vec![Node::default()],
            keyword_count: 0,
            max_depth: 0,
        };
        for keyword in keywords {
            trie.insert(keyword.as_ref())?;
        }
        if trie.keyword_count == 0 {
            return Err(Error::NoData("keyword set is empty"));
        }
        Ok(trie)
    }

    fn insert(&mut self, keyword: &[TokenId]) -> Result<()> {
        if keyword.is_empty() {
            return Err(Error::InvalidInput("empty keyword".into()));
        }
        if let Some(&id) = keyword.iter().find(|&&id| is_reserved(id)) {
            return Err(Error::ReservedToken { id, context: "keyword" });
        }
        let mut node = Self::ROOT;
        for &token in keyword {
            let next = NodeId(self.nodes.len() as u32);
            let children = &mut self.nodes[node.0 as usize].children;
            node = match children.binary_search_by_key(&token, |&(t, _)| t) {
                Ok(pos) => children[pos].1,
                Err(pos) => {
                    children.insert(pos, (token, next));
                    self.nodes.push(Node::default());
                    next
                }
            };
        }
        let leaf = &mut self.nodes[node.0 as usize];
        if !leaf.terminal {
            leaf.terminal = true;
            self.keyword_count += 1;
            self.max_depth = self.max_depth.max(keyword.len());
        }
        Ok(())
    }

    /// Distinct keywords stored.
    pub fn keyword_count(&self) -> usize {
        self.keyword_count
    }

    /// Token length of the longest keyword.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn child(&self, node: NodeId, token: TokenId) -> Option<NodeId> {
        let children = &self.nodes[node.0 as usize].children;
        children
            .binary_search_by_key(&token, |&(t, _)| t)
            .ok()
            .map(|pos| children[pos].1)
    }

    /// Follows `path` from the root.
    pub fn walk(&self, path: &[TokenId]) -> Option<NodeId> {
        path.iter().try_fold(Self::ROOT, |node, &token| self.child(node, token))
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        self.nodes[node.0 as usize].terminal
    }

    /// Allowed next tokens at `node` in ascending id order, EOS (the smallest
    /// non-BOS id) first when the node ends a keyword.
    pub fn suffixes(&self, node: NodeId) -> impl Iterator<Item = TokenId> + '_ {
        let node = &self.nodes[node.0 as usize];
        node.terminal
            .then_some(EOS)
            .into_iter()
            .chain(node.children.iter().map(|&(t, _)| t))
    }

    pub fn suffix_count(&self, node: NodeId) -> usize {
        let node = &self.nodes[node.0 as usize];
        node.children.len() + usize::from(node.terminal)
    }

    /// Suffix set of the node reached by `path`; empty when the path leaves
    /// the trie.
    pub fn valid_suffixes(&self, path: &[TokenId]) -> Vec<TokenId> {
        self.walk(path)
            .map(|node| self.suffixes(node).collect())
            .unwrap_or_default()
    }

    /// True iff `keyword` is a complete root-to-terminal path.
    pub fn contains(&self, keyword: &[TokenId]) -> bool {
        !keyword.is_empty() && self.walk(keyword).is_some_and(|n| self.is_terminal(n))
    }

    /// All stored keywords in ascending lexicographic order.
    pub fn keywords(&self) -> Vec<Vec<TokenId>> {
        let mut out = Vec::with_capacity(self.keyword_count);
        let mut path = Vec::new();
        self.collect(Self::ROOT, &mut path, &mut out);
        out
    }

    fn collect(&self, node: NodeId, path: &mut Vec<TokenId>, out: &mut Vec<Vec<TokenId>>) {
        let node = &self.nodes[node.0 as usize];
        if node.terminal {
            out.push(path.clone());
        }
        for &(token, child) in &node.children {
            path.push(token);
            self.collect(child, path, out);
            path.pop();
        }
    }

    /// Average suffix-set size per depth, root at depth 0.
    pub fn layer_stats(&self) -> Vec<LayerStat> {
        let mut stats = Vec::new();
        let mut layer = vec![Self::ROOT];
        let mut depth = 0;
        while !layer.is_empty() {
            let total: usize = layer.iter().map(|&n| self.suffix_count(n)).sum();
            stats.push(LayerStat {
                depth,
                avg_suffixes: total as f64 / layer.len() as f64,
            });
            layer = layer
                .iter()
                .flat_map(|&n| self.nodes[n.0 as usize].children.iter().map(|&(_, c)| c))
                .collect();
            depth += 1;
        }
        stats
    }
}

/// Encodes keyword texts, setting aside those that tokenize to nothing or
/// contain out-of-vocabulary tokens (they could never be generated).
pub fn encode_keywords<S: AsRef<str>>(vocab: &Vocabulary, keywords: &[S]) -> (Vec<Vec<TokenId>>, Vec<String>) {
    let mut encoded = Vec::with_capacity(keywords.len());
    let mut skipped = Vec::new();
    for keyword in keywords {
        let ids = vocab.encode_text(keyword.as_ref());
        if ids.is_empty() || ids.iter().any(|&id| is_reserved(id)) {
            skipped.push(keyword.as_ref().to_string());
        } else {
            encoded.push(ids);
        }
    }
    (encoded, skipped)
}

/// `depth,avg_suffixes` CSV.
pub fn write_layer_stats_csv(stats: &[LayerStat], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "depth,avg_suffixes")?;
    for s in stats {
        writeln!(out, "{},{}", s.depth, s.avg_suffixes)?;
    }
    Ok(())
}
