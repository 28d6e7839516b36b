//! Keyword dictionaries and the modified position heap built over them.
//!
//! The dictionary string joins all keywords with [`SEPARATOR`]. A position
//! heap is built over it, every node's position is replaced by the keyword
//! owning that position, and the subtree hanging off the root's separator
//! edge is dropped. Deeper separator edges are kept: their nodes belong to
//! real keywords and show up as descendants of matched nodes.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::error::{Error, Result};
use crate::position_heap::PositionHeap;
use crate::trie::{NodeId, Trie};

/// Byte joining keywords in the dictionary string. Keywords may not contain it.
pub const SEPARATOR: u8 = b'#';

/// A non-empty, separator-free byte string.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Keyword(Vec<u8>);

impl Keyword {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(Error::EmptyKeyword);
        }
        if bytes.contains(&SEPARATOR) {
            return Err(Error::SeparatorInKeyword);
        }
        Ok(Keyword(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn contains(&self, pattern: &[u8]) -> bool {
        !pattern.is_empty() && self.0.windows(pattern.len()).any(|w| w == pattern)
    }
}

impl fmt::Debug for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Keyword({:?})", String::from_utf8_lossy(&self.0))
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

impl TryFrom<&str> for Keyword {
    type Error = Error;

    fn try_from(s: &str) -> Result<Self> {
        Keyword::new(s.as_bytes())
    }
}

/// Checks that a query substring is usable: non-empty and separator-free.
pub fn validate_query(s: &[u8]) -> Result<()> {
    if s.is_empty() {
        Err(Error::EmptyQuery)
    } else if s.contains(&SEPARATOR) {
        Err(Error::SeparatorInQuery)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryString {
    bytes: Vec<u8>,
    /// Owning keyword index per 0-based position; `None` at separators.
    owners: Vec<Option<u32>>,
}

impl DictionaryString {
    pub fn new(keywords: &[Keyword]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, w) in keywords.iter().enumerate() {
            if !seen.insert(w) {
                return Err(Error::DuplicateKeyword(i));
            }
        }
        let mut bytes = Vec::new();
        let mut owners = Vec::new();
        for (i, w) in keywords.iter().enumerate() {
            if i > 0 {
                bytes.push(SEPARATOR);
                owners.push(None);
            }
            bytes.extend_from_slice(w.as_bytes());
            owners.extend(core::iter::repeat_n(Some(i as u32), w.len()));
        }
        Ok(DictionaryString { bytes, owners })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Keyword index owning the 1-based position `pos`.
    pub fn owner(&self, pos: usize) -> Option<usize> {
        self.owners
            .get(pos.checked_sub(1)?)
            .copied()
            .flatten()
            .map(|i| i as usize)
    }
}

/// Keyword candidates for a substring, as the server would report them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordCandidates<'a> {
    pub l1: Vec<&'a Keyword>,
    pub l2: Vec<&'a Keyword>,
}

impl<'a> KeywordCandidates<'a> {
    pub fn all(&self) -> impl Iterator<Item = &'a Keyword> + '_ {
        self.l1.iter().chain(self.l2.iter()).copied()
    }
}

/// Position heap over a dictionary string with keyword-labelled nodes.
#[derive(Debug, Clone)]
pub struct ModifiedPositionHeap {
    trie: Trie<u8, u32>,
    dictionary: Vec<Keyword>,
}

impl ModifiedPositionHeap {
    pub fn build(keywords: &[Keyword]) -> Result<Self> {
        let dict = DictionaryString::new(keywords)?;
        let heap = PositionHeap::build(dict.as_bytes());

        // Copy the heap top-down, skipping the separator edge at the root.
        // Parents are always copied before their children, so the pre-order
        // rows are valid input for `from_rows`.
        let mut remap = vec![NodeId::ROOT; heap.node_count()];
        let mut rows = Vec::with_capacity(heap.node_count());
        let mut stack: Vec<NodeId> = heap
            .children(NodeId::ROOT)
            .iter()
            .rev()
            .copied()
            .filter(|c| heap.node(*c).edge != Some(SEPARATOR))
            .collect();
        while let Some(id) = stack.pop() {
            let n = heap.node(id);
            let owner = n
                .pos
                .and_then(|p| dict.owner(p))
                .expect("separator positions only occur under the pruned edge");
            remap[id.index()] = NodeId(rows.len() as u32 + 1);
            rows.push((remap[n.parent.unwrap().index()], n.edge.unwrap(), owner as u32));
            stack.extend(heap.children(id).iter().rev().copied());
        }
        let trie = Trie::from_rows(rows).expect("rows come from a valid heap");
        Ok(ModifiedPositionHeap {
            trie,
            dictionary: keywords.to_vec(),
        })
    }

    pub fn dictionary(&self) -> &[Keyword] {
        &self.dictionary
    }

    pub fn node_count(&self) -> usize {
        self.trie.len()
    }

    /// Keyword label of a node; `None` for the root.
    pub fn keyword(&self, id: NodeId) -> Option<&Keyword> {
        self.trie
            .node(id)
            .value
            .map(|i| &self.dictionary[i as usize])
    }

    pub fn edge(&self, id: NodeId) -> Option<u8> {
        self.trie.node(id).edge
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.trie.node(id).parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.trie.node(id).children
    }

    /// Root-to-node edge string.
    pub fn path(&self, id: NodeId) -> Vec<u8> {
        let mut out = Vec::new();
        let mut at = id;
        while let Some(e) = self.trie.node(at).edge {
            out.push(e);
            at = self.trie.node(at).parent.unwrap();
        }
        out.reverse();
        out
    }

    /// Node ids in pre-order, children in ascending edge order.
    pub fn preorder(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.trie.preorder(NodeId::ROOT)
    }

    /// Walks the search path for `s` and returns keywords without filtering.
    pub fn search(&self, s: &[u8]) -> Result<KeywordCandidates<'_>> {
        validate_query(s)?;
        let walk = self.trie.walk(s);
        let (l1, l2) = self.trie.split(&walk);
        let kw = |id: &NodeId| self.keyword(*id).unwrap();
        Ok(KeywordCandidates {
            l1: l1.iter().map(kw).collect(),
            l2: l2.iter().map(kw).collect(),
        })
    }

    /// Indented dump, one node per line: `depth edge keyword`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for id in self.preorder() {
            let n = self.trie.node(id);
            let depth = n.depth as usize;
            let _ = match (n.edge, self.keyword(id)) {
                (Some(e), Some(w)) => {
                    writeln!(out, "{:indent$}{} {} {}", "", depth, e as char, w, indent = 2 * depth)
                }
                _ => writeln!(out, "0 - -"),
            };
        }
        out
    }
}

/// Keeps the candidates that actually contain `s`, deduplicated.
pub fn filter_candidates<'a, I>(s: &[u8], candidates: I) -> BTreeSet<Keyword>
where
    I: IntoIterator<Item = &'a Keyword>,
{
    candidates
        .into_iter()
        .filter(|w| w.contains(s))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kws(words: &[&str]) -> Vec<Keyword> {
        words.iter().map(|w| Keyword::try_from(*w).unwrap()).collect()
    }

    #[test]
    fn dictionary_string_joins_with_separator() {
        let d = DictionaryString::new(&kws(&["bbab", "bba", "aba"])).unwrap();
        assert_eq!(d.as_bytes(), b"bbab#bba#aba");
        assert_eq!(d.owner(1), Some(0));
        assert_eq!(d.owner(5), None);
        assert_eq!(d.owner(6), Some(1));
        assert_eq!(d.owner(12), Some(2));
        assert_eq!(d.owner(13), None);
    }

    #[test]
    fn dictionary_string_edge_sizes() {
        assert_eq!(DictionaryString::new(&kws(&["a"])).unwrap().as_bytes(), b"a");
        assert_eq!(DictionaryString::new(&[]).unwrap().as_bytes(), b"");
    }

    #[test]
    fn rejects_duplicates_and_separators() {
        assert_eq!(
            DictionaryString::new(&kws(&["ab", "ba", "ab"])),
            Err(Error::DuplicateKeyword(2))
        );
        assert_eq!(Keyword::new("a#b"), Err(Error::SeparatorInKeyword));
        assert_eq!(Keyword::new(""), Err(Error::EmptyKeyword));
    }

    #[test]
    fn worked_example_ab() {
        let w = kws(&["bbab", "bba", "aba"]);
        let h = ModifiedPositionHeap::build(&w).unwrap();
        assert_eq!(h.node_count(), 11);
        let c = h.search(b"ab").unwrap();
        assert_eq!(c.l1, vec![&w[2]]);
        assert_eq!(c.l2, vec![&w[2], &w[0]]);
        let got = filter_candidates(b"ab", c.all());
        assert_eq!(got, [w[0].clone(), w[2].clone()].into_iter().collect());
    }

    #[test]
    fn no_separator_edge_at_root() {
        let h = ModifiedPositionHeap::build(&kws(&["bbab", "bba", "aba"])).unwrap();
        assert!(h
            .children(NodeId::ROOT)
            .iter()
            .all(|c| h.edge(*c) != Some(SEPARATOR)));
    }

    #[test]
    fn single_keyword_heap() {
        let w = kws(&["a"]);
        let h = ModifiedPositionHeap::build(&w).unwrap();
        assert_eq!(h.node_count(), 2);
        let c = h.children(NodeId::ROOT)[0];
        assert_eq!(h.edge(c), Some(b'a'));
        assert_eq!(h.keyword(c), Some(&w[0]));
    }

    #[test]
    fn miss_and_separator_query() {
        let h = ModifiedPositionHeap::build(&kws(&["bbab", "bba", "aba"])).unwrap();
        let c = h.search(b"zz").unwrap();
        assert!(c.l1.is_empty() && c.l2.is_empty());
        assert_eq!(h.search(b"a#").unwrap_err(), Error::SeparatorInQuery);
        assert_eq!(h.search(b"").unwrap_err(), Error::EmptyQuery);
    }

    #[test]
    fn filter_dedups() {
        let w = kws(&["aba", "aba", "bbab"]);
        let got = filter_candidates(b"ab", &w);
        assert_eq!(got.len(), 2);
        assert!(filter_candidates(b"ab", &[]).is_empty());
        let all = kws(&["bbab", "bba", "aba"]);
        assert_eq!(filter_candidates(b"ba", &all).len(), 3);
    }
}
