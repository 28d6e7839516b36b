//! Position heap over a single byte string.
//!
//! Suffixes are inserted right to left; each insertion follows the longest
//! prefix already present and hangs exactly one new leaf below it, so a
//! heap over `m` symbols has `m + 1` nodes. Positions are 1-based.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::trie::{NodeId, Trie};

/// Candidate positions for a pattern before verification against the text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Candidates {
    /// Positions on the search path that may or may not match.
    pub l1: Vec<usize>,
    /// Positions under the fully matched node; all are occurrences.
    pub l2: Vec<usize>,
}

/// A node as seen from outside the heap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlainNode {
    pub id: NodeId,
    pub edge: Option<u8>,
    pub pos: Option<usize>,
    pub depth: usize,
    pub parent: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct PositionHeap {
    trie: Trie<u8, usize>,
    text: Vec<u8>,
}

impl PositionHeap {
    pub fn build(text: &[u8]) -> Self {
        let mut trie = Trie::new();
        for i in (0..text.len()).rev() {
            let mut at = NodeId::ROOT;
            let mut j = i;
            while let Some(next) = text.get(j).and_then(|c| trie.child(at, c)) {
                at = next;
                j += 1;
            }
            // The suffix starting at `i` is new to the heap as a whole, so
            // the walk always stops before running off the end of the text.
            trie.add_child(at, text[j], i + 1)
                .expect("walk stopped at a missing edge");
        }
        PositionHeap {
            trie,
            text: text.to_vec(),
        }
    }

    pub fn text(&self) -> &[u8] {
        &self.text
    }

    pub fn node_count(&self) -> usize {
        self.trie.len()
    }

    pub fn node(&self, id: NodeId) -> PlainNode {
        let n = self.trie.node(id);
        PlainNode {
            id,
            edge: n.edge,
            pos: n.value,
            depth: n.depth as usize,
            parent: n.parent,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = PlainNode> + '_ {
        self.trie.nodes().map(|(id, _)| self.node(id))
    }

    /// Child ids of `id` in ascending edge order.
    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.trie.node(id).children
    }

    /// Search-path candidates for `pattern`, unfiltered.
    pub fn candidates(&self, pattern: &[u8]) -> Candidates {
        let walk = self.trie.walk(pattern);
        let (l1, l2) = self.trie.split(&walk);
        let pos = |id: &NodeId| self.trie.node(*id).value.unwrap();
        Candidates {
            l1: l1.iter().map(pos).collect(),
            l2: l2.iter().map(pos).collect(),
        }
    }

    /// All 1-based positions where `pattern` occurs in the text.
    pub fn search(&self, pattern: &[u8]) -> BTreeSet<usize> {
        if pattern.is_empty() {
            return BTreeSet::new();
        }
        let Candidates { l1, l2 } = self.candidates(pattern);
        l1.into_iter()
            .filter(|&i| occurs_at(&self.text, pattern, i))
            .chain(l2)
            .collect()
    }

    /// Indented text dump, one node per line: `depth edge pos`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for id in self.trie.preorder(NodeId::ROOT) {
            let n = self.node(id);
            let edge = n.edge.map(|e| e as char).unwrap_or('-');
            let _ = match n.pos {
                Some(p) => writeln!(out, "{:indent$}{} {} {}", "", n.depth, edge, p, indent = 2 * n.depth),
                None => writeln!(out, "{} - -", n.depth),
            };
        }
        out
    }
}

/// Whether `pattern` occurs at 1-based position `pos`. Reads past the end
/// of the text count as a mismatch.
pub(crate) fn occurs_at(text: &[u8], pattern: &[u8], pos: usize) -> bool {
    pos >= 1
        && text
            .get(pos - 1..pos - 1 + pattern.len())
            .is_some_and(|w| w == pattern)
}
