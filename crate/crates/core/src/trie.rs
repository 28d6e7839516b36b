//! Arena trie shared by the plaintext heaps and the encrypted index.
//!
//! Children of a node are kept sorted by edge key so that lookups are a
//! binary search and traversals are deterministic.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Dense node identifier. The root is always `NodeId(0)` and ids are
/// handed out in insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node<K, V> {
    pub(crate) edge: Option<K>,
    pub(crate) value: Option<V>,
    pub(crate) parent: Option<NodeId>,
    pub(crate) depth: u32,
    pub(crate) children: Vec<NodeId>,
}

/// Result of walking a key sequence down from the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Walk {
    /// Nodes matched, excluding the root. `path[k]` sits at depth `k + 1`.
    pub(crate) path: Vec<NodeId>,
    /// Whether every key was consumed.
    pub(crate) complete: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Trie<K, V> {
    nodes: Vec<Node<K, V>>,
}

impl<K: Ord, V> Trie<K, V> {
    pub(crate) fn new() -> Self {
        Trie {
            nodes: vec![Node {
                edge: None,
                value: None,
                parent: None,
                depth: 0,
                children: Vec::new(),
            }],
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.nodes.len()
    }

    pub(crate) fn node(&self, id: NodeId) -> &Node<K, V> {
        &self.nodes[id.index()]
    }

    pub(crate) fn nodes(&self) -> impl ExactSizeIterator<Item = (NodeId, &Node<K, V>)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeId(i as u32), n))
    }

    fn slot(&self, parent: NodeId, edge: &K) -> Result<usize, usize> {
        let nodes = &self.nodes;
        nodes[parent.index()]
            .children
            .binary_search_by(|c| nodes[c.index()].edge.as_ref().unwrap().cmp(edge))
    }

    pub(crate) fn child(&self, parent: NodeId, edge: &K) -> Option<NodeId> {
        self.slot(parent, edge)
            .ok()
            .map(|i| self.nodes[parent.index()].children[i])
    }

    /// Appends a leaf under `parent`. Returns `None` when `parent` already
    /// has a child with this edge.
    pub(crate) fn add_child(&mut self, parent: NodeId, edge: K, value: V) -> Option<NodeId> {
        let at = self.slot(parent, &edge).err()?;
        let id = NodeId(self.nodes.len() as u32);
        let depth = self.nodes[parent.index()].depth + 1;
        self.nodes.push(Node {
            edge: Some(edge),
            value: Some(value),
            parent: Some(parent),
            depth,
            children: Vec::new(),
        });
        self.nodes[parent.index()].children.insert(at, id);
        Some(id)
    }

    /// Follows `keys` from the root for as long as matching children exist.
    pub(crate) fn walk<'k, I>(&self, keys: I) -> Walk
    where
        I: IntoIterator<Item = &'k K>,
        K: 'k,
    {
        let mut path = Vec::new();
        let mut at = NodeId::ROOT;
        for key in keys {
            match self.child(at, key) {
                Some(next) => {
                    path.push(next);
                    at = next;
                }
                None => return Walk { path, complete: false },
            }
        }
        Walk { path, complete: true }
    }

    /// Pre-order traversal of the subtree rooted at `id`, children visited in
    /// ascending edge order.
    pub(crate) fn preorder(&self, id: NodeId) -> Preorder<'_, K, V> {
        Preorder {
            trie: self,
            stack: vec![id],
        }
    }

    /// Splits a walk into search-path candidates and guaranteed matches:
    /// every matched node except a fully matched final node goes to the
    /// first list; a fully matched final node and its subtree go to the
    /// second.
    pub(crate) fn split(&self, walk: &Walk) -> (Vec<NodeId>, Vec<NodeId>) {
        match (walk.complete, walk.path.split_last()) {
            (true, Some((&last, inner))) => (inner.to_vec(), self.preorder(last).collect()),
            _ => (walk.path.clone(), Vec::new()),
        }
    }

    /// Rebuilds a trie from `(parent, edge, value)` rows given in id order.
    /// Row `i` becomes node `i + 1`; parents must precede their children.
    pub(crate) fn from_rows<I>(rows: I) -> Result<Self, RowError>
    where
        I: IntoIterator<Item = (NodeId, K, V)>,
    {
        let mut trie = Trie::new();
        for (parent, edge, value) in rows {
            if parent.index() >= trie.nodes.len() {
                return Err(RowError::ParentOrder(trie.nodes.len() as u32));
            }
            if trie.add_child(parent, edge, value).is_none() {
                return Err(RowError::DuplicateEdge(trie.nodes.len() as u32));
            }
        }
        Ok(trie)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowError {
    ParentOrder(u32),
    DuplicateEdge(u32),
}

pub(crate) struct Preorder<'a, K, V> {
    trie: &'a Trie<K, V>,
    stack: Vec<NodeId>,
}

impl<K, V> Iterator for Preorder<'_, K, V> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let id = self.stack.pop()?;
        self.stack
            .extend(self.trie.nodes[id.index()].children.iter().rev().copied());
        Some(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_stay_sorted_and_unique() {
        let mut t: Trie<u8, ()> = Trie::new();
        for b in *b"cab" {
            t.add_child(NodeId::ROOT, b, ()).unwrap();
        }
        assert!(t.add_child(NodeId::ROOT, b'a', ()).is_none());
        let edges: Vec<u8> = t
            .node(NodeId::ROOT)
            .children
            .iter()
            .map(|c| t.node(*c).edge.unwrap())
            .collect();
        assert_eq!(edges, vec![b'a', b'b', b'c']);
    }

    #[test]
    fn rows_must_reference_earlier_parents() {
        let rows = vec![(NodeId(0), 1u8, ()), (NodeId(3), 2u8, ())];
        assert_eq!(
            Trie::from_rows(rows).unwrap_err(),
            RowError::ParentOrder(2)
        );
    }
}
