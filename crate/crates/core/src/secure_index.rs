//! Encrypted modified position heap.
//!
//! Every non-root node carries the PRF of its root-to-node edge string and
//! a randomized encryption of its keyword. The server walks it with query
//! tokens and grows it with insert requests, touching nothing but labels,
//! ciphertexts and node ids. The same structure serves as the revocation
//! list for deleted keywords.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::crypto::{Ciphertext, KeyBundle, PathLabel};
use crate::dictionary::ModifiedPositionHeap;
use crate::error::{Error, Result};
use crate::token::{InsertRequest, SubstringQueryToken};
use crate::trie::{NodeId, RowError, Trie};

/// What a substring walk returns. `path` is the query path; it is kept for
/// leakage accounting and is not needed by the key holder.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EncryptedSearchOutcome {
    pub l1: Vec<(NodeId, Ciphertext)>,
    pub l2: Vec<(NodeId, Ciphertext)>,
    pub matched_depth: usize,
    pub path: Vec<NodeId>,
}

impl EncryptedSearchOutcome {
    pub fn ciphertexts(&self) -> impl Iterator<Item = &Ciphertext> {
        self.l1.iter().chain(self.l2.iter()).map(|(_, c)| c)
    }

    /// Ids of the nodes whose ciphertexts were returned.
    pub fn accessed(&self) -> Vec<NodeId> {
        self.l1.iter().chain(self.l2.iter()).map(|(id, _)| *id).collect()
    }
}

/// Result of applying an insert request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertReport {
    pub nodes_added: usize,
    /// Per suffix token: the matched insertion path followed by the new leaf.
    pub paths: Vec<Vec<NodeId>>,
}

/// One row of the persisted node table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub label: Option<PathLabel>,
    pub enc_keyword: Option<Ciphertext>,
}

#[derive(Debug, Clone)]
pub struct SecureIndex {
    gamma: u32,
    trie: Trie<PathLabel, Ciphertext>,
}

impl SecureIndex {
    /// Root-only index, e.g. a fresh revocation list.
    pub fn empty(gamma: u32) -> Self {
        SecureIndex {
            gamma,
            trie: Trie::new(),
        }
    }

    /// Encrypts a plaintext heap node by node. Ids are assigned breadth
    /// first with siblings in label order, so they carry no positional
    /// information from the plaintext build.
    pub fn encrypt<R: RngCore + CryptoRng>(
        heap: &ModifiedPositionHeap,
        keys: &KeyBundle,
        rng: &mut R,
    ) -> Self {
        let mut index = SecureIndex::empty(keys.gamma());
        let mut queue = VecDeque::new();
        queue.push_back((NodeId::ROOT, NodeId::ROOT, Vec::new()));
        while let Some((plain, enc, path)) = queue.pop_front() {
            let mut kids: Vec<(PathLabel, NodeId, Vec<u8>)> = heap
                .children(plain)
                .iter()
                .map(|&c| {
                    let mut p = path.clone();
                    p.push(heap.edge(c).unwrap());
                    (keys.label(&p), c, p)
                })
                .collect();
            kids.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            for (label, c, p) in kids {
                let ct = keys.encrypt(heap.keyword(c).unwrap().as_bytes(), rng);
                let id = index
                    .trie
                    .add_child(enc, label, ct)
                    .expect("sibling labels are distinct");
                queue.push_back((c, id, p));
            }
        }
        index
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn node_count(&self) -> usize {
        self.trie.len()
    }

    pub fn label(&self, id: NodeId) -> Option<&PathLabel> {
        self.trie.node(id).edge.as_ref()
    }

    pub fn ciphertext(&self, id: NodeId) -> Option<&Ciphertext> {
        self.trie.node(id).value.as_ref()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.trie.node(id).parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.trie.node(id).children
    }

    /// Follows the query labels from the root. Nodes passed on the way are
    /// candidates (`l1`); if every label matched, the final node and its
    /// whole subtree are returned as matches (`l2`). No filtering happens
    /// here.
    pub fn search(&self, token: &SubstringQueryToken) -> EncryptedSearchOutcome {
        let walk = self.trie.walk(&token.labels);
        let (l1, l2) = self.trie.split(&walk);
        let hit = |id: NodeId| (id, self.trie.node(id).value.clone().unwrap());
        EncryptedSearchOutcome {
            l1: l1.into_iter().map(hit).collect(),
            l2: l2.into_iter().map(hit).collect(),
            matched_depth: walk.path.len(),
            path: walk.path,
        }
    }

    /// Applies each suffix token in turn: follow the longest represented
    /// prefix of its labels and hang one new leaf, labelled with the next
    /// label, under the last matched node.
    ///
    /// A well-formed request always adds exactly one node per suffix since
    /// the final label of each token derives from a fresh random value. A
    /// token whose labels are all already present can only arise from a
    /// label collision and is reported as malformed; suffixes before it
    /// stay applied.
    pub fn apply_insert(&mut self, req: &InsertRequest) -> Result<InsertReport> {
        req.validate(self.gamma)?;
        let mut paths = Vec::with_capacity(req.suffix_tokens.len());
        for token in &req.suffix_tokens {
            let walk = self.trie.walk(&token.labels);
            let next = token
                .labels
                .get(walk.path.len())
                .ok_or_else(|| Error::MalformedRequest("insertion path fully present".into()))?;
            let parent = walk.path.last().copied().unwrap_or(NodeId::ROOT);
            let leaf = self
                .trie
                .add_child(parent, next.clone(), req.enc_keyword.clone())
                .expect("walk stopped at a missing label");
            let mut path = walk.path;
            path.push(leaf);
            paths.push(path);
        }
        Ok(InsertReport {
            nodes_added: paths.len(),
            paths,
        })
    }

    /// Node table in id order, root first.
    pub fn records(&self) -> impl ExactSizeIterator<Item = NodeRecord> + '_ {
        self.trie.nodes().map(|(id, n)| NodeRecord {
            id,
            parent: n.parent,
            label: n.edge.clone(),
            enc_keyword: n.value.clone(),
        })
    }

    /// Rebuilds an index from its node table. Ids must be dense and start
    /// with the root; each parent must precede its children.
    pub fn from_records<I>(gamma: u32, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = NodeRecord>,
    {
        let bad = |msg: alloc::string::String| Error::NodeTable(msg);
        let mut records = records.into_iter();
        match records.next() {
            Some(NodeRecord {
                id: NodeId::ROOT,
                parent: None,
                label: None,
                enc_keyword: None,
            }) => {}
            _ => return Err(bad("first record must be a bare root with id 0".into())),
        }
        let mut rows = Vec::new();
        for (expect, r) in (1u32..).zip(records) {
            if r.id != NodeId(expect) {
                return Err(bad(alloc::format!("expected node id {expect}, found {}", r.id)));
            }
            let (Some(parent), Some(label), Some(ct)) = (r.parent, r.label, r.enc_keyword) else {
                return Err(bad(alloc::format!("node {} lacks parent, label or keyword", r.id)));
            };
            if label.bits() != gamma {
                return Err(bad(alloc::format!("node {} label width {}", r.id, label.bits())));
            }
            rows.push((parent, label, ct));
        }
        let trie = Trie::from_rows(rows).map_err(|e| match e {
            RowError::ParentOrder(id) => bad(alloc::format!("node {id} refers to a later parent")),
            RowError::DuplicateEdge(id) => bad(alloc::format!("node {id} duplicates a sibling label")),
        })?;
        Ok(SecureIndex { gamma, trie })
    }
}
