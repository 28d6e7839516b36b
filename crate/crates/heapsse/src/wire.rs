//! JSON wire and persistence formats.
//!
//! Binary values are standard base64; PRF labels and lookup keys are
//! lowercase hex of fixed width. Index documents list nodes in id order, so
//! serializing the same index state always yields the same bytes.

use std::collections::{BTreeMap, BTreeSet};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use heapsse_core::{
    Ciphertext, EncryptedSearchOutcome, InsertRequest, KeywordFileIndex, NodeId, NodeRecord,
    PathLabel, SecureIndex, SubstringQueryToken, SuffixInsertToken,
};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("bad hex field: {0}")]
    Hex(#[from] hex::FromHexError),
    #[error("bad base64 field: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("{0}")]
    Core(#[from] heapsse_core::Error),
    #[error("bad json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn label_hex(l: &PathLabel) -> String {
    hex::encode(l.as_bytes())
}

pub fn label_from_hex(s: &str) -> Result<PathLabel, WireError> {
    Ok(PathLabel::from_bytes(&hex::decode(s)?))
}

pub fn b64(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

pub fn from_b64(s: &str) -> Result<Vec<u8>, WireError> {
    Ok(B64.decode(s)?)
}

fn ct_b64(c: &Ciphertext) -> String {
    b64(c.as_bytes())
}

fn ct_from_b64(s: &str) -> Result<Ciphertext, WireError> {
    Ok(Ciphertext::from_bytes(from_b64(s)?))
}

fn check_version(v: u32) -> Result<(), WireError> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(WireError::Version(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRow {
    pub id: u32,
    pub parent: Option<u32>,
    pub label: Option<String>,
    pub enc_keyword: Option<String>,
}

/// Node table of a secure index (main index or revocation list).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexDoc {
    pub version: u32,
    pub gamma: u32,
    pub node_count: u64,
    pub nodes: Vec<NodeRow>,
}

impl IndexDoc {
    pub fn from_index(idx: &SecureIndex) -> Self {
        IndexDoc {
            version: FORMAT_VERSION,
            gamma: idx.gamma(),
            node_count: idx.node_count() as u64,
            nodes: idx
                .records()
                .map(|r| NodeRow {
                    id: r.id.0,
                    parent: r.parent.map(|p| p.0),
                    label: r.label.as_ref().map(label_hex),
                    enc_keyword: r.enc_keyword.as_ref().map(ct_b64),
                })
                .collect(),
        }
    }

    pub fn to_index(&self) -> Result<SecureIndex, WireError> {
        check_version(self.version)?;
        if self.node_count != self.nodes.len() as u64 {
            return Err(heapsse_core::Error::NodeTable(format!(
                "header says {} nodes, table has {}",
                self.node_count,
                self.nodes.len()
            ))
            .into());
        }
        let records = self
            .nodes
            .iter()
            .map(|n| {
                Ok(NodeRecord {
                    id: NodeId(n.id),
                    parent: n.parent.map(NodeId),
                    label: n.label.as_deref().map(label_from_hex).transpose()?,
                    enc_keyword: n.enc_keyword.as_deref().map(ct_from_b64).transpose()?,
                })
            })
            .collect::<Result<Vec<_>, WireError>>()?;
        Ok(SecureIndex::from_records(self.gamma, records)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryRow {
    pub key: String,
    pub value: String,
}

/// Keyword-to-file index: entries sorted by key, plus revoked keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileIndexDoc {
    pub version: u32,
    pub gamma: u32,
    pub entries: Vec<EntryRow>,
    pub revoked: Vec<String>,
}

impl FileIndexDoc {
    pub fn from_index(idx: &KeywordFileIndex) -> Self {
        FileIndexDoc {
            version: FORMAT_VERSION,
            gamma: idx.gamma(),
            entries: idx
                .entries()
                .iter()
                .map(|(k, v)| EntryRow {
                    key: label_hex(k),
                    value: ct_b64(v),
                })
                .collect(),
            revoked: idx.revoked().iter().map(label_hex).collect(),
        }
    }

    pub fn to_index(&self) -> Result<KeywordFileIndex, WireError> {
        check_version(self.version)?;
        let mut entries = BTreeMap::new();
        for e in &self.entries {
            if entries
                .insert(label_from_hex(&e.key)?, ct_from_b64(&e.value)?)
                .is_some()
            {
                return Err(heapsse_core::Error::NodeTable(format!("duplicate key {}", e.key)).into());
            }
        }
        let revoked = self
            .revoked
            .iter()
            .map(|k| label_from_hex(k))
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(KeywordFileIndex::from_parts(self.gamma, entries, revoked)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobDoc {
    pub id: String,
    pub data: String,
}

/// Body of `POST /v1/outsource`; also the server's on-disk state file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutsourceRequest {
    pub iw: IndexDoc,
    pub iwr: IndexDoc,
    #[serde(rename = "if")]
    pub file_index: FileIndexDoc,
    pub blobs: Vec<BlobDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Stats {
    pub iw_nodes: u64,
    pub iwr_nodes: u64,
    pub if_entries: u64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstringQueryRequest {
    pub tokens: Vec<String>,
}

impl SubstringQueryRequest {
    pub fn from_token(t: &SubstringQueryToken) -> Self {
        SubstringQueryRequest {
            tokens: t.labels.iter().map(label_hex).collect(),
        }
    }

    pub fn to_token(&self) -> Result<SubstringQueryToken, WireError> {
        Ok(SubstringQueryToken {
            labels: self
                .tokens
                .iter()
                .map(|t| label_from_hex(t))
                .collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct OutcomeDoc {
    pub l1: Vec<String>,
    pub l2: Vec<String>,
    pub matched_depth: usize,
}

impl OutcomeDoc {
    pub fn from_outcome(o: &EncryptedSearchOutcome) -> Self {
        OutcomeDoc {
            l1: o.l1.iter().map(|(_, c)| ct_b64(c)).collect(),
            l2: o.l2.iter().map(|(_, c)| ct_b64(c)).collect(),
            matched_depth: o.matched_depth,
        }
    }

    /// All returned ciphertexts, `l1` first.
    pub fn ciphertexts(&self) -> Result<Vec<Ciphertext>, WireError> {
        self.l1.iter().chain(self.l2.iter()).map(|s| ct_from_b64(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstringQueryResponse {
    pub main: OutcomeDoc,
    pub revoked: OutcomeDoc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordQueryRequest {
    pub kw_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordQueryResponse {
    pub enc_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateTarget {
    Main,
    Revocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateKeywordRequest {
    pub target: UpdateTarget,
    pub enc_keyword: String,
    pub suffix_tokens: Vec<Vec<String>>,
}

impl UpdateKeywordRequest {
    pub fn new(target: UpdateTarget, req: &InsertRequest) -> Self {
        UpdateKeywordRequest {
            target,
            enc_keyword: ct_b64(&req.enc_keyword),
            suffix_tokens: req
                .suffix_tokens
                .iter()
                .map(|t| t.labels.iter().map(label_hex).collect())
                .collect(),
        }
    }

    pub fn to_request(&self) -> Result<InsertRequest, WireError> {
        let suffix_tokens = self
            .suffix_tokens
            .iter()
            .map(|t| {
                Ok(SuffixInsertToken {
                    labels: t.iter().map(|l| label_from_hex(l)).collect::<Result<_, WireError>>()?,
                })
            })
            .collect::<Result<_, WireError>>()?;
        Ok(InsertRequest {
            enc_keyword: ct_from_b64(&self.enc_keyword)?,
            suffix_tokens,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateKeywordResponse {
    pub nodes_added: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum UpdatePostingRequest {
    Insert {
        kw_key: String,
        counter: u64,
        enc_id: String,
    },
    Delete {
        lookup_key: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdatePostingResponse {
    pub applied: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    QueryPath,
    InsertionPath,
    DeletionPath,
    Access,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexName {
    Main,
    Revocation,
}

/// Node ids one request revealed to the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageTrace {
    pub seq: u64,
    pub kind: TraceKind,
    pub index: IndexName,
    pub node_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageResponse {
    pub traces: Vec<LeakageTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDoc {
    pub error: String,
    pub message: String,
}

/// A raw HTTP-style response as produced by the server dispatcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json<T: Serialize>(status: u16, value: &T) -> Self {
        Reply {
            status,
            content_type: "application/json",
            body: serde_json::to_vec(value).expect("wire types serialize"),
        }
    }

    pub fn bytes(body: Vec<u8>) -> Self {
        Reply {
            status: 200,
            content_type: "application/octet-stream",
            body,
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}
