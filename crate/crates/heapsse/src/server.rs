//! The cloud server. Holds the encrypted indexes and file blobs, answers
//! token queries and applies update requests. It never sees a key: every
//! operation here works on labels, ciphertexts and node ids only.
//!
//! Each index sits behind its own reader-writer lock, so queries run
//! concurrently while an update to the same index is exclusive. State is
//! written through to `<data_dir>/state.json` (temp file plus rename)
//! before a mutating request is acknowledged.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Mutex, RwLock};

use heapsse_core::{KeywordFileIndex, KeywordQueryToken, SecureIndex};
use serde::de::DeserializeOwned;

use crate::wire::{
    self, label_from_hex, BlobDoc, ErrorDoc, FileIndexDoc, IndexDoc, IndexName, KeywordQueryRequest,
    KeywordQueryResponse, LeakageResponse, LeakageTrace, OutcomeDoc, OutsourceRequest, Reply, Stats,
    SubstringQueryRequest, SubstringQueryResponse, TraceKind, UpdateKeywordRequest,
    UpdateKeywordResponse, UpdatePostingRequest, UpdatePostingResponse, UpdateTarget, WireError,
};

const STATE_FILE: &str = "state.json";
const DEFAULT_GAMMA: u32 = 256;

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Where state is persisted; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// Record leakage traces and expose them on the debug endpoint.
    pub tracing: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("server has not received an outsourced collection")]
    NotInitialized,
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("unknown file id {0}")]
    UnknownFileId(String),
    #[error("leakage tracing is disabled")]
    TracingDisabled,
    #[error("storage error: {0}")]
    Storage(String),
    #[error("no route for {0}")]
    NotFound(String),
}

impl ServerError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServerError::NotInitialized => "NotInitialized",
            ServerError::Validation(_) => "ValidationError",
            ServerError::MalformedRequest(_) => "MalformedRequest",
            ServerError::UnknownFileId(_) => "UnknownFileId",
            ServerError::TracingDisabled => "TracingDisabled",
            ServerError::Storage(_) => "StorageError",
            ServerError::NotFound(_) => "NotFound",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServerError::NotInitialized => 409,
            ServerError::Validation(_) | ServerError::MalformedRequest(_) => 400,
            ServerError::UnknownFileId(_) | ServerError::NotFound(_) => 404,
            ServerError::TracingDisabled => 403,
            ServerError::Storage(_) => 500,
        }
    }

    fn reply(&self) -> Reply {
        Reply::json(
            self.status(),
            &ErrorDoc {
                error: self.kind().to_string(),
                message: self.to_string(),
            },
        )
    }
}

fn malformed(e: impl std::fmt::Display) -> ServerError {
    ServerError::MalformedRequest(e.to_string())
}

fn storage(e: impl std::fmt::Display) -> ServerError {
    ServerError::Storage(e.to_string())
}

/// Substring query answer over both indexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstringAnswer {
    pub main: heapsse_core::EncryptedSearchOutcome,
    pub revoked: heapsse_core::EncryptedSearchOutcome,
}

pub struct CloudServer {
    config: ServerConfig,
    initialized: AtomicBool,
    iw: RwLock<SecureIndex>,
    iwr: RwLock<SecureIndex>,
    file_index: RwLock<KeywordFileIndex>,
    blobs: RwLock<BTreeMap<String, Vec<u8>>>,
    traces: Mutex<Vec<LeakageTrace>>,
    persist: Mutex<()>,
}

impl CloudServer {
    /// In-memory server with no persistence.
    pub fn new(config: ServerConfig) -> Self {
        CloudServer {
            config,
            initialized: AtomicBool::new(false),
            iw: RwLock::new(SecureIndex::empty(DEFAULT_GAMMA)),
            iwr: RwLock::new(SecureIndex::empty(DEFAULT_GAMMA)),
            file_index: RwLock::new(KeywordFileIndex::empty(DEFAULT_GAMMA)),
            blobs: RwLock::new(BTreeMap::new()),
            traces: Mutex::new(Vec::new()),
            persist: Mutex::new(()),
        }
    }

    /// Creates a server and restores persisted state from `data_dir` if any.
    pub fn open(config: ServerConfig) -> Result<Self, ServerError> {
        let server = CloudServer::new(config);
        if let Some(dir) = &server.config.data_dir {
            fs::create_dir_all(dir).map_err(storage)?;
            let path = dir.join(STATE_FILE);
            if path.exists() {
                let bytes = fs::read(&path).map_err(storage)?;
                let doc: OutsourceRequest = serde_json::from_slice(&bytes).map_err(storage)?;
                let state = Decoded::from_doc(&doc).map_err(storage)?;
                server.install(state);
            }
        }
        Ok(server)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    fn ensure_initialized(&self) -> Result<(), ServerError> {
        if self.initialized.load(Ordering::Acquire) {
            Ok(())
        } else {
            Err(ServerError::NotInitialized)
        }
    }

    fn install(&self, state: Decoded) {
        let mut iw = self.iw.write().unwrap();
        let mut iwr = self.iwr.write().unwrap();
        let mut fi = self.file_index.write().unwrap();
        let mut blobs = self.blobs.write().unwrap();
        *iw = state.iw;
        *iwr = state.iwr;
        *fi = state.file_index;
        *blobs = state.blobs;
        self.initialized.store(true, Ordering::Release);
    }

    /// Replaces all state with the outsourced collection.
    pub fn outsource(&self, doc: &OutsourceRequest) -> Result<Stats, ServerError> {
        let state = Decoded::from_doc(doc).map_err(|e| ServerError::Validation(e.to_string()))?;
        if let Some(dir) = &self.config.data_dir {
            let _guard = self.persist.lock().unwrap();
            write_atomically(dir, &serde_json::to_vec(doc).map_err(storage)?)?;
            self.install(state);
        } else {
            self.install(state);
        }
        Ok(self.stats())
    }

    pub fn stats(&self) -> Stats {
        Stats {
            iw_nodes: self.iw.read().unwrap().node_count() as u64,
            iwr_nodes: self.iwr.read().unwrap().node_count() as u64,
            if_entries: self.file_index.read().unwrap().len() as u64,
            n: self.blobs.read().unwrap().len() as u64,
        }
    }

    pub fn substring_query(
        &self,
        token: &heapsse_core::SubstringQueryToken,
    ) -> Result<SubstringAnswer, ServerError> {
        self.ensure_initialized()?;
        let mut answers = Vec::with_capacity(2);
        for (name, lock) in [(IndexName::Main, &self.iw), (IndexName::Revocation, &self.iwr)] {
            let idx = lock.read().unwrap();
            token.validate(idx.gamma()).map_err(malformed)?;
            let out = idx.search(token);
            drop(idx);
            self.record(TraceKind::QueryPath, name, out.path.iter().map(|n| n.0).collect());
            self.record(TraceKind::Access, name, out.accessed().iter().map(|n| n.0).collect());
            answers.push(out);
        }
        let revoked = answers.pop().unwrap();
        let main = answers.pop().unwrap();
        Ok(SubstringAnswer { main, revoked })
    }

    pub fn keyword_query(
        &self,
        token: &KeywordQueryToken,
    ) -> Result<Vec<heapsse_core::Ciphertext>, ServerError> {
        self.ensure_initialized()?;
        Ok(self.file_index.read().unwrap().lookup(token))
    }

    pub fn fetch_blob(&self, id: &str) -> Result<Vec<u8>, ServerError> {
        self.ensure_initialized()?;
        self.blobs
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ServerError::UnknownFileId(id.to_string()))
    }

    /// Applies an insert request to the main index or the revocation list.
    pub fn update_keyword(
        &self,
        target: UpdateTarget,
        req: &heapsse_core::InsertRequest,
    ) -> Result<usize, ServerError> {
        self.ensure_initialized()?;
        let (lock, name, kind) = match target {
            UpdateTarget::Main => (&self.iw, IndexName::Main, TraceKind::InsertionPath),
            UpdateTarget::Revocation => (&self.iwr, IndexName::Revocation, TraceKind::DeletionPath),
        };
        let report = {
            let mut idx = lock.write().unwrap();
            idx.apply_insert(req).map_err(malformed)?
        };
        for path in &report.paths {
            self.record(kind, name, path.iter().map(|n| n.0).collect());
        }
        self.persist()?;
        Ok(report.nodes_added)
    }

    pub fn update_posting(&self, op: &UpdatePostingRequest) -> Result<usize, ServerError> {
        self.ensure_initialized()?;
        {
            let mut fi = self.file_index.write().unwrap();
            match op {
                UpdatePostingRequest::Insert {
                    kw_key,
                    counter,
                    enc_id,
                } => {
                    let kw_key = label_from_hex(kw_key).map_err(malformed)?;
                    let enc = heapsse_core::Ciphertext::from_bytes(wire::from_b64(enc_id).map_err(malformed)?);
                    fi.insert_posting(&kw_key, *counter, enc).map_err(malformed)?;
                }
                UpdatePostingRequest::Delete { lookup_key } => {
                    let key = label_from_hex(lookup_key).map_err(malformed)?;
                    fi.delete_posting(key).map_err(malformed)?;
                }
            }
        }
        self.persist()?;
        Ok(1)
    }

    /// Traces with sequence number greater than `since`.
    pub fn leakage_traces(&self, since: u64) -> Result<Vec<LeakageTrace>, ServerError> {
        if !self.config.tracing {
            return Err(ServerError::TracingDisabled);
        }
        Ok(self
            .traces
            .lock()
            .unwrap()
            .iter()
            .filter(|t| t.seq > since)
            .cloned()
            .collect())
    }

    fn record(&self, kind: TraceKind, index: IndexName, node_ids: Vec<u32>) {
        if !self.config.tracing {
            return;
        }
        let mut log = self.traces.lock().unwrap();
        let seq = log.len() as u64 + 1;
        log.push(LeakageTrace {
            seq,
            kind,
            index,
            node_ids,
        });
    }

    /// Current state in its persisted form.
    pub fn snapshot(&self) -> OutsourceRequest {
        let iw = self.iw.read().unwrap();
        let iwr = self.iwr.read().unwrap();
        let fi = self.file_index.read().unwrap();
        let blobs = self.blobs.read().unwrap();
        OutsourceRequest {
            iw: IndexDoc::from_index(&iw),
            iwr: IndexDoc::from_index(&iwr),
            file_index: FileIndexDoc::from_index(&fi),
            blobs: blobs
                .iter()
                .map(|(id, data)| BlobDoc {
                    id: id.clone(),
                    data: wire::b64(data),
                })
                .collect(),
        }
    }

    fn persist(&self) -> Result<(), ServerError> {
        let Some(dir) = &self.config.data_dir else {
            return Ok(());
        };
        let _guard = self.persist.lock().unwrap();
        let bytes = serde_json::to_vec(&self.snapshot()).map_err(storage)?;
        write_atomically(dir, &bytes)
    }

    /// Routes one request. `target` is the path with an optional query
    /// string. This is the single entry point behind the HTTP listener and
    /// the in-process transport.
    pub fn handle(&self, method: &str, target: &str, body: &[u8]) -> Reply {
        match self.route(method, target, body) {
            Ok(reply) => reply,
            Err(e) => e.reply(),
        }
    }

    fn route(&self, method: &str, target: &str, body: &[u8]) -> Result<Reply, ServerError> {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        match (method, path) {
            ("POST", "/v1/outsource") => {
                let doc: OutsourceRequest = parse(body).map_err(|e| ServerError::Validation(e.to_string()))?;
                Ok(Reply::json(200, &self.outsource(&doc)?))
            }
            ("POST", "/v1/query/substring") => {
                let req: SubstringQueryRequest = parse(body)?;
                let token = req.to_token().map_err(malformed)?;
                let ans = self.substring_query(&token)?;
                Ok(Reply::json(
                    200,
                    &SubstringQueryResponse {
                        main: OutcomeDoc::from_outcome(&ans.main),
                        revoked: OutcomeDoc::from_outcome(&ans.revoked),
                    },
                ))
            }
            ("POST", "/v1/query/keyword") => {
                let req: KeywordQueryRequest = parse(body)?;
                let token = KeywordQueryToken {
                    kw_key: label_from_hex(&req.kw_key).map_err(malformed)?,
                };
                let enc_ids = self
                    .keyword_query(&token)?
                    .iter()
                    .map(|c| wire::b64(c.as_bytes()))
                    .collect();
                Ok(Reply::json(200, &KeywordQueryResponse { enc_ids }))
            }
            ("GET", p) if p.starts_with("/v1/file/") => {
                Ok(Reply::bytes(self.fetch_blob(&p["/v1/file/".len()..])?))
            }
            ("POST", "/v1/update/keyword") => {
                let req: UpdateKeywordRequest = parse(body)?;
                let insert = req.to_request().map_err(malformed)?;
                let nodes_added = self.update_keyword(req.target, &insert)?;
                Ok(Reply::json(200, &UpdateKeywordResponse { nodes_added }))
            }
            ("POST", "/v1/update/posting") => {
                let req: UpdatePostingRequest = parse(body)?;
                let applied = self.update_posting(&req)?;
                Ok(Reply::json(200, &UpdatePostingResponse { applied }))
            }
            ("GET", "/v1/debug/leakage") => {
                let since = query
                    .split('&')
                    .filter_map(|kv| kv.split_once('='))
                    .find(|(k, _)| *k == "since")
                    .map(|(_, v)| v.parse::<u64>().map_err(malformed))
                    .transpose()?
                    .unwrap_or(0);
                let traces = self.leakage_traces(since)?;
                Ok(Reply::json(200, &LeakageResponse { traces }))
            }
            ("GET", "/v1/stats") => Ok(Reply::json(200, &self.stats())),
            _ => Err(ServerError::NotFound(format!("{method} {path}"))),
        }
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ServerError> {
    serde_json::from_slice(body).map_err(malformed)
}

/// Decoded and validated outsourced state.
struct Decoded {
    iw: SecureIndex,
    iwr: SecureIndex,
    file_index: KeywordFileIndex,
    blobs: BTreeMap<String, Vec<u8>>,
}

impl Decoded {
    fn from_doc(doc: &OutsourceRequest) -> Result<Self, WireError> {
        let iw = doc.iw.to_index()?;
        let iwr = doc.iwr.to_index()?;
        let file_index = doc.file_index.to_index()?;
        if iw.gamma() != iwr.gamma() || iw.gamma() != file_index.gamma() {
            return Err(heapsse_core::Error::NodeTable("indexes disagree on label width".into()).into());
        }
        let mut blobs = BTreeMap::new();
        for b in &doc.blobs {
            if b.id.is_empty() || b.id.contains(['/', '?', '#']) {
                return Err(heapsse_core::Error::NodeTable(format!("bad blob id {:?}", b.id)).into());
            }
            if blobs.insert(b.id.clone(), wire::from_b64(&b.data)?).is_some() {
                return Err(heapsse_core::Error::NodeTable(format!("duplicate blob id {}", b.id)).into());
            }
        }
        Ok(Decoded {
            iw,
            iwr,
            file_index,
            blobs,
        })
    }
}

fn write_atomically(dir: &Path, bytes: &[u8]) -> Result<(), ServerError> {
    fs::create_dir_all(dir).map_err(storage)?;
    let tmp = dir.join(format!("{STATE_FILE}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(storage)?;
    f.write_all(bytes).map_err(storage)?;
    f.sync_all().map_err(storage)?;
    fs::rename(&tmp, dir.join(STATE_FILE)).map_err(storage)
}
