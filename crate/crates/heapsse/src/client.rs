//! The data user. Holds the keys, builds tokens and update requests, and
//! turns encrypted server answers into plaintext suggestions and files.
//!
//! Local state (keys, posting counters, revoked keywords, file names) lives
//! in a single JSON file. Losing it means losing the ability to query.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use heapsse_core::file_index::lookup_key;
use heapsse_core::{
    FileId, InsertRequest, KeyBundle, Keyword, KeywordFileIndex, KeywordQueryToken,
    ModifiedPositionHeap, SecureIndex, SubstringQueryToken,
};
use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::transport::{HttpTransport, NetworkError, Transport};
use crate::wire::{
    self, BlobDoc, ErrorDoc, FileIndexDoc, IndexDoc, KeywordQueryRequest, KeywordQueryResponse,
    OutsourceRequest, Stats, SubstringQueryRequest, SubstringQueryResponse, UpdateKeywordRequest,
    UpdateKeywordResponse, UpdatePostingRequest, UpdatePostingResponse, UpdateTarget, WireError,
};

pub const STATE_VERSION: u32 = 1;
/// Expected index size used to size labels when keys are generated.
pub const DEFAULT_INDEX_CAPACITY: u64 = 1 << 24;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{0}")]
    Core(#[from] heapsse_core::Error),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("keyword {0:?} was deleted and cannot be inserted again")]
    RevokedKeyword(String),
    #[error("{0}")]
    Network(#[from] NetworkError),
    #[error("server returned {status} {error}: {message}")]
    Server {
        status: u16,
        error: String,
        message: String,
    },
    #[error("unexpected server response: {0}")]
    Protocol(String),
    #[error("state file {path}: {reason}")]
    State { path: PathBuf, reason: String },
}

impl ClientError {
    /// Stable short name for JSON error bodies.
    pub fn kind(&self) -> &str {
        match self {
            ClientError::Core(e) => e.kind(),
            ClientError::Validation(_) => "ValidationError",
            ClientError::RevokedKeyword(_) => "RevokedKeyword",
            ClientError::Network(_) => "ServerUnreachable",
            ClientError::Server { error, .. } => error,
            ClientError::Protocol(_) => "ProtocolError",
            ClientError::State { .. } => "StateError",
        }
    }

    /// Process exit code: 2 for invalid input or state, 3 for anything the
    /// server or network caused.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Core(heapsse_core::Error::DecryptionFailure) => 3,
            ClientError::Core(_)
            | ClientError::Validation(_)
            | ClientError::RevokedKeyword(_)
            | ClientError::State { .. } => 2,
            ClientError::Server { error, .. }
                if matches!(error.as_str(), "UnknownFileId" | "ValidationError") =>
            {
                2
            }
            ClientError::Network(_) | ClientError::Server { .. } | ClientError::Protocol(_) => 3,
        }
    }
}

impl From<WireError> for ClientError {
    fn from(e: WireError) -> Self {
        ClientError::Protocol(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

/// Everything the client keeps between runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientState {
    pub version: u32,
    pub server_url: String,
    /// Base64 of the binary key file.
    pub keys: String,
    /// Highest posting slot used per keyword.
    pub posting_counters: BTreeMap<String, u64>,
    pub revoked_keywords: BTreeSet<String>,
    /// Opaque file id to original file name.
    pub files: BTreeMap<String, String>,
}

impl ClientState {
    pub fn generate(server_url: &str, lambda: u32) -> Result<Self> {
        let keys = KeyBundle::generate(lambda, DEFAULT_INDEX_CAPACITY, &mut StdRng::from_entropy())?;
        Ok(ClientState::with_keys(server_url, &keys))
    }

    pub fn with_keys(server_url: &str, keys: &KeyBundle) -> Self {
        ClientState {
            version: STATE_VERSION,
            server_url: server_url.to_string(),
            keys: wire::b64(&keys.to_bytes()),
            posting_counters: BTreeMap::new(),
            revoked_keywords: BTreeSet::new(),
            files: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let err = |reason: String| ClientError::State {
            path: path.to_path_buf(),
            reason,
        };
        let bytes = fs::read(path).map_err(|e| err(e.to_string()))?;
        let state: ClientState = serde_json::from_slice(&bytes).map_err(|e| err(e.to_string()))?;
        if state.version != STATE_VERSION {
            return Err(err(format!("unsupported version {}", state.version)));
        }
        Ok(state)
    }

    /// Writes the state with owner-only permissions, replacing any
    /// previous file atomically.
    pub fn save(&self, path: &Path) -> Result<()> {
        let err = |e: std::io::Error| ClientError::State {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let bytes = serde_json::to_vec_pretty(self).expect("state serializes");
        let tmp = path.with_extension("tmp");
        let mut opts = fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(&tmp).map_err(err)?;
        f.write_all(&bytes).map_err(err)?;
        f.sync_all().map_err(err)?;
        fs::rename(&tmp, path).map_err(err)
    }

    pub fn keys(&self) -> Result<KeyBundle> {
        let raw = wire::from_b64(&self.keys).map_err(|e| ClientError::Validation(e.to_string()))?;
        Ok(KeyBundle::from_bytes(&raw)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainFile {
    pub name: String,
    pub contents: Vec<u8>,
}

/// A plaintext collection ready to be outsourced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Collection {
    pub dictionary: Vec<String>,
    pub files: Vec<PlainFile>,
    /// Keyword to the names of the files it indexes.
    pub postings: BTreeMap<String, Vec<String>>,
}

impl Collection {
    pub fn from_dictionary<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Collection {
            dictionary: words.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    /// Reads a dictionary file (one keyword per line) and every regular file
    /// in `files_dir`. A file is posted under a keyword when the keyword
    /// appears among its whitespace-separated words, ignoring surrounding
    /// ASCII punctuation.
    pub fn from_paths(dict_path: &Path, files_dir: Option<&Path>) -> Result<Self> {
        let io = |p: &Path, e: std::io::Error| ClientError::Validation(format!("{}: {e}", p.display()));
        let text = fs::read_to_string(dict_path).map_err(|e| io(dict_path, e))?;
        let mut dictionary = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let w = line.trim();
            if w.is_empty() {
                continue;
            }
            Keyword::new(w).map_err(|e| ClientError::Validation(format!("line {}: {e}", n + 1)))?;
            dictionary.push(w.to_string());
        }
        let mut files = Vec::new();
        if let Some(dir) = files_dir {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            paths.sort();
            for p in paths {
                let contents = fs::read(&p).map_err(|e| io(&p, e))?;
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                files.push(PlainFile { name, contents });
            }
        }
        let known: BTreeSet<&str> = dictionary.iter().map(String::as_str).collect();
        let mut postings: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for f in &files {
            let text = String::from_utf8_lossy(&f.contents);
            let words: BTreeSet<&str> = text
                .split_whitespace()
                .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()))
                .filter(|t| known.contains(t))
                .collect();
            for w in words {
                postings.entry(w.to_string()).or_default().push(f.name.clone());
            }
        }
        Ok(Collection {
            dictionary,
            files,
            postings,
        })
    }
}

/// One candidate keyword for a substring, with the number of returned
/// ciphertexts that decrypted to it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Suggestion {
    pub keyword: String,
    pub source_count: usize,
}

/// What an insert or delete sent and what it changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub label_count: usize,
    pub ciphertext_count: usize,
    pub nodes_added: usize,
}

pub struct Client {
    state: ClientState,
    keys: KeyBundle,
    transport: Box<dyn Transport>,
    state_path: Option<PathBuf>,
    rng: StdRng,
}

impl Client {
    /// Generates fresh keys and writes a new state file. Refuses to replace
    /// an existing one, since that would discard the only copy of the keys.
    pub fn init(path: &Path, server_url: &str, lambda: u32) -> Result<ClientState> {
        if path.exists() {
            return Err(ClientError::State {
                path: path.to_path_buf(),
                reason: "already exists".into(),
            });
        }
        let state = ClientState::generate(server_url, lambda)?;
        state.save(path)?;
        Ok(state)
    }

    /// Loads the state file and talks to its server over HTTP. Mutations are
    /// saved back to the file.
    pub fn open(path: &Path) -> Result<Self> {
        let state = ClientState::load(path)?;
        let transport = HttpTransport::new(&state.server_url);
        let mut c = Client::new(state, Box::new(transport))?;
        c.state_path = Some(path.to_path_buf());
        Ok(c)
    }

    /// A client with in-memory state over any transport.
    pub fn new(state: ClientState, transport: Box<dyn Transport>) -> Result<Self> {
        Ok(Client {
            keys: state.keys()?,
            state,
            transport,
            state_path: None,
            rng: StdRng::from_entropy(),
        })
    }

    /// Makes the client's own randomness reproducible.
    pub fn seed_rng(&mut self, seed: u64) {
        self.rng = StdRng::seed_from_u64(seed);
    }

    pub fn state(&self) -> &ClientState {
        &self.state
    }

    pub fn keys(&self) -> &KeyBundle {
        &self.keys
    }

    fn save(&self) -> Result<()> {
        match &self.state_path {
            Some(p) => self.state.save(p),
            None => Ok(()),
        }
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, req: &Req) -> Result<Resp> {
        let body = serde_json::to_vec(req).expect("request serializes");
        let reply = self.transport.request("POST", path, &body)?;
        decode(reply)
    }

    /// Builds and uploads the encrypted indexes and files, replacing
    /// whatever the server held. Local counters and the revoked set restart.
    pub fn outsource(&mut self, collection: &Collection) -> Result<Stats> {
        let keywords = collection
            .dictionary
            .iter()
            .map(|w| Keyword::new(w.as_str()))
            .collect::<heapsse_core::Result<Vec<_>>>()?;
        let heap = ModifiedPositionHeap::build(&keywords)?;

        let mut ids: BTreeMap<&str, String> = BTreeMap::new();
        let mut blobs = Vec::with_capacity(collection.files.len());
        for f in &collection.files {
            let id = self.fresh_file_id();
            if ids.insert(f.name.as_str(), id.clone()).is_some() {
                return Err(ClientError::Validation(format!("duplicate file name {:?}", f.name)));
            }
            let ct = self.keys.encrypt(&f.contents, &mut self.rng);
            blobs.push(BlobDoc {
                id,
                data: wire::b64(ct.as_bytes()),
            });
        }

        let in_dictionary: BTreeSet<&str> = collection.dictionary.iter().map(String::as_str).collect();
        let mut postings: BTreeMap<Keyword, Vec<FileId>> = BTreeMap::new();
        for (w, names) in &collection.postings {
            if !in_dictionary.contains(w.as_str()) {
                return Err(ClientError::Validation(format!("posting keyword {w:?} is not in the dictionary")));
            }
            let list = names
                .iter()
                .map(|n| {
                    ids.get(n.as_str())
                        .map(|id| FileId(id.clone()))
                        .ok_or_else(|| ClientError::Validation(format!("posting references unknown file {n:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            postings.insert(Keyword::new(w.as_str())?, list);
        }

        let iw = SecureIndex::encrypt(&heap, &self.keys, &mut self.rng);
        let iwr = SecureIndex::empty(self.keys.gamma());
        let file_index = KeywordFileIndex::build(&postings, &self.keys, &mut self.rng);
        let req = OutsourceRequest {
            iw: IndexDoc::from_index(&iw),
            iwr: IndexDoc::from_index(&iwr),
            file_index: FileIndexDoc::from_index(&file_index),
            blobs,
        };
        let stats: Stats = self.call("/v1/outsource", &req)?;

        self.state.posting_counters = postings
            .iter()
            .filter(|(_, ids)| !ids.is_empty())
            .map(|(w, ids)| (w.to_string(), ids.len() as u64))
            .collect();
        self.state.revoked_keywords.clear();
        self.state.files = ids.into_iter().map(|(name, id)| (id, name.to_string())).collect();
        self.save()?;
        Ok(stats)
    }

    fn fresh_file_id(&mut self) -> String {
        let mut b = [0u8; 8];
        self.rng.fill_bytes(&mut b);
        format!("f{}", hex::encode(b))
    }

    /// Sends the query token for `s` and returns the raw encrypted answer.
    pub fn query_raw(&self, s: &str) -> Result<SubstringQueryResponse> {
        let token = SubstringQueryToken::new(&self.keys, s.as_bytes())?;
        self.call("/v1/query/substring", &SubstringQueryRequest::from_token(&token))
    }

    /// Keywords containing `s`: decrypted main results minus decrypted
    /// revoked results, deduplicated and sorted.
    pub fn suggest(&self, s: &str) -> Result<Vec<Suggestion>> {
        let resp = self.query_raw(s)?;
        let mut live: BTreeMap<String, usize> = BTreeMap::new();
        for w in self.decrypt_matching(&resp.main, s)? {
            *live.entry(w).or_default() += 1;
        }
        for w in self.decrypt_matching(&resp.revoked, s)? {
            live.remove(&w);
        }
        Ok(live
            .into_iter()
            .map(|(keyword, source_count)| Suggestion {
                keyword,
                source_count,
            })
            .collect())
    }

    fn decrypt_matching(&self, outcome: &wire::OutcomeDoc, s: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for ct in outcome.ciphertexts()? {
            let w = String::from_utf8(self.keys.decrypt(&ct)?)
                .map_err(|_| ClientError::Protocol("keyword is not UTF-8".into()))?;
            if w.contains(s) {
                out.push(w);
            }
        }
        Ok(out)
    }

    /// Ids of the files posted under `w`, in posting order.
    pub fn files_for(&self, w: &str) -> Result<Vec<String>> {
        let token = KeywordQueryToken::new(&self.keys, &Keyword::new(w)?);
        let resp: KeywordQueryResponse = self.call(
            "/v1/query/keyword",
            &KeywordQueryRequest {
                kw_key: wire::label_hex(&token.kw_key),
            },
        )?;
        resp.enc_ids
            .iter()
            .map(|b| {
                let ct = heapsse_core::Ciphertext::from_bytes(wire::from_b64(b)?);
                String::from_utf8(self.keys.decrypt(&ct)?)
                    .map_err(|_| ClientError::Protocol("file id is not UTF-8".into()))
            })
            .collect()
    }

    /// Downloads and decrypts one file.
    pub fn fetch_and_decrypt(&self, id: &str) -> Result<Vec<u8>> {
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_') {
            return Err(ClientError::Validation(format!("bad file id {id:?}")));
        }
        let reply = self.transport.request("GET", &format!("/v1/file/{id}"), &[])?;
        if !reply.is_success() {
            return Err(server_error(&reply));
        }
        let ct = heapsse_core::Ciphertext::from_bytes(reply.body);
        Ok(self.keys.decrypt(&ct)?)
    }

    /// Original name of an outsourced file, if this client outsourced it.
    pub fn file_name(&self, id: &str) -> Option<&str> {
        self.state.files.get(id).map(String::as_str)
    }

    pub fn insert_request(&mut self, w: &str) -> Result<InsertRequest> {
        Ok(InsertRequest::new(&self.keys, &Keyword::new(w)?, &mut self.rng))
    }

    /// Adds a keyword to the main index.
    pub fn insert_keyword(&mut self, w: &str) -> Result<UpdateOutcome> {
        if self.state.revoked_keywords.contains(w) {
            return Err(ClientError::RevokedKeyword(w.to_string()));
        }
        self.send_update(UpdateTarget::Main, w)
    }

    /// Adds a keyword to the revocation list so it no longer appears in
    /// suggestions. Deleting an already deleted keyword sends nothing.
    pub fn delete_keyword(&mut self, w: &str) -> Result<UpdateOutcome> {
        if self.state.revoked_keywords.contains(w) {
            Keyword::new(w)?;
            return Ok(UpdateOutcome {
                label_count: 0,
                ciphertext_count: 0,
                nodes_added: 0,
            });
        }
        let out = self.send_update(UpdateTarget::Revocation, w)?;
        self.state.revoked_keywords.insert(w.to_string());
        self.save()?;
        Ok(out)
    }

    fn send_update(&mut self, target: UpdateTarget, w: &str) -> Result<UpdateOutcome> {
        let req = self.insert_request(w)?;
        let resp: UpdateKeywordResponse =
            self.call("/v1/update/keyword", &UpdateKeywordRequest::new(target, &req))?;
        Ok(UpdateOutcome {
            label_count: req.label_count(),
            ciphertext_count: 1,
            nodes_added: resp.nodes_added,
        })
    }

    /// Posts an existing file under `w` in the next free slot. Returns the
    /// slot number.
    pub fn add_posting(&mut self, w: &str, file_id: &str) -> Result<u64> {
        let kw = Keyword::new(w)?;
        let token = KeywordQueryToken::new(&self.keys, &kw);
        let counter = self.state.posting_counters.get(w).copied().unwrap_or(0) + 1;
        let enc = self.keys.encrypt(file_id.as_bytes(), &mut self.rng);
        let _: UpdatePostingResponse = self.call(
            "/v1/update/posting",
            &UpdatePostingRequest::Insert {
                kw_key: wire::label_hex(&token.kw_key),
                counter,
                enc_id: wire::b64(enc.as_bytes()),
            },
        )?;
        self.state.posting_counters.insert(w.to_string(), counter);
        self.save()?;
        Ok(counter)
    }

    /// Revokes the posting in slot `counter` of `w`.
    pub fn delete_posting(&mut self, w: &str, counter: u64) -> Result<()> {
        let kw = Keyword::new(w)?;
        if counter == 0 || counter > self.state.posting_counters.get(w).copied().unwrap_or(0) {
            return Err(ClientError::Validation(format!("keyword {w:?} has no posting slot {counter}")));
        }
        let kw_key = KeywordQueryToken::new(&self.keys, &kw).kw_key;
        let _: UpdatePostingResponse = self.call(
            "/v1/update/posting",
            &UpdatePostingRequest::Delete {
                lookup_key: wire::label_hex(&lookup_key(&kw_key, counter)),
            },
        )?;
        Ok(())
    }

    pub fn stats(&self) -> Result<Stats> {
        decode(self.transport.request("GET", "/v1/stats", &[])?)
    }
}

fn server_error(reply: &wire::Reply) -> ClientError {
    match serde_json::from_slice::<ErrorDoc>(&reply.body) {
        Ok(doc) => ClientError::Server {
            status: reply.status,
            error: doc.error,
            message: doc.message,
        },
        Err(_) => ClientError::Server {
            status: reply.status,
            error: "Unknown".into(),
            message: String::from_utf8_lossy(&reply.body).into_owned(),
        },
    }
}

fn decode<T: DeserializeOwned>(reply: wire::Reply) -> Result<T> {
    if !reply.is_success() {
        return Err(server_error(&reply));
    }
    serde_json::from_slice(&reply.body).map_err(|e| ClientError::Protocol(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_file_roundtrips_with_private_mode() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("client.json");
        let s = Client::init(&p, "http://127.0.0.1:1", 128).unwrap();
        assert_eq!(ClientState::load(&p).unwrap(), s);
        assert!(Client::init(&p, "http://x", 128).is_err());
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            assert_eq!(fs::metadata(&p).unwrap().permissions().mode() & 0o777, 0o600);
        }
    }

    #[test]
    fn postings_come_from_file_words() {
        let dir = tempfile::tempdir().unwrap();
        let dict = dir.path().join("dict.txt");
        fs::write(&dict, "apple\n\nbanana\ncherry\n").unwrap();
        let files = dir.path().join("files");
        fs::create_dir(&files).unwrap();
        fs::write(files.join("a.txt"), "An apple, a banana.").unwrap();
        fs::write(files.join("b.txt"), "(banana) bananas").unwrap();
        let c = Collection::from_paths(&dict, Some(&files)).unwrap();
        assert_eq!(c.dictionary, ["apple", "banana", "cherry"]);
        assert_eq!(c.postings["apple"], ["a.txt"]);
        assert_eq!(c.postings["banana"], ["a.txt", "b.txt"]);
        assert!(!c.postings.contains_key("cherry"));
    }

    #[test]
    fn separator_in_dictionary_file_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let dict = dir.path().join("dict.txt");
        fs::write(&dict, "ok\nba#d\n").unwrap();
        let e = Collection::from_paths(&dict, None).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("line 2"));
    }
}
