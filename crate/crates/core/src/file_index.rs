//! Encrypted keyword-to-file inverted index.
//!
//! Each keyword `w` gets a per-keyword key `kw = H_k3(w)`. Its `c`-th
//! posting is stored at lookup key `H_kw(be64(c))` as an encrypted file
//! id, counters starting at 1. Lookups probe consecutive counters until the
//! first missing slot; deletion marks a lookup key as revoked.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::crypto::{prf, Ciphertext, KeyBundle, PathLabel};
use crate::dictionary::Keyword;
use crate::error::{Error, Result};

/// Opaque identifier of an encrypted file blob.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FileId(pub String);

impl FileId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl core::fmt::Display for FileId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.0)
    }
}

/// What the server receives for a keyword-to-file query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordQueryToken {
    pub kw_key: PathLabel,
}

impl KeywordQueryToken {
    pub fn new(keys: &KeyBundle, keyword: &Keyword) -> Self {
        KeywordQueryToken {
            kw_key: keys.keyword_key(keyword.as_bytes()),
        }
    }

    /// Lookup key of the `counter`-th posting (1-based).
    pub fn slot(&self, counter: u64) -> PathLabel {
        lookup_key(&self.kw_key, counter)
    }
}

pub fn lookup_key(kw_key: &PathLabel, counter: u64) -> PathLabel {
    prf(kw_key.as_bytes(), &counter.to_be_bytes(), kw_key.bits())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordFileIndex {
    gamma: u32,
    entries: BTreeMap<PathLabel, Ciphertext>,
    revoked: BTreeSet<PathLabel>,
}

impl KeywordFileIndex {
    pub fn empty(gamma: u32) -> Self {
        KeywordFileIndex {
            gamma,
            entries: BTreeMap::new(),
            revoked: BTreeSet::new(),
        }
    }

    pub fn build<R: RngCore + CryptoRng>(
        postings: &BTreeMap<Keyword, Vec<FileId>>,
        keys: &KeyBundle,
        rng: &mut R,
    ) -> Self {
        let mut index = KeywordFileIndex::empty(keys.gamma());
        for (w, ids) in postings {
            let token = KeywordQueryToken::new(keys, w);
            for (c, id) in (1u64..).zip(ids) {
                let prev = index
                    .entries
                    .insert(token.slot(c), keys.encrypt(id.0.as_bytes(), rng));
                debug_assert!(prev.is_none(), "lookup key collision");
            }
        }
        index
    }

    /// Rebuilds from persisted parts, checking label widths.
    pub fn from_parts(
        gamma: u32,
        entries: BTreeMap<PathLabel, Ciphertext>,
        revoked: BTreeSet<PathLabel>,
    ) -> Result<Self> {
        if let Some(k) = entries.keys().chain(revoked.iter()).find(|k| k.bits() != gamma) {
            return Err(Error::NodeTable(alloc::format!(
                "file index key width {} does not match {gamma}",
                k.bits()
            )));
        }
        Ok(KeywordFileIndex {
            gamma,
            entries,
            revoked,
        })
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<PathLabel, Ciphertext> {
        &self.entries
    }

    pub fn revoked(&self) -> &BTreeSet<PathLabel> {
        &self.revoked
    }

    /// Encrypted file ids for a keyword in counter order, revoked slots
    /// skipped.
    pub fn lookup(&self, token: &KeywordQueryToken) -> Vec<Ciphertext> {
        if token.kw_key.bits() != self.gamma {
            return Vec::new();
        }
        let mut out = Vec::new();
        for c in 1u64.. {
            let key = token.slot(c);
            match self.entries.get(&key) {
                Some(ct) if !self.revoked.contains(&key) => out.push(ct.clone()),
                Some(_) => {}
                None => break,
            }
        }
        out
    }

    /// Stores a posting at slot `counter`. Slots must be filled in order.
    pub fn insert_posting(&mut self, kw_key: &PathLabel, counter: u64, enc_id: Ciphertext) -> Result<()> {
        if kw_key.bits() != self.gamma || counter == 0 {
            return Err(Error::MalformedRequest("bad posting key or counter".into()));
        }
        let key = lookup_key(kw_key, counter);
        if self.entries.contains_key(&key) {
            return Err(Error::CounterConflict(counter));
        }
        if counter > 1 && !self.entries.contains_key(&lookup_key(kw_key, counter - 1)) {
            return Err(Error::CounterGap(counter));
        }
        self.entries.insert(key, enc_id);
        Ok(())
    }

    /// Logically deletes the posting stored under `key`. Unknown keys are
    /// recorded as well.
    pub fn delete_posting(&mut self, key: PathLabel) -> Result<()> {
        if key.bits() != self.gamma {
            return Err(Error::MalformedRequest("bad lookup key width".into()));
        }
        self.revoked.insert(key);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::rngs::OsRng;

    fn setup() -> (KeyBundle, Keyword, KeywordFileIndex) {
        let k = KeyBundle::generate(128, 100, &mut OsRng).unwrap();
        let w = Keyword::try_from("bbab").unwrap();
        let postings = [(w.clone(), vec![FileId("f1".into()), FileId("f2".into())])]
            .into_iter()
            .collect();
        let idx = KeywordFileIndex::build(&postings, &k, &mut OsRng);
        (k, w, idx)
    }

    fn ids(k: &KeyBundle, cts: Vec<Ciphertext>) -> Vec<String> {
        cts.iter()
            .map(|c| String::from_utf8(k.decrypt(c).unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn lookup_roundtrip() {
        let (k, w, idx) = setup();
        assert_eq!(idx.len(), 2);
        let got = idx.lookup(&KeywordQueryToken::new(&k, &w));
        assert_eq!(ids(&k, got), vec!["f1", "f2"]);
        let other = Keyword::try_from("zz").unwrap();
        assert!(idx.lookup(&KeywordQueryToken::new(&k, &other)).is_empty());
    }

    #[test]
    fn insert_and_delete() {
        let (k, w, mut idx) = setup();
        let t = KeywordQueryToken::new(&k, &w);
        idx.insert_posting(&t.kw_key, 3, k.encrypt(b"f3", &mut OsRng)).unwrap();
        assert_eq!(ids(&k, idx.lookup(&t)), vec!["f1", "f2", "f3"]);
        assert_eq!(
            idx.insert_posting(&t.kw_key, 3, k.encrypt(b"f4", &mut OsRng)),
            Err(Error::CounterConflict(3))
        );
        assert_eq!(
            idx.insert_posting(&t.kw_key, 5, k.encrypt(b"f4", &mut OsRng)),
            Err(Error::CounterGap(5))
        );
        idx.delete_posting(t.slot(1)).unwrap();
        assert_eq!(ids(&k, idx.lookup(&t)), vec!["f2", "f3"]);
    }

    #[test]
    fn deleting_unknown_key_is_harmless() {
        let (k, w, mut idx) = setup();
        idx.delete_posting(prf(b"x", b"y", 256)).unwrap();
        assert_eq!(idx.revoked().len(), 1);
        assert_eq!(idx.lookup(&KeywordQueryToken::new(&k, &w)).len(), 2);
    }

    #[test]
    fn shared_file_ids_do_not_collide() {
        let k = KeyBundle::generate(128, 100, &mut OsRng).unwrap();
        let f = FileId("shared".into());
        let postings: BTreeMap<_, _> = ["ab", "ba", "abc"]
            .iter()
            .map(|w| (Keyword::try_from(*w).unwrap(), vec![f.clone(), FileId("x".into())]))
            .collect();
        let idx = KeywordFileIndex::build(&postings, &k, &mut OsRng);
        assert_eq!(idx.len(), 6);
    }
}
