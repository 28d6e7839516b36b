//! Substring-of-keyword search over an encrypted position heap.
//!
//! This crate holds the algorithmic core and is `no_std` (it needs `alloc`):
//!
//! * [`position_heap`]: position heap over one string, with candidate
//!   search and filtering.
//! * [`dictionary`]: keyword dictionaries and the modified heap over the
//!   `#`-joined dictionary string.
//! * [`crypto`]: HMAC-SHA-256 PRF, AES-256-GCM, key bundles and the key file.
//! * [`token`]: query tokens and insert requests built by the key holder.
//! * [`secure_index`]: the encrypted heap, its token walk and insertion.
//! * [`file_index`]: the encrypted keyword-to-file inverted index.
//!
//! Randomness is always passed in by the caller.

#![no_std]
extern crate alloc;

pub mod crypto;
pub mod dictionary;
pub mod error;
pub mod file_index;
pub mod position_heap;
pub mod secure_index;
pub mod token;
mod trie;

pub use crypto::{Ciphertext, KeyBundle, PathLabel};
pub use dictionary::{filter_candidates, Keyword, ModifiedPositionHeap, SEPARATOR};
pub use error::{Error, Result};
pub use file_index::{FileId, KeywordFileIndex, KeywordQueryToken};
pub use position_heap::PositionHeap;
pub use secure_index::{EncryptedSearchOutcome, InsertReport, NodeRecord, SecureIndex};
pub use token::{InsertRequest, SubstringQueryToken, SuffixInsertToken};
pub use trie::NodeId;
