//! Client-side token generation for substring queries and keyword
//! insertion. Only the key holder can produce these.

use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::crypto::{Ciphertext, KeyBundle, PathLabel, NONCE_LEN, TAG_LEN};
use crate::dictionary::{validate_query, Keyword, SEPARATOR};
use crate::error::{Error, Result};

/// Length of the random terminator value hashed into the last label of
/// each suffix insert token.
const TERMINATOR_LEN: usize = 32;

/// `[H(s_1), H(s_1 s_2), ..., H(s_1 ... s_l)]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstringQueryToken {
    pub labels: Vec<PathLabel>,
}

impl SubstringQueryToken {
    pub fn new(keys: &KeyBundle, s: &[u8]) -> Result<Self> {
        validate_query(s)?;
        Ok(SubstringQueryToken {
            labels: (1..=s.len()).map(|i| keys.label(&s[..i])).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Structural check done by the server before walking.
    pub fn validate(&self, gamma: u32) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::MalformedRequest("empty query token".into()));
        }
        check_widths(&self.labels, gamma)
    }
}

/// Labels for one suffix `c_i ... c_z` of an inserted keyword:
/// `H(c_i..c_j)` for `j = i..z`, then `H(c_i..c_z || #)`, then `H(r_i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixInsertToken {
    pub labels: Vec<PathLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertRequest {
    pub enc_keyword: Ciphertext,
    /// One token per suffix, longest suffix first.
    pub suffix_tokens: Vec<SuffixInsertToken>,
}

impl InsertRequest {
    pub fn new<R: RngCore + CryptoRng>(keys: &KeyBundle, keyword: &Keyword, rng: &mut R) -> Self {
        let w = keyword.as_bytes();
        let z = w.len();
        let mut suffix_tokens = Vec::with_capacity(z);
        let mut buf = Vec::with_capacity(z + 1);
        for i in 0..z {
            let mut labels = Vec::with_capacity(z - i + 2);
            buf.clear();
            for &c in &w[i..] {
                buf.push(c);
                labels.push(keys.label(&buf));
            }
            buf.push(SEPARATOR);
            labels.push(keys.label(&buf));
            let mut r = [0u8; TERMINATOR_LEN];
            rng.fill_bytes(&mut r);
            labels.push(keys.label(&r));
            suffix_tokens.push(SuffixInsertToken { labels });
        }
        InsertRequest {
            enc_keyword: keys.encrypt(w, rng),
            suffix_tokens,
        }
    }

    /// Total number of labels, `z(z+5)/2` for a well-formed request.
    pub fn label_count(&self) -> usize {
        self.suffix_tokens.iter().map(|t| t.labels.len()).sum()
    }

    /// Checks the shape a server can verify without keys: `z >= 1` suffix
    /// tokens where token `k` (0-based) carries `z - k + 2` labels, all of
    /// width `gamma`, and a plausible ciphertext.
    pub fn validate(&self, gamma: u32) -> Result<()> {
        let z = self.suffix_tokens.len();
        if z == 0 {
            return Err(Error::MalformedRequest("no suffix tokens".into()));
        }
        if self.enc_keyword.as_bytes().len() <= NONCE_LEN + TAG_LEN {
            return Err(Error::MalformedRequest("keyword ciphertext too short".into()));
        }
        for (k, t) in self.suffix_tokens.iter().enumerate() {
            if t.labels.len() != z - k + 2 {
                return Err(Error::MalformedRequest(alloc::format!(
                    "suffix token {k} has {} labels, expected {}",
                    t.labels.len(),
                    z - k + 2
                )));
            }
            check_widths(&t.labels, gamma)?;
        }
        Ok(())
    }
}

fn check_widths(labels: &[PathLabel], gamma: u32) -> Result<()> {
    match labels.iter().find(|l| l.bits() != gamma) {
        Some(l) => Err(Error::MalformedRequest(alloc::format!(
            "label width {} does not match index width {gamma}",
            l.bits()
        ))),
        None => Ok(()),
    }
}
