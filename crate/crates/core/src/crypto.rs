//! Keyed primitives: HMAC-SHA-256 as the path-label PRF and AES-256-GCM as
//! the randomized cipher for keywords, file ids and file bodies.
//!
//! Label width `gamma` must cover `lambda + 2 * log2(m)` bits for an index
//! of `m` labels so that the expected number of label collisions stays
//! below `2^-lambda`. Widths are rounded up to whole SHA-256 blocks; wider
//! labels are produced by counter-mode expansion.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use hmac::{Hmac, Mac};
use rand_core::{CryptoRng, RngCore};
use sha2::Sha256;

use crate::error::{Error, Result};

/// Output width of one HMAC-SHA-256 block, in bits.
pub const PRF_BLOCK_BITS: u32 = 256;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const SKE_KEY_LEN: usize = 32;

const KEY_FILE_MAGIC: &[u8; 4] = b"HSKY";
const KEY_FILE_VERSION: u8 = 1;

/// Fixed-width PRF output. Used for trie path labels, query and insert
/// tokens, and lookup keys in the file index.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathLabel(Box<[u8]>);

impl PathLabel {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        PathLabel(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn bits(&self) -> u32 {
        self.0.len() as u32 * 8
    }
}

impl fmt::Debug for PathLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PathLabel(")?;
        for b in self.0.iter().take(6) {
            write!(f, "{b:02x}")?;
        }
        f.write_str("..)")
    }
}

/// Randomized authenticated ciphertext: `nonce || body || tag`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext(Vec<u8>);

impl Ciphertext {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Ciphertext(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes)", self.0.len())
    }
}

/// `H_key(message)` truncated or expanded to `gamma_bits`.
///
/// Block 0 is `HMAC(key, message)`; block `j > 0` is
/// `HMAC(key, message || be32(j))`.
pub fn prf(key: &[u8], message: &[u8], gamma_bits: u32) -> PathLabel {
    let out_len = (gamma_bits as usize).div_ceil(8);
    let mut out = Vec::with_capacity(out_len.next_multiple_of(32));
    let mut block = 0u32;
    while out.len() < out_len {
        let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac takes any key length");
        mac.update(message);
        if block > 0 {
            mac.update(&block.to_be_bytes());
        }
        out.extend_from_slice(&mac.finalize().into_bytes());
        block += 1;
    }
    out.truncate(out_len);
    PathLabel(out.into_boxed_slice())
}

pub fn ske_encrypt<R: RngCore + CryptoRng>(
    key: &[u8; SKE_KEY_LEN],
    plaintext: &[u8],
    rng: &mut R,
) -> Ciphertext {
    let cipher = Aes256Gcm::new(key.into());
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let body = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("in-memory encryption does not fail");
    let mut out = Vec::with_capacity(NONCE_LEN + body.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&body);
    Ciphertext(out)
}

pub fn ske_decrypt(key: &[u8; SKE_KEY_LEN], ciphertext: &Ciphertext) -> Result<Vec<u8>> {
    let bytes = ciphertext.as_bytes();
    if bytes.len() < NONCE_LEN + TAG_LEN {
        return Err(Error::DecryptionFailure);
    }
    let (nonce, body) = bytes.split_at(NONCE_LEN);
    Aes256Gcm::new(key.into())
        .decrypt(Nonce::from_slice(nonce), body)
        .map_err(|_| Error::DecryptionFailure)
}

/// Smallest label width satisfying the collision bound for `index_size`
/// labels, rounded up to whole PRF blocks.
pub fn gamma_for(lambda: u32, index_size: u64) -> u32 {
    let log_m = if index_size <= 1 {
        0
    } else {
        64 - (index_size - 1).leading_zeros()
    };
    (lambda + 2 * log_m).next_multiple_of(PRF_BLOCK_BITS)
}

/// Client-held secrets. Never leaves the key holder.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyBundle {
    lambda: u32,
    gamma: u32,
    k1: Vec<u8>,
    k2: [u8; SKE_KEY_LEN],
    k3: Vec<u8>,
}

impl fmt::Debug for KeyBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyBundle")
            .field("lambda", &self.lambda)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl KeyBundle {
    pub fn generate<R: RngCore + CryptoRng>(
        lambda: u32,
        expected_index_size: u64,
        rng: &mut R,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let klen = lambda as usize / 8;
        let mut k1 = vec![0u8; klen];
        let mut k2 = [0u8; SKE_KEY_LEN];
        let mut k3 = vec![0u8; klen];
        rng.fill_bytes(&mut k1);
        rng.fill_bytes(&mut k2);
        rng.fill_bytes(&mut k3);
        Ok(KeyBundle {
            lambda,
            gamma: gamma_for(lambda, expected_index_size),
            k1,
            k2,
            k3,
        })
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    /// Path label `H_k1(message)`.
    pub fn label(&self, message: &[u8]) -> PathLabel {
        prf(&self.k1, message, self.gamma)
    }

    /// Per-keyword key for the file index, `H_k3(keyword)`.
    pub fn keyword_key(&self, keyword: &[u8]) -> PathLabel {
        prf(&self.k3, keyword, self.gamma)
    }

    pub fn encrypt<R: RngCore + CryptoRng>(&self, plaintext: &[u8], rng: &mut R) -> Ciphertext {
        ske_encrypt(&self.k2, plaintext, rng)
    }

    pub fn decrypt(&self, ciphertext: &Ciphertext) -> Result<Vec<u8>> {
        ske_decrypt(&self.k2, ciphertext)
    }

    /// Key file layout: `"HSKY" | version u8 | lambda u16 | gamma u16 | k1 | k2 | k3`,
    /// integers big-endian, `k1` and `k3` of `lambda / 8` bytes, `k2` of 32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 2 * self.k1.len() + SKE_KEY_LEN);
        out.extend_from_slice(KEY_FILE_MAGIC);
        out.push(KEY_FILE_VERSION);
        out.extend_from_slice(&(self.lambda as u16).to_be_bytes());
        out.extend_from_slice(&(self.gamma as u16).to_be_bytes());
        out.extend_from_slice(&self.k1);
        out.extend_from_slice(&self.k2);
        out.extend_from_slice(&self.k3);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = bytes.get(..9).ok_or(Error::KeyFile("truncated header"))?;
        if &header[..4] != KEY_FILE_MAGIC {
            return Err(Error::KeyFile("bad magic"));
        }
        if header[4] != KEY_FILE_VERSION {
            return Err(Error::KeyFile("unsupported version"));
        }
        let lambda = u16::from_be_bytes([header[5], header[6]]) as u32;
        let gamma = u16::from_be_bytes([header[7], header[8]]) as u32;
        check_lambda(lambda).map_err(|_| Error::KeyFile("bad lambda"))?;
        if gamma < lambda || !gamma.is_multiple_of(PRF_BLOCK_BITS) {
            return Err(Error::KeyFile("bad gamma"));
        }
        let klen = lambda as usize / 8;
        let body = &bytes[9..];
        if body.len() != 2 * klen + SKE_KEY_LEN {
            return Err(Error::KeyFile("wrong key length"));
        }
        let (k1, rest) = body.split_at(klen);
        let (k2, k3) = rest.split_at(SKE_KEY_LEN);
        Ok(KeyBundle {
            lambda,
            gamma,
            k1: k1.to_vec(),
            k2: k2.try_into().unwrap(),
            k3: k3.to_vec(),
        })
    }
}

fn check_lambda(lambda: u32) -> Result<()> {
    match lambda {
        128 | 256 => Ok(()),
        l if l < 128 => Err(Error::WeakParameter(l)),
        l => Err(Error::UnsupportedParameter(l)),
    }
}
