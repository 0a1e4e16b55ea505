//! Sealed, epoch-stamped images of the shadow state.
//!
//! ```text
//! image := "BESFS\0v1" epoch:u64 len:u64 state[len] tag[16]
//! ```
//!
//! `state` is the canonical encoding from [`crate::codec`]. The tag is an
//! AES-256-GCM authenticator over everything before it (empty plaintext,
//! the prefix as associated data), under nonce `ff ff ff ff || epoch`. Page
//! nonces start with a page id below `u32::MAX`, so the two never collide.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Nonce, Tag};

use crate::codec::{decode_state, encode_state, DecodeError};
use crate::error::ViolationKind;
use crate::page::SealingKey;
use crate::state::{check_good, FsState, GoodViolation};

pub const MAGIC: [u8; 8] = *b"BESFS\0v1";
const HEADER: usize = 8 + 8 + 8;
const TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error("no state image available")]
    Missing,
    #[error("image is malformed")]
    Malformed,
    #[error("image does not authenticate")]
    Tag,
    #[error("image epoch {found} but trusted epoch is {expected}")]
    Epoch { found: u64, expected: u64 },
    #[error("image does not decode: {0}")]
    Decode(DecodeError),
    #[error("decoded state is not good: {0}")]
    NotGood(GoodViolation),
}

impl LoadError {
    pub fn kind(&self) -> ViolationKind {
        match self {
            LoadError::Missing | LoadError::Epoch { .. } => ViolationKind::Rollback,
            _ => ViolationKind::ContentTamper,
        }
    }
}

fn state_nonce(epoch: u64) -> [u8; 12] {
    let mut n = [0xFF; 12];
    n[4..].copy_from_slice(&epoch.to_be_bytes());
    n
}

fn authenticate(prefix: &[u8], epoch: u64, key: &SealingKey) -> [u8; 16] {
    key.cipher()
        .encrypt_in_place_detached(Nonce::from_slice(&state_nonce(epoch)), prefix, &mut [])
        .expect("empty plaintext")
        .into()
}

pub fn save_state(s: &FsState, epoch: u64, key: &SealingKey) -> Vec<u8> {
    let body = encode_state(s);
    let mut image = Vec::with_capacity(HEADER + body.len() + TAG_LEN);
    image.extend_from_slice(&MAGIC);
    image.extend_from_slice(&epoch.to_be_bytes());
    image.extend_from_slice(&(body.len() as u64).to_be_bytes());
    image.extend_from_slice(&body);
    let tag = authenticate(&image, epoch, key);
    image.extend_from_slice(&tag);
    image
}

/// Epoch recorded in an image header, without verifying anything.
pub fn image_epoch(image: &[u8]) -> Option<u64> {
    Some(u64::from_be_bytes(image.get(8..16)?.try_into().ok()?))
}

/// Verifies the tag, then the epoch, then the good-state predicate.
pub fn load_state(image: &[u8], expected_epoch: u64, key: &SealingKey) -> Result<FsState, LoadError> {
    if image.len() < HEADER + TAG_LEN || image[..8] != MAGIC {
        return Err(LoadError::Malformed);
    }
    let (prefix, tag) = image.split_at(image.len() - TAG_LEN);
    let epoch = image_epoch(image).ok_or(LoadError::Malformed)?;
    key.cipher()
        .decrypt_in_place_detached(
            Nonce::from_slice(&state_nonce(epoch)),
            prefix,
            &mut [],
            Tag::from_slice(tag),
        )
        .map_err(|_| LoadError::Tag)?;
    if epoch != expected_epoch {
        return Err(LoadError::Epoch { found: epoch, expected: expected_epoch });
    }
    let len = u64::from_be_bytes(prefix[16..24].try_into().expect("8 bytes"));
    let body = &prefix[HEADER..];
    if body.len() as u64 != len {
        return Err(LoadError::Malformed);
    }
    let s = decode_state(body).map_err(LoadError::Decode)?;
    check_good(&s).map_err(LoadError::NotGood)?;
    Ok(s)
}

/// Trusted monotonic epoch storage.
pub trait TrustedEpoch: Send {
    fn current(&self) -> u64;
    fn advance(&mut self, to: u64) -> io::Result<()>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryEpoch(u64);

impl MemoryEpoch {
    pub fn new(epoch: u64) -> Self {
        MemoryEpoch(epoch)
    }
}

impl TrustedEpoch for MemoryEpoch {
    fn current(&self) -> u64 {
        self.0
    }

    fn advance(&mut self, to: u64) -> io::Result<()> {
        self.0 = to;
        Ok(())
    }
}

/// Epoch kept as decimal text in a local sidecar file (`epoch.trusted`).
#[derive(Debug, Clone)]
pub struct FileEpoch {
    path: PathBuf,
    value: u64,
}

impl FileEpoch {
    pub const FILE_NAME: &'static str = "epoch.trusted";

    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let path = dir.as_ref().join(Self::FILE_NAME);
        let value = match fs::read_to_string(&path) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e),
        };
        Ok(FileEpoch { path, value })
    }
}

impl TrustedEpoch for FileEpoch {
    fn current(&self) -> u64 {
        self.value
    }

    fn advance(&mut self, to: u64) -> io::Result<()> {
        fs::write(&self.path, format!("{to}\n"))?;
        self.value = to;
        Ok(())
    }
}
