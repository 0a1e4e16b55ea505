//! Sealed 4096-byte pages.
//!
//! Layout of a sealed page:
//!
//! | offset | len  | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4000 | content ciphertext                     |
//! | 4000   | 12   | nonce                                  |
//! | 4012   | 16   | AES-256-GCM tag                        |
//! | 4028   | 8    | owner file id (big-endian)             |
//! | 4036   | 8    | page id (big-endian)                   |
//! | 4044   | 8    | version (big-endian)                   |
//! | 4052   | 44   | reserved, zero                         |
//!
//! Bytes `4028..4096` are the associated data, so owner, page id, version and
//! the reserved area are all authenticated. The nonce is the page id as a
//! 32-bit big-endian integer followed by the 64-bit version. Versions only
//! grow per page slot, so a nonce is never reused under one key.

use std::fmt;

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes256Gcm, Key, Nonce, Tag};

use crate::state::{Fid, PageId, PageMeta, CONTENT_BYTES, PAGE_SIZE};

pub const NONCE_OFFSET: usize = CONTENT_BYTES;
pub const TAG_OFFSET: usize = NONCE_OFFSET + 12;
pub const OWNER_OFFSET: usize = TAG_OFFSET + 16;
pub const PAGE_ID_OFFSET: usize = OWNER_OFFSET + 8;
pub const VERSION_OFFSET: usize = PAGE_ID_OFFSET + 8;
pub const RESERVED_OFFSET: usize = VERSION_OFFSET + 8;
pub const RESERVED_BYTES: usize = PAGE_SIZE - RESERVED_OFFSET;

/// Symmetric key for pages and state images. Never leaves the monitor.
#[derive(Clone)]
pub struct SealingKey {
    cipher: Aes256Gcm,
}

impl SealingKey {
    pub fn new(bytes: [u8; 32]) -> Self {
        SealingKey { cipher: Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&bytes)) }
    }

    pub(crate) fn cipher(&self) -> &Aes256Gcm {
        &self.cipher
    }
}

impl fmt::Debug for SealingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SealingKey(..)")
    }
}

/// Exactly [`PAGE_SIZE`] bytes as stored on the backend.
#[derive(Clone, PartialEq, Eq)]
pub struct SealedPage(Box<[u8; PAGE_SIZE]>);

impl SealedPage {
    pub fn zeroed() -> Self {
        SealedPage(Box::new([0; PAGE_SIZE]))
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; PAGE_SIZE] = bytes.try_into().ok()?;
        Some(SealedPage(Box::new(arr)))
    }

    pub fn as_bytes(&self) -> &[u8; PAGE_SIZE] {
        &self.0
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8; PAGE_SIZE] {
        &mut self.0
    }

    pub fn content(&self) -> &[u8] {
        &self.0[..CONTENT_BYTES]
    }

    fn field(&self, offset: usize) -> u64 {
        u64::from_be_bytes(self.0[offset..offset + 8].try_into().expect("8 bytes"))
    }

    pub fn owner(&self) -> Fid {
        Fid(self.field(OWNER_OFFSET))
    }

    pub fn page_id(&self) -> PageId {
        PageId(self.field(PAGE_ID_OFFSET))
    }

    pub fn version(&self) -> u64 {
        self.field(VERSION_OFFSET)
    }

    pub fn tag(&self) -> [u8; 16] {
        self.0[TAG_OFFSET..TAG_OFFSET + 16].try_into().expect("16 bytes")
    }

    /// Writes owner, page id and version into the metadata area and zeroes
    /// the reserved bytes.
    pub fn set_header(&mut self, owner: Fid, pid: PageId, version: u64) {
        self.0[OWNER_OFFSET..OWNER_OFFSET + 8].copy_from_slice(&owner.0.to_be_bytes());
        self.0[PAGE_ID_OFFSET..PAGE_ID_OFFSET + 8].copy_from_slice(&pid.0.to_be_bytes());
        self.0[VERSION_OFFSET..VERSION_OFFSET + 8].copy_from_slice(&version.to_be_bytes());
        self.0[RESERVED_OFFSET..].fill(0);
    }
}

impl fmt::Debug for SealedPage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SealedPage")
            .field("owner", &self.owner())
            .field("page_id", &self.page_id())
            .field("version", &self.version())
            .finish_non_exhaustive()
    }
}

/// Which check rejected a page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum IntegrityFailure {
    #[error("authentication tag mismatch")]
    Tag,
    #[error("page belongs to another file")]
    Owner,
    #[error("page id mismatch")]
    PageId,
    #[error("stale or future page version")]
    Version,
}

/// Deterministic per-(page, version) nonce.
pub fn page_nonce(pid: PageId, version: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[..4].copy_from_slice(&(pid.0 as u32).to_be_bytes());
    n[4..].copy_from_slice(&version.to_be_bytes());
    n
}

/// Encrypts `content` into a fresh page. Returns the page and its tag, which
/// the caller records in the trusted page map.
pub fn seal_page(
    content: &[u8; CONTENT_BYTES],
    owner: Fid,
    pid: PageId,
    version: u64,
    key: &SealingKey,
) -> (SealedPage, [u8; 16]) {
    let mut page = SealedPage::zeroed();
    page.set_header(owner, pid, version);
    let nonce = page_nonce(pid, version);
    page.0[NONCE_OFFSET..TAG_OFFSET].copy_from_slice(&nonce);
    let (body, meta) = page.0.split_at_mut(CONTENT_BYTES);
    body.copy_from_slice(content);
    let ad = &meta[OWNER_OFFSET - CONTENT_BYTES..];
    let tag = key
        .cipher()
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), ad, body)
        .expect("AES-GCM accepts 4000-byte messages");
    let tag: [u8; 16] = tag.into();
    page.0[TAG_OFFSET..OWNER_OFFSET].copy_from_slice(&tag);
    (page, tag)
}

/// Verifies `page` against the trusted entry `expected` and decrypts it.
pub fn unseal_page(
    page: &SealedPage,
    expected: &PageMeta,
    key: &SealingKey,
) -> Result<Box<[u8; CONTENT_BYTES]>, IntegrityFailure> {
    if Some(page.owner()) != expected.owner {
        return Err(IntegrityFailure::Owner);
    }
    if page.page_id() != expected.page_id {
        return Err(IntegrityFailure::PageId);
    }
    if page.version() != expected.version {
        return Err(IntegrityFailure::Version);
    }
    let nonce = page_nonce(expected.page_id, expected.version);
    if page.0[NONCE_OFFSET..TAG_OFFSET] != nonce || page.tag() != expected.tag {
        return Err(IntegrityFailure::Tag);
    }
    let mut body: Box<[u8; CONTENT_BYTES]> =
        Box::new(page.0[..CONTENT_BYTES].try_into().expect("content slice"));
    key.cipher()
        .decrypt_in_place_detached(
            Nonce::from_slice(&nonce),
            &page.0[OWNER_OFFSET..],
            body.as_mut_slice(),
            Tag::from_slice(&expected.tag),
        )
        .map_err(|_| IntegrityFailure::Tag)?;
    Ok(body)
}

/// True iff every byte is zero (vacuously true for an empty buffer).
pub fn verify_zeroed(buf: &[u8]) -> bool {
    buf.iter().all(|&b| b == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> SealingKey {
        SealingKey::new([7; 32])
    }

    fn meta(owner: u64, pid: u64, version: u64, tag: [u8; 16]) -> PageMeta {
        PageMeta { owner: Some(Fid(owner)), page_id: PageId(pid), version, tag }
    }

    fn content(seed: u8) -> [u8; CONTENT_BYTES] {
        std::array::from_fn(|i| (i as u8).wrapping_mul(31).wrapping_add(seed))
    }

    #[test]
    fn field_offsets_cover_the_page() {
        assert_eq!(NONCE_OFFSET, 4000);
        assert_eq!(TAG_OFFSET, 4012);
        assert_eq!(OWNER_OFFSET, 4028);
        assert_eq!(PAGE_ID_OFFSET, 4036);
        assert_eq!(VERSION_OFFSET, 4044);
        assert_eq!(RESERVED_OFFSET, 4052);
        assert_eq!(RESERVED_BYTES, 44);
    }

    #[test]
    fn round_trip() {
        let c = content(1);
        let (page, tag) = seal_page(&c, Fid(3), PageId(9), 2, &key());
        let out = unseal_page(&page, &meta(3, 9, 2, tag), &key()).unwrap();
        assert_eq!(out.as_slice(), c.as_slice());
        assert_ne!(page.content(), c.as_slice());
    }

    #[test]
    fn versions_change_ciphertext() {
        let c = content(0);
        let (a, _) = seal_page(&c, Fid(1), PageId(1), 1, &key());
        let (b, _) = seal_page(&c, Fid(1), PageId(1), 2, &key());
        assert_ne!(a.content(), b.content());
    }

    #[test]
    fn stale_version_rejected() {
        let c = content(0);
        let (old, _) = seal_page(&c, Fid(1), PageId(1), 1, &key());
        let (_, new_tag) = seal_page(&c, Fid(1), PageId(1), 2, &key());
        assert_eq!(
            unseal_page(&old, &meta(1, 1, 2, new_tag), &key()),
            Err(IntegrityFailure::Version)
        );
    }

    #[test]
    fn other_files_page_rejected() {
        let (page, tag) = seal_page(&content(0), Fid(1), PageId(4), 1, &key());
        assert_eq!(unseal_page(&page, &meta(2, 4, 1, tag), &key()), Err(IntegrityFailure::Owner));
        assert_eq!(unseal_page(&page, &meta(1, 5, 1, tag), &key()), Err(IntegrityFailure::PageId));
    }

    #[test]
    fn wrong_key_rejected() {
        let (page, tag) = seal_page(&content(0), Fid(1), PageId(4), 1, &key());
        let other = SealingKey::new([8; 32]);
        assert_eq!(unseal_page(&page, &meta(1, 4, 1, tag), &other), Err(IntegrityFailure::Tag));
    }

    #[test]
    fn reserved_bytes_are_authenticated() {
        let (mut page, tag) = seal_page(&content(0), Fid(1), PageId(4), 1, &key());
        page.as_bytes_mut()[RESERVED_OFFSET + 5] ^= 1;
        assert_eq!(unseal_page(&page, &meta(1, 4, 1, tag), &key()), Err(IntegrityFailure::Tag));
    }

    #[test]
    fn zero_check() {
        assert!(verify_zeroed(&[0; 4096]));
        assert!(verify_zeroed(&[]));
        for off in [0, 8, 4095] {
            let mut b = [0u8; 4096];
            b[off] = 1;
            assert!(!verify_zeroed(&b));
        }
    }
}
