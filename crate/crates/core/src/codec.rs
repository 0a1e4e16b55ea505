//! Canonical binary encoding of [`FsState`].
//!
//! All integers are u64 big-endian, booleans are one byte 0/1, strings and
//! byte strings are a u64 length followed by the bytes. Maps are written in
//! ascending key order and the decoder rejects anything else, so every byte
//! string that decodes re-encodes to itself.
//!
//! ```text
//! state   := tree fmap dmap handles mmaps pool anon next_fid next_did next_addr
//! tree    := 0x00 fid | 0x01 did n tree*n
//! fmap    := n (fid name perm size m pid*m)*n
//! dmap    := n (did name perm size)*n
//! handles := n (fid cursor)*n
//! mmaps   := n (start length host_addr)*n
//! pool    := capacity n (owner? version tag[16])*n      slot i has page id i
//! owner?  := 0x00 | 0x01 fid
//! anon    := n (start bytes)*n
//! perm    := one byte, bit0 read, bit1 write, bit2 execute
//! ```

use std::collections::BTreeMap;

use crate::state::{
    DData, Did, FData, Fid, FsState, MmapHandle, OpenHandle, PageId, PageMeta, PagePool,
    Permission, Tree,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("invalid tag byte {0:#04x}")]
    BadTag(u8),
    #[error("string is not UTF-8")]
    BadUtf8,
    #[error("map keys not strictly ascending")]
    Unordered,
    #[error("inconsistent page pool")]
    BadPool,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("length {0} out of range")]
    Length(u64),
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }
    fn perm(&mut self, p: Permission) {
        self.u8(p.read as u8 | (p.write as u8) << 1 | (p.execute as u8) << 2);
    }
    fn tree(&mut self, t: &Tree) {
        match t {
            Tree::File(f) => {
                self.u8(0);
                self.u64(f.0);
            }
            Tree::Dir(d, children) => {
                self.u8(1);
                self.u64(d.0);
                self.u64(children.len() as u64);
                for c in children {
                    self.tree(c);
                }
            }
        }
    }
}

pub fn encode_state(s: &FsState) -> Vec<u8> {
    let mut w = Writer::default();
    w.tree(&s.layout);
    w.u64(s.fmap.len() as u64);
    for (fid, f) in &s.fmap {
        w.u64(fid.0);
        w.bytes(f.name.as_bytes());
        w.perm(f.perm);
        w.u64(f.size);
        w.u64(f.pages.len() as u64);
        for p in &f.pages {
            w.u64(p.0);
        }
    }
    w.u64(s.dmap.len() as u64);
    for (did, d) in &s.dmap {
        w.u64(did.0);
        w.bytes(d.name.as_bytes());
        w.perm(d.perm);
        w.u64(d.size);
    }
    w.u64(s.handles.len() as u64);
    for h in &s.handles {
        w.u64(h.fid.0);
        w.u64(h.cursor);
    }
    w.u64(s.mmaps.len() as u64);
    for m in &s.mmaps {
        w.u64(m.start);
        w.u64(m.length);
        w.u64(m.host_addr);
    }
    w.u64(s.pages.capacity());
    w.u64(s.pages.slots().len() as u64);
    for slot in s.pages.slots() {
        match slot.owner {
            None => w.u8(0),
            Some(f) => {
                w.u8(1);
                w.u64(f.0);
            }
        }
        w.u64(slot.version);
        w.buf.extend_from_slice(&slot.tag);
    }
    w.u64(s.anon.len() as u64);
    for (start, bytes) in &s.anon {
        w.u64(*start);
        w.bytes(bytes);
    }
    w.u64(s.next_fid);
    w.u64(s.next_did);
    w.u64(s.next_addr);
    w.buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let out = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    /// A count whose elements each occupy at least `min_elem` bytes; bounds
    /// allocation on hostile input.
    fn count(&mut self, min_elem: usize) -> Result<usize, DecodeError> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(min_elem as u64) > remaining {
            return Err(DecodeError::Length(n));
        }
        Ok(n as usize)
    }
    fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.count(1)?;
        self.take(n)
    }
    fn string(&mut self) -> Result<String, DecodeError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| DecodeError::BadUtf8)
    }
    fn perm(&mut self) -> Result<Permission, DecodeError> {
        let b = self.u8()?;
        if b & !0b111 != 0 {
            return Err(DecodeError::BadTag(b));
        }
        Ok(Permission { read: b & 1 != 0, write: b & 2 != 0, execute: b & 4 != 0 })
    }
    fn tree(&mut self, depth: usize) -> Result<Tree, DecodeError> {
        if depth > 4096 {
            return Err(DecodeError::Length(depth as u64));
        }
        match self.u8()? {
            0 => Ok(Tree::File(Fid(self.u64()?))),
            1 => {
                let did = Did(self.u64()?);
                let n = self.count(9)?;
                let children = (0..n).map(|_| self.tree(depth + 1)).collect::<Result<_, _>>()?;
                Ok(Tree::Dir(did, children))
            }
            t => Err(DecodeError::BadTag(t)),
        }
    }
}

fn insert_ordered<K: Ord + Copy, V>(
    map: &mut BTreeMap<K, V>,
    k: K,
    v: V,
) -> Result<(), DecodeError> {
    if map.last_key_value().is_some_and(|(last, _)| *last >= k) {
        return Err(DecodeError::Unordered);
    }
    map.insert(k, v);
    Ok(())
}

pub fn decode_state(buf: &[u8]) -> Result<FsState, DecodeError> {
    let mut r = Reader { buf, pos: 0 };
    let layout = r.tree(0)?;

    let mut fmap = BTreeMap::new();
    for _ in 0..r.count(33)? {
        let fid = Fid(r.u64()?);
        let name = r.string()?;
        let perm = r.perm()?;
        let size = r.u64()?;
        let pages = (0..r.count(8)?).map(|_| r.u64().map(PageId)).collect::<Result<_, _>>()?;
        insert_ordered(&mut fmap, fid, FData { name, perm, size, pages })?;
    }
    let mut dmap = BTreeMap::new();
    for _ in 0..r.count(25)? {
        let did = Did(r.u64()?);
        let name = r.string()?;
        let perm = r.perm()?;
        let size = r.u64()?;
        insert_ordered(&mut dmap, did, DData { name, perm, size })?;
    }
    let handles = (0..r.count(16)?)
        .map(|_| Ok(OpenHandle { fid: Fid(r.u64()?), cursor: r.u64()? }))
        .collect::<Result<_, DecodeError>>()?;
    let mmaps = (0..r.count(24)?)
        .map(|_| Ok(MmapHandle { start: r.u64()?, length: r.u64()?, host_addr: r.u64()? }))
        .collect::<Result<_, DecodeError>>()?;

    let capacity = r.u64()?;
    let mut slots = Vec::new();
    for i in 0..r.count(25)? {
        let owner = match r.u8()? {
            0 => None,
            1 => Some(Fid(r.u64()?)),
            t => return Err(DecodeError::BadTag(t)),
        };
        let version = r.u64()?;
        let tag: [u8; 16] = r.take(16)?.try_into().expect("16 bytes");
        if owner.is_none() && tag != [0; 16] {
            return Err(DecodeError::BadPool);
        }
        slots.push(PageMeta { owner, page_id: PageId(i as u64), version, tag });
    }
    let pages = PagePool::from_slots(capacity, slots).ok_or(DecodeError::BadPool)?;

    let mut anon = BTreeMap::new();
    for _ in 0..r.count(16)? {
        let start = r.u64()?;
        let bytes = r.bytes()?.to_vec();
        insert_ordered(&mut anon, start, bytes)?;
    }
    let next_fid = r.u64()?;
    let next_did = r.u64()?;
    let next_addr = r.u64()?;
    if r.pos != buf.len() {
        return Err(DecodeError::Trailing(buf.len() - r.pos));
    }
    Ok(FsState { layout, fmap, dmap, handles, mmaps, pages, anon, next_fid, next_did, next_addr })
}
