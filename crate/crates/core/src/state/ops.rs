//! Preconditions and state updates of the core calls, shared by every
//! client that keeps a shadow state.
//!
//! `pre_*` methods never mutate; they return the error code of the first
//! failing precondition. `commit_*` methods assume the matching `pre_*`
//! succeeded and apply the transition.

use super::{
    pages_for, DData, Did, FData, Fid, FsState, MmapHandle, OpenHandle, PageId, PathName,
    Permission, Resolution, Tree, MAX_MMAP_LEN, MMAP_ALIGN,
};
use crate::error::{FsError, FsResult};

impl FsState {
    fn parent_writable(&self, p: &PathName) -> FsResult<()> {
        let parent = p.parent_of().map_err(|_| FsError::Inval)?;
        match self.lookup(&parent) {
            Resolution::Absent => Err(FsError::NoEnt),
            Resolution::FileAt(_) => Err(FsError::NotDir),
            Resolution::DirAt(d) if self.dmap[&d].perm.write => Ok(()),
            Resolution::DirAt(_) => Err(FsError::Acces),
        }
    }

    /// mkdir / create: `p` absent, parent an existing writable directory.
    pub fn pre_new_node(&self, p: &PathName) -> FsResult<()> {
        if p.is_root() || self.lookup(p) != Resolution::Absent {
            return Err(FsError::Exists);
        }
        self.parent_writable(p)
    }

    /// `Ok(None)` means `p` is absent and the backend must confirm it.
    pub fn pre_open(&self, p: &PathName) -> FsResult<Option<Fid>> {
        match self.lookup(p) {
            Resolution::Absent => Ok(None),
            Resolution::DirAt(_) => Err(FsError::IsDir),
            Resolution::FileAt(f) if self.is_open(f) => Err(FsError::Inval),
            Resolution::FileAt(f) => Ok(Some(f)),
        }
    }

    pub fn pre_remove(&self, p: &PathName) -> FsResult<Fid> {
        let fid = match self.lookup(p) {
            Resolution::Absent => return Err(FsError::NoEnt),
            Resolution::DirAt(_) => return Err(FsError::IsDir),
            Resolution::FileAt(f) => f,
        };
        if self.is_open(fid) {
            return Err(FsError::Inval);
        }
        self.parent_writable(p)?;
        Ok(fid)
    }

    pub fn pre_rmdir(&self, p: &PathName) -> FsResult<Did> {
        if p.is_root() {
            return Err(FsError::Inval);
        }
        let did = match self.lookup(p) {
            Resolution::Absent => return Err(FsError::NoEnt),
            Resolution::FileAt(_) => return Err(FsError::NotDir),
            Resolution::DirAt(d) => d,
        };
        if !self.is_empty_dir(p) {
            return Err(FsError::NotEmpty);
        }
        self.parent_writable(p)?;
        Ok(did)
    }

    /// Sorted child names of directory `p`.
    pub fn pre_readdir(&self, p: &PathName) -> FsResult<Vec<String>> {
        match self.lookup(p) {
            Resolution::Absent => Err(FsError::NoEnt),
            Resolution::FileAt(_) => Err(FsError::NotDir),
            Resolution::DirAt(_) => {
                let mut names = self.children_names(p).unwrap_or_default();
                names.sort();
                Ok(names)
            }
        }
    }

    pub fn pre_chmod(&self, p: &PathName) -> FsResult<()> {
        match self.lookup(p) {
            Resolution::Absent => Err(FsError::NoEnt),
            _ => Ok(()),
        }
    }

    /// The open handle `h` and its file.
    pub fn open_file(&self, h: Fid) -> FsResult<(OpenHandle, &FData)> {
        let handle = *self.handle(h).ok_or(FsError::BadF)?;
        let f = self.fmap.get(&h).ok_or(FsError::BadF)?;
        Ok((handle, f))
    }

    pub fn pre_seek(&self, h: Fid, pos: u64) -> FsResult<()> {
        let (_, f) = self.open_file(h)?;
        if pos > f.size {
            return Err(FsError::Inval);
        }
        Ok(())
    }

    /// Returns the cursor the read starts at.
    pub fn pre_read(&self, h: Fid, len: u64) -> FsResult<u64> {
        let (handle, f) = self.open_file(h)?;
        match handle.cursor.checked_add(len) {
            Some(end) if end <= f.size => Ok(handle.cursor),
            _ => Err(FsError::Inval),
        }
    }

    pub fn pre_write(&self, h: Fid, pos: u64, len: u64) -> FsResult<()> {
        let (_, f) = self.open_file(h)?;
        if pos > f.size || pos.checked_add(len).is_none() {
            return Err(FsError::Inval);
        }
        if !f.perm.write {
            return Err(FsError::Acces);
        }
        Ok(())
    }

    pub fn pre_truncate(&self, h: Fid, len: u64) -> FsResult<()> {
        let (_, f) = self.open_file(h)?;
        if len > f.size {
            return Err(FsError::Inval);
        }
        Ok(())
    }

    /// Start address and reserved span for a new mapping of `len` bytes.
    pub fn pre_mmap(&self, len: u64) -> FsResult<(u64, u64)> {
        if len == 0 {
            return Err(FsError::Inval);
        }
        if len > MAX_MMAP_LEN {
            return Err(FsError::NoSpace);
        }
        let span = len.div_ceil(MMAP_ALIGN) * MMAP_ALIGN;
        self.next_addr.checked_add(span).ok_or(FsError::NoSpace)?;
        Ok((self.next_addr, span))
    }

    pub fn pre_munmap(&self, addr: u64) -> FsResult<MmapHandle> {
        self.mmap_at(addr).copied().ok_or(FsError::Inval)
    }

    /// The mapping that wholly contains `[addr, addr + len)`.
    pub fn mapping_of(&self, addr: u64, len: u64) -> FsResult<MmapHandle> {
        let end = addr.checked_add(len).ok_or(FsError::Inval)?;
        self.mmaps
            .iter()
            .find(|m| m.start <= addr && addr < m.end() && end <= m.end())
            .copied()
            .ok_or(FsError::Inval)
    }

    pub fn commit_mkdir(&mut self, p: &PathName, perm: Permission) -> Did {
        let did = self.new_did();
        self.next_did += 1;
        let name = p.name().expect("not root").to_string();
        self.dmap.insert(did, DData { name, perm, size: 0 });
        let parent = p.parent_of().expect("not root");
        assert!(self.insert_child(&parent, Tree::Dir(did, Vec::new())));
        did
    }

    pub fn commit_create(&mut self, p: &PathName, perm: Permission) -> Fid {
        let fid = self.new_fid();
        self.next_fid += 1;
        let name = p.name().expect("not root").to_string();
        self.fmap.insert(fid, FData { name, perm, size: 0, pages: Vec::new() });
        let parent = p.parent_of().expect("not root");
        assert!(self.insert_child(&parent, Tree::File(fid)));
        fid
    }

    pub fn commit_remove(&mut self, p: &PathName) {
        if let Some(Tree::File(fid)) = self.detach(p) {
            if let Some(f) = self.fmap.remove(&fid) {
                for pid in f.pages {
                    self.pages.release(pid);
                }
            }
        }
    }

    pub fn commit_rmdir(&mut self, p: &PathName) {
        if let Some(Tree::Dir(did, _)) = self.detach(p) {
            self.dmap.remove(&did);
        }
    }

    pub fn commit_chmod(&mut self, p: &PathName, perm: Permission) {
        match self.lookup(p) {
            Resolution::FileAt(f) => self.fmap.get_mut(&f).expect("mapped").perm = perm,
            Resolution::DirAt(d) => self.dmap.get_mut(&d).expect("mapped").perm = perm,
            Resolution::Absent => {}
        }
    }

    pub fn commit_open(&mut self, fid: Fid) {
        self.handles.push(OpenHandle { fid, cursor: 0 });
    }

    pub fn commit_close(&mut self, fid: Fid) {
        self.handles.retain(|h| h.fid != fid);
    }

    pub fn commit_seek(&mut self, fid: Fid, pos: u64) {
        if let Some(h) = self.handle_mut(fid) {
            h.cursor = pos;
        }
    }

    /// Shrinks file `fid` to `len` bytes, freeing surplus pages and clamping
    /// its cursor.
    pub fn commit_truncate(&mut self, fid: Fid, len: u64) {
        let f = self.fmap.get_mut(&fid).expect("open file is mapped");
        let freed: Vec<PageId> = f.pages.split_off(pages_for(len).min(f.pages.len()));
        f.size = len;
        for pid in freed {
            self.pages.release(pid);
        }
        if let Some(h) = self.handle_mut(fid) {
            h.cursor = h.cursor.min(len);
        }
    }

    pub fn commit_mmap(&mut self, start: u64, span: u64, host_addr: u64, data: Vec<u8>) {
        self.mmaps.push(MmapHandle { start, length: data.len() as u64, host_addr });
        self.anon.insert(start, data);
        self.next_addr = start + span;
    }

    pub fn commit_munmap(&mut self, start: u64) {
        self.mmaps.retain(|m| m.start != start);
        self.anon.remove(&start);
    }
}
