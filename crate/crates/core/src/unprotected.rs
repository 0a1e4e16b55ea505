//! A client that keeps the same bookkeeping as the monitor and issues the
//! same backend calls, but believes every answer. Pages are stored as
//! plaintext in the sealed-page layout (content followed by the header).

use std::collections::BTreeMap;

use crate::backend::{Backend, BackendPort, LedgerEntry, OsErrno, Reply, Request};
use crate::codec::{decode_state, encode_state};
use crate::error::{FsError, FsResult};
use crate::fs::{FileSystem, StatInfo};
use crate::page::SealedPage;
use crate::state::{
    init_state_with_capacity, Fid, FsState, PageId, PathName, Permission, CONTENT_BYTES,
    DEFAULT_POOL_CAPACITY,
};

const C: u64 = CONTENT_BYTES as u64;

/// How a trusting client reports a backend error number.
pub fn errno_to_fs(e: OsErrno) -> FsError {
    match e {
        OsErrno::ENOENT => FsError::NoEnt,
        OsErrno::EEXIST => FsError::Exists,
        OsErrno::EBADF => FsError::BadF,
        OsErrno::ENOTDIR => FsError::NotDir,
        OsErrno::EISDIR => FsError::IsDir,
        OsErrno::ENOTEMPTY => FsError::NotEmpty,
        OsErrno::ENOSPC => FsError::NoSpace,
        OsErrno::EINVAL | OsErrno::EINTR | OsErrno::EIO => FsError::Inval,
    }
}

fn unexpected<T>(r: Result<Reply, OsErrno>) -> FsResult<T> {
    match r {
        Err(e) => Err(errno_to_fs(e)),
        Ok(_) => Err(FsError::Inval),
    }
}

pub struct TrustingClient {
    state: FsState,
    port: BackendPort,
    host_fds: BTreeMap<Fid, u64>,
}

impl std::fmt::Debug for TrustingClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrustingClient").field("port", &self.port).finish_non_exhaustive()
    }
}

impl TrustingClient {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Self::with_pool_capacity(backend, DEFAULT_POOL_CAPACITY)
    }

    pub fn with_pool_capacity(backend: impl Backend + 'static, capacity: u64) -> Self {
        TrustingClient {
            state: init_state_with_capacity(capacity),
            port: BackendPort::new(backend),
            host_fds: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> &FsState {
        &self.state
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        self.port.ledger()
    }

    fn fd(&self, h: Fid) -> u64 {
        self.host_fds.get(&h).copied().unwrap_or(u64::MAX)
    }

    fn ack(&mut self, req: Request) -> FsResult<()> {
        match self.port.call(req) {
            Ok(_) => Ok(()),
            Err(e) => Err(errno_to_fs(e)),
        }
    }

    /// Opens on the backend and adopts whatever size it reports.
    fn open_host(&mut self, path: &PathName, fid: Fid) -> FsResult<u64> {
        let fd = match self.port.call(Request::Open { path: path.to_string() }) {
            Ok(Reply::Opened { fd }) => fd,
            other => return unexpected(other),
        };
        match self.port.call(Request::Stat { fd }) {
            Ok(Reply::Size(n)) => {
                if let Some(f) = self.state.fmap.get_mut(&fid) {
                    f.size = n;
                }
                Ok(fd)
            }
            other => unexpected(other),
        }
    }

    fn read_plain(&mut self, fd: u64, index: u64) -> FsResult<SealedPage> {
        match self.port.call(Request::ReadPage { fd, index }) {
            Ok(Reply::Page(p)) => Ok(p),
            other => unexpected(other),
        }
    }

    fn reopen_all(&mut self) {
        for h in self.state.handles.clone() {
            let Some(path) = self.state.path_of(h.fid) else { continue };
            if let Ok(fd) = self.open_host(&path, h.fid) {
                self.host_fds.insert(h.fid, fd);
            }
            let size = self.state.fmap.get(&h.fid).map_or(0, |f| f.size);
            if let Some(handle) = self.state.handles.iter_mut().find(|x| x.fid == h.fid) {
                handle.cursor = handle.cursor.min(size);
            }
        }
    }
}

impl FileSystem for TrustingClient {
    fn open(&mut self, p: &PathName) -> FsResult<Fid> {
        let fid = match self.state.pre_open(p)? {
            Some(fid) => fid,
            None => {
                let fd = match self.port.call(Request::Open { path: p.to_string() }) {
                    Ok(Reply::Opened { fd }) => fd,
                    other => return unexpected(other),
                };
                self.state.pre_new_node(p)?;
                let fid = self.state.commit_create(p, Permission::RW);
                if let Ok(Reply::Size(n)) = self.port.call(Request::Stat { fd }) {
                    self.state.fmap.get_mut(&fid).expect("just created").size = n;
                }
                self.host_fds.insert(fid, fd);
                self.state.commit_open(fid);
                return Ok(fid);
            }
        };
        let fd = self.open_host(p, fid)?;
        self.host_fds.insert(fid, fd);
        self.state.commit_open(fid);
        Ok(fid)
    }

    fn close(&mut self, h: Fid) -> FsResult<()> {
        self.state.open_file(h)?;
        self.ack(Request::Close { fd: self.fd(h) })?;
        self.host_fds.remove(&h);
        self.state.commit_close(h);
        Ok(())
    }

    fn mkdir(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        self.state.pre_new_node(p)?;
        self.ack(Request::Mkdir { path: p.to_string(), perm })?;
        self.state.commit_mkdir(p, perm);
        Ok(())
    }

    fn create(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        self.state.pre_new_node(p)?;
        self.ack(Request::Create { path: p.to_string(), perm })?;
        self.state.commit_create(p, perm);
        Ok(())
    }

    fn remove(&mut self, p: &PathName) -> FsResult<()> {
        self.state.pre_remove(p)?;
        self.ack(Request::Remove { path: p.to_string() })?;
        self.state.commit_remove(p);
        Ok(())
    }

    fn rmdir(&mut self, p: &PathName) -> FsResult<()> {
        self.state.pre_rmdir(p)?;
        self.ack(Request::Rmdir { path: p.to_string() })?;
        self.state.commit_rmdir(p);
        Ok(())
    }

    fn stat(&mut self, h: Fid) -> FsResult<StatInfo> {
        let (_, f) = self.state.open_file(h)?;
        Ok(StatInfo { perm: f.perm, name: f.name.clone(), size: f.size })
    }

    fn readdir(&mut self, p: &PathName) -> FsResult<Vec<String>> {
        self.state.pre_readdir(p)?;
        match self.port.call(Request::Readdir { path: p.to_string() }) {
            Ok(Reply::Names(mut names)) => {
                names.sort();
                Ok(names)
            }
            other => unexpected(other),
        }
    }

    fn chmod(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        self.state.pre_chmod(p)?;
        self.ack(Request::Chmod { path: p.to_string(), perm })?;
        self.state.commit_chmod(p, perm);
        Ok(())
    }

    fn seek(&mut self, h: Fid, pos: u64) -> FsResult<()> {
        self.state.pre_seek(h, pos)?;
        self.state.commit_seek(h, pos);
        Ok(())
    }

    fn read(&mut self, h: Fid, len: u64) -> FsResult<Vec<u8>> {
        let start = self.state.pre_read(h, len)?;
        if len == 0 {
            return Ok(Vec::new());
        }
        let end = start + len;
        let fd = self.fd(h);
        let mut out = Vec::with_capacity(len.min(1 << 20) as usize);
        for index in start / C..=(end - 1) / C {
            let page = self.read_plain(fd, index)?;
            let page_start = index * C;
            let lo = (start.max(page_start) - page_start) as usize;
            let hi = (end.min(page_start + C) - page_start) as usize;
            out.extend_from_slice(&page.content()[lo..hi]);
        }
        self.state.commit_seek(h, end);
        Ok(out)
    }

    fn write(&mut self, h: Fid, pos: u64, data: &[u8]) -> FsResult<()> {
        self.state.pre_write(h, pos, data.len() as u64)?;
        if data.is_empty() {
            self.state.commit_seek(h, pos);
            return Ok(());
        }
        let fd = self.fd(h);
        let f = &self.state.fmap[&h];
        let (size, pages) = (f.size, f.pages.clone());
        let end = pos + data.len() as u64;
        let new_size = size.max(end);
        let (first, last) = (pos / C, (end - 1) / C);
        let missing = (first..=last).filter(|&i| pages.get(i as usize).is_none()).count();
        let mut fresh = self.state.pages.peek_free(missing).ok_or(FsError::NoSpace)?.into_iter();

        let mut staged = Vec::new();
        for index in first..=last {
            let page_start = index * C;
            let existing = size.saturating_sub(page_start).min(C);
            let lo = pos.max(page_start) - page_start;
            let hi = end.min(page_start + C) - page_start;
            let mut page = SealedPage::zeroed();
            if existing > 0 && (lo > 0 || hi < existing) {
                let old = self.read_plain(fd, index)?;
                let n = existing as usize;
                page.as_bytes_mut()[..n].copy_from_slice(&old.content()[..n]);
            }
            let src = (page_start + lo - pos) as usize;
            page.as_bytes_mut()[lo as usize..hi as usize]
                .copy_from_slice(&data[src..src + (hi - lo) as usize]);
            let pid = match pages.get(index as usize) {
                Some(&pid) => pid,
                None => fresh.next().expect("reserved above"),
            };
            let version = self.state.pages.next_version(pid);
            page.set_header(h, pid, version);
            let valid = (new_size - page_start).min(C);
            staged.push((index, pid, version, valid, page));
        }

        let mut reported = size;
        for (index, pid, _, valid, page) in &staged {
            let req = Request::WritePage { fd, index: *index, pid: *pid, valid: *valid, page: page.clone() };
            match self.port.call(req) {
                Ok(Reply::Written(n)) => reported = reported.max(index * C + n),
                other => return unexpected(other),
            }
        }
        let mut new_pids: Vec<PageId> = Vec::new();
        for (index, pid, version, _, _) in &staged {
            self.state.pages.assign(*pid, h, *version, [0; 16]);
            if pages.get(*index as usize).is_none() {
                new_pids.push(*pid);
            }
        }
        let f = self.state.fmap.get_mut(&h).expect("open file is mapped");
        f.pages.extend(new_pids);
        f.size = reported;
        let cursor = end.min(reported);
        self.state.commit_seek(h, cursor);
        Ok(())
    }

    fn truncate(&mut self, h: Fid, len: u64) -> FsResult<()> {
        self.state.pre_truncate(h, len)?;
        if len == self.state.fmap[&h].size {
            return Ok(());
        }
        self.ack(Request::Truncate { fd: self.fd(h), size: len })?;
        self.state.commit_truncate(h, len);
        Ok(())
    }

    fn mmap(&mut self, len: u64) -> FsResult<u64> {
        let (start, span) = self.state.pre_mmap(len)?;
        match self.port.call(Request::Mmap { len }) {
            Ok(Reply::Mapped { addr, data }) if !data.is_empty() => {
                self.state.commit_mmap(start, span, addr, data);
                Ok(start)
            }
            other => unexpected(other),
        }
    }

    fn munmap(&mut self, addr: u64) -> FsResult<()> {
        let m = self.state.pre_munmap(addr)?;
        self.ack(Request::Munmap { addr: m.host_addr })?;
        self.state.commit_munmap(addr);
        Ok(())
    }

    fn peek(&mut self, addr: u64, len: u64) -> FsResult<Vec<u8>> {
        let m = self.state.mapping_of(addr, len)?;
        let off = (addr - m.start) as usize;
        let buf = &self.state.anon[&m.start];
        Ok(buf.get(off..off + len as usize).ok_or(FsError::Inval)?.to_vec())
    }

    fn poke(&mut self, addr: u64, data: &[u8]) -> FsResult<()> {
        let m = self.state.mapping_of(addr, data.len() as u64)?;
        let off = (addr - m.start) as usize;
        let buf = self.state.anon.get_mut(&m.start).expect("mapping has a shadow");
        buf.get_mut(off..off + data.len()).ok_or(FsError::Inval)?.copy_from_slice(data);
        Ok(())
    }

    fn remount(&mut self) -> FsResult<()> {
        for fd in std::mem::take(&mut self.host_fds).into_values() {
            self.ack(Request::Close { fd })?;
        }
        self.ack(Request::PutState { image: encode_state(&self.state) })?;
        let capacity = self.state.pages.capacity();
        self.state = match self.port.call(Request::GetState) {
            Ok(Reply::State(Some(img))) => {
                decode_state(&img).unwrap_or_else(|_| init_state_with_capacity(capacity))
            }
            Ok(_) => init_state_with_capacity(capacity),
            Err(e) => return Err(errno_to_fs(e)),
        };
        self.reopen_all();
        Ok(())
    }

    fn shadow(&self) -> Option<&FsState> {
        Some(&self.state)
    }
}
