//! The checked client: every call validates its precondition on the shadow
//! state, drives the backend, checks each answer, and only then commits.

use std::collections::BTreeMap;

use crate::backend::{Backend, BackendPort, LedgerEntry, Reply, Request};
use crate::error::{FsError, FsResult, ViolationKind};
use crate::fs::{FileSystem, StatInfo};
use crate::page::{seal_page, unseal_page, verify_zeroed, IntegrityFailure, SealedPage, SealingKey};
use crate::state::{
    init_state_with_capacity, pages_for, Fid, FsState, PageId, PageMeta, PathName, Permission,
    CONTENT_BYTES, DEFAULT_POOL_CAPACITY,
};
use crate::statefile::{load_state, save_state, LoadError, MemoryEpoch, TrustedEpoch};

const C: u64 = CONTENT_BYTES as u64;

fn integrity_kind(f: IntegrityFailure) -> ViolationKind {
    match f {
        IntegrityFailure::Tag => ViolationKind::ContentTamper,
        IntegrityFailure::Owner => ViolationKind::FdMismatch,
        IntegrityFailure::PageId => ViolationKind::PageOverlap,
        IntegrityFailure::Version => ViolationKind::Rollback,
    }
}

struct StagedPage {
    index: u64,
    pid: PageId,
    version: u64,
    tag: [u8; 16],
    valid: u64,
    page: SealedPage,
}

pub struct Monitor {
    state: FsState,
    port: BackendPort,
    key: SealingKey,
    host_fds: BTreeMap<Fid, u64>,
    epoch: Box<dyn TrustedEpoch>,
    latched: Option<ViolationKind>,
}

impl std::fmt::Debug for Monitor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Monitor")
            .field("port", &self.port)
            .field("epoch", &self.epoch.current())
            .field("latched", &self.latched)
            .finish_non_exhaustive()
    }
}

impl Monitor {
    /// A monitor over an empty filesystem.
    pub fn new(backend: impl Backend + 'static, key: SealingKey) -> Self {
        Self::with_pool_capacity(backend, key, DEFAULT_POOL_CAPACITY)
    }

    pub fn with_pool_capacity(backend: impl Backend + 'static, key: SealingKey, capacity: u64) -> Self {
        Monitor {
            state: init_state_with_capacity(capacity),
            port: BackendPort::new(backend),
            key,
            host_fds: BTreeMap::new(),
            epoch: Box::new(MemoryEpoch::default()),
            latched: None,
        }
    }

    /// Mounts the filesystem last saved under `epoch`. A zero epoch means
    /// nothing was ever saved and starts empty.
    pub fn mount(
        backend: impl Backend + 'static,
        key: SealingKey,
        epoch: Box<dyn TrustedEpoch>,
    ) -> FsResult<Self> {
        let mut m = Monitor { epoch, ..Monitor::new(backend, key) };
        if m.epoch.current() > 0 {
            m.state = m.fetch_state(m.epoch.current())?;
            m.reopen_all()?;
        }
        Ok(m)
    }

    /// Closes every handle, drops every mapping and saves the state under the
    /// next epoch.
    pub fn unmount(&mut self) -> FsResult<()> {
        self.guard()?;
        for (fid, fd) in std::mem::take(&mut self.host_fds) {
            self.expect_done(Request::Close { fd })?;
            self.state.commit_close(fid);
        }
        for m in self.state.mmaps.clone() {
            self.expect_done(Request::Munmap { addr: m.host_addr })?;
            self.state.commit_munmap(m.start);
        }
        self.persist()
    }

    pub fn state(&self) -> &FsState {
        &self.state
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        self.port.ledger()
    }

    /// Number of backend calls issued so far.
    pub fn call_counter(&self) -> u64 {
        self.port.counter()
    }

    pub fn violation(&self) -> Option<ViolationKind> {
        self.latched
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.current()
    }

    fn guard(&self) -> FsResult<()> {
        match self.latched {
            Some(k) => Err(FsError::Violation(k)),
            None => Ok(()),
        }
    }

    fn violate(&mut self, kind: ViolationKind) -> FsError {
        self.latched = Some(kind);
        FsError::Violation(kind)
    }

    fn expect_done(&mut self, req: Request) -> FsResult<()> {
        match self.port.call(req) {
            Ok(Reply::Done) => Ok(()),
            _ => Err(self.violate(ViolationKind::ErrnoLie)),
        }
    }

    fn host_fd(&self, h: Fid) -> u64 {
        self.host_fds[&h]
    }

    /// Opens `path` on the backend and checks the fd is fresh and the size
    /// agrees with the shadow.
    fn open_host(&mut self, path: &PathName, size: u64) -> FsResult<u64> {
        let fd = match self.port.call(Request::Open { path: path.to_string() }) {
            Ok(Reply::Opened { fd }) => fd,
            _ => return Err(self.violate(ViolationKind::ErrnoLie)),
        };
        if self.host_fds.values().any(|&g| g == fd) {
            return Err(self.violate(ViolationKind::FdMismatch));
        }
        match self.port.call(Request::Stat { fd }) {
            Ok(Reply::Size(n)) if n == size => Ok(fd),
            Ok(Reply::Size(_)) => Err(self.violate(ViolationKind::SizeMismatch)),
            _ => Err(self.violate(ViolationKind::ErrnoLie)),
        }
    }

    fn fetch_page(&mut self, fd: u64, index: u64, meta: &PageMeta) -> FsResult<Box<[u8; CONTENT_BYTES]>> {
        let page = match self.port.call(Request::ReadPage { fd, index }) {
            Ok(Reply::Page(p)) => p,
            _ => return Err(self.violate(ViolationKind::ErrnoLie)),
        };
        unseal_page(&page, meta, &self.key).map_err(|f| self.violate(integrity_kind(f)))
    }

    fn page_meta(&self, pid: PageId) -> PageMeta {
        self.state.pages.get(pid).expect("listed pages are in the pool").clone()
    }

    fn persist(&mut self) -> FsResult<()> {
        let next = self.epoch.current() + 1;
        let image = save_state(&self.state, next, &self.key);
        self.expect_done(Request::PutState { image })?;
        self.epoch.advance(next).map_err(|_| self.violate(ViolationKind::Rollback))
    }

    fn fetch_state(&mut self, epoch: u64) -> FsResult<FsState> {
        let image = match self.port.call(Request::GetState) {
            Ok(Reply::State(img)) => img,
            _ => return Err(self.violate(ViolationKind::ErrnoLie)),
        };
        let loaded = image
            .ok_or(LoadError::Missing)
            .and_then(|img| load_state(&img, epoch, &self.key));
        loaded.map_err(|e| self.violate(e.kind()))
    }

    fn reopen_all(&mut self) -> FsResult<()> {
        for h in self.state.handles.clone() {
            let path = self.state.path_of(h.fid).expect("handles name live files");
            let size = self.state.fmap[&h.fid].size;
            let fd = self.open_host(&path, size)?;
            self.host_fds.insert(h.fid, fd);
        }
        Ok(())
    }

    fn stage_write(&mut self, h: Fid, pos: u64, data: &[u8]) -> FsResult<(Vec<StagedPage>, Vec<PageId>)> {
        let f = &self.state.fmap[&h];
        let (size, old_pages) = (f.size, f.pages.clone());
        let end = pos + data.len() as u64;
        let new_size = size.max(end);
        let fresh = self
            .state
            .pages
            .peek_free(pages_for(new_size) - old_pages.len())
            .ok_or(FsError::NoSpace)?;
        let fd = self.host_fd(h);
        let mut staged = Vec::new();
        for index in pos / C..=(end - 1) / C {
            let page_start = index * C;
            let existing = if (index as usize) < old_pages.len() { (size - page_start).min(C) } else { 0 };
            let lo = pos.max(page_start) - page_start;
            let hi = end.min(page_start + C) - page_start;
            let mut content = [0u8; CONTENT_BYTES];
            if existing > 0 && (lo > 0 || hi < existing) {
                let meta = self.page_meta(old_pages[index as usize]);
                let plain = self.fetch_page(fd, index, &meta)?;
                content[..existing as usize].copy_from_slice(&plain[..existing as usize]);
            }
            let src = (page_start + lo - pos) as usize;
            content[lo as usize..hi as usize].copy_from_slice(&data[src..src + (hi - lo) as usize]);
            let pid = match old_pages.get(index as usize) {
                Some(&pid) => pid,
                None => fresh[index as usize - old_pages.len()],
            };
            let version = self.state.pages.next_version(pid);
            let (page, tag) = seal_page(&content, h, pid, version, &self.key);
            let valid = (new_size - page_start).min(C);
            staged.push(StagedPage { index, pid, version, tag, valid, page });
        }
        Ok((staged, fresh))
    }
}

impl FileSystem for Monitor {
    fn open(&mut self, p: &PathName) -> FsResult<Fid> {
        self.guard()?;
        let Some(fid) = self.state.pre_open(p)? else {
            return match self.port.call(Request::Open { path: p.to_string() }) {
                Err(crate::backend::OsErrno::ENOENT) => Err(FsError::NoEnt),
                Ok(Reply::Opened { .. }) => Err(self.violate(ViolationKind::PathMismatch)),
                _ => Err(self.violate(ViolationKind::ErrnoLie)),
            };
        };
        let fd = self.open_host(p, self.state.fmap[&fid].size)?;
        self.host_fds.insert(fid, fd);
        self.state.commit_open(fid);
        Ok(fid)
    }

    fn close(&mut self, h: Fid) -> FsResult<()> {
        self.guard()?;
        self.state.open_file(h)?;
        self.expect_done(Request::Close { fd: self.host_fd(h) })?;
        self.host_fds.remove(&h);
        self.state.commit_close(h);
        Ok(())
    }

    fn mkdir(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        self.guard()?;
        self.state.pre_new_node(p)?;
        self.expect_done(Request::Mkdir { path: p.to_string(), perm })?;
        self.state.commit_mkdir(p, perm);
        Ok(())
    }

    fn create(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        self.guard()?;
        self.state.pre_new_node(p)?;
        self.expect_done(Request::Create { path: p.to_string(), perm })?;
        self.state.commit_create(p, perm);
        Ok(())
    }

    fn remove(&mut self, p: &PathName) -> FsResult<()> {
        self.guard()?;
        self.state.pre_remove(p)?;
        self.expect_done(Request::Remove { path: p.to_string() })?;
        self.state.commit_remove(p);
        Ok(())
    }

    fn rmdir(&mut self, p: &PathName) -> FsResult<()> {
        self.guard()?;
        self.state.pre_rmdir(p)?;
        self.expect_done(Request::Rmdir { path: p.to_string() })?;
        self.state.commit_rmdir(p);
        Ok(())
    }

    fn stat(&mut self, h: Fid) -> FsResult<StatInfo> {
        self.guard()?;
        let (_, f) = self.state.open_file(h)?;
        Ok(StatInfo { perm: f.perm, name: f.name.clone(), size: f.size })
    }

    fn readdir(&mut self, p: &PathName) -> FsResult<Vec<String>> {
        self.guard()?;
        let expected = self.state.pre_readdir(p)?;
        match self.port.call(Request::Readdir { path: p.to_string() }) {
            Ok(Reply::Names(mut got)) => {
                got.sort();
                if got != expected {
                    return Err(self.violate(ViolationKind::PathMismatch));
                }
            }
            _ => return Err(self.violate(ViolationKind::ErrnoLie)),
        }
        Ok(expected)
    }

    fn chmod(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        self.guard()?;
        self.state.pre_chmod(p)?;
        self.expect_done(Request::Chmod { path: p.to_string(), perm })?;
        self.state.commit_chmod(p, perm);
        Ok(())
    }

    fn seek(&mut self, h: Fid, pos: u64) -> FsResult<()> {
        self.guard()?;
        self.state.pre_seek(h, pos)?;
        self.state.commit_seek(h, pos);
        Ok(())
    }

    fn read(&mut self, h: Fid, len: u64) -> FsResult<Vec<u8>> {
        self.guard()?;
        let start = self.state.pre_read(h, len)?;
        if len == 0 {
            return Ok(Vec::new());
        }
        let end = start + len;
        let fd = self.host_fd(h);
        let pages = self.state.fmap[&h].pages.clone();
        let mut out = Vec::with_capacity(len as usize);
        for index in start / C..=(end - 1) / C {
            let meta = self.page_meta(pages[index as usize]);
            let plain = self.fetch_page(fd, index, &meta)?;
            let page_start = index * C;
            let lo = (start.max(page_start) - page_start) as usize;
            let hi = (end.min(page_start + C) - page_start) as usize;
            out.extend_from_slice(&plain[lo..hi]);
        }
        self.state.commit_seek(h, end);
        Ok(out)
    }

    fn write(&mut self, h: Fid, pos: u64, data: &[u8]) -> FsResult<()> {
        self.guard()?;
        self.state.pre_write(h, pos, data.len() as u64)?;
        if data.is_empty() {
            self.state.commit_seek(h, pos);
            return Ok(());
        }
        let (staged, fresh) = self.stage_write(h, pos, data)?;
        let fd = self.host_fd(h);
        for s in &staged {
            let req = Request::WritePage { fd, index: s.index, pid: s.pid, valid: s.valid, page: s.page.clone() };
            match self.port.call(req) {
                Ok(Reply::Written(n)) if n == s.valid => {}
                Ok(Reply::Written(_)) => return Err(self.violate(ViolationKind::SizeMismatch)),
                _ => return Err(self.violate(ViolationKind::ErrnoLie)),
            }
        }
        for s in &staged {
            self.state.pages.assign(s.pid, h, s.version, s.tag);
        }
        let end = pos + data.len() as u64;
        let f = self.state.fmap.get_mut(&h).expect("open file is mapped");
        f.pages.extend(fresh);
        f.size = f.size.max(end);
        self.state.commit_seek(h, end);
        Ok(())
    }

    fn truncate(&mut self, h: Fid, len: u64) -> FsResult<()> {
        self.guard()?;
        self.state.pre_truncate(h, len)?;
        if len == self.state.fmap[&h].size {
            return Ok(());
        }
        self.expect_done(Request::Truncate { fd: self.host_fd(h), size: len })?;
        self.state.commit_truncate(h, len);
        Ok(())
    }

    fn mmap(&mut self, len: u64) -> FsResult<u64> {
        self.guard()?;
        let (start, span) = self.state.pre_mmap(len)?;
        let (host_addr, data) = match self.port.call(Request::Mmap { len }) {
            Ok(Reply::Mapped { addr, data }) => (addr, data),
            _ => return Err(self.violate(ViolationKind::ErrnoLie)),
        };
        if data.len() as u64 != len {
            return Err(self.violate(ViolationKind::SizeMismatch));
        }
        if !verify_zeroed(&data) {
            return Err(self.violate(ViolationKind::NonZeroMmap));
        }
        self.state.commit_mmap(start, span, host_addr, data);
        Ok(start)
    }

    fn munmap(&mut self, addr: u64) -> FsResult<()> {
        self.guard()?;
        let m = self.state.pre_munmap(addr)?;
        self.expect_done(Request::Munmap { addr: m.host_addr })?;
        self.state.commit_munmap(addr);
        Ok(())
    }

    fn peek(&mut self, addr: u64, len: u64) -> FsResult<Vec<u8>> {
        self.guard()?;
        let m = self.state.mapping_of(addr, len)?;
        let off = (addr - m.start) as usize;
        Ok(self.state.anon[&m.start][off..off + len as usize].to_vec())
    }

    fn poke(&mut self, addr: u64, data: &[u8]) -> FsResult<()> {
        self.guard()?;
        let m = self.state.mapping_of(addr, data.len() as u64)?;
        let off = (addr - m.start) as usize;
        let buf = self.state.anon.get_mut(&m.start).expect("mapping has a shadow");
        buf[off..off + data.len()].copy_from_slice(data);
        Ok(())
    }

    fn remount(&mut self) -> FsResult<()> {
        self.guard()?;
        for fd in std::mem::take(&mut self.host_fds).into_values() {
            self.expect_done(Request::Close { fd })?;
        }
        self.persist()?;
        self.state = self.fetch_state(self.epoch.current())?;
        self.reopen_all()
    }

    fn shadow(&self) -> Option<&FsState> {
        Some(&self.state)
    }
}
