//! Passthrough backend over a real directory.
//!
//! ```text
//! <root>/pages/<pid>.pg     one sealed page, exactly 4096 bytes
//! <root>/names/...          mirror of the namespace; a file's mirror entry
//!                           holds its JSON record {perm, size, pages}
//! <root>/dirperm.json       permissions of mirrored directories
//! <root>/state.bfs          last state image handed to PutState
//! ```
//!
//! Anonymous mappings are simulated in process memory.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendResult, OsErrno, Reply, Request};
use crate::page::SealedPage;
use crate::state::{pages_for, Permission, CONTENT_BYTES, MMAP_ALIGN, PAGE_SIZE};

const HOST_MMAP_BASE: u64 = 0x7e00_0000_0000;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct FileRecord {
    perm: Permission,
    size: u64,
    pages: BTreeMap<u64, u64>,
}

#[derive(Debug)]
pub struct PosixBackend {
    root: PathBuf,
    fds: BTreeMap<u64, String>,
    next_fd: u64,
    maps: BTreeMap<u64, u64>,
    next_addr: u64,
}

fn io_errno(e: io::Error) -> OsErrno {
    match e.kind() {
        io::ErrorKind::NotFound => OsErrno::ENOENT,
        io::ErrorKind::AlreadyExists => OsErrno::EEXIST,
        _ => OsErrno::EIO,
    }
}

impl PosixBackend {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl AsRef<Path>) -> io::Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("pages"))?;
        fs::create_dir_all(root.join("names"))?;
        Ok(PosixBackend {
            root,
            fds: BTreeMap::new(),
            next_fd: 3,
            maps: BTreeMap::new(),
            next_addr: HOST_MMAP_BASE,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn page_path(&self, pid: u64) -> PathBuf {
        self.root.join("pages").join(format!("{pid}.pg"))
    }

    pub fn state_path(&self) -> PathBuf {
        self.root.join("state.bfs")
    }

    fn mirror(&self, path: &str) -> PathBuf {
        let mut out = self.root.join("names");
        for comp in path.split('/').filter(|c| !c.is_empty()) {
            out.push(comp);
        }
        out
    }

    fn read_record(&self, path: &str) -> Result<FileRecord, OsErrno> {
        let bytes = fs::read(self.mirror(path)).map_err(io_errno)?;
        serde_json::from_slice(&bytes).map_err(|_| OsErrno::EIO)
    }

    fn write_record(&self, path: &str, rec: &FileRecord) -> Result<(), OsErrno> {
        let bytes = serde_json::to_vec(rec).map_err(|_| OsErrno::EIO)?;
        fs::write(self.mirror(path), bytes).map_err(io_errno)
    }

    fn dir_perms(&self) -> BTreeMap<String, Permission> {
        fs::read(self.root.join("dirperm.json"))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    fn set_dir_perm(&self, path: &str, perm: Option<Permission>) -> Result<(), OsErrno> {
        let mut perms = self.dir_perms();
        match perm {
            Some(p) => perms.insert(path.to_string(), p),
            None => perms.remove(path),
        };
        let bytes = serde_json::to_vec(&perms).map_err(|_| OsErrno::EIO)?;
        fs::write(self.root.join("dirperm.json"), bytes).map_err(io_errno)
    }

    fn kind(&self, path: &str) -> Option<bool> {
        fs::metadata(self.mirror(path)).ok().map(|m| m.is_dir())
    }

    fn check_new(&self, path: &str) -> Result<(), OsErrno> {
        if self.kind(path).is_some() {
            return Err(OsErrno::EEXIST);
        }
        let (parent, _) = super::split_path(path).ok_or(OsErrno::EEXIST)?;
        match self.kind(parent) {
            Some(true) => Ok(()),
            Some(false) => Err(OsErrno::ENOTDIR),
            None => Err(OsErrno::ENOENT),
        }
    }

    fn fd_path(&self, fd: u64) -> Result<String, OsErrno> {
        self.fds.get(&fd).cloned().ok_or(OsErrno::EBADF)
    }

    fn drop_page(&self, pid: u64) {
        let _ = fs::remove_file(self.page_path(pid));
    }

    fn handle(&mut self, req: &Request) -> BackendResult {
        match req {
            Request::Open { path } => match self.kind(path) {
                Some(false) => {
                    let fd = self.next_fd;
                    self.next_fd += 1;
                    self.fds.insert(fd, path.clone());
                    Ok(Reply::Opened { fd })
                }
                Some(true) => Err(OsErrno::EISDIR),
                None => Err(OsErrno::ENOENT),
            },
            Request::Close { fd } => {
                self.fds.remove(fd).map(|_| Reply::Done).ok_or(OsErrno::EBADF)
            }
            Request::Mkdir { path, perm } => {
                self.check_new(path)?;
                fs::create_dir(self.mirror(path)).map_err(io_errno)?;
                self.set_dir_perm(path, Some(*perm))?;
                Ok(Reply::Done)
            }
            Request::Create { path, perm } => {
                self.check_new(path)?;
                self.write_record(path, &FileRecord { perm: *perm, ..Default::default() })?;
                Ok(Reply::Done)
            }
            Request::Remove { path } => match self.kind(path) {
                Some(false) => {
                    let rec = self.read_record(path)?;
                    for pid in rec.pages.values() {
                        self.drop_page(*pid);
                    }
                    fs::remove_file(self.mirror(path)).map_err(io_errno)?;
                    Ok(Reply::Done)
                }
                Some(true) => Err(OsErrno::EISDIR),
                None => Err(OsErrno::ENOENT),
            },
            Request::Rmdir { path } => match self.kind(path) {
                Some(true) if path == "/" => Err(OsErrno::EINVAL),
                Some(true) => {
                    let dir = self.mirror(path);
                    if fs::read_dir(&dir).map_err(io_errno)?.next().is_some() {
                        return Err(OsErrno::ENOTEMPTY);
                    }
                    fs::remove_dir(dir).map_err(io_errno)?;
                    self.set_dir_perm(path, None)?;
                    Ok(Reply::Done)
                }
                Some(false) => Err(OsErrno::ENOTDIR),
                None => Err(OsErrno::ENOENT),
            },
            Request::Readdir { path } => match self.kind(path) {
                Some(true) => {
                    let mut names = Vec::new();
                    for entry in fs::read_dir(self.mirror(path)).map_err(io_errno)? {
                        let name = entry.map_err(io_errno)?.file_name();
                        names.push(name.into_string().map_err(|_| OsErrno::EIO)?);
                    }
                    names.sort();
                    Ok(Reply::Names(names))
                }
                Some(false) => Err(OsErrno::ENOTDIR),
                None => Err(OsErrno::ENOENT),
            },
            Request::Chmod { path, perm } => match self.kind(path) {
                Some(true) => self.set_dir_perm(path, Some(*perm)).map(|_| Reply::Done),
                Some(false) => {
                    let mut rec = self.read_record(path)?;
                    rec.perm = *perm;
                    self.write_record(path, &rec).map(|_| Reply::Done)
                }
                None => Err(OsErrno::ENOENT),
            },
            Request::ReadPage { fd, index } => {
                let rec = self.read_record(&self.fd_path(*fd)?)?;
                let pid = rec.pages.get(index).ok_or(OsErrno::EINVAL)?;
                let bytes = fs::read(self.page_path(*pid)).map_err(io_errno)?;
                SealedPage::from_bytes(&bytes).map(Reply::Page).ok_or(OsErrno::EIO)
            }
            Request::WritePage { fd, index, pid, valid, page } => {
                if *valid > CONTENT_BYTES as u64 {
                    return Err(OsErrno::EINVAL);
                }
                let path = self.fd_path(*fd)?;
                let mut rec = self.read_record(&path)?;
                debug_assert_eq!(page.as_bytes().len(), PAGE_SIZE);
                fs::write(self.page_path(pid.0), page.as_bytes()).map_err(io_errno)?;
                if let Some(old) = rec.pages.insert(*index, pid.0) {
                    if old != pid.0 {
                        self.drop_page(old);
                    }
                }
                rec.size = rec.size.max(index * CONTENT_BYTES as u64 + valid);
                self.write_record(&path, &rec)?;
                Ok(Reply::Written(*valid))
            }
            Request::Truncate { fd, size } => {
                let path = self.fd_path(*fd)?;
                let mut rec = self.read_record(&path)?;
                let keep = pages_for(*size) as u64;
                for pid in rec.pages.split_off(&keep).into_values() {
                    self.drop_page(pid);
                }
                rec.size = *size;
                self.write_record(&path, &rec)?;
                Ok(Reply::Done)
            }
            Request::Stat { fd } => Ok(Reply::Size(self.read_record(&self.fd_path(*fd)?)?.size)),
            Request::Mmap { len } => {
                if *len == 0 {
                    return Err(OsErrno::EINVAL);
                }
                let addr = self.next_addr;
                self.next_addr += len.div_ceil(MMAP_ALIGN) * MMAP_ALIGN;
                self.maps.insert(addr, *len);
                Ok(Reply::Mapped { addr, data: vec![0; *len as usize] })
            }
            Request::Munmap { addr } => {
                self.maps.remove(addr).map(|_| Reply::Done).ok_or(OsErrno::EINVAL)
            }
            Request::PutState { image } => {
                let tmp = self.root.join("state.bfs.tmp");
                fs::write(&tmp, image).map_err(io_errno)?;
                fs::rename(tmp, self.state_path()).map_err(io_errno)?;
                Ok(Reply::Done)
            }
            Request::GetState => match fs::read(self.state_path()) {
                Ok(bytes) => Ok(Reply::State(Some(bytes))),
                Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Reply::State(None)),
                Err(e) => Err(io_errno(e)),
            },
        }
    }
}

impl Backend for PosixBackend {
    fn dispatch(&mut self, _counter: u64, req: &Request) -> BackendResult {
        self.handle(req)
    }
}
