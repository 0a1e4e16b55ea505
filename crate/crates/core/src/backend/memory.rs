use std::collections::BTreeMap;

use super::{split_path, Backend, BackendResult, OsErrno, Reply, Request};
use crate::page::SealedPage;
use crate::state::{pages_for, PageId, Permission, CONTENT_BYTES, MMAP_ALIGN};

const HOST_MMAP_BASE: u64 = 0x7f00_0000_0000;
const FIRST_FD: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemNode {
    Dir { perm: Permission },
    File { perm: Permission, size: u64, pages: BTreeMap<u64, (PageId, SealedPage)> },
}

/// Benign in-memory backend. Stores whatever pages it is given and answers
/// honestly.
#[derive(Debug, Clone)]
pub struct MemoryBackend {
    nodes: BTreeMap<String, MemNode>,
    fds: BTreeMap<u64, String>,
    next_fd: u64,
    maps: BTreeMap<u64, u64>,
    next_addr: u64,
    state: Option<Vec<u8>>,
}

impl Default for MemoryBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryBackend {
    pub fn new() -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert("/".to_string(), MemNode::Dir { perm: Permission::RWX });
        MemoryBackend {
            nodes,
            fds: BTreeMap::new(),
            next_fd: FIRST_FD,
            maps: BTreeMap::new(),
            next_addr: HOST_MMAP_BASE,
            state: None,
        }
    }

    /// Every stored path with its node, for comparing backend images.
    pub fn nodes(&self) -> &BTreeMap<String, MemNode> {
        &self.nodes
    }

    pub fn saved_state(&self) -> Option<&[u8]> {
        self.state.as_deref()
    }

    fn children(&self, dir: &str) -> Vec<String> {
        self.nodes
            .keys()
            .filter_map(|k| match split_path(k) {
                Some((parent, name)) if parent == dir => Some(name.to_string()),
                _ => None,
            })
            .collect()
    }

    fn check_new(&self, path: &str) -> Result<(), OsErrno> {
        if self.nodes.contains_key(path) {
            return Err(OsErrno::EEXIST);
        }
        let (parent, _) = split_path(path).ok_or(OsErrno::EEXIST)?;
        match self.nodes.get(parent) {
            Some(MemNode::Dir { .. }) => Ok(()),
            Some(MemNode::File { .. }) => Err(OsErrno::ENOTDIR),
            None => Err(OsErrno::ENOENT),
        }
    }

    fn file_mut(
        &mut self,
        fd: u64,
    ) -> Result<(&mut u64, &mut BTreeMap<u64, (PageId, SealedPage)>), OsErrno> {
        let path = self.fds.get(&fd).ok_or(OsErrno::EBADF)?;
        match self.nodes.get_mut(path) {
            Some(MemNode::File { size, pages, .. }) => Ok((size, pages)),
            _ => Err(OsErrno::EBADF),
        }
    }
}

impl Backend for MemoryBackend {
    fn dispatch(&mut self, _counter: u64, req: &Request) -> BackendResult {
        match req {
            Request::Open { path } => match self.nodes.get(path) {
                Some(MemNode::File { .. }) => {
                    let fd = self.next_fd;
                    self.next_fd += 1;
                    self.fds.insert(fd, path.clone());
                    Ok(Reply::Opened { fd })
                }
                Some(MemNode::Dir { .. }) => Err(OsErrno::EISDIR),
                None => Err(OsErrno::ENOENT),
            },
            Request::Close { fd } => {
                self.fds.remove(fd).map(|_| Reply::Done).ok_or(OsErrno::EBADF)
            }
            Request::Mkdir { path, perm } => {
                self.check_new(path)?;
                self.nodes.insert(path.clone(), MemNode::Dir { perm: *perm });
                Ok(Reply::Done)
            }
            Request::Create { path, perm } => {
                self.check_new(path)?;
                self.nodes.insert(
                    path.clone(),
                    MemNode::File { perm: *perm, size: 0, pages: BTreeMap::new() },
                );
                Ok(Reply::Done)
            }
            Request::Remove { path } => match self.nodes.get(path) {
                Some(MemNode::File { .. }) => {
                    self.nodes.remove(path);
                    Ok(Reply::Done)
                }
                Some(MemNode::Dir { .. }) => Err(OsErrno::EISDIR),
                None => Err(OsErrno::ENOENT),
            },
            Request::Rmdir { path } => match self.nodes.get(path) {
                Some(MemNode::Dir { .. }) if path == "/" => Err(OsErrno::EINVAL),
                Some(MemNode::Dir { .. }) => {
                    if !self.children(path).is_empty() {
                        return Err(OsErrno::ENOTEMPTY);
                    }
                    self.nodes.remove(path);
                    Ok(Reply::Done)
                }
                Some(MemNode::File { .. }) => Err(OsErrno::ENOTDIR),
                None => Err(OsErrno::ENOENT),
            },
            Request::Readdir { path } => match self.nodes.get(path) {
                Some(MemNode::Dir { .. }) => Ok(Reply::Names(self.children(path))),
                Some(MemNode::File { .. }) => Err(OsErrno::ENOTDIR),
                None => Err(OsErrno::ENOENT),
            },
            Request::Chmod { path, perm: new } => match self.nodes.get_mut(path) {
                Some(MemNode::Dir { perm } | MemNode::File { perm, .. }) => {
                    *perm = *new;
                    Ok(Reply::Done)
                }
                None => Err(OsErrno::ENOENT),
            },
            Request::ReadPage { fd, index } => {
                let (_, pages) = self.file_mut(*fd)?;
                pages.get(index).map(|(_, p)| Reply::Page(p.clone())).ok_or(OsErrno::EINVAL)
            }
            Request::WritePage { fd, index, pid, valid, page } => {
                if *valid > CONTENT_BYTES as u64 {
                    return Err(OsErrno::EINVAL);
                }
                let (size, pages) = self.file_mut(*fd)?;
                pages.insert(*index, (*pid, page.clone()));
                *size = (*size).max(index * CONTENT_BYTES as u64 + valid);
                Ok(Reply::Written(*valid))
            }
            Request::Truncate { fd, size: new } => {
                let (size, pages) = self.file_mut(*fd)?;
                let keep = pages_for(*new) as u64;
                pages.retain(|&i, _| i < keep);
                *size = *new;
                Ok(Reply::Done)
            }
            Request::Stat { fd } => {
                let (size, _) = self.file_mut(*fd)?;
                Ok(Reply::Size(*size))
            }
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
                self.state = Some(image.clone());
                Ok(Reply::Done)
            }
            Request::GetState => Ok(Reply::State(self.state.clone())),
        }
    }
}
