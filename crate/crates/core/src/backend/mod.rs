//! The untrusted side: a narrow request/reply interface, a counter-stamped
//! ledger of every crossing, and the stock implementations.

mod adversary;
mod memory;
mod posix;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use adversary::{
    adversary_wrap, Adversary, AdversaryConfig, AdversaryLog, AdversaryParams, FiredEvent,
    ProbeHandle, Trigger,
};
pub use memory::MemoryBackend;
pub use posix::PosixBackend;

use crate::page::SealedPage;
use crate::state::{PageId, Permission};

/// Error numbers a backend may answer with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OsErrno {
    ENOENT,
    EEXIST,
    EINVAL,
    EINTR,
    EBADF,
    ENOTDIR,
    EISDIR,
    ENOTEMPTY,
    EIO,
    ENOSPC,
}

impl fmt::Display for OsErrno {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CallOp {
    #[serde(rename = "xOpen")]
    Open,
    #[serde(rename = "xClose")]
    Close,
    #[serde(rename = "xMkdir")]
    Mkdir,
    #[serde(rename = "xCreate")]
    Create,
    #[serde(rename = "xRemove")]
    Remove,
    #[serde(rename = "xRmdir")]
    Rmdir,
    #[serde(rename = "xReaddir")]
    Readdir,
    #[serde(rename = "xChmod")]
    Chmod,
    #[serde(rename = "xReadPage")]
    ReadPage,
    #[serde(rename = "xWritePage")]
    WritePage,
    #[serde(rename = "xTruncate")]
    Truncate,
    #[serde(rename = "xMmap")]
    Mmap,
    #[serde(rename = "xMunmap")]
    Munmap,
    #[serde(rename = "xStat")]
    Stat,
    #[serde(rename = "xPutState")]
    PutState,
    #[serde(rename = "xGetState")]
    GetState,
}

impl CallOp {
    pub const ALL: [CallOp; 16] = [
        CallOp::Open,
        CallOp::Close,
        CallOp::Mkdir,
        CallOp::Create,
        CallOp::Remove,
        CallOp::Rmdir,
        CallOp::Readdir,
        CallOp::Chmod,
        CallOp::ReadPage,
        CallOp::WritePage,
        CallOp::Truncate,
        CallOp::Mmap,
        CallOp::Munmap,
        CallOp::Stat,
        CallOp::PutState,
        CallOp::GetState,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CallOp::Open => "xOpen",
            CallOp::Close => "xClose",
            CallOp::Mkdir => "xMkdir",
            CallOp::Create => "xCreate",
            CallOp::Remove => "xRemove",
            CallOp::Rmdir => "xRmdir",
            CallOp::Readdir => "xReaddir",
            CallOp::Chmod => "xChmod",
            CallOp::ReadPage => "xReadPage",
            CallOp::WritePage => "xWritePage",
            CallOp::Truncate => "xTruncate",
            CallOp::Mmap => "xMmap",
            CallOp::Munmap => "xMunmap",
            CallOp::Stat => "xStat",
            CallOp::PutState => "xPutState",
            CallOp::GetState => "xGetState",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }
}

/// One call into the backend. Paths are absolute strings ("/" for root).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Open { path: String },
    Close { fd: u64 },
    Mkdir { path: String, perm: Permission },
    Create { path: String, perm: Permission },
    Remove { path: String },
    Rmdir { path: String },
    Readdir { path: String },
    Chmod { path: String, perm: Permission },
    ReadPage { fd: u64, index: u64 },
    /// Stores `page` as page `index` of the file open on `fd`. `valid` is the
    /// number of content bytes in it that count toward the file size.
    WritePage { fd: u64, index: u64, pid: PageId, valid: u64, page: SealedPage },
    Truncate { fd: u64, size: u64 },
    Mmap { len: u64 },
    Munmap { addr: u64 },
    Stat { fd: u64 },
    PutState { image: Vec<u8> },
    GetState,
}

impl Request {
    pub fn op(&self) -> CallOp {
        match self {
            Request::Open { .. } => CallOp::Open,
            Request::Close { .. } => CallOp::Close,
            Request::Mkdir { .. } => CallOp::Mkdir,
            Request::Create { .. } => CallOp::Create,
            Request::Remove { .. } => CallOp::Remove,
            Request::Rmdir { .. } => CallOp::Rmdir,
            Request::Readdir { .. } => CallOp::Readdir,
            Request::Chmod { .. } => CallOp::Chmod,
            Request::ReadPage { .. } => CallOp::ReadPage,
            Request::WritePage { .. } => CallOp::WritePage,
            Request::Truncate { .. } => CallOp::Truncate,
            Request::Mmap { .. } => CallOp::Mmap,
            Request::Munmap { .. } => CallOp::Munmap,
            Request::Stat { .. } => CallOp::Stat,
            Request::PutState { .. } => CallOp::PutState,
            Request::GetState => CallOp::GetState,
        }
    }

    /// Short human-readable argument list for reports.
    pub fn args(&self) -> String {
        match self {
            Request::Open { path }
            | Request::Remove { path }
            | Request::Rmdir { path }
            | Request::Readdir { path } => path.clone(),
            Request::Mkdir { path, perm }
            | Request::Create { path, perm }
            | Request::Chmod { path, perm } => format!("{path} {perm}"),
            Request::Close { fd } | Request::Stat { fd } => format!("fd={fd}"),
            Request::ReadPage { fd, index } => format!("fd={fd} index={index}"),
            Request::WritePage { fd, index, pid, valid, .. } => {
                format!("fd={fd} index={index} pid={pid} valid={valid}")
            }
            Request::Truncate { fd, size } => format!("fd={fd} size={size}"),
            Request::Mmap { len } => format!("len={len}"),
            Request::Munmap { addr } => format!("addr={addr:#x}"),
            Request::PutState { image } => format!("{} bytes", image.len()),
            Request::GetState => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Done,
    Opened { fd: u64 },
    Names(Vec<String>),
    Page(SealedPage),
    Written(u64),
    Mapped { addr: u64, data: Vec<u8> },
    Size(u64),
    State(Option<Vec<u8>>),
}

impl Reply {
    pub fn summary(&self) -> String {
        match self {
            Reply::Done => "ok".into(),
            Reply::Opened { fd } => format!("fd={fd}"),
            Reply::Names(n) => format!("{n:?}"),
            Reply::Page(_) => "page".into(),
            Reply::Written(n) => format!("written={n}"),
            Reply::Mapped { addr, data } => format!("addr={addr:#x} len={}", data.len()),
            Reply::Size(n) => format!("size={n}"),
            Reply::State(None) => "no state".into(),
            Reply::State(Some(img)) => format!("state {} bytes", img.len()),
        }
    }
}

pub type BackendResult = Result<Reply, OsErrno>;

/// An untrusted storage backend. Implementations may answer anything.
pub trait Backend: Send {
    fn dispatch(&mut self, counter: u64, req: &Request) -> BackendResult;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn dispatch(&mut self, counter: u64, req: &Request) -> BackendResult {
        (**self).dispatch(counter, req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub counter: u64,
    pub request: Request,
    pub result: BackendResult,
}

impl LedgerEntry {
    pub fn op(&self) -> CallOp {
        self.request.op()
    }

    pub fn summary(&self) -> LedgerSummary {
        LedgerSummary {
            counter: self.counter,
            op: self.op(),
            args: self.request.args(),
            result: match &self.result {
                Ok(r) => r.summary(),
                Err(e) => e.to_string(),
            },
        }
    }
}

/// Serializable view of a ledger entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub counter: u64,
    pub op: CallOp,
    pub args: String,
    pub result: String,
}

/// The monitor's side of the boundary: stamps each request with the next
/// counter value and records it.
pub struct BackendPort {
    inner: Box<dyn Backend>,
    counter: u64,
    ledger: Vec<LedgerEntry>,
    record: bool,
}

impl fmt::Debug for BackendPort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendPort")
            .field("counter", &self.counter)
            .field("ledger_len", &self.ledger.len())
            .finish_non_exhaustive()
    }
}

impl BackendPort {
    pub fn new(inner: impl Backend + 'static) -> Self {
        BackendPort { inner: Box::new(inner), counter: 0, ledger: Vec::new(), record: true }
    }

    /// Disables ledger recording (the counter still advances).
    pub fn without_ledger(mut self) -> Self {
        self.record = false;
        self
    }

    pub fn call(&mut self, req: Request) -> BackendResult {
        let counter = self.counter;
        self.counter += 1;
        let result = self.inner.dispatch(counter, &req);
        if self.record {
            self.ledger.push(LedgerEntry { counter, request: req, result: result.clone() });
        }
        result
    }

    /// Next counter value to be issued, which equals the number of calls made.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    pub fn into_inner(self) -> Box<dyn Backend> {
        self.inner
    }
}

/// Splits an absolute path string into (parent, final name); root yields `None`.
pub(crate) fn split_path(path: &str) -> Option<(&str, &str)> {
    let trimmed = path.strip_suffix('/').unwrap_or(path);
    let idx = trimmed.rfind('/')?;
    let name = &trimmed[idx + 1..];
    if name.is_empty() {
        return None;
    }
    let parent = if idx == 0 { "/" } else { &trimmed[..idx] };
    Some((parent, name))
}
