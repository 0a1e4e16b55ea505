//! The call surface shared by the monitor, the trusting client and any
//! reference implementation used in tests.

use serde::{Deserialize, Serialize};

use crate::error::FsResult;
use crate::state::{Fid, FsState, PathName, Permission};

/// Handle value scripts use for "no such handle".
pub const INVALID_HANDLE: Fid = Fid(u64::MAX);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatInfo {
    pub perm: Permission,
    pub name: String,
    pub size: u64,
}

/// The fifteen core calls plus anonymous-memory access and remount.
pub trait FileSystem {
    fn open(&mut self, p: &PathName) -> FsResult<Fid>;
    fn close(&mut self, h: Fid) -> FsResult<()>;
    fn mkdir(&mut self, p: &PathName, perm: Permission) -> FsResult<()>;
    fn create(&mut self, p: &PathName, perm: Permission) -> FsResult<()>;
    fn remove(&mut self, p: &PathName) -> FsResult<()>;
    fn rmdir(&mut self, p: &PathName) -> FsResult<()>;
    fn stat(&mut self, h: Fid) -> FsResult<StatInfo>;
    fn readdir(&mut self, p: &PathName) -> FsResult<Vec<String>>;
    fn chmod(&mut self, p: &PathName, perm: Permission) -> FsResult<()>;
    fn seek(&mut self, h: Fid, pos: u64) -> FsResult<()>;
    fn read(&mut self, h: Fid, len: u64) -> FsResult<Vec<u8>>;
    /// Writes `data` at byte offset `pos` and leaves the cursor after it.
    fn write(&mut self, h: Fid, pos: u64, data: &[u8]) -> FsResult<()>;
    fn truncate(&mut self, h: Fid, len: u64) -> FsResult<()>;
    fn mmap(&mut self, len: u64) -> FsResult<u64>;
    fn munmap(&mut self, addr: u64) -> FsResult<()>;

    /// Reads `len` bytes of mapped memory starting at `addr`.
    fn peek(&mut self, addr: u64, len: u64) -> FsResult<Vec<u8>>;
    /// Overwrites mapped memory starting at `addr`.
    fn poke(&mut self, addr: u64, data: &[u8]) -> FsResult<()>;
    /// Persists the state, drops it, and loads it back.
    fn remount(&mut self) -> FsResult<()>;

    /// The trusted shadow state, if the implementation keeps one.
    fn shadow(&self) -> Option<&FsState> {
        None
    }
}
