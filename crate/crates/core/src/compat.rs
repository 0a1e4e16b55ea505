//! libc-style calls composed only from the core calls of a [`FileSystem`].
//!
//! Each function is a fixed sequence of core calls. A composed call that
//! fails halfway is not undone: the core steps already taken stay applied.
//!
//! Supported `fopen` modes:
//!
//! | spelling            | read | write | create | truncate | append |
//! |---------------------|------|-------|--------|----------|--------|
//! | `r` `rb`            | yes  |       |        |          |        |
//! | `w` `wb`            |      | yes   | yes    | yes      |        |
//! | `a` `ab`            |      | yes   | yes    |          | yes    |
//! | `r+` `rb+` `r+b`    | yes  | yes   |        |          |        |
//! | `w+` `wb+` `w+b`    | yes  | yes   | yes    | yes      |        |
//! | `a+` `ab+` `a+b`    | yes  | yes   | yes    |          | yes    |

use std::fmt;
use std::str::FromStr;

use crate::error::{FsError, FsResult};
use crate::fs::FileSystem;
use crate::state::{Fid, PathName, Permission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpenMode {
    R,
    W,
    A,
    RPlus,
    WPlus,
    APlus,
}

impl OpenMode {
    pub const SPELLINGS: [&'static str; 15] = [
        "r", "rb", "w", "wb", "a", "ab", "r+", "rb+", "r+b", "w+", "wb+", "w+b", "a+", "ab+", "a+b",
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "r" | "rb" => OpenMode::R,
            "w" | "wb" => OpenMode::W,
            "a" | "ab" => OpenMode::A,
            "r+" | "rb+" | "r+b" => OpenMode::RPlus,
            "w+" | "wb+" | "w+b" => OpenMode::WPlus,
            "a+" | "ab+" | "a+b" => OpenMode::APlus,
            _ => return None,
        })
    }

    pub fn readable(self) -> bool {
        !matches!(self, OpenMode::W | OpenMode::A)
    }

    pub fn writable(self) -> bool {
        self != OpenMode::R
    }

    pub fn creates(self) -> bool {
        !matches!(self, OpenMode::R | OpenMode::RPlus)
    }

    pub fn truncates(self) -> bool {
        matches!(self, OpenMode::W | OpenMode::WPlus)
    }

    pub fn appends(self) -> bool {
        matches!(self, OpenMode::A | OpenMode::APlus)
    }
}

impl fmt::Display for OpenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpenMode::R => "r",
            OpenMode::W => "w",
            OpenMode::A => "a",
            OpenMode::RPlus => "r+",
            OpenMode::WPlus => "w+",
            OpenMode::APlus => "a+",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported fopen mode {0:?}")]
pub struct BadMode(pub String);

impl FromStr for OpenMode {
    type Err = BadMode;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpenMode::parse(s).ok_or_else(|| BadMode(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileStream {
    pub handle: Fid,
    pub mode: OpenMode,
    pub pos: u64,
    pub eof: bool,
    pub err: bool,
}

impl FileStream {
    fn fail<T>(&mut self, e: FsError) -> FsResult<T> {
        self.err = true;
        Err(e)
    }
}

pub fn c_fopen<F: FileSystem + ?Sized>(fs: &mut F, p: &PathName, mode: OpenMode) -> FsResult<FileStream> {
    let handle = match fs.open(p) {
        Ok(h) => h,
        Err(FsError::NoEnt) if mode.creates() => {
            let parent = p.parent_of().map_err(|_| FsError::Inval)?;
            fs.readdir(&parent)?;
            fs.create(p, Permission::RW)?;
            fs.open(p)?
        }
        Err(e) => return Err(e),
    };
    let st = fs.stat(handle)?;
    if (mode.readable() && !st.perm.read) || (mode.writable() && !st.perm.write) {
        fs.close(handle)?;
        return Err(FsError::Acces);
    }
    let mut pos = 0;
    if mode.truncates() {
        fs.truncate(handle, 0)?;
    } else if mode.appends() {
        fs.seek(handle, st.size)?;
        pos = st.size;
    }
    Ok(FileStream { handle, mode, pos, eof: false, err: false })
}

pub fn c_fclose<F: FileSystem + ?Sized>(fs: &mut F, s: FileStream) -> FsResult<()> {
    fs.close(s.handle)
}

/// Reads up to `count` elements of `elem` bytes. Returns the bytes and the
/// number of whole elements read.
pub fn c_fread<F: FileSystem + ?Sized>(
    fs: &mut F,
    s: &mut FileStream,
    elem: u64,
    count: u64,
) -> FsResult<(Vec<u8>, u64)> {
    if !s.mode.readable() {
        return s.fail(FsError::Acces);
    }
    if elem == 0 || count == 0 {
        return Ok((Vec::new(), 0));
    }
    let Some(want) = elem.checked_mul(count) else {
        return s.fail(FsError::Inval);
    };
    let size = fs.stat(s.handle)?.size;
    let avail = size.saturating_sub(s.pos).min(want);
    let n = avail - avail % elem;
    if n < want {
        s.eof = true;
    }
    let data = if n > 0 { fs.read(s.handle, n)? } else { Vec::new() };
    s.pos += n;
    Ok((data, n / elem))
}

pub fn c_fgetc<F: FileSystem + ?Sized>(fs: &mut F, s: &mut FileStream) -> FsResult<Option<u8>> {
    let (data, _) = c_fread(fs, s, 1, 1)?;
    Ok(data.first().copied())
}

/// Reads one line: stops after a newline (kept), at end of file, or after
/// `cap - 1` bytes. Reads one byte per core call.
pub fn c_fgets<F: FileSystem + ?Sized>(fs: &mut F, s: &mut FileStream, cap: u64) -> FsResult<Vec<u8>> {
    if !s.mode.readable() {
        return s.fail(FsError::Acces);
    }
    if cap == 0 {
        return s.fail(FsError::Inval);
    }
    let size = fs.stat(s.handle)?.size;
    let mut line = Vec::new();
    while (line.len() as u64) < cap - 1 {
        if s.pos >= size {
            s.eof = true;
            break;
        }
        let byte = fs.read(s.handle, 1)?[0];
        s.pos += 1;
        line.push(byte);
        if byte == b'\n' {
            break;
        }
    }
    Ok(line)
}

/// Writes the whole buffer in one core write at the stream position, or at
/// end of file for append streams.
pub fn c_fwrite<F: FileSystem + ?Sized>(fs: &mut F, s: &mut FileStream, data: &[u8]) -> FsResult<u64> {
    if !s.mode.writable() {
        return s.fail(FsError::Acces);
    }
    if s.mode.appends() {
        s.pos = fs.stat(s.handle)?.size;
    }
    fs.write(s.handle, s.pos, data)?;
    s.pos += data.len() as u64;
    Ok(data.len() as u64)
}

pub fn c_fseek<F: FileSystem + ?Sized>(fs: &mut F, s: &mut FileStream, pos: u64) -> FsResult<()> {
    fs.seek(s.handle, pos)?;
    s.pos = pos;
    s.eof = false;
    Ok(())
}

pub fn c_ftell(s: &FileStream) -> u64 {
    s.pos
}

pub fn c_rewind<F: FileSystem + ?Sized>(fs: &mut F, s: &mut FileStream) -> FsResult<()> {
    c_fseek(fs, s, 0)?;
    s.err = false;
    Ok(())
}

pub fn c_ftruncate<F: FileSystem + ?Sized>(fs: &mut F, s: &mut FileStream, len: u64) -> FsResult<()> {
    fs.truncate(s.handle, len)?;
    s.pos = s.pos.min(len);
    Ok(())
}

/// Creates (or empties) `p` and opens it for writing.
pub fn c_creat<F: FileSystem + ?Sized>(fs: &mut F, p: &PathName, perm: Permission) -> FsResult<FileStream> {
    match fs.create(p, perm) {
        Ok(()) | Err(FsError::Exists) => {}
        Err(e) => return Err(e),
    }
    let handle = fs.open(p)?;
    fs.truncate(handle, 0)?;
    Ok(FileStream { handle, mode: OpenMode::W, pos: 0, eof: false, err: false })
}

pub fn c_unlink<F: FileSystem + ?Sized>(fs: &mut F, p: &PathName) -> FsResult<()> {
    fs.remove(p)
}

pub fn c_chmod<F: FileSystem + ?Sized>(fs: &mut F, p: &PathName, perm: Permission) -> FsResult<()> {
    fs.chmod(p, perm)
}

pub fn c_readdir<F: FileSystem + ?Sized>(fs: &mut F, p: &PathName) -> FsResult<Vec<String>> {
    fs.readdir(p)
}

pub fn c_mkdir<F: FileSystem + ?Sized>(fs: &mut F, p: &PathName, perm: Permission) -> FsResult<()> {
    fs.mkdir(p, perm)
}

pub fn c_rmdir<F: FileSystem + ?Sized>(fs: &mut F, p: &PathName) -> FsResult<()> {
    fs.rmdir(p)
}

pub fn c_rename<F: FileSystem + ?Sized>(_fs: &mut F, _from: &PathName, _to: &PathName) -> FsResult<()> {
    Err(FsError::Unsupported)
}

pub fn c_fsync<F: FileSystem + ?Sized>(_fs: &mut F, _s: &FileStream) -> FsResult<()> {
    Err(FsError::Unsupported)
}

/// A raw descriptor for the syscall-style wrappers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SysFd {
    pub handle: Fid,
    pub pos: u64,
}

pub fn sys_open<F: FileSystem + ?Sized>(fs: &mut F, p: &PathName) -> FsResult<SysFd> {
    Ok(SysFd { handle: fs.open(p)?, pos: 0 })
}

pub fn sys_close<F: FileSystem + ?Sized>(fs: &mut F, fd: SysFd) -> FsResult<()> {
    fs.close(fd.handle)
}

pub fn sys_read<F: FileSystem + ?Sized>(fs: &mut F, fd: &mut SysFd, len: u64) -> FsResult<Vec<u8>> {
    let data = fs.read(fd.handle, len)?;
    fd.pos += len;
    Ok(data)
}

pub fn sys_write<F: FileSystem + ?Sized>(fs: &mut F, fd: &mut SysFd, data: &[u8]) -> FsResult<u64> {
    fs.write(fd.handle, fd.pos, data)?;
    fd.pos += data.len() as u64;
    Ok(data.len() as u64)
}

pub fn sys_lseek<F: FileSystem + ?Sized>(fs: &mut F, fd: &mut SysFd, pos: u64) -> FsResult<u64> {
    fs.seek(fd.handle, pos)?;
    fd.pos = pos;
    Ok(pos)
}

/// Chunk header of an mmap-served allocation: `prev_size` (u64 LE) at
/// offset 0 and the chunk size at offset 8.
pub const CHUNK_HEADER: u64 = 16;

/// Maps a chunk for `len` payload bytes and records its size in the header.
/// Returns the chunk address.
pub fn malloc_mmap<F: FileSystem + ?Sized>(fs: &mut F, len: u64) -> FsResult<u64> {
    let total = len.checked_add(CHUNK_HEADER).ok_or(FsError::Inval)?;
    let chunk = fs.mmap(total)?;
    fs.poke(chunk + 8, &total.to_le_bytes())?;
    Ok(chunk)
}

/// Frees an mmap-served chunk the way an allocator does: it trusts the
/// header and unmaps from `chunk - prev_size`. Returns (prev_size, size).
pub fn free_mmap<F: FileSystem + ?Sized>(fs: &mut F, chunk: u64) -> FsResult<(u64, u64)> {
    let word = |b: Vec<u8>| u64::from_le_bytes(b.try_into().expect("peeked 8 bytes"));
    let prev_size = word(fs.peek(chunk, 8)?);
    let size = word(fs.peek(chunk + 8, 8)?);
    fs.munmap(chunk.wrapping_sub(prev_size))?;
    Ok((prev_size, size))
}
