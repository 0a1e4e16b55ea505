//! Executes script lines against any [`Client`], turning each line into a
//! result code and an observable payload.
//!
//! Handles and mapping addresses are opaque: they never appear in payloads,
//! so runs over different implementations compare equal whenever they
//! behave the same.

use std::collections::BTreeMap;

use besfs_core::backend::LedgerEntry;
use besfs_core::codec::encode_state;
use besfs_core::compat::{self, FileStream, SysFd};
use besfs_core::error::code_name;
use besfs_core::fs::INVALID_HANDLE;
use besfs_core::state::is_good_state;
use besfs_core::{FileSystem, FsError, FsResult, FsState, Monitor, PathName, Permission, StatInfo, TrustingClient, ViolationKind};
use besfs_core::Fid;

use crate::script::{Command, Invocation, Line, Ref};

/// A filesystem the harness can drive and inspect.
pub trait Client: FileSystem {
    fn ledger(&self) -> &[LedgerEntry] {
        &[]
    }
}

impl Client for Monitor {
    fn ledger(&self) -> &[LedgerEntry] {
        Monitor::ledger(self)
    }
}

impl Client for TrustingClient {
    fn ledger(&self) -> &[LedgerEntry] {
        TrustingClient::ledger(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckTally {
    pub core_calls: u64,
    pub good_failures: u64,
    pub atomicity_failures: u64,
}

/// Wraps a client and, after every core call, checks the good-state
/// predicate and that failed calls left the shadow state byte-identical.
pub struct Checked<'a> {
    inner: &'a mut dyn Client,
    enabled: bool,
    pub tally: CheckTally,
}

impl<'a> Checked<'a> {
    pub fn new(inner: &'a mut dyn Client, enabled: bool) -> Self {
        Checked { inner, enabled, tally: CheckTally::default() }
    }

    pub fn client(&self) -> &dyn Client {
        &*self.inner
    }

    fn call<T>(&mut self, f: impl FnOnce(&mut dyn Client) -> FsResult<T>) -> FsResult<T> {
        self.tally.core_calls += 1;
        if !self.enabled || self.inner.shadow().is_none() {
            return f(&mut *self.inner);
        }
        let before = self.inner.shadow().map(encode_state);
        let r = f(&mut *self.inner);
        let s: &FsState = self.inner.shadow().expect("checked above");
        if !is_good_state(s) {
            self.tally.good_failures += 1;
        }
        if r.is_err() && before.as_deref() != Some(&encode_state(s)[..]) {
            self.tally.atomicity_failures += 1;
        }
        r
    }
}

impl FileSystem for Checked<'_> {
    fn open(&mut self, p: &PathName) -> FsResult<Fid> {
        self.call(|c| c.open(p))
    }
    fn close(&mut self, h: Fid) -> FsResult<()> {
        self.call(|c| c.close(h))
    }
    fn mkdir(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        self.call(|c| c.mkdir(p, perm))
    }
    fn create(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        self.call(|c| c.create(p, perm))
    }
    fn remove(&mut self, p: &PathName) -> FsResult<()> {
        self.call(|c| c.remove(p))
    }
    fn rmdir(&mut self, p: &PathName) -> FsResult<()> {
        self.call(|c| c.rmdir(p))
    }
    fn stat(&mut self, h: Fid) -> FsResult<StatInfo> {
        self.call(|c| c.stat(h))
    }
    fn readdir(&mut self, p: &PathName) -> FsResult<Vec<String>> {
        self.call(|c| c.readdir(p))
    }
    fn chmod(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        self.call(|c| c.chmod(p, perm))
    }
    fn seek(&mut self, h: Fid, pos: u64) -> FsResult<()> {
        self.call(|c| c.seek(h, pos))
    }
    fn read(&mut self, h: Fid, len: u64) -> FsResult<Vec<u8>> {
        self.call(|c| c.read(h, len))
    }
    fn write(&mut self, h: Fid, pos: u64, data: &[u8]) -> FsResult<()> {
        self.call(|c| c.write(h, pos, data))
    }
    fn truncate(&mut self, h: Fid, len: u64) -> FsResult<()> {
        self.call(|c| c.truncate(h, len))
    }
    fn mmap(&mut self, len: u64) -> FsResult<u64> {
        self.call(|c| c.mmap(len))
    }
    fn munmap(&mut self, addr: u64) -> FsResult<()> {
        self.call(|c| c.munmap(addr))
    }
    fn peek(&mut self, addr: u64, len: u64) -> FsResult<Vec<u8>> {
        self.call(|c| c.peek(addr, len))
    }
    fn poke(&mut self, addr: u64, data: &[u8]) -> FsResult<()> {
        self.call(|c| c.poke(addr, data))
    }
    fn remount(&mut self) -> FsResult<()> {
        self.call(|c| c.remount())
    }
    fn shadow(&self) -> Option<&FsState> {
        self.inner.shadow()
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Handle(Fid),
    Stream(FileStream),
    Fd(SysFd),
    Addr(u64),
}

/// Variables bound by `as`. A binding whose command failed holds `None`.
#[derive(Debug, Default)]
pub struct Env {
    vars: BTreeMap<String, Option<Value>>,
}

impl Env {
    fn get(&self, r: &Ref) -> Option<&Value> {
        match r {
            Ref::Var(v) => self.vars.get(v)?.as_ref(),
            Ref::Invalid => None,
        }
    }

    fn handle(&self, r: &Ref) -> Fid {
        match self.get(r) {
            Some(Value::Handle(h)) => *h,
            _ => INVALID_HANDLE,
        }
    }

    fn addr(&self, r: &Ref) -> u64 {
        match self.get(r) {
            Some(Value::Addr(a)) => *a,
            _ => 0,
        }
    }

    fn stream(&self, r: &Ref) -> FsResult<FileStream> {
        match self.get(r) {
            Some(Value::Stream(s)) => Ok(s.clone()),
            _ => Err(FsError::BadF),
        }
    }

    fn fd(&self, r: &Ref) -> SysFd {
        match self.get(r) {
            Some(Value::Fd(fd)) => *fd,
            _ => SysFd { handle: INVALID_HANDLE, pos: 0 },
        }
    }

    fn set(&mut self, r: &Ref, v: Value) {
        if let Ref::Var(name) = r {
            self.vars.insert(name.clone(), Some(v));
        }
    }
}

/// Client-visible outcome of one line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: String,
    pub payload: Option<Vec<u8>>,
}

impl Outcome {
    pub fn violation(&self) -> Option<ViolationKind> {
        match besfs_core::error::parse_code(&self.code) {
            Some(Some(FsError::Violation(k))) => Some(k),
            _ => None,
        }
    }
}

fn text(s: impl ToString) -> Option<Vec<u8>> {
    Some(s.to_string().into_bytes())
}

/// Runs one command. Returns the payload and the value to bind, if any.
fn run_command<F: FileSystem + ?Sized>(
    fs: &mut F,
    env: &mut Env,
    cmd: &Command,
) -> FsResult<(Option<Vec<u8>>, Option<Value>)> {
    use Command::*;
    let none = |r: FsResult<()>| r.map(|()| (None, None));
    match cmd {
        Open(p) => fs.open(p).map(|h| (None, Some(Value::Handle(h)))),
        Close(r) => none(fs.close(env.handle(r))),
        Mkdir(p, m) => none(fs.mkdir(p, *m)),
        Create(p, m) => none(fs.create(p, *m)),
        Remove(p) => none(fs.remove(p)),
        Rmdir(p) => none(fs.rmdir(p)),
        Stat(r) => fs.stat(env.handle(r)).map(|st| (text(format!("{} {} {}", st.perm, st.name, st.size)), None)),
        Readdir(p) => fs.readdir(p).map(|names| (text(names.join("/")), None)),
        Chmod(p, m) => none(fs.chmod(p, *m)),
        Seek(r, n) => none(fs.seek(env.handle(r), *n)),
        Read(r, n) => fs.read(env.handle(r), *n).map(|d| (Some(d), None)),
        Write(r, pos, d) => none(fs.write(env.handle(r), *pos, d)),
        Truncate(r, n) => none(fs.truncate(env.handle(r), *n)),
        Mmap(n) => fs.mmap(*n).map(|a| (None, Some(Value::Addr(a)))),
        Munmap(r) => none(fs.munmap(env.addr(r))),
        Peek(r, off, n) => fs.peek(env.addr(r).wrapping_add(*off), *n).map(|d| (Some(d), None)),
        Poke(r, off, d) => none(fs.poke(env.addr(r).wrapping_add(*off), d)),
        Remount => none(fs.remount()),
        Fopen(p, m) => compat::c_fopen(fs, p, *m).map(|s| (None, Some(Value::Stream(s)))),
        Creat(p, m) => compat::c_creat(fs, p, *m).map(|s| (None, Some(Value::Stream(s)))),
        Unlink(p) => none(compat::c_unlink(fs, p)),
        Rename(a, b) => none(compat::c_rename(fs, a, b)),
        Fclose(r) => {
            let s = env.stream(r)?;
            compat::c_fclose(fs, s)?;
            if let Ref::Var(name) = r {
                env.vars.insert(name.clone(), None);
            }
            Ok((None, None))
        }
        Fsync(r) => none(compat::c_fsync(fs, &env.stream(r)?)),
        Ftell(r) => Ok((text(compat::c_ftell(&env.stream(r)?)), None)),
        Fread(r, ..) | Fgetc(r) | Fgets(r, _) | Fwrite(r, _) | Fseek(r, _) | Rewind(r) | Ftruncate(r, _) => {
            let mut s = env.stream(r)?;
            let res = match cmd {
                Fread(_, e, n) => compat::c_fread(fs, &mut s, *e, *n).map(|(d, _)| Some(d)),
                Fgetc(_) => compat::c_fgetc(fs, &mut s).map(|b| Some(b.into_iter().collect())),
                Fgets(_, cap) => compat::c_fgets(fs, &mut s, *cap).map(Some),
                Fwrite(_, d) => compat::c_fwrite(fs, &mut s, d).map(text),
                Fseek(_, n) => compat::c_fseek(fs, &mut s, *n).map(|()| None),
                Rewind(_) => compat::c_rewind(fs, &mut s).map(|()| None),
                Ftruncate(_, n) => compat::c_ftruncate(fs, &mut s, *n).map(|()| None),
                _ => unreachable!(),
            };
            env.set(r, Value::Stream(s));
            res.map(|p| (p, None))
        }
        SysOpen(p) => compat::sys_open(fs, p).map(|fd| (None, Some(Value::Fd(fd)))),
        SysClose(r) => none(compat::sys_close(fs, env.fd(r))),
        SysRead(r, _) | SysWrite(r, _) | SysLseek(r, _) => {
            let mut fd = env.fd(r);
            let res = match cmd {
                SysRead(_, n) => compat::sys_read(fs, &mut fd, *n).map(Some),
                SysWrite(_, d) => compat::sys_write(fs, &mut fd, d).map(text),
                SysLseek(_, n) => compat::sys_lseek(fs, &mut fd, *n).map(|_| None),
                _ => unreachable!(),
            };
            if res.is_ok() {
                env.set(r, Value::Fd(fd));
            }
            res.map(|p| (p, None))
        }
        Malloc(n) => compat::malloc_mmap(fs, *n).map(|a| (None, Some(Value::Addr(a)))),
        Free(r) => compat::free_mmap(fs, env.addr(r))
            .map(|(prev, size)| (text(format!("prev_size={prev} size={size}")), None)),
    }
}

fn run_invocation<F: FileSystem + ?Sized>(fs: &mut F, env: &mut Env, inv: &Invocation) -> FsResult<Option<Vec<u8>>> {
    let r = run_command(fs, env, &inv.command);
    if let Some(name) = &inv.bind {
        let value = r.as_ref().ok().and_then(|(_, v)| v.clone());
        env.vars.insert(name.clone(), value);
    }
    r.map(|(p, _)| p)
}

/// Runs a line, falling through `||` alternatives on ordinary errors.
pub fn run_line<F: FileSystem + ?Sized>(fs: &mut F, env: &mut Env, line: &Line) -> Outcome {
    let mut result = Ok(None);
    for inv in &line.alts {
        result = run_invocation(fs, env, inv);
        match &result {
            Err(e) if !e.is_violation() => continue,
            _ => break,
        }
    }
    Outcome { code: code_name(&result), payload: result.unwrap_or(None) }
}

/// Whether `out` satisfies the line's assertion, if it has one.
pub fn assertion_holds(line: &Line, out: &Outcome) -> Option<bool> {
    let e = line.expect.as_ref()?;
    Some(e.code.matches(&out.code) && e.payload.as_ref().is_none_or(|p| out.payload.as_ref() == Some(p)))
}
