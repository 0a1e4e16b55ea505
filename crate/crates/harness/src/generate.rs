//! Seeded random workload generation.
//!
//! The generator keeps a rough model of what it has created so most calls
//! satisfy their preconditions; a configurable fraction of calls is drawn
//! with arbitrary arguments to exercise error paths.

use std::collections::BTreeMap;

use besfs_core::compat::OpenMode;
use besfs_core::{PathName, Permission};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::script::{Command, Invocation, Line, Ref, Script};

const NAMES: [&str; 5] = ["a", "b", "c", "d", "log"];
const MAX_DEPTH: usize = 3;

pub fn default_weights() -> BTreeMap<String, u32> {
    [
        ("open", 8), ("close", 5), ("mkdir", 5), ("create", 8), ("remove", 3), ("rmdir", 2),
        ("stat", 4), ("readdir", 4), ("chmod", 2), ("seek", 4), ("read", 8), ("write", 10),
        ("truncate", 4), ("mmap", 3), ("munmap", 2), ("peek", 2), ("poke", 2), ("remount", 2),
        ("fopen", 3), ("fclose", 2), ("fread", 2), ("fgetc", 1), ("fgets", 1), ("fwrite", 2),
        ("fseek", 1), ("ftell", 1), ("rewind", 1), ("ftruncate", 1), ("creat", 1), ("unlink", 1),
        ("sys_open", 1), ("sys_read", 1), ("sys_write", 1), ("sys_lseek", 1), ("sys_close", 1),
        ("malloc", 1), ("free", 1),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Number of lines per script.
    pub length: usize,
    /// Probability that a line is drawn with arbitrary arguments.
    pub invalid_fraction: f64,
    /// Relative frequency of each call; missing calls are never drawn.
    pub weights: BTreeMap<String, u32>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { length: 50, invalid_fraction: 0.1, weights: default_weights() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Handle,
    Stream,
    Fd,
}

#[derive(Debug, Clone)]
struct Open {
    var: String,
    path: PathName,
    kind: Kind,
    cursor: u64,
    mode: Option<OpenMode>,
}

#[derive(Default)]
struct Model {
    dirs: Vec<PathName>,
    files: BTreeMap<PathName, u64>,
    open: Vec<Open>,
    maps: Vec<(String, u64)>,
    next_var: usize,
}

impl Model {
    fn fresh_var(&mut self, prefix: &str) -> String {
        self.next_var += 1;
        format!("{prefix}{}", self.next_var)
    }

    fn is_open(&self, p: &PathName) -> bool {
        self.open.iter().any(|o| &o.path == p)
    }

    fn exists(&self, p: &PathName) -> bool {
        self.files.contains_key(p) || self.dirs.contains(p)
    }

    fn closed_files(&self) -> Vec<PathName> {
        self.files.keys().filter(|p| !self.is_open(p)).cloned().collect()
    }

    fn of_kind(&self, kind: Kind) -> Vec<usize> {
        (0..self.open.len()).filter(|&i| self.open[i].kind == kind).collect()
    }

    fn size(&self, p: &PathName) -> u64 {
        self.files.get(p).copied().unwrap_or(0)
    }

    fn grow(&mut self, p: &PathName, end: u64) {
        if let Some(s) = self.files.get_mut(p) {
            *s = (*s).max(end);
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    m: Model,
}

impl Gen {
    fn new_path(&mut self) -> Option<PathName> {
        let parents: Vec<PathName> = self.m.dirs.iter().filter(|d| d.len() < MAX_DEPTH).cloned().collect();
        for _ in 0..8 {
            let parent = parents.choose(&mut self.rng)?;
            let p = parent.join(NAMES.choose(&mut self.rng).expect("nonempty")).expect("valid name");
            if !self.m.exists(&p) {
                return Some(p);
            }
        }
        None
    }

    fn any_path(&mut self) -> PathName {
        let depth = self.rng.gen_range(1..=MAX_DEPTH + 1);
        let parts: Vec<&str> = (0..depth).map(|_| *NAMES.choose(&mut self.rng).expect("nonempty")).collect();
        PathName::from_components(parts).expect("valid names")
    }

    fn existing_path(&mut self) -> PathName {
        let mut all: Vec<PathName> = self.m.dirs.clone();
        all.extend(self.m.files.keys().cloned());
        all.choose(&mut self.rng).cloned().unwrap_or_else(PathName::root)
    }

    fn perm(&mut self) -> Permission {
        *[Permission::RWX, Permission::RW, Permission::RW, Permission::R]
            .choose(&mut self.rng)
            .expect("nonempty")
    }

    fn data(&mut self) -> Vec<u8> {
        let len = match self.rng.gen_range(0..20) {
            0 => self.rng.gen_range(3990..4020),
            1 => self.rng.gen_range(8000..8100),
            2 => 0,
            _ => self.rng.gen_range(1..40),
        };
        (0..len).map(|_| self.rng.gen_range(b' '..=b'~')).collect()
    }

    fn upto(&mut self, n: u64) -> u64 {
        self.rng.gen_range(0..=n)
    }

    fn junk_ref(&mut self) -> Ref {
        let vars: Vec<String> = self.m.open.iter().map(|o| o.var.clone()).chain(self.m.maps.iter().map(|m| m.0.clone())).collect();
        match vars.choose(&mut self.rng) {
            Some(v) if self.rng.gen_bool(0.5) => Ref::Var(v.clone()),
            _ => Ref::Invalid,
        }
    }

    fn junk_num(&mut self) -> u64 {
        *[0, 1, 7, 4000, 4001, 1 << 20, u64::MAX].choose(&mut self.rng).expect("nonempty")
    }

    /// A call with arbitrary arguments; the model is left untouched.
    fn invalid(&mut self, name: &str) -> Option<Invocation> {
        use Command::*;
        let p = self.any_path();
        let cmd = match name {
            "open" => Open(p),
            "close" => Close(self.junk_ref()),
            "mkdir" => Mkdir(p, self.perm()),
            "create" => Create(p, self.perm()),
            "remove" => Remove(self.existing_path()),
            "rmdir" => Rmdir(self.existing_path()),
            "stat" => Stat(self.junk_ref()),
            "readdir" => Readdir(p),
            "chmod" => Chmod(p, self.perm()),
            "seek" => Seek(self.junk_ref(), self.junk_num()),
            "read" => Read(self.junk_ref(), self.junk_num()),
            "write" => Write(self.junk_ref(), self.junk_num(), b"junk".to_vec()),
            "truncate" => Truncate(self.junk_ref(), self.junk_num()),
            "mmap" => Mmap(*[0, u64::MAX, 1 << 40].choose(&mut self.rng).expect("nonempty")),
            "munmap" => Munmap(self.junk_ref()),
            "peek" => Peek(self.junk_ref(), self.junk_num(), 8),
            "poke" => Poke(self.junk_ref(), self.junk_num(), b"x".to_vec()),
            "fopen" => Fopen(p, OpenMode::R),
            "fread" => Fread(self.junk_ref(), 1, 4),
            "fwrite" => Fwrite(self.junk_ref(), b"x".to_vec()),
            "fseek" => Fseek(self.junk_ref(), self.junk_num()),
            "unlink" => Unlink(p),
            "free" => Free(self.junk_ref()),
            _ => return None,
        };
        Some(Invocation { command: cmd, bind: None })
    }

    fn bind(&mut self, cmd: Command, prefix: &str) -> (Invocation, String) {
        let var = self.m.fresh_var(prefix);
        (Invocation { command: cmd, bind: Some(var.clone()) }, var)
    }

    fn pick_open(&mut self, kind: Kind) -> Option<usize> {
        self.m.of_kind(kind).choose(&mut self.rng).copied()
    }

    /// A call that satisfies its preconditions under the model, which is
    /// updated as if the call succeeded. `None` when the model has nothing
    /// the call could act on.
    fn valid(&mut self, name: &str) -> Option<Invocation> {
        use Command::*;
        let plain = |c: Command| Some(Invocation { command: c, bind: None });
        match name {
            "open" | "sys_open" => {
                let p = self.m.closed_files().choose(&mut self.rng)?.clone();
                let (kind, prefix, cmd) = if name == "open" {
                    (Kind::Handle, "h", Open(p.clone()))
                } else {
                    (Kind::Fd, "fd", SysOpen(p.clone()))
                };
                let (inv, var) = self.bind(cmd, prefix);
                self.m.open.push(self::Open { var, path: p, kind, cursor: 0, mode: None });
                Some(inv)
            }
            "close" | "fclose" | "sys_close" => {
                let kind = match name {
                    "close" => Kind::Handle,
                    "fclose" => Kind::Stream,
                    _ => Kind::Fd,
                };
                let i = self.pick_open(kind)?;
                let o = self.m.open.remove(i);
                let r = Ref::Var(o.var);
                plain(match kind {
                    Kind::Handle => Close(r),
                    Kind::Stream => Fclose(r),
                    Kind::Fd => SysClose(r),
                })
            }
            "mkdir" => {
                let p = self.new_path()?;
                self.m.dirs.push(p.clone());
                plain(Mkdir(p, if self.rng.gen_bool(0.9) { Permission::RWX } else { self.perm() }))
            }
            "create" | "creat" => {
                let p = self.new_path()?;
                self.m.files.insert(p.clone(), 0);
                if name == "create" {
                    plain(Create(p, if self.rng.gen_bool(0.9) { Permission::RW } else { self.perm() }))
                } else {
                    let (inv, var) = self.bind(Creat(p.clone(), Permission::RW), "s");
                    self.m.open.push(self::Open { var, path: p, kind: Kind::Stream, cursor: 0, mode: Some(OpenMode::W) });
                    Some(inv)
                }
            }
            "remove" | "unlink" => {
                let p = self.m.closed_files().choose(&mut self.rng)?.clone();
                self.m.files.remove(&p);
                plain(if name == "remove" { Remove(p) } else { Unlink(p) })
            }
            "rmdir" => {
                let empty: Vec<PathName> = self
                    .m
                    .dirs
                    .iter()
                    .filter(|d| {
                        !d.is_root()
                            && !self.m.dirs.iter().any(|x| x != *d && x.starts_with(d))
                            && !self.m.files.keys().any(|f| f.starts_with(d))
                    })
                    .cloned()
                    .collect();
                let p = empty.choose(&mut self.rng)?.clone();
                self.m.dirs.retain(|d| d != &p);
                plain(Rmdir(p))
            }
            "readdir" => plain(Readdir(self.m.dirs.choose(&mut self.rng)?.clone())),
            "chmod" => {
                let p = self.existing_path();
                plain(Chmod(p, self.perm()))
            }
            "stat" | "seek" | "read" | "write" | "truncate" => {
                let i = self.pick_open(Kind::Handle)?;
                let o = self.m.open[i].clone();
                let size = self.m.size(&o.path);
                let r = Ref::Var(o.var.clone());
                let cmd = match name {
                    "stat" => Stat(r),
                    "seek" => {
                        let pos = self.upto(size);
                        self.m.open[i].cursor = pos;
                        Seek(r, pos)
                    }
                    "read" => {
                        let n = self.upto(size.saturating_sub(o.cursor));
                        self.m.open[i].cursor += n;
                        Read(r, n)
                    }
                    "write" => {
                        let pos = if self.rng.gen_bool(0.5) { size } else { self.upto(size) };
                        let d = self.data();
                        self.m.grow(&o.path, pos + d.len() as u64);
                        self.m.open[i].cursor = pos + d.len() as u64;
                        Write(r, pos, d)
                    }
                    _ => {
                        let len = self.upto(size);
                        self.m.files.insert(o.path.clone(), len);
                        for x in self.m.open.iter_mut().filter(|x| x.path == o.path) {
                            x.cursor = x.cursor.min(len);
                        }
                        Truncate(r, len)
                    }
                };
                plain(cmd)
            }
            "mmap" | "malloc" => {
                let len = match self.rng.gen_range(0..6) {
                    0 => 4096,
                    1 => self.rng.gen_range(4097..6000),
                    _ => self.rng.gen_range(1..256),
                };
                let (cmd, prefix) = if name == "mmap" { (Mmap(len), "m") } else { (Malloc(len), "c") };
                let (inv, var) = self.bind(cmd, prefix);
                let usable = if name == "mmap" { len } else { len + 16 };
                self.m.maps.push((var, usable));
                Some(inv)
            }
            "munmap" | "free" => {
                let prefix = if name == "munmap" { 'm' } else { 'c' };
                let idx: Vec<usize> = (0..self.m.maps.len()).filter(|&i| self.m.maps[i].0.starts_with(prefix)).collect();
                let i = *idx.choose(&mut self.rng)?;
                let (var, _) = self.m.maps.remove(i);
                plain(if name == "munmap" { Munmap(Ref::Var(var)) } else { Free(Ref::Var(var)) })
            }
            "peek" | "poke" => {
                let (var, len) = self.m.maps.choose(&mut self.rng)?.clone();
                let n = self.rng.gen_range(1..=len.min(16));
                let off = self.upto(len - n);
                let r = Ref::Var(var);
                plain(if name == "peek" {
                    Peek(r, off, n)
                } else {
                    Poke(r, off, (0..n).map(|_| self.rng.gen()).collect())
                })
            }
            "remount" => plain(Remount),
            "fopen" => {
                let mode = OpenMode::parse(OpenMode::SPELLINGS.choose(&mut self.rng).expect("nonempty")).expect("valid");
                let p = if mode.creates() && self.rng.gen_bool(0.4) {
                    self.new_path()?
                } else {
                    self.m.closed_files().choose(&mut self.rng)?.clone()
                };
                if !self.m.files.contains_key(&p) {
                    self.m.files.insert(p.clone(), 0);
                }
                if mode.truncates() {
                    self.m.files.insert(p.clone(), 0);
                }
                let cursor = if mode.appends() { self.m.size(&p) } else { 0 };
                let (inv, var) = self.bind(Fopen(p.clone(), mode), "s");
                self.m.open.push(self::Open { var, path: p, kind: Kind::Stream, cursor, mode: Some(mode) });
                Some(inv)
            }
            "fread" | "fgetc" | "fgets" | "fwrite" | "fseek" | "ftell" | "rewind" | "ftruncate" => {
                let i = self.pick_open(Kind::Stream)?;
                let o = self.m.open[i].clone();
                let size = self.m.size(&o.path);
                let r = Ref::Var(o.var.clone());
                let cmd = match name {
                    "fread" => {
                        let (e, n) = (self.rng.gen_range(1..4), self.rng.gen_range(1..20));
                        self.m.open[i].cursor = (o.cursor + e * n).min(size);
                        Fread(r, e, n)
                    }
                    "fgetc" => Fgetc(r),
                    "fgets" => Fgets(r, self.rng.gen_range(1..30)),
                    "fwrite" => {
                        let d = self.data();
                        let at = if o.mode.is_some_and(|m| m.appends()) { size } else { o.cursor };
                        if o.mode.is_some_and(|m| m.writable()) {
                            self.m.grow(&o.path, at + d.len() as u64);
                            self.m.open[i].cursor = at + d.len() as u64;
                        }
                        Fwrite(r, d)
                    }
                    "fseek" => {
                        let pos = self.upto(size);
                        self.m.open[i].cursor = pos;
                        Fseek(r, pos)
                    }
                    "ftell" => Ftell(r),
                    "rewind" => {
                        self.m.open[i].cursor = 0;
                        Rewind(r)
                    }
                    _ => {
                        let len = self.upto(size);
                        self.m.files.insert(o.path.clone(), len);
                        Ftruncate(r, len)
                    }
                };
                plain(cmd)
            }
            "sys_read" | "sys_write" | "sys_lseek" => {
                let i = self.pick_open(Kind::Fd)?;
                let o = self.m.open[i].clone();
                let size = self.m.size(&o.path);
                let r = Ref::Var(o.var.clone());
                plain(match name {
                    "sys_read" => SysRead(r, self.upto(size.saturating_sub(o.cursor))),
                    "sys_write" => {
                        let d = self.data();
                        self.m.grow(&o.path, o.cursor + d.len() as u64);
                        SysWrite(r, d)
                    }
                    _ => {
                        let pos = self.upto(size);
                        self.m.open[i].cursor = pos;
                        SysLseek(r, pos)
                    }
                })
            }
            "rename" => {
                let a = self.existing_path();
                let b = self.any_path();
                plain(Rename(a, b))
            }
            "fsync" => plain(Fsync(Ref::Var(self.m.open.iter().find(|o| o.kind == Kind::Stream)?.var.clone()))),
            _ => None,
        }
    }
}

/// Generates a script of `cfg.length` lines. The same seed and config
/// always produce the same script.
pub fn generate(seed: u64, cfg: &GenConfig) -> Script {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), m: Model::default() };
    g.m.dirs.push(PathName::root());
    let table: Vec<(&str, u32)> = cfg.weights.iter().filter(|(_, w)| **w > 0).map(|(k, w)| (k.as_str(), *w)).collect();
    let mut lines = Vec::with_capacity(cfg.length);
    while lines.len() < cfg.length {
        let inv = if table.is_empty() {
            None
        } else {
            let name = table.choose_weighted(&mut g.rng, |e| e.1).expect("positive weights").0;
            if g.rng.gen_bool(cfg.invalid_fraction.clamp(0.0, 1.0)) {
                g.invalid(name).or_else(|| g.valid(name))
            } else {
                g.valid(name)
            }
        };
        let inv = match inv {
            Some(inv) => inv,
            None => match g.valid("create") {
                Some(inv) if g.rng.gen_bool(0.7) => inv,
                _ => match g.valid("open") {
                    Some(inv) => inv,
                    None => Invocation { command: Command::Readdir(PathName::root()), bind: None },
                },
            },
        };
        lines.push(Line { lineno: lines.len() + 1, alts: vec![inv], expect: None });
    }
    Script { lines }
}
