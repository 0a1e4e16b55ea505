//! Test oracles: a naive in-memory filesystem written independently of the
//! monitor's shadow state, and a direct `std::fs` interpreter for the
//! libc-style calls.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use besfs_core::compat::OpenMode;
use besfs_core::{FileSystem, Fid, FsError, FsResult, PathName, Permission, StatInfo};
use besfs_harness::script::{Command, Line, Ref, Script};
use besfs_harness::Client;

const PAGE_ALIGN: u64 = 4096;
const FIRST_ADDR: u64 = 0x1000_0000;
const MAX_MAP: u64 = 64 << 20;

#[derive(Debug, Clone)]
enum Node {
    Dir { perm: Permission },
    File { perm: Permission, id: u64, data: Vec<u8> },
}

/// Paths as component vectors; the root is the empty vector.
type Key = Vec<String>;

/// Every call is answered from a flat path map with no shadow state, no
/// pages and no backend.
#[derive(Debug)]
pub struct RefFs {
    nodes: BTreeMap<Key, Node>,
    cursors: BTreeMap<u64, u64>,
    maps: BTreeMap<u64, Vec<u8>>,
    next_addr: u64,
    next_id: u64,
}

impl Default for RefFs {
    fn default() -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(Vec::new(), Node::Dir { perm: Permission::RWX });
        RefFs { nodes, cursors: BTreeMap::new(), maps: BTreeMap::new(), next_addr: FIRST_ADDR, next_id: 0 }
    }
}

fn key(p: &PathName) -> Key {
    p.components().to_vec()
}

impl RefFs {
    fn parent_ok(&self, k: &Key) -> FsResult<()> {
        match self.nodes.get(&k[..k.len() - 1]) {
            None => Err(FsError::NoEnt),
            Some(Node::File { .. }) => Err(FsError::NotDir),
            Some(Node::Dir { perm }) if !perm.write => Err(FsError::Acces),
            Some(Node::Dir { .. }) => Ok(()),
        }
    }

    fn new_node(&self, k: &Key) -> FsResult<()> {
        if k.is_empty() || self.nodes.contains_key(k) {
            return Err(FsError::Exists);
        }
        self.parent_ok(k)
    }

    fn file_of(&mut self, h: Fid) -> FsResult<(&Key, &mut Permission, &mut Vec<u8>)> {
        if !self.cursors.contains_key(&h.0) {
            return Err(FsError::BadF);
        }
        self.nodes
            .iter_mut()
            .find_map(|(k, n)| match n {
                Node::File { perm, id, data } if *id == h.0 => Some((k, perm, data)),
                _ => None,
            })
            .ok_or(FsError::BadF)
    }

    fn size_of(&mut self, h: Fid) -> FsResult<u64> {
        Ok(self.file_of(h)?.2.len() as u64)
    }

    fn region(&self, addr: u64, len: u64) -> FsResult<(u64, usize)> {
        let end = addr.checked_add(len).ok_or(FsError::Inval)?;
        self.maps
            .iter()
            .find(|(s, m)| **s <= addr && addr < **s + m.len() as u64 && end <= **s + m.len() as u64)
            .map(|(s, _)| (*s, (addr - s) as usize))
            .ok_or(FsError::Inval)
    }
}

impl FileSystem for RefFs {
    fn open(&mut self, p: &PathName) -> FsResult<Fid> {
        match self.nodes.get(&key(p)) {
            None => Err(FsError::NoEnt),
            Some(Node::Dir { .. }) => Err(FsError::IsDir),
            Some(Node::File { id, .. }) if self.cursors.contains_key(id) => Err(FsError::Inval),
            Some(Node::File { id, .. }) => {
                let id = *id;
                self.cursors.insert(id, 0);
                Ok(Fid(id))
            }
        }
    }

    fn close(&mut self, h: Fid) -> FsResult<()> {
        self.cursors.remove(&h.0).map(|_| ()).ok_or(FsError::BadF)
    }

    fn mkdir(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        let k = key(p);
        self.new_node(&k)?;
        self.nodes.insert(k, Node::Dir { perm });
        Ok(())
    }

    fn create(&mut self, p: &PathName, perm: Permission) -> FsResult<()> {
        let k = key(p);
        self.new_node(&k)?;
        self.next_id += 1;
        self.nodes.insert(k, Node::File { perm, id: self.next_id, data: Vec::new() });
        Ok(())
    }

    fn remove(&mut self, p: &PathName) -> FsResult<()> {
        let k = key(p);
        match self.nodes.get(&k) {
            None => return Err(FsError::NoEnt),
            Some(Node::Dir { .. }) => return Err(FsError::IsDir),
            Some(Node::File { id, .. }) if self.cursors.contains_key(id) => return Err(FsError::Inval),
            Some(Node::File { .. }) => {}
        }
        self.parent_ok(&k)?;
        self.nodes.remove(&k);
        Ok(())
    }

    fn rmdir(&mut self, p: &PathName) -> FsResult<()> {
        let k = key(p);
        if k.is_empty() {
            return Err(FsError::Inval);
        }
        match self.nodes.get(&k) {
            None => return Err(FsError::NoEnt),
            Some(Node::File { .. }) => return Err(FsError::NotDir),
            Some(Node::Dir { .. }) => {}
        }
        if self.nodes.keys().any(|c| c.len() > k.len() && c.starts_with(&k)) {
            return Err(FsError::NotEmpty);
        }
        self.parent_ok(&k)?;
        self.nodes.remove(&k);
        Ok(())
    }

    fn stat(&mut self, h: Fid) -> FsResult<StatInfo> {
        let (k, perm, data) = self.file_of(h)?;
        Ok(StatInfo { perm: *perm, name: k.last().cloned().unwrap_or_default(), size: data.len() as u64 })
    }

    fn readdir(&mut self, p: &PathName) -> FsResult<Vec<String>> {
        let k = key(p);
        match self.nodes.get(&k) {
            None => Err(FsError::NoEnt),
            Some(Node::File { .. }) => Err(FsError::NotDir),
            Some(Node::Dir { .. }) => {
                let mut names: Vec<String> = self
                    .nodes
                    .keys()
                    .filter(|c| c.len() == k.len() + 1 && c.starts_with(&k))
                    .map(|c| c[k.len()].clone())
                    .collect();
                names.sort();
                Ok(names)
            }
        }
    }

    fn chmod(&mut self, p: &PathName, new: Permission) -> FsResult<()> {
        match self.nodes.get_mut(&key(p)) {
            None => Err(FsError::NoEnt),
            Some(Node::Dir { perm }) | Some(Node::File { perm, .. }) => {
                *perm = new;
                Ok(())
            }
        }
    }

    fn seek(&mut self, h: Fid, pos: u64) -> FsResult<()> {
        if pos > self.size_of(h)? {
            return Err(FsError::Inval);
        }
        self.cursors.insert(h.0, pos);
        Ok(())
    }

    fn read(&mut self, h: Fid, len: u64) -> FsResult<Vec<u8>> {
        let cur = *self.cursors.get(&h.0).ok_or(FsError::BadF)?;
        let data = self.file_of(h)?.2;
        let end = cur.checked_add(len).filter(|e| *e <= data.len() as u64).ok_or(FsError::Inval)?;
        let out = data[cur as usize..end as usize].to_vec();
        self.cursors.insert(h.0, end);
        Ok(out)
    }

    fn write(&mut self, h: Fid, pos: u64, bytes: &[u8]) -> FsResult<()> {
        let (_, perm, data) = self.file_of(h)?;
        let end = pos.checked_add(bytes.len() as u64);
        if pos > data.len() as u64 || end.is_none() {
            return Err(FsError::Inval);
        }
        if !perm.write {
            return Err(FsError::Acces);
        }
        let end = end.expect("checked") as usize;
        if data.len() < end {
            data.resize(end, 0);
        }
        data[pos as usize..end].copy_from_slice(bytes);
        self.cursors.insert(h.0, end as u64);
        Ok(())
    }

    fn truncate(&mut self, h: Fid, len: u64) -> FsResult<()> {
        let data = self.file_of(h)?.2;
        if len > data.len() as u64 {
            return Err(FsError::Inval);
        }
        data.truncate(len as usize);
        let c = self.cursors.get_mut(&h.0).expect("open");
        *c = (*c).min(len);
        Ok(())
    }

    fn mmap(&mut self, len: u64) -> FsResult<u64> {
        if len == 0 {
            return Err(FsError::Inval);
        }
        if len > MAX_MAP {
            return Err(FsError::NoSpace);
        }
        let start = self.next_addr;
        self.next_addr += len.div_ceil(PAGE_ALIGN) * PAGE_ALIGN;
        self.maps.insert(start, vec![0; len as usize]);
        Ok(start)
    }

    fn munmap(&mut self, addr: u64) -> FsResult<()> {
        self.maps.remove(&addr).map(|_| ()).ok_or(FsError::Inval)
    }

    fn peek(&mut self, addr: u64, len: u64) -> FsResult<Vec<u8>> {
        let (s, off) = self.region(addr, len)?;
        Ok(self.maps[&s][off..off + len as usize].to_vec())
    }

    fn poke(&mut self, addr: u64, bytes: &[u8]) -> FsResult<()> {
        let (s, off) = self.region(addr, bytes.len() as u64)?;
        self.maps.get_mut(&s).expect("found")[off..off + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    fn remount(&mut self) -> FsResult<()> {
        Ok(())
    }
}

impl Client for RefFs {}

/// Final contents of a filesystem: directories and files with their bytes.
pub type Tree = BTreeMap<String, Option<Vec<u8>>>;

/// Walks `fs` through its own calls. Every file must be closed.
pub fn dump_tree(fs: &mut dyn FileSystem) -> FsResult<Tree> {
    let mut out = Tree::new();
    let mut stack = vec![PathName::root()];
    while let Some(dir) = stack.pop() {
        for name in fs.readdir(&dir)? {
            let p = dir.join(&name).expect("valid name");
            match fs.open(&p) {
                Ok(h) => {
                    let size = fs.stat(h)?.size;
                    let data = fs.read(h, size)?;
                    fs.close(h)?;
                    out.insert(p.to_string(), Some(data));
                }
                Err(FsError::IsDir) => {
                    out.insert(p.to_string(), None);
                    stack.push(p);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Same listing for a host directory.
pub fn dump_host_tree(root: &Path) -> Tree {
    fn walk(root: &Path, dir: &Path, out: &mut Tree) {
        for e in fs::read_dir(dir).expect("readable") {
            let e = e.expect("entry");
            let rel = format!("/{}", e.path().strip_prefix(root).expect("below root").display());
            if e.file_type().expect("type").is_dir() {
                out.insert(rel, None);
                walk(root, &e.path(), out);
            } else {
                out.insert(rel, Some(fs::read(e.path()).expect("readable")));
            }
        }
    }
    let mut out = Tree::new();
    walk(root, root, &mut out);
    out
}

struct HostStream {
    file: File,
    readable: bool,
    writable: bool,
}

/// Runs the libc-style subset of a script directly against the host
/// filesystem below `root`, returning (code, payload) per line.
pub struct Direct {
    root: PathBuf,
    streams: BTreeMap<String, HostStream>,
}

fn host_code(e: std::io::Error) -> String {
    match e.kind() {
        std::io::ErrorKind::NotFound => "eNoEnt".into(),
        std::io::ErrorKind::AlreadyExists => "eExists".into(),
        std::io::ErrorKind::PermissionDenied => "eAcces".into(),
        _ => format!("io:{e}"),
    }
}

fn unix_mode(p: Permission) -> u32 {
    (u32::from(p.read) << 8) | (u32::from(p.write) << 7) | (u32::from(p.execute) << 6)
}

impl Direct {
    pub fn new(root: &Path) -> Self {
        Direct { root: root.to_path_buf(), streams: BTreeMap::new() }
    }

    fn host(&self, p: &PathName) -> PathBuf {
        self.root.join(p.to_string().trim_start_matches('/'))
    }

    fn stream(&mut self, r: &Ref) -> Result<&mut HostStream, String> {
        match r {
            Ref::Var(v) => self.streams.get_mut(v).ok_or_else(|| "eBadF".to_string()),
            Ref::Invalid => Err("eBadF".into()),
        }
    }

    fn exec(&mut self, line: &Line) -> Result<Option<Vec<u8>>, String> {
        use std::os::unix::fs::PermissionsExt;
        assert_eq!(line.alts.len(), 1, "direct runs take plain lines");
        let inv = &line.alts[0];
        let bind = inv.bind.clone();
        match &inv.command {
            Command::Fopen(p, _) | Command::Creat(p, _) if bind.is_some() => {
                let mode = match &inv.command {
                    Command::Fopen(_, m) => *m,
                    _ => OpenMode::W,
                };
                let mut o = OpenOptions::new();
                o.read(mode.readable())
                    .write(mode.writable() && !mode.appends())
                    .append(mode.appends())
                    .create(mode.creates())
                    .truncate(mode.truncates());
                let mut file = o.open(self.host(p)).map_err(host_code)?;
                if mode.appends() {
                    file.seek(SeekFrom::End(0)).map_err(host_code)?;
                }
                self.streams.insert(
                    bind.expect("checked"),
                    HostStream { file, readable: mode.readable(), writable: mode.writable() },
                );
                Ok(None)
            }
            Command::Fclose(Ref::Var(v)) => self.streams.remove(v).map(|_| None).ok_or_else(|| "eBadF".into()),
            Command::Fread(r, e, n) => {
                let s = self.stream(r)?;
                if !s.readable {
                    return Err("eAcces".into());
                }
                let mut buf = Vec::new();
                (&mut s.file).take(e * n).read_to_end(&mut buf).map_err(host_code)?;
                if *e > 0 && buf.len() as u64 % e != 0 {
                    let whole = buf.len() as u64 / e * e;
                    s.file.seek(SeekFrom::Current(whole as i64 - buf.len() as i64)).map_err(host_code)?;
                    buf.truncate(whole as usize);
                }
                Ok(Some(buf))
            }
            Command::Fgetc(r) => {
                let s = self.stream(r)?;
                let mut b = [0u8; 1];
                let n = s.file.read(&mut b).map_err(host_code)?;
                Ok(Some(b[..n].to_vec()))
            }
            Command::Fgets(r, cap) => {
                let s = self.stream(r)?;
                let mut line = Vec::new();
                let mut b = [0u8; 1];
                while (line.len() as u64) < cap - 1 && s.file.read(&mut b).map_err(host_code)? == 1 {
                    line.push(b[0]);
                    if b[0] == b'\n' {
                        break;
                    }
                }
                Ok(Some(line))
            }
            Command::Fwrite(r, d) | Command::SysWrite(r, d) => {
                let s = self.stream(r)?;
                if !s.writable {
                    return Err("eAcces".into());
                }
                s.file.write_all(d).map_err(host_code)?;
                Ok(Some(d.len().to_string().into_bytes()))
            }
            Command::Fseek(r, n) | Command::SysLseek(r, n) => {
                self.stream(r)?.file.seek(SeekFrom::Start(*n)).map_err(host_code)?;
                Ok(None)
            }
            Command::Ftell(r) => Ok(Some(self.stream(r)?.file.stream_position().map_err(host_code)?.to_string().into_bytes())),
            Command::Rewind(r) => {
                self.stream(r)?.file.rewind().map_err(host_code)?;
                Ok(None)
            }
            Command::Ftruncate(r, n) => {
                let s = self.stream(r)?;
                s.file.set_len(*n).map_err(host_code)?;
                let pos = s.file.stream_position().map_err(host_code)?;
                s.file.seek(SeekFrom::Start(pos.min(*n))).map_err(host_code)?;
                Ok(None)
            }
            Command::SysOpen(p) if bind.is_some() => {
                let file = OpenOptions::new().read(true).write(true).open(self.host(p)).map_err(host_code)?;
                self.streams.insert(bind.expect("checked"), HostStream { file, readable: true, writable: true });
                Ok(None)
            }
            Command::SysRead(r, n) => {
                let mut buf = vec![0; *n as usize];
                self.stream(r)?.file.read_exact(&mut buf).map_err(host_code)?;
                Ok(Some(buf))
            }
            Command::SysClose(Ref::Var(v)) => self.streams.remove(v).map(|_| None).ok_or_else(|| "eBadF".into()),
            Command::Unlink(p) | Command::Remove(p) => fs::remove_file(self.host(p)).map(|_| None).map_err(host_code),
            Command::Mkdir(p, _) => fs::create_dir(self.host(p)).map(|_| None).map_err(host_code),
            Command::Rmdir(p) => fs::remove_dir(self.host(p)).map(|_| None).map_err(host_code),
            Command::Readdir(p) => {
                let mut names: Vec<String> = fs::read_dir(self.host(p))
                    .map_err(host_code)?
                    .map(|e| e.expect("entry").file_name().to_string_lossy().into_owned())
                    .collect();
                names.sort();
                Ok(Some(names.join("/").into_bytes()))
            }
            Command::Chmod(p, perm) => fs::set_permissions(self.host(p), fs::Permissions::from_mode(unix_mode(*perm)))
                .map(|_| None)
                .map_err(host_code),
            other => panic!("no direct form for {other}"),
        }
    }

    /// Runs every line and returns (code, payload) per line.
    pub fn run(&mut self, script: &Script) -> Vec<(String, Option<Vec<u8>>)> {
        script
            .lines
            .iter()
            .map(|l| match self.exec(l) {
                Ok(p) => ("eSucc".to_string(), p),
                Err(code) => (code, None),
            })
            .collect()
    }
}
