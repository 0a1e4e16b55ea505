//! Trusted shadow state: layout tree, node maps, handles, page pool and
//! anonymous-mapping shadow, plus the good-state predicate over them.

mod good;
mod ops;
mod path;
mod pool;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use good::{check_good, is_good_state, GoodViolation};
pub use path::{validate_name, PathError, PathName};
pub use pool::{PageMeta, PagePool, DEFAULT_POOL_CAPACITY, MAX_POOL_CAPACITY};

use crate::error::{FsError, FsResult};

/// Content bytes carried by one sealed page.
pub const CONTENT_BYTES: usize = 4000;
/// Size of a sealed page on the backend.
pub const PAGE_SIZE: usize = 4096;
/// Metadata bytes at the end of every sealed page.
pub const META_BYTES: usize = PAGE_SIZE - CONTENT_BYTES;

/// First address handed out for anonymous mappings.
pub const MMAP_BASE: u64 = 0x1000_0000;
/// Mapping addresses are aligned to this granularity.
pub const MMAP_ALIGN: u64 = 4096;
/// Largest anonymous mapping; longer requests fail with eNoSpace.
pub const MAX_MMAP_LEN: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fid(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Did(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageId(pub u64);

impl fmt::Display for Fid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of pages needed to hold `size` content bytes.
pub fn pages_for(size: u64) -> usize {
    size.div_ceil(CONTENT_BYTES as u64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Permission {
    pub read: bool,
    pub write: bool,
    pub execute: bool,
}

impl Permission {
    pub const RWX: Permission = Permission { read: true, write: true, execute: true };
    pub const RW: Permission = Permission { read: true, write: true, execute: false };
    pub const R: Permission = Permission { read: true, write: false, execute: false };
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |on: bool, c: char| if on { c } else { '-' };
        write!(f, "{}{}{}", flag(self.read, 'r'), flag(self.write, 'w'), flag(self.execute, 'x'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid permission string {0:?} (expected e.g. rwx, rw-, r--)")]
pub struct BadPermission(pub String);

impl FromStr for Permission {
    type Err = BadPermission;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = s.as_bytes();
        let bit = |i: usize, c: u8| match b.get(i) {
            Some(&x) if x == c => Ok(true),
            Some(b'-') => Ok(false),
            _ => Err(BadPermission(s.to_string())),
        };
        if b.len() != 3 {
            return Err(BadPermission(s.to_string()));
        }
        Ok(Permission { read: bit(0, b'r')?, write: bit(1, b'w')?, execute: bit(2, b'x')? })
    }
}

impl TryFrom<String> for Permission {
    type Error = BadPermission;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Permission> for String {
    fn from(p: Permission) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FData {
    pub name: String,
    pub perm: Permission,
    pub size: u64,
    pub pages: Vec<PageId>,
}

/// Directory node. `size` is never maintained and stays 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DData {
    pub name: String,
    pub perm: Permission,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tree {
    File(Fid),
    Dir(Did, Vec<Tree>),
}

impl Tree {
    /// File ids in pre-order.
    pub fn fids(&self) -> Vec<Fid> {
        let mut out = Vec::new();
        self.walk(&mut |t| {
            if let Tree::File(f) = t {
                out.push(*f);
            }
        });
        out
    }

    /// Directory ids in pre-order, the node's own id first.
    pub fn dids(&self) -> Vec<Did> {
        let mut out = Vec::new();
        self.walk(&mut |t| {
            if let Tree::Dir(d, _) = t {
                out.push(*d);
            }
        });
        out
    }

    fn walk(&self, visit: &mut impl FnMut(&Tree)) {
        visit(self);
        if let Tree::Dir(_, children) = self {
            for c in children {
                c.walk(visit);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenHandle {
    pub fid: Fid,
    pub cursor: u64,
}

/// An anonymous mapping. `start`/`length` are monitor-assigned; `host_addr`
/// is the untrusted address the backend reported, kept only to relay munmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmapHandle {
    pub start: u64,
    pub length: u64,
    pub host_addr: u64,
}

impl MmapHandle {
    pub fn end(&self) -> u64 {
        self.start + self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    FileAt(Fid),
    DirAt(Did),
    Absent,
}

/// The trusted shadow state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsState {
    pub layout: Tree,
    pub fmap: BTreeMap<Fid, FData>,
    pub dmap: BTreeMap<Did, DData>,
    pub handles: Vec<OpenHandle>,
    pub mmaps: Vec<MmapHandle>,
    pub pages: PagePool,
    /// In-monitor copy of every mapping, keyed by mapping start.
    pub anon: BTreeMap<u64, Vec<u8>>,
    pub next_fid: u64,
    pub next_did: u64,
    pub next_addr: u64,
}

impl Default for FsState {
    fn default() -> Self {
        init_state()
    }
}

/// The empty filesystem: a root directory and nothing else.
pub fn init_state() -> FsState {
    init_state_with_capacity(DEFAULT_POOL_CAPACITY)
}

pub fn init_state_with_capacity(capacity: u64) -> FsState {
    let root = Did(0);
    let mut dmap = BTreeMap::new();
    dmap.insert(root, DData { name: String::new(), perm: Permission::RWX, size: 0 });
    FsState {
        layout: Tree::Dir(root, Vec::new()),
        fmap: BTreeMap::new(),
        dmap,
        handles: Vec::new(),
        mmaps: Vec::new(),
        pages: PagePool::new(capacity),
        anon: BTreeMap::new(),
        next_fid: 0,
        next_did: 1,
        next_addr: MMAP_BASE,
    }
}

fn tree_name<'a>(
    t: &Tree,
    fmap: &'a BTreeMap<Fid, FData>,
    dmap: &'a BTreeMap<Did, DData>,
) -> Option<&'a str> {
    match t {
        Tree::File(f) => fmap.get(f).map(|d| d.name.as_str()),
        Tree::Dir(d, _) => dmap.get(d).map(|d| d.name.as_str()),
    }
}

fn walk_mut<'a>(
    node: &'a mut Tree,
    comps: &[String],
    fmap: &BTreeMap<Fid, FData>,
    dmap: &BTreeMap<Did, DData>,
) -> Option<&'a mut Tree> {
    let Some((first, rest)) = comps.split_first() else {
        return Some(node);
    };
    let Tree::Dir(_, children) = node else {
        return None;
    };
    let child = children
        .iter_mut()
        .find(|c| tree_name(c, fmap, dmap) == Some(first.as_str()))?;
    walk_mut(child, rest, fmap, dmap)
}

impl FsState {
    pub fn name_of(&self, t: &Tree) -> Option<&str> {
        tree_name(t, &self.fmap, &self.dmap)
    }

    fn node_at(&self, p: &PathName) -> Option<&Tree> {
        let mut node = &self.layout;
        for comp in p.components() {
            let Tree::Dir(_, children) = node else {
                return None;
            };
            node = children.iter().find(|c| self.name_of(c) == Some(comp.as_str()))?;
        }
        Some(node)
    }

    pub fn lookup(&self, p: &PathName) -> Resolution {
        match self.node_at(p) {
            Some(Tree::File(f)) => Resolution::FileAt(*f),
            Some(Tree::Dir(d, _)) => Resolution::DirAt(*d),
            None => Resolution::Absent,
        }
    }

    /// Names of the children of directory `p`, in layout order.
    pub fn children_names(&self, p: &PathName) -> Option<Vec<String>> {
        match self.node_at(p)? {
            Tree::Dir(_, children) => {
                Some(children.iter().filter_map(|c| self.name_of(c).map(str::to_string)).collect())
            }
            Tree::File(_) => None,
        }
    }

    pub fn is_empty_dir(&self, p: &PathName) -> bool {
        matches!(self.node_at(p), Some(Tree::Dir(_, c)) if c.is_empty())
    }

    pub fn dir_perm(&self, d: Did) -> Option<Permission> {
        self.dmap.get(&d).map(|d| d.perm)
    }

    /// Appends `child` to the children of directory `parent`.
    pub(crate) fn insert_child(&mut self, parent: &PathName, child: Tree) -> bool {
        let (fmap, dmap) = (&self.fmap, &self.dmap);
        match walk_mut(&mut self.layout, parent.components(), fmap, dmap) {
            Some(Tree::Dir(_, children)) => {
                children.push(child);
                true
            }
            _ => false,
        }
    }

    /// Detaches the node named by `p` from its parent.
    pub(crate) fn detach(&mut self, p: &PathName) -> Option<Tree> {
        let parent = p.parent_of().ok()?;
        let name = p.name()?;
        let (fmap, dmap) = (&self.fmap, &self.dmap);
        match walk_mut(&mut self.layout, parent.components(), fmap, dmap)? {
            Tree::Dir(_, children) => {
                let idx = children.iter().position(|c| tree_name(c, fmap, dmap) == Some(name))?;
                Some(children.remove(idx))
            }
            Tree::File(_) => None,
        }
    }

    /// Path of the file `fid`, by tree search.
    pub fn path_of(&self, fid: Fid) -> Option<PathName> {
        fn go(s: &FsState, t: &Tree, prefix: &mut Vec<String>, fid: Fid) -> bool {
            match t {
                Tree::File(f) => *f == fid,
                Tree::Dir(_, children) => children.iter().any(|c| {
                    let Some(name) = s.name_of(c) else { return false };
                    prefix.push(name.to_string());
                    if go(s, c, prefix, fid) {
                        return true;
                    }
                    prefix.pop();
                    false
                }),
            }
        }
        let mut prefix = Vec::new();
        go(self, &self.layout, &mut prefix, fid).then(|| {
            PathName::from_components(prefix).expect("layout names are validated on insert")
        })
    }

    pub fn handle(&self, fid: Fid) -> Option<&OpenHandle> {
        self.handles.iter().find(|h| h.fid == fid)
    }

    pub(crate) fn handle_mut(&mut self, fid: Fid) -> Option<&mut OpenHandle> {
        self.handles.iter_mut().find(|h| h.fid == fid)
    }

    pub fn is_open(&self, fid: Fid) -> bool {
        self.handle(fid).is_some()
    }

    pub fn mmap_at(&self, start: u64) -> Option<&MmapHandle> {
        self.mmaps.iter().find(|m| m.start == start)
    }

    /// Allocator for file ids: bump counter, never reused.
    pub fn new_fid(&self) -> Fid {
        Fid(self.next_fid)
    }

    pub fn new_did(&self) -> Did {
        Did(self.next_did)
    }

    /// Lowest free page slot.
    pub fn next_free_page(&self) -> FsResult<PageId> {
        self.pages.peek_free(1).map(|v| v[0]).ok_or(FsError::NoSpace)
    }

    /// Address the next mapping of `length` bytes would receive.
    pub fn new_mmap_addr(&self) -> u64 {
        self.next_addr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PathName {
        PathName::parse(s).unwrap()
    }

    fn add_file(s: &mut FsState, path: &str) -> Fid {
        let path = p(path);
        let fid = s.new_fid();
        s.next_fid += 1;
        s.fmap.insert(
            fid,
            FData { name: path.name().unwrap().into(), perm: Permission::RW, size: 0, pages: vec![] },
        );
        assert!(s.insert_child(&path.parent_of().unwrap(), Tree::File(fid)));
        fid
    }

    fn add_dir(s: &mut FsState, path: &str) -> Did {
        let path = p(path);
        let did = s.new_did();
        s.next_did += 1;
        s.dmap.insert(did, DData { name: path.name().unwrap().into(), perm: Permission::RWX, size: 0 });
        assert!(s.insert_child(&path.parent_of().unwrap(), Tree::Dir(did, vec![])));
        did
    }

    #[test]
    fn init_state_is_empty_and_good() {
        let s = init_state();
        assert!(is_good_state(&s));
        assert!(s.layout.fids().is_empty());
        assert_eq!(s.lookup(&PathName::root()), Resolution::DirAt(Did(0)));
        assert_eq!(s.lookup(&p("/x")), Resolution::Absent);
    }

    #[test]
    fn lookup_nested() {
        let mut s = init_state();
        let d = add_dir(&mut s, "/d");
        let f = add_file(&mut s, "/d/f");
        assert_eq!(s.lookup(&p("/d")), Resolution::DirAt(d));
        assert_eq!(s.lookup(&p("/d/f")), Resolution::FileAt(f));
        assert_eq!(s.lookup(&p("/d/f/x")), Resolution::Absent);
        assert_eq!(s.path_of(f), Some(p("/d/f")));
        assert!(is_good_state(&s));
    }

    #[test]
    fn allocators_start_fresh() {
        let s = init_state();
        assert_eq!(s.new_fid(), Fid(0));
        assert_eq!(s.new_did(), Did(1));
        assert_eq!(s.next_free_page(), Ok(PageId(0)));
    }

    #[test]
    fn detach_removes_only_named_child() {
        let mut s = init_state();
        add_file(&mut s, "/a");
        let b = add_file(&mut s, "/b");
        assert_eq!(s.detach(&p("/a")), Some(Tree::File(Fid(0))));
        assert_eq!(s.children_names(&PathName::root()).unwrap(), vec!["b".to_string()]);
        assert_eq!(s.lookup(&p("/b")), Resolution::FileAt(b));
    }

    #[test]
    fn permission_round_trip() {
        for s in ["rwx", "rw-", "r--", "---", "-w-", "--x"] {
            assert_eq!(s.parse::<Permission>().unwrap().to_string(), s);
        }
        assert!("rw".parse::<Permission>().is_err());
        assert!("wrx".parse::<Permission>().is_err());
    }
}
