use std::collections::{BTreeSet, HashSet};

use super::{pages_for, validate_name, FsState, PageId, Tree, MMAP_BASE};

/// The first conjunct of the good-state predicate that fails.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GoodViolation {
    #[error("layout root is not a directory")]
    RootNotDir,
    #[error("duplicate sibling name {0:?}")]
    DupName(String),
    #[error("a file id appears twice in the layout")]
    DupFid,
    #[error("a directory id appears twice in the layout")]
    DupDid,
    #[error("layout node without a map entry, or map entry not in the layout")]
    MapMismatch,
    #[error("invalid node name {0:?}")]
    BadName(String),
    #[error("directory size is not 0")]
    DirSize,
    #[error("file page list does not match its size")]
    PageCount,
    #[error("page {0} is listed by two files or twice by one")]
    PageShared(PageId),
    #[error("page {0} is not owned by the file that lists it")]
    PageOwner(PageId),
    #[error("page pool holds an in-use page no file lists")]
    PageLeak,
    #[error("two handles for the same file")]
    DupHandle,
    #[error("handle for a file not in the layout")]
    DanglingHandle,
    #[error("handle cursor beyond end of file")]
    CursorRange,
    #[error("mapping overlaps another or is empty")]
    MmapOverlap,
    #[error("anonymous shadow does not match the mapping handles")]
    AnonShadow,
    #[error("allocator counter would reissue a live id")]
    AllocatorStale,
}

/// Checks every conjunct of the good-state predicate.
pub fn check_good(s: &FsState) -> Result<(), GoodViolation> {
    let Tree::Dir(..) = &s.layout else {
        return Err(GoodViolation::RootNotDir);
    };
    check_names(s, &s.layout)?;

    let fids = s.layout.fids();
    let dids = s.layout.dids();
    let fid_set: BTreeSet<_> = fids.iter().copied().collect();
    let did_set: BTreeSet<_> = dids.iter().copied().collect();
    if fid_set.len() != fids.len() {
        return Err(GoodViolation::DupFid);
    }
    if did_set.len() != dids.len() {
        return Err(GoodViolation::DupDid);
    }
    if !fid_set.iter().eq(s.fmap.keys()) || !did_set.iter().eq(s.dmap.keys()) {
        return Err(GoodViolation::MapMismatch);
    }
    if s.dmap.values().any(|d| d.size != 0) {
        return Err(GoodViolation::DirSize);
    }

    let mut seen_pages = HashSet::new();
    for (fid, f) in &s.fmap {
        if f.pages.len() != pages_for(f.size) {
            return Err(GoodViolation::PageCount);
        }
        for &pid in &f.pages {
            if !seen_pages.insert(pid) {
                return Err(GoodViolation::PageShared(pid));
            }
            match s.pages.get(pid) {
                Some(m) if m.owner == Some(*fid) && m.page_id == pid => {}
                _ => return Err(GoodViolation::PageOwner(pid)),
            }
        }
    }
    if s.pages.in_use().count() != seen_pages.len() {
        return Err(GoodViolation::PageLeak);
    }

    let mut open = HashSet::new();
    for h in &s.handles {
        if !open.insert(h.fid) {
            return Err(GoodViolation::DupHandle);
        }
        let Some(f) = s.fmap.get(&h.fid) else {
            return Err(GoodViolation::DanglingHandle);
        };
        if h.cursor > f.size {
            return Err(GoodViolation::CursorRange);
        }
    }

    let mut spans: Vec<_> = s.mmaps.iter().map(|m| (m.start, m.length)).collect();
    spans.sort_unstable();
    if spans.iter().any(|&(_, len)| len == 0) {
        return Err(GoodViolation::MmapOverlap);
    }
    if spans.windows(2).any(|w| w[0].0 + w[0].1 > w[1].0) {
        return Err(GoodViolation::MmapOverlap);
    }
    if s.anon.len() != s.mmaps.len()
        || s
            .mmaps
            .iter()
            .any(|m| s.anon.get(&m.start).map(|b| b.len() as u64) != Some(m.length))
    {
        return Err(GoodViolation::AnonShadow);
    }

    if fids.iter().any(|f| f.0 >= s.next_fid)
        || dids.iter().any(|d| d.0 >= s.next_did)
        || s.mmaps.iter().any(|m| m.start < MMAP_BASE || m.end() > s.next_addr)
    {
        return Err(GoodViolation::AllocatorStale);
    }
    Ok(())
}

fn check_names(s: &FsState, t: &Tree) -> Result<(), GoodViolation> {
    let Tree::Dir(_, children) = t else {
        return Ok(());
    };
    let mut names = HashSet::new();
    for c in children {
        let name = s.name_of(c).ok_or(GoodViolation::MapMismatch)?;
        if validate_name(name).is_err() {
            return Err(GoodViolation::BadName(name.to_string()));
        }
        if !names.insert(name) {
            return Err(GoodViolation::DupName(name.to_string()));
        }
        check_names(s, c)?;
    }
    Ok(())
}

pub fn is_good_state(s: &FsState) -> bool {
    check_good(s).is_ok()
}
