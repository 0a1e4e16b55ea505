use std::collections::BTreeSet;

use super::{Fid, PageId};

/// Default number of page slots in the pool.
pub const DEFAULT_POOL_CAPACITY: u64 = 1 << 20;

/// Hard cap so page ids fit the 32-bit nonce field and never reach the
/// statefile nonce prefix.
pub const MAX_POOL_CAPACITY: u64 = u32::MAX as u64 - 1;

/// Trusted metadata for one page slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageMeta {
    pub owner: Option<Fid>,
    pub page_id: PageId,
    /// Version of the content last sealed into this slot. Never decreases,
    /// not even across free/reuse, so (page_id, version) is never repeated.
    pub version: u64,
    pub tag: [u8; 16],
}

impl PageMeta {
    pub fn is_free(&self) -> bool {
        self.owner.is_none()
    }
}

/// Fixed-capacity page pool with lowest-free-slot allocation.
///
/// Slots `0..slots.len()` have been handed out at least once; the free set is
/// derived from the slots and is not part of the serialized form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PagePool {
    capacity: u64,
    slots: Vec<PageMeta>,
    free: BTreeSet<PageId>,
}

impl Default for PagePool {
    fn default() -> Self {
        PagePool::new(DEFAULT_POOL_CAPACITY)
    }
}

impl PagePool {
    pub fn new(capacity: u64) -> Self {
        PagePool {
            capacity: capacity.min(MAX_POOL_CAPACITY),
            slots: Vec::new(),
            free: BTreeSet::new(),
        }
    }

    /// Rebuilds a pool from serialized slots. Returns `None` if the slots are
    /// not indexed by their own page id or exceed the capacity.
    pub fn from_slots(capacity: u64, slots: Vec<PageMeta>) -> Option<Self> {
        if capacity > MAX_POOL_CAPACITY || slots.len() as u64 > capacity {
            return None;
        }
        if slots.iter().enumerate().any(|(i, m)| m.page_id.0 != i as u64) {
            return None;
        }
        let free = slots.iter().filter(|m| m.is_free()).map(|m| m.page_id).collect();
        Some(PagePool { capacity, slots, free })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn slots(&self) -> &[PageMeta] {
        &self.slots
    }

    pub fn get(&self, pid: PageId) -> Option<&PageMeta> {
        self.slots.get(pid.0 as usize)
    }

    pub fn free_ids(&self) -> &BTreeSet<PageId> {
        &self.free
    }

    pub fn in_use(&self) -> impl Iterator<Item = &PageMeta> {
        self.slots.iter().filter(|m| !m.is_free())
    }

    /// The `n` lowest page ids that are currently free, without reserving them.
    pub fn peek_free(&self, n: usize) -> Option<Vec<PageId>> {
        let mut out: Vec<PageId> = self.free.iter().take(n).copied().collect();
        let mut next = self.slots.len() as u64;
        while out.len() < n {
            if next >= self.capacity {
                return None;
            }
            out.push(PageId(next));
            next += 1;
        }
        Some(out)
    }

    /// Marks `pid` as owned by `owner` with freshly sealed `version`/`tag`.
    /// `pid` must come from [`PagePool::peek_free`] or already belong to `owner`.
    pub fn assign(&mut self, pid: PageId, owner: Fid, version: u64, tag: [u8; 16]) {
        let idx = pid.0 as usize;
        while self.slots.len() <= idx {
            let id = PageId(self.slots.len() as u64);
            self.slots.push(PageMeta { owner: None, page_id: id, version: 0, tag: [0; 16] });
            self.free.insert(id);
        }
        let slot = &mut self.slots[idx];
        debug_assert!(version > slot.version);
        slot.owner = Some(owner);
        slot.version = version;
        slot.tag = tag;
        self.free.remove(&pid);
    }

    pub fn release(&mut self, pid: PageId) {
        if let Some(slot) = self.slots.get_mut(pid.0 as usize) {
            slot.owner = None;
            slot.tag = [0; 16];
            self.free.insert(pid);
        }
    }

    /// Version the next seal of `pid` must use.
    pub fn next_version(&self, pid: PageId) -> u64 {
        self.get(pid).map_or(1, |m| m.version + 1)
    }
}
