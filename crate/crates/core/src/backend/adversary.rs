//! Byzantine wrapper: forwards to an inner backend and rewrites answers.
//!
//! Mutation catalog, one entry per strategy (a call is "applicable" when the
//! strategy has something to rewrite in it):
//!
//! | strategy      | applicable to                       | rewrite                                            |
//! |---------------|-------------------------------------|----------------------------------------------------|
//! | ContentTamper | xReadPage ok                        | xor a uniform nonzero byte into a uniform content offset |
//! | PageOverlap   | xReadPage ok, neighbour page exists | serve page index+1 (else index-1) of the same fd   |
//! | FdMismatch    | xReadPage / xOpen ok, another fd open | serve the lowest other open fd's page / fd       |
//! | SizeMismatch  | xWritePage / xStat ok               | report n ± d, d uniform in 1..=8                   |
//! | ErrnoLie      | any ok; errors of xOpen and ack-only calls | ok -> ENOENT/EINVAL/EINTR, error -> ok     |
//! | PathMismatch  | xReaddir ok, xOpen ENOENT           | drop / rename / add one name; fake an fd           |
//! | NonZeroMmap   | xMmap ok                            | plant a nonzero byte                               |
//! | Rollback      | xGetState ok                        | serve an older xPutState image, or none            |

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendResult, CallOp, OsErrno, Reply, Request};
use crate::error::ViolationKind;
use crate::state::CONTENT_BYTES;

const FAKE_FD_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trigger {
    /// Fire on the n-th applicable call (1-based), per strategy.
    Nth { n: u64 },
    /// Fire on every k-th applicable call.
    EveryKth { k: u64 },
    /// Fire on each applicable call with probability p.
    Probability { p: f64 },
    Always,
    Never,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversaryParams {
    /// Errno used when turning success into failure.
    pub errno: Option<OsErrno>,
    /// Offset of the planted byte in a mapping.
    pub plant_offset: Option<u64>,
    /// Value of the planted byte.
    pub plant_value: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub seed: u64,
    #[serde(default)]
    pub strategies: Vec<ViolationKind>,
    /// Restricts tampering to these backend calls.
    #[serde(default)]
    pub ops: Option<Vec<CallOp>>,
    pub trigger: Trigger,
    #[serde(default)]
    pub params: AdversaryParams,
}

impl AdversaryConfig {
    /// No strategies: the wrapper is transparent.
    pub fn transparent(seed: u64) -> Self {
        AdversaryConfig {
            seed,
            strategies: Vec::new(),
            ops: None,
            trigger: Trigger::Never,
            params: AdversaryParams::default(),
        }
    }

    pub fn single(seed: u64, kind: ViolationKind, trigger: Trigger) -> Self {
        AdversaryConfig { strategies: vec![kind], trigger, ..Self::transparent(seed) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiredEvent {
    pub counter: u64,
    pub kind: ViolationKind,
    pub op: CallOp,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryLog {
    /// Applicable calls seen so far, per strategy.
    pub applicable: BTreeMap<ViolationKind, u64>,
    pub fired: Vec<FiredEvent>,
}

pub type ProbeHandle = Arc<Mutex<AdversaryLog>>;

pub struct Adversary {
    inner: Box<dyn Backend>,
    cfg: AdversaryConfig,
    rng: ChaCha8Rng,
    open_fds: BTreeSet<u64>,
    images: Vec<Vec<u8>>,
    log: ProbeHandle,
}

pub fn adversary_wrap(inner: impl Backend + 'static, cfg: AdversaryConfig) -> Adversary {
    Adversary {
        inner: Box::new(inner),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        cfg,
        open_fds: BTreeSet::new(),
        images: Vec::new(),
        log: Arc::default(),
    }
}

/// A prepared rewrite, applied only if the trigger fires.
enum Plan {
    FlipContent,
    Substitute(Reply),
    Skew,
    Lie,
    Readdir,
    Plant,
    Stale,
}

fn is_ack_only(op: CallOp) -> bool {
    matches!(
        op,
        CallOp::Close
            | CallOp::Mkdir
            | CallOp::Create
            | CallOp::Remove
            | CallOp::Rmdir
            | CallOp::Chmod
            | CallOp::Truncate
            | CallOp::Munmap
            | CallOp::PutState
    )
}

impl Adversary {
    pub fn probe(&self) -> ProbeHandle {
        Arc::clone(&self.log)
    }

    pub fn config(&self) -> &AdversaryConfig {
        &self.cfg
    }

    fn peek_page(&mut self, counter: u64, fd: u64, index: u64) -> Option<Reply> {
        match self.inner.dispatch(counter, &Request::ReadPage { fd, index }) {
            Ok(r @ Reply::Page(_)) => Some(r),
            _ => None,
        }
    }

    fn plan(
        &mut self,
        kind: ViolationKind,
        counter: u64,
        req: &Request,
        res: &BackendResult,
    ) -> Option<Plan> {
        use ViolationKind::*;
        match (kind, req, res) {
            (ContentTamper, Request::ReadPage { .. }, Ok(Reply::Page(_))) => Some(Plan::FlipContent),
            (PageOverlap, Request::ReadPage { fd, index }, Ok(Reply::Page(p))) => {
                let mut candidates = vec![index + 1];
                if *index > 0 {
                    candidates.push(index - 1);
                }
                candidates.into_iter().find_map(|j| match self.peek_page(counter, *fd, j) {
                    Some(Reply::Page(q)) if q != *p => Some(Plan::Substitute(Reply::Page(q))),
                    _ => None,
                })
            }
            (FdMismatch, Request::ReadPage { fd, index }, Ok(Reply::Page(p))) => {
                let others: Vec<u64> = self.open_fds.iter().copied().filter(|g| g != fd).collect();
                others.into_iter().find_map(|g| match self.peek_page(counter, g, *index) {
                    Some(Reply::Page(q)) if q != *p => Some(Plan::Substitute(Reply::Page(q))),
                    _ => None,
                })
            }
            (FdMismatch, Request::Open { .. }, Ok(Reply::Opened { fd })) => self
                .open_fds
                .iter()
                .find(|g| *g != fd)
                .map(|&g| Plan::Substitute(Reply::Opened { fd: g })),
            (SizeMismatch, Request::WritePage { .. }, Ok(Reply::Written(_)))
            | (SizeMismatch, Request::Stat { .. }, Ok(Reply::Size(_))) => Some(Plan::Skew),
            (ErrnoLie, _, Ok(_)) => Some(Plan::Lie),
            (ErrnoLie, Request::Open { .. }, Err(_)) => Some(Plan::Lie),
            (ErrnoLie, r, Err(_)) if is_ack_only(r.op()) => Some(Plan::Lie),
            (PathMismatch, Request::Readdir { .. }, Ok(Reply::Names(_))) => Some(Plan::Readdir),
            (PathMismatch, Request::Open { .. }, Err(OsErrno::ENOENT)) => Some(Plan::Lie),
            (NonZeroMmap, Request::Mmap { .. }, Ok(Reply::Mapped { data, .. })) if !data.is_empty() => {
                Some(Plan::Plant)
            }
            (Rollback, Request::GetState, Ok(Reply::State(_))) => Some(Plan::Stale),
            _ => None,
        }
    }

    fn fires(&mut self, count: u64) -> bool {
        match self.cfg.trigger {
            Trigger::Nth { n } => count == n,
            Trigger::EveryKth { k } => k > 0 && count % k == 0,
            Trigger::Probability { p } => self.rng.gen::<f64>() < p,
            Trigger::Always => true,
            Trigger::Never => false,
        }
    }

    fn apply(&mut self, plan: Plan, counter: u64, req: &Request, res: BackendResult) -> (BackendResult, String) {
        match plan {
            Plan::FlipContent => {
                let Ok(Reply::Page(mut page)) = res else { unreachable!() };
                let off = self.rng.gen_range(0..CONTENT_BYTES);
                let x: u8 = self.rng.gen_range(1..=255);
                page.as_bytes_mut()[off] ^= x;
                (Ok(Reply::Page(page)), format!("xor {x:#04x} at {off}"))
            }
            Plan::Substitute(reply) => {
                let d = reply.summary();
                (Ok(reply), format!("substituted {d}"))
            }
            Plan::Skew => {
                let d = self.rng.gen_range(1..=8u64);
                let up = self.rng.gen_bool(0.5);
                let skew = |n: u64| if up || n < d { n + d } else { n - d };
                match res {
                    Ok(Reply::Written(n)) => (Ok(Reply::Written(skew(n))), format!("{n} -> {}", skew(n))),
                    Ok(Reply::Size(n)) => (Ok(Reply::Size(skew(n))), format!("{n} -> {}", skew(n))),
                    other => (other, String::new()),
                }
            }
            Plan::Lie => match res {
                Ok(_) => {
                    let errno = self.cfg.params.errno.unwrap_or_else(|| {
                        [OsErrno::ENOENT, OsErrno::EINVAL, OsErrno::EINTR][self.rng.gen_range(0..3)]
                    });
                    (Err(errno), format!("success -> {errno}"))
                }
                Err(e) => {
                    let reply = match req {
                        Request::Open { .. } => Reply::Opened { fd: FAKE_FD_BASE + counter },
                        _ => Reply::Done,
                    };
                    let d = format!("{e} -> {}", reply.summary());
                    (Ok(reply), d)
                }
            },
            Plan::Readdir => {
                let Ok(Reply::Names(mut names)) = res else { unreachable!() };
                let mode = if names.is_empty() { 2 } else { self.rng.gen_range(0..3) };
                let detail = match mode {
                    0 => {
                        let i = self.rng.gen_range(0..names.len());
                        format!("dropped {:?}", names.remove(i))
                    }
                    1 => {
                        let i = self.rng.gen_range(0..names.len());
                        let renamed = format!("{}~", names[i]);
                        let old = std::mem::replace(&mut names[i], renamed);
                        format!("renamed {old:?}")
                    }
                    _ => {
                        let fake = format!("ghost{}", self.rng.gen_range(0..1000));
                        names.push(fake.clone());
                        names.sort();
                        format!("added {fake:?}")
                    }
                };
                (Ok(Reply::Names(names)), detail)
            }
            Plan::Plant => {
                let Ok(Reply::Mapped { addr, mut data }) = res else { unreachable!() };
                let off = match self.cfg.params.plant_offset {
                    Some(o) => o as usize % data.len(),
                    None => self.rng.gen_range(0..data.len()),
                };
                let v = self.cfg.params.plant_value.unwrap_or_else(|| self.rng.gen_range(1..=255));
                data[off] = v;
                (Ok(Reply::Mapped { addr, data }), format!("planted {v:#04x} at {off}"))
            }
            Plan::Stale => {
                let older = self.images.len().saturating_sub(1);
                if older == 0 {
                    (Ok(Reply::State(None)), "withheld state".into())
                } else {
                    let i = self.rng.gen_range(0..older);
                    (Ok(Reply::State(Some(self.images[i].clone()))), format!("served image #{i}"))
                }
            }
        }
    }
}

impl Backend for Adversary {
    fn dispatch(&mut self, counter: u64, req: &Request) -> BackendResult {
        let res = self.inner.dispatch(counter, req);
        match (req, &res) {
            (Request::Open { .. }, Ok(Reply::Opened { fd })) => {
                self.open_fds.insert(*fd);
            }
            (Request::Close { fd }, _) => {
                self.open_fds.remove(fd);
            }
            (Request::PutState { image }, Ok(_)) => self.images.push(image.clone()),
            _ => {}
        }

        let op = req.op();
        if self.cfg.ops.as_ref().is_some_and(|ops| !ops.contains(&op)) {
            return res;
        }
        for kind in ViolationKind::ALL {
            if !self.cfg.strategies.contains(&kind) {
                continue;
            }
            let Some(plan) = self.plan(kind, counter, req, &res) else { continue };
            let count = {
                let mut log = self.log.lock().expect("adversary log poisoned");
                let c = log.applicable.entry(kind).or_insert(0);
                *c += 1;
                *c
            };
            if self.fires(count) {
                let (out, detail) = self.apply(plan, counter, req, res);
                if let (Request::Open { .. }, Ok(Reply::Opened { fd })) = (req, &out) {
                    self.open_fds.insert(*fd);
                }
                self.log
                    .lock()
                    .expect("adversary log poisoned")
                    .fired
                    .push(FiredEvent { counter, kind, op, detail });
                return out;
            }
        }
        res
    }
}
