//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always
//! printed: `cargo test -p besfs-harness --test acceptance`.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use besfs_core::backend::{AdversaryConfig, MemoryBackend, PosixBackend};
use besfs_core::codec::encode_state;
use besfs_core::page::{seal_page, unseal_page, SealedPage};
use besfs_core::state::{PageId, PageMeta, CONTENT_BYTES, PAGE_SIZE};
use besfs_core::statefile::{load_state, save_state, FileEpoch, LoadError, MemoryEpoch};
use besfs_core::{FileSystem, Fid, FsError, Monitor, PathName, Permission, SealingKey, ViolationKind};
use besfs_harness::campaign::{run_campaign, CampaignConfig};
use besfs_harness::generate::{generate, GenConfig};
use besfs_harness::runner::{execute, run, BackendSpec, CallRecord, Mode, RunConfig};
use besfs_harness::script::{quote, Script};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::{dump_host_tree, dump_tree, Direct, RefFs};

const CORPUS_SEED: u64 = 0x5eed_0001;
const CORPUS_SIZE: usize = 10_000;
const SUBSAMPLE: usize = 100;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scripts_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scripts")
}

fn load_script(name: &str) -> Script {
    Script::parse(&fs::read_to_string(scripts_dir().join(name)).expect("script exists")).expect("script parses")
}

fn key() -> SealingKey {
    SealingKey::new([7; 32])
}

fn corpus_script(i: usize) -> Script {
    generate(CORPUS_SEED.wrapping_add(i as u64), &GenConfig::default())
}

fn observe(records: &[CallRecord]) -> Vec<(String, Option<String>)> {
    records.iter().map(|r| (r.code.clone(), r.payload.clone())).collect()
}

struct CorpusRun {
    elapsed: Duration,
    lines: usize,
    checked: usize,
    failed_lines: usize,
    good_failures: Vec<(usize, usize)>,
    atomicity_failures: Vec<(usize, usize)>,
    violations: usize,
    records: Vec<Vec<CallRecord>>,
}

/// The monitored run of the whole corpus, shared by criteria 1 to 3.
fn corpus() -> &'static CorpusRun {
    static RUN: OnceLock<CorpusRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let cfg = RunConfig { ledger: false, ..RunConfig::new(Mode::Benign) };
        let records: Vec<Vec<CallRecord>> = (0..CORPUS_SIZE)
            .into_par_iter()
            .map(|i| run("corpus", &corpus_script(i), &cfg).expect("memory run").calls)
            .collect();
        let elapsed = start.elapsed();
        let flat = || records.iter().enumerate().flat_map(|(i, rs)| rs.iter().map(move |r| (i, r)));
        CorpusRun {
            elapsed,
            lines: flat().count(),
            checked: flat().filter(|(_, r)| r.good == Some(true)).count(),
            failed_lines: flat().filter(|(_, r)| r.code != "eSucc").count(),
            good_failures: flat().filter(|(_, r)| r.good == Some(false)).map(|(i, r)| (i, r.line)).collect(),
            atomicity_failures: flat().filter(|(_, r)| r.atomic == Some(false)).map(|(i, r)| (i, r.line)).collect(),
            violations: flat().filter(|(_, r)| r.code.starts_with("eViolation")).count(),
            records,
        }
    })
}

fn good_state_preservation() -> Verdict {
    let c = corpus();
    ensure(c.checked > c.lines / 2, || format!("only {} of {} calls were checked", c.checked, c.lines))?;
    ensure(c.good_failures.is_empty(), || format!("good state broken at (script, line) {:?}", &c.good_failures[..c.good_failures.len().min(5)]))?;
    ensure(c.violations == 0, || format!("{} violations on the benign backend", c.violations))?;
    ensure(c.elapsed < Duration::from_secs(60), || format!("took {:.1}s", c.elapsed.as_secs_f64()))?;
    Ok(format!("{CORPUS_SIZE} scripts, {} lines, good state held after all {} core calls, {:.1}s", c.lines, c.checked, c.elapsed.as_secs_f64()))
}

fn atomicity() -> Verdict {
    let c = corpus();
    ensure(c.failed_lines > 0, || "corpus has no failing calls".into())?;
    ensure(c.atomicity_failures.is_empty(), || {
        format!("state changed by failing calls at {:?}", &c.atomicity_failures[..c.atomicity_failures.len().min(5)])
    })?;
    Ok(format!("{} failing lines, shadow encoding unchanged by every failing core call", c.failed_lines))
}

fn oracle_equivalence() -> Verdict {
    let c = corpus();
    let cfg = RunConfig { ledger: false, checks: false, ..RunConfig::new(Mode::Benign) };
    let mismatches: Vec<String> = (0..CORPUS_SIZE)
        .into_par_iter()
        .filter_map(|i| {
            let script = corpus_script(i);
            let mut model = RefFs::default();
            let (got, _) = execute(&mut model, &script, &cfg);
            let want = &c.records[i];
            let at = observe(&got).iter().zip(observe(want)).position(|(a, b)| *a != b)?;
            Some(format!("script {i} line {}: reference {:?}/{:?}, monitor {:?}/{:?}", at + 1, got[at].code, got[at].payload, want[at].code, want[at].payload))
        })
        .collect();
    ensure(mismatches.is_empty(), || format!("{} scripts differ, first: {}", mismatches.len(), mismatches[0]))?;

    let posix_mismatch: Vec<String> = (0..SUBSAMPLE)
        .into_par_iter()
        .filter_map(|k| {
            let i = k * (CORPUS_SIZE / SUBSAMPLE);
            let dir = tempfile::tempdir().expect("tempdir");
            let cfg = RunConfig { backend: BackendSpec::Posix(dir.path().into()), ..cfg.clone() };
            let got = run("posix", &corpus_script(i), &cfg).expect("posix run").calls;
            let at = observe(&got).iter().zip(observe(&c.records[i])).position(|(a, b)| *a != b)?;
            Some(format!("script {i} line {}", at + 1))
        })
        .collect();
    ensure(posix_mismatch.is_empty(), || format!("posix backend differs: {posix_mismatch:?}"))?;
    Ok(format!("{} lines equal to the reference model; posix = memory on {SUBSAMPLE} scripts", c.lines))
}

fn detection_campaign() -> Verdict {
    let cfg = CampaignConfig { seed: 42, scripts: 1000, ..CampaignConfig::default() };
    let r = run_campaign(&cfg);
    ensure(r.per_strategy.len() == 8, || "not all strategies ran".into())?;
    for (k, s) in &r.per_strategy {
        ensure(s.applicable > 0 && s.diverged > 0, || format!("{k} never changed an observable value"))?;
    }
    ensure(r.false_positives == 0, || format!("{} false positives", r.false_positives))?;
    ensure(r.missed == 0, || format!("{} missed, first {:?}", r.missed, r.missed_cases.first()))?;
    ensure(r.elapsed_secs < 300.0, || format!("took {:.1}s", r.elapsed_secs))?;
    let injected: u64 = r.per_strategy.values().map(|s| s.applicable).sum();
    let diverged: u64 = r.per_strategy.values().map(|s| s.diverged).sum();
    Ok(format!(
        "8 strategies x 1000 scripts: {injected} injections, {diverged} unprotected divergences, 0 missed, 0 false positives, {:.1}s",
        r.elapsed_secs
    ))
}

fn narrative_attacks() -> Verdict {
    let mut out = Vec::new();
    for name in ["vote_log", "mmap_prev_size", "errno_bug"] {
        let script = load_script(&format!("{name}.bfs"));
        let adv: AdversaryConfig =
            toml::from_str(&fs::read_to_string(scripts_dir().join(format!("{name}.toml"))).expect("config")).expect("config parses");
        let with = |mode| RunConfig { adversary: Some(adv.clone()), ..RunConfig::new(mode) };
        let benign = run(name, &script, &RunConfig::new(Mode::Benign)).expect("run");
        let unprotected = run(name, &script, &with(Mode::Unprotected)).expect("run");
        let monitored = run(name, &script, &with(Mode::Adv)).expect("run");

        ensure(benign.summary.first_violation.is_none() && benign.summary.assertions_failed == 0 && benign.summary.assertions > 0, || {
            format!("{name}: benign run failed\n{}", benign.human_summary())
        })?;
        let diverged = observe(&unprotected.calls).iter().zip(observe(&benign.calls)).position(|(a, b)| *a != b);
        ensure(
            unprotected.summary.first_violation.is_none() && unprotected.summary.assertions_failed > 0 && diverged.is_some(),
            || format!("{name}: unprotected run did not diverge silently\n{}", unprotected.human_summary()),
        )?;
        let v = monitored.summary.first_violation.ok_or_else(|| format!("{name}: monitor raised nothing"))?;
        ensure(v.index <= diverged.expect("checked"), || format!("{name}: flagged at line {} after divergence", v.line))?;
        out.push(format!("{name}: {} at line {}", v.kind, v.line));
    }
    Ok(format!("benign pass, unprotected silent divergence, monitored {}", out.join("; ")))
}

fn page_format() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let backend = PosixBackend::open(dir.path()).map_err(|e| e.to_string())?;
    let probe = PosixBackend::open(dir.path()).map_err(|e| e.to_string())?;
    let mut m = Monitor::new(backend, key());
    let p = PathName::parse("/golden").expect("path");
    let content: Vec<u8> = (0..9000u32).map(|i| (i * 31 % 251) as u8).collect();
    m.create(&p, Permission::RW).map_err(|e| e.to_string())?;
    let h = m.open(&p).map_err(|e| e.to_string())?;
    m.write(h, 0, &content).map_err(|e| e.to_string())?;
    m.write(h, 8990, b"0123456789").map_err(|e| e.to_string())?;
    let mut expected = content.clone();
    expected[8990..9000].copy_from_slice(b"0123456789");

    let cipher = Aes256Gcm::new_from_slice(&[7; 32]).expect("key");
    let f = &m.state().fmap[&h];
    ensure(f.pages.len() == 3, || format!("{} pages for 9000 bytes", f.pages.len()))?;
    for (index, pid) in f.pages.iter().enumerate() {
        let meta = m.state().pages.get(*pid).expect("slot").clone();
        let bytes = fs::read(probe.page_path(pid.0)).map_err(|e| e.to_string())?;
        ensure(bytes.len() == PAGE_SIZE && PAGE_SIZE == 4096 && CONTENT_BYTES == 4000, || format!("page file is {} bytes", bytes.len()))?;
        let be = |r: std::ops::Range<usize>| u64::from_be_bytes(bytes[r].try_into().expect("8 bytes"));
        ensure(bytes[4000..4004] == (pid.0 as u32).to_be_bytes() && bytes[4004..4012] == meta.version.to_be_bytes(), || "nonce field".into())?;
        ensure(bytes[4012..4028] == meta.tag, || "tag field".into())?;
        ensure(be(4028..4036) == h.0 && be(4036..4044) == pid.0 && be(4044..4052) == meta.version, || "owner/pid/version fields".into())?;
        ensure(bytes[4052..].iter().all(|b| *b == 0) && bytes.len() - 4052 == 44, || "reserved bytes".into())?;

        let mut plain = [0u8; 4000];
        let lo = index * 4000;
        let hi = expected.len().min(lo + 4000);
        plain[..hi - lo].copy_from_slice(&expected[lo..hi]);
        let tag = cipher
            .encrypt_in_place_detached(Nonce::from_slice(&bytes[4000..4012]), &bytes[4028..], &mut plain)
            .expect("encrypts");
        ensure(bytes[..4000] == plain && tag.as_slice() == meta.tag, || format!("page {index} ciphertext differs from AES-256-GCM recomputation"))?;
    }
    let files = fs::read_dir(dir.path().join("pages")).map_err(|e| e.to_string())?.count();
    ensure(files == 3, || format!("{files} page files"))?;
    Ok("3 page files of 4096 bytes; nonce@4000 tag@4012 owner@4028 pid@4036 version@4044 reserved@4052..4096; ciphertext matches recomputation".into())
}

fn crypto_layer() -> Verdict {
    let k = key();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let meta = |owner: u64, pid: u64, version: u64, tag| PageMeta { owner: Some(Fid(owner)), page_id: PageId(pid), version, tag };
    for i in 0..1000 {
        let content: [u8; 4000] = std::array::from_fn(|_| rng.gen());
        let (page, tag) = seal_page(&content, Fid(i % 7), PageId(i), 1 + i % 3, &k);
        let back = unseal_page(&page, &meta(i % 7, i, 1 + i % 3, tag), &k).map_err(|e| format!("round trip: {e:?}"))?;
        ensure(*back == content, || "round trip changed content".into())?;
    }

    let content: [u8; 4000] = std::array::from_fn(|i| i as u8);
    let (page, tag) = seal_page(&content, Fid(3), PageId(9), 5, &k);
    let good = meta(3, 9, 5, tag);
    let mut successes = 0;
    for _ in 0..100_000 {
        let mut bad = SealedPage::from_bytes(page.as_bytes()).expect("4096 bytes");
        let at = rng.gen_range(0..PAGE_SIZE);
        bad.as_bytes_mut()[at] ^= rng.gen_range(1..=255u8);
        successes += usize::from(unseal_page(&bad, &good, &k).is_ok());
    }
    ensure(successes == 0, || format!("{successes} corrupted pages unsealed"))?;

    let (other_file, other_tag) = seal_page(&content, Fid(4), PageId(9), 5, &k);
    ensure(unseal_page(&other_file, &good, &k).is_err(), || "cross-file page accepted".into())?;
    let (other_page, _) = seal_page(&content, Fid(3), PageId(10), 5, &k);
    ensure(unseal_page(&other_page, &good, &k).is_err(), || "cross-page substitution accepted".into())?;
    ensure(unseal_page(&page, &meta(4, 9, 5, other_tag), &k).is_err(), || "page accepted for another owner".into())?;
    let (newer, newer_tag) = seal_page(&content, Fid(3), PageId(9), 6, &k);
    ensure(unseal_page(&page, &meta(3, 9, 6, newer_tag), &k).is_err(), || "version replay accepted".into())?;
    ensure(unseal_page(&newer, &meta(3, 9, 6, newer_tag), &k).is_ok(), || "fresh version rejected".into())?;

    // The same attacks through the monitor, by editing page files on disk.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let disk = PosixBackend::open(dir.path()).map_err(|e| e.to_string())?;
    let replay = |setup: &dyn Fn(&Path, &[PageId], &[PageId]) -> std::io::Result<()>| -> Result<FsError, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut m = Monitor::new(PosixBackend::open(dir.path()).map_err(|e| e.to_string())?, key());
        let (a, b) = (PathName::parse("/a").expect("path"), PathName::parse("/b").expect("path"));
        m.create(&a, Permission::RW).map_err(|e| e.to_string())?;
        m.create(&b, Permission::RW).map_err(|e| e.to_string())?;
        let ha = m.open(&a).map_err(|e| e.to_string())?;
        let hb = m.open(&b).map_err(|e| e.to_string())?;
        m.write(ha, 0, &[1; 8000]).map_err(|e| e.to_string())?;
        m.write(hb, 0, &[2; 8000]).map_err(|e| e.to_string())?;
        let pa = m.state().fmap[&ha].pages.clone();
        let pb = m.state().fmap[&hb].pages.clone();
        setup(&dir.path().join("pages"), &pa, &pb).map_err(|e| e.to_string())?;
        m.seek(ha, 0).map_err(|e| e.to_string())?;
        m.read(ha, 8000).err().ok_or_else(|| "tampered read succeeded".to_string())
    };
    let pg = |dir: &Path, pid: PageId| dir.join(format!("{}.pg", pid.0));
    let swapped_files = replay(&|d, pa, pb| fs::copy(pg(d, pb[0]), pg(d, pa[0])).map(|_| ()))?;
    let swapped_pages = replay(&|d, pa, _| fs::copy(pg(d, pa[1]), pg(d, pa[0])).map(|_| ()))?;
    ensure(swapped_files.is_violation() && swapped_pages.is_violation(), || "substitution not flagged".into())?;
    let dir2 = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut m = Monitor::new(PosixBackend::open(dir2.path()).map_err(|e| e.to_string())?, key());
    let p = PathName::parse("/v").expect("path");
    m.create(&p, Permission::RW).map_err(|e| e.to_string())?;
    let h = m.open(&p).map_err(|e| e.to_string())?;
    m.write(h, 0, b"version one").map_err(|e| e.to_string())?;
    let pid = m.state().fmap[&h].pages[0];
    let old = fs::read(pg(&dir2.path().join("pages"), pid)).map_err(|e| e.to_string())?;
    m.write(h, 0, b"version two").map_err(|e| e.to_string())?;
    fs::write(pg(&dir2.path().join("pages"), pid), old).map_err(|e| e.to_string())?;
    m.seek(h, 0).map_err(|e| e.to_string())?;
    let stale = m.read(h, 11);
    ensure(stale == Err(FsError::Violation(ViolationKind::Rollback)), || format!("stale page read gave {stale:?}"))?;
    drop(disk);
    Ok(format!(
        "1000 round trips; 100000 single-byte corruptions, 0 unsealed; substitution and replay rejected (on disk: {swapped_files}, {swapped_pages}, {})",
        FsError::Violation(ViolationKind::Rollback)
    ))
}

fn persistence() -> Verdict {
    let k = key();
    for i in 0..100 {
        let mut m = Monitor::new(MemoryBackend::new(), key());
        execute(&mut m, &corpus_script(i), &RunConfig { checks: false, ledger: false, ..RunConfig::new(Mode::Benign) });
        let s = m.state().clone();
        let back = load_state(&save_state(&s, 3, &k), 3, &k).map_err(|e| format!("script {i}: {e}"))?;
        ensure(encode_state(&back) == encode_state(&s), || format!("script {i}: round trip changed the state"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mount = || -> Result<Monitor, FsError> {
        let backend = PosixBackend::open(dir.path()).expect("store root");
        Monitor::mount(backend, key(), Box::new(FileEpoch::open(dir.path()).expect("epoch")))
    };
    let p = PathName::parse("/data").expect("path");
    let mut m = mount().map_err(|e| e.to_string())?;
    m.create(&p, Permission::RW).map_err(|e| e.to_string())?;
    let h = m.open(&p).map_err(|e| e.to_string())?;
    m.write(h, 0, b"first epoch").map_err(|e| e.to_string())?;
    m.unmount().map_err(|e| e.to_string())?;
    let saved = encode_state(m.state());
    let state_file = dir.path().join("state.bfs");
    let epoch1 = fs::read(&state_file).map_err(|e| e.to_string())?;

    let mut m = mount().map_err(|e| e.to_string())?;
    ensure(encode_state(m.state()) == saved, || "remounted state differs".into())?;
    let h = m.open(&p).map_err(|e| e.to_string())?;
    ensure(m.read(h, 11).as_deref() == Ok(&b"first epoch"[..]), || "remounted content differs".into())?;
    m.write(h, 11, b", then second").map_err(|e| e.to_string())?;
    m.unmount().map_err(|e| e.to_string())?;
    ensure(m.epoch() == 2, || format!("epoch {} after two saves", m.epoch()))?;

    let current = fs::read(&state_file).map_err(|e| e.to_string())?;
    fs::write(&state_file, &epoch1).map_err(|e| e.to_string())?;
    let rolled = mount().err();
    ensure(rolled == Some(FsError::Violation(ViolationKind::Rollback)), || format!("previous epoch gave {rolled:?}"))?;
    ensure(
        matches!(load_state(&epoch1, 2, &k), Err(LoadError::Epoch { found: 1, expected: 2 })),
        || "statefile accepted the previous epoch".into(),
    )?;

    let mut corrupt = current.clone();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x40;
    fs::write(&state_file, &corrupt).map_err(|e| e.to_string())?;
    let tampered = mount().err();
    ensure(tampered == Some(FsError::Violation(ViolationKind::ContentTamper)), || format!("corrupted image gave {tampered:?}"))?;
    let mut swept = 0;
    for at in (0..current.len()).step_by(7) {
        let mut bad = current.clone();
        bad[at] ^= 1;
        swept += usize::from(load_state(&bad, 2, &k).is_ok());
    }
    ensure(swept == 0, || format!("{swept} corrupted images loaded"))?;

    fs::write(&state_file, &current).map_err(|e| e.to_string())?;
    let m = mount().map_err(|e| format!("intact image rejected: {e}"))?;
    ensure(m.state().fmap.values().any(|f| f.size == 24), || "second epoch content lost".into())?;
    let _ = MemoryEpoch::default();
    Ok("100 save/load round trips; remount restores state; previous epoch -> Rollback; corrupted image -> ContentTamper".into())
}

fn escape(p: &[u8]) -> String {
    let q = quote(p);
    q[1..q.len() - 1].to_string()
}

fn posix_compat() -> Verdict {
    let script = load_script("compat_workload.bfs");
    let calls: std::collections::BTreeSet<&str> = script.invocations().map(|i| i.command.name()).collect();
    for needed in [
        "fopen", "fclose", "fread", "fgetc", "fgets", "fwrite", "fseek", "ftell", "rewind", "ftruncate", "creat",
        "unlink", "chmod", "readdir", "mkdir", "rmdir", "sys_open", "sys_read", "sys_write", "sys_lseek", "sys_close",
    ] {
        ensure(calls.contains(needed), || format!("workload does not use {needed}"))?;
    }

    let store = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut m = Monitor::mount(
        PosixBackend::open(store.path()).map_err(|e| e.to_string())?,
        key(),
        Box::new(FileEpoch::open(store.path()).map_err(|e| e.to_string())?),
    )
    .map_err(|e| e.to_string())?;
    let (records, _) = execute(&mut m, &script, &RunConfig::new(Mode::Benign));
    m.unmount().map_err(|e| e.to_string())?;
    let mut fresh = Monitor::mount(
        PosixBackend::open(store.path()).map_err(|e| e.to_string())?,
        key(),
        Box::new(FileEpoch::open(store.path()).map_err(|e| e.to_string())?),
    )
    .map_err(|e| e.to_string())?;
    let ours = dump_tree(&mut fresh).map_err(|e| e.to_string())?;

    let host = tempfile::tempdir().map_err(|e| e.to_string())?;
    let direct = Direct::new(host.path()).run(&script);
    let theirs = dump_host_tree(host.path());

    for (i, (r, (code, payload))) in records.iter().zip(&direct).enumerate() {
        ensure(r.code == *code && r.payload == payload.as_deref().map(escape), || {
            format!("line {}: monitor {:?}/{:?}, host {:?}/{:?}", script.lines[i].lineno, r.code, r.payload, code, payload.as_deref().map(escape))
        })?;
    }
    ensure(ours == theirs, || {
        let keys: Vec<_> = ours.keys().chain(theirs.keys()).filter(|k| ours.get(*k) != theirs.get(*k)).collect();
        format!("final trees differ at {keys:?}")
    })?;
    let bytes: usize = ours.values().flatten().map(Vec::len).sum();
    Ok(format!(
        "{} lines, {} distinct calls; {} entries / {bytes} bytes byte-identical to host execution",
        records.len(),
        calls.len(),
        ours.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("good-state preservation", good_state_preservation),
        ("atomicity", atomicity),
        ("oracle equivalence", oracle_equivalence),
        ("detection soundness and precision", detection_campaign),
        ("narrative attacks", narrative_attacks),
        ("page format", page_format),
        ("crypto layer", crypto_layer),
        ("persistence", persistence),
        ("posix compatibility", posix_compat),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("[PASS] {} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {} {name}: {why} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
