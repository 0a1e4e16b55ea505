//! Runs a script in one of three modes and produces a [`RunReport`].
//!
//! * `benign`: monitor over the chosen backend.
//! * `adv`: monitor over the backend wrapped by the adversary.
//! * `unprotected`: trusting client over the wrapped backend.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use besfs_core::backend::{adversary_wrap, AdversaryConfig, Backend, FiredEvent, LedgerSummary, MemoryBackend, PosixBackend, ProbeHandle};
use besfs_core::{FileSystem, Monitor, SealingKey, TrustingClient, ViolationKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{assertion_holds, run_line, Checked, Client, Env, Outcome};
use crate::script::{quote, Script};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Benign,
    Adv,
    Unprotected,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benign" => Ok(Mode::Benign),
            "adv" => Ok(Mode::Adv),
            "unprotected" => Ok(Mode::Unprotected),
            _ => Err(format!("unknown mode {s:?} (benign, adv, unprotected)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Benign => "benign",
            Mode::Adv => "adv",
            Mode::Unprotected => "unprotected",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Memory,
    Posix(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "memory" => Ok(BackendSpec::Memory),
            _ => match s.strip_prefix("posix:") {
                Some(dir) if !dir.is_empty() => Ok(BackendSpec::Posix(dir.into())),
                _ => Err(format!("unknown backend {s:?} (memory, posix:<dir>)")),
            },
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Memory => f.write_str("memory"),
            BackendSpec::Posix(d) => write!(f, "posix:{}", d.display()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub backend: BackendSpec,
    pub mode: Mode,
    pub adversary: Option<AdversaryConfig>,
    pub seed: u64,
    /// Stop at the first violation instead of recording the latched ones.
    pub strict_abort: bool,
    /// Check the good-state predicate and atomicity after every core call.
    pub checks: bool,
    /// Attach each line's backend calls to its record.
    pub ledger: bool,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        RunConfig {
            backend: BackendSpec::Memory,
            mode,
            adversary: None,
            seed: 0,
            strict_abort: false,
            checks: true,
            ledger: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("adv mode needs an adversary config")]
    MissingAdversary,
    #[error("store root {0}: {1}")]
    Store(PathBuf, std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub index: usize,
    pub line: usize,
    pub command: String,
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    /// Good-state predicate after every core call of the line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub good: Option<bool>,
    /// Failed core calls of the line left the shadow state unchanged.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atomic: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assertion: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ledger: Vec<LedgerSummary>,
}

impl CallRecord {
    pub fn outcome(&self) -> (&str, Option<&str>) {
        (&self.code, self.payload.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstViolation {
    pub index: usize,
    pub line: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: bool,
    pub calls: usize,
    pub first_violation: Option<FirstViolation>,
    pub assertions: usize,
    pub assertions_failed: usize,
    pub good_failures: u64,
    pub atomicity_failures: u64,
    pub aborted: bool,
    pub fired: Vec<FiredEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub script: String,
    pub seed: u64,
    pub mode: Mode,
    pub backend: String,
    pub adversary: Option<AdversaryConfig>,
    pub calls: Vec<CallRecord>,
    pub summary: Summary,
}

impl RunReport {
    /// Process exit code: 2 when a violation was detected, 1 when an
    /// assertion failed without one, 0 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.summary.first_violation.is_some() {
            2
        } else if self.summary.assertions_failed > 0 {
            1
        } else {
            0
        }
    }

    pub fn human_summary(&self) -> String {
        let s = &self.summary;
        let mut out = format!(
            "{} mode={} backend={} seed={}: {} calls, {}/{} assertions held, good failures {}, atomicity failures {}",
            self.script,
            self.mode,
            self.backend,
            self.seed,
            s.calls,
            s.assertions - s.assertions_failed,
            s.assertions,
            s.good_failures,
            s.atomicity_failures,
        );
        match s.first_violation {
            Some(v) => out.push_str(&format!("\nviolation {} at call {} (line {})", v.kind, v.index, v.line)),
            None => out.push_str("\nno violation"),
        }
        for f in &s.fired {
            out.push_str(&format!("\nadversary fired {} on {:?} at backend call {}: {}", f.kind, f.op, f.counter, f.detail));
        }
        out.push_str(if s.passed { "\nPASS" } else { "\nFAIL" });
        out
    }
}

/// The sealing key a run with `seed` uses.
pub fn key_for_seed(seed: u64) -> SealingKey {
    SealingKey::new(ChaCha8Rng::seed_from_u64(seed ^ 0x6b65_795f_7365_6564).gen())
}

fn open_backend(spec: &BackendSpec) -> Result<Box<dyn Backend>, RunError> {
    Ok(match spec {
        BackendSpec::Memory => Box::new(MemoryBackend::new()),
        BackendSpec::Posix(dir) => {
            Box::new(PosixBackend::open(dir).map_err(|e| RunError::Store(dir.clone(), e))?)
        }
    })
}

/// Builds the client for `cfg`, with a probe on the adversary if there is one.
pub fn build_client(cfg: &RunConfig) -> Result<(Box<dyn Client>, Option<ProbeHandle>), RunError> {
    let backend = open_backend(&cfg.backend)?;
    let adversary = match (cfg.mode, &cfg.adversary) {
        (Mode::Benign, _) => None,
        (Mode::Adv, None) => return Err(RunError::MissingAdversary),
        (Mode::Adv, Some(a)) => Some(a.clone()),
        (Mode::Unprotected, a) => Some(a.clone().unwrap_or_else(|| AdversaryConfig::transparent(cfg.seed))),
    };
    let key = key_for_seed(cfg.seed);
    Ok(match adversary {
        None => (Box::new(Monitor::new(backend, key)), None),
        Some(a) => {
            let adv = adversary_wrap(backend, a);
            let probe = adv.probe();
            let client: Box<dyn Client> = match cfg.mode {
                Mode::Unprotected => Box::new(TrustingClient::new(adv)),
                _ => Box::new(Monitor::new(adv, key)),
            };
            (client, Some(probe))
        }
    })
}

fn escape_payload(p: &[u8]) -> String {
    let q = quote(p);
    q[1..q.len() - 1].to_string()
}

/// Executes `script` on `client` and returns one record per line.
pub fn execute(client: &mut dyn Client, script: &Script, cfg: &RunConfig) -> (Vec<CallRecord>, bool) {
    let mut env = Env::default();
    let mut records = Vec::with_capacity(script.lines.len());
    let mut aborted = false;
    for (index, line) in script.lines.iter().enumerate() {
        let ledger_from = client.ledger().len();
        let mut checked = Checked::new(client, cfg.checks);
        let out: Outcome = run_line(&mut checked, &mut env, line);
        let tally = checked.tally;
        let has_shadow = checked.shadow().is_some() && cfg.checks;
        let ledger = if cfg.ledger {
            client.ledger()[ledger_from..].iter().map(|e| e.summary()).collect()
        } else {
            Vec::new()
        };
        let violated = out.violation().is_some();
        records.push(CallRecord {
            index,
            line: line.lineno,
            command: line.to_string(),
            good: has_shadow.then_some(tally.good_failures == 0),
            atomic: has_shadow.then_some(tally.atomicity_failures == 0),
            assertion: assertion_holds(line, &out),
            payload: out.payload.as_deref().map(escape_payload),
            code: out.code,
            ledger,
        });
        if violated && cfg.strict_abort {
            aborted = index + 1 < script.lines.len();
            break;
        }
    }
    (records, aborted)
}

pub fn summarize(records: &[CallRecord], aborted: bool, fired: Vec<FiredEvent>) -> Summary {
    let first_violation = records.iter().find_map(|r| {
        let k = r.code.strip_prefix("eViolation(")?.strip_suffix(')')?;
        Some(FirstViolation { index: r.index, line: r.line, kind: ViolationKind::from_name(k)? })
    });
    let assertions = records.iter().filter(|r| r.assertion.is_some()).count();
    let assertions_failed = records.iter().filter(|r| r.assertion == Some(false)).count();
    let good_failures = records.iter().filter(|r| r.good == Some(false)).count() as u64;
    let atomicity_failures = records.iter().filter(|r| r.atomic == Some(false)).count() as u64;
    Summary {
        passed: assertions_failed == 0 && good_failures == 0 && atomicity_failures == 0,
        calls: records.len(),
        first_violation,
        assertions,
        assertions_failed,
        good_failures,
        atomicity_failures,
        aborted,
        fired,
    }
}

/// Runs `script` under `cfg`.
pub fn run(name: &str, script: &Script, cfg: &RunConfig) -> Result<RunReport, RunError> {
    let (mut client, probe) = build_client(cfg)?;
    let (calls, aborted) = execute(client.as_mut(), script, cfg);
    let fired = probe.map(|p| p.lock().expect("probe lock").fired.clone()).unwrap_or_default();
    Ok(RunReport {
        script: name.to_string(),
        seed: cfg.seed,
        mode: cfg.mode,
        backend: cfg.backend.to_string(),
        adversary: cfg.adversary.clone(),
        summary: summarize(&calls, aborted, fired),
        calls,
    })
}
