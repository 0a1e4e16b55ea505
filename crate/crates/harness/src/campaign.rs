//! Fault-injection campaigns.
//!
//! For every generated script the campaign first runs the monitor and the
//! trusting client without tampering, counting how many backend calls each
//! strategy could rewrite. Then, per strategy, it picks one of those calls
//! at random and reruns both clients with the adversary firing exactly
//! there.
//!
//! * missed: the trusting client's output diverges from its benign run at
//!   some line, and the monitor raised no violation at or before that line;
//!   or the monitor returned a non-violation result that differs from its
//!   own benign run before it raised anything.
//! * false positive: the untampered monitor run raised a violation or
//!   failed a good-state or atomicity check.

use std::collections::BTreeMap;
use std::time::Instant;

use besfs_core::backend::{AdversaryConfig, AdversaryParams, Trigger};
use besfs_core::ViolationKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::generate::{generate, GenConfig};
use crate::runner::{build_client, execute, BackendSpec, CallRecord, Mode, RunConfig};
use crate::script::Script;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub seed: u64,
    pub scripts: usize,
    pub strategies: Vec<ViolationKind>,
    pub generator: GenConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 1,
            scripts: 1000,
            strategies: ViolationKind::ALL.to_vec(),
            generator: GenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub pairs: u64,
    /// Pairs whose script gave the strategy at least one call to rewrite.
    pub applicable: u64,
    pub fired: u64,
    pub detected: u64,
    /// Pairs where the trusting client's output changed.
    pub diverged: u64,
    pub missed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissedCase {
    pub script: usize,
    pub script_seed: u64,
    pub strategy: ViolationKind,
    pub injected_at: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub scripts: usize,
    pub false_positives: u64,
    /// Untampered runs where the monitor and the trusting client disagreed.
    pub benign_mismatches: u64,
    pub per_strategy: BTreeMap<ViolationKind, StrategyStats>,
    pub missed: u64,
    pub missed_cases: Vec<MissedCase>,
    /// Wall-clock duration; the only field not fixed by the config.
    pub elapsed_secs: f64,
}

impl CampaignReport {
    pub fn clean(&self) -> bool {
        self.missed == 0 && self.false_positives == 0
    }

    pub fn human_summary(&self) -> String {
        let mut out = format!(
            "{} scripts, {} false positives, {} benign mismatches, {} missed ({:.1}s)\n",
            self.scripts, self.false_positives, self.benign_mismatches, self.missed, self.elapsed_secs
        );
        out.push_str("strategy        pairs  applicable  fired  detected  diverged  missed\n");
        for (k, s) in &self.per_strategy {
            out.push_str(&format!(
                "{:<14} {:>6} {:>11} {:>6} {:>9} {:>9} {:>7}\n",
                k.name(),
                s.pairs,
                s.applicable,
                s.fired,
                s.detected,
                s.diverged,
                s.missed
            ));
        }
        out
    }
}

/// Seed of the `i`-th script of a campaign.
pub fn script_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type Obs = Vec<(String, Option<String>)>;

fn observe(records: &[CallRecord]) -> Obs {
    records.iter().map(|r| (r.code.clone(), r.payload.clone())).collect()
}

struct Outcome {
    records: Vec<CallRecord>,
    applicable: BTreeMap<ViolationKind, u64>,
    fired: bool,
}

fn run_mode(script: &Script, mode: Mode, adversary: AdversaryConfig, seed: u64, checks: bool) -> Outcome {
    let cfg = RunConfig {
        backend: BackendSpec::Memory,
        mode,
        adversary: Some(adversary),
        seed,
        strict_abort: false,
        checks,
        ledger: false,
    };
    let (mut client, probe) = build_client(&cfg).expect("memory backend");
    let (records, _) = execute(client.as_mut(), script, &cfg);
    let log = probe.expect("adversary present").lock().expect("probe lock").clone();
    Outcome { records, applicable: log.applicable, fired: !log.fired.is_empty() }
}

fn first_violation(records: &[CallRecord]) -> Option<usize> {
    records.iter().position(|r| r.code.starts_with("eViolation"))
}

fn first_difference(a: &Obs, b: &Obs) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y)
}

#[derive(Default)]
struct ScriptResult {
    false_positive: bool,
    benign_mismatch: bool,
    stats: BTreeMap<ViolationKind, StrategyStats>,
    missed: Vec<MissedCase>,
}

fn run_script(cfg: &CampaignConfig, index: usize) -> ScriptResult {
    let seed = script_seed(cfg.seed, index);
    let script = generate(seed, &cfg.generator);
    let counting = AdversaryConfig {
        seed,
        strategies: cfg.strategies.clone(),
        ops: None,
        trigger: Trigger::Never,
        params: AdversaryParams::default(),
    };
    let m_benign = run_mode(&script, Mode::Adv, counting, seed, true);
    let u_benign = run_mode(&script, Mode::Unprotected, AdversaryConfig::transparent(seed), seed, false);
    let m_obs = observe(&m_benign.records);
    let u_obs = observe(&u_benign.records);
    let mut out = ScriptResult {
        false_positive: first_violation(&m_benign.records).is_some()
            || m_benign.records.iter().any(|r| r.good == Some(false) || r.atomic == Some(false)),
        benign_mismatch: m_obs != u_obs,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &kind in &cfg.strategies {
        let st = out.stats.entry(kind).or_default();
        st.pairs += 1;
        let count = m_benign.applicable.get(&kind).copied().unwrap_or(0);
        if count == 0 {
            continue;
        }
        st.applicable += 1;
        let k = rng.gen_range(1..=count);
        let adv = AdversaryConfig::single(rng.gen(), kind, Trigger::Nth { n: k });
        let m_adv = run_mode(&script, Mode::Adv, adv.clone(), seed, false);
        let u_adv = run_mode(&script, Mode::Unprotected, adv, seed, false);
        st.fired += u64::from(m_adv.fired);
        let flagged_at = first_violation(&m_adv.records);
        st.detected += u64::from(flagged_at.is_some());
        let diverged_at = first_difference(&observe(&u_adv.records), &u_obs);
        st.diverged += u64::from(diverged_at.is_some());
        let m_adv_obs = observe(&m_adv.records);
        let trusted_until = flagged_at.unwrap_or(m_adv_obs.len());
        let lied_at = first_difference(&m_adv_obs[..trusted_until].to_vec(), &m_obs);
        let detail = match (diverged_at, flagged_at, lied_at) {
            (_, _, Some(i)) => Some(format!("monitor returned a tampered result at line {}", i + 1)),
            (Some(d), None, _) => Some(format!("unprotected diverged at line {}, never flagged", d + 1)),
            (Some(d), Some(f), _) if f > d => {
                Some(format!("unprotected diverged at line {}, flagged only at line {}", d + 1, f + 1))
            }
            _ => None,
        };
        if let Some(detail) = detail {
            st.missed += 1;
            out.missed.push(MissedCase { script: index, script_seed: seed, strategy: kind, injected_at: k, detail });
        }
    }
    out
}

pub fn run_campaign(cfg: &CampaignConfig) -> CampaignReport {
    let start = Instant::now();
    let results: Vec<ScriptResult> = (0..cfg.scripts).into_par_iter().map(|i| run_script(cfg, i)).collect();
    let mut per_strategy: BTreeMap<ViolationKind, StrategyStats> = BTreeMap::new();
    let mut missed_cases = Vec::new();
    let (mut fp, mut mismatch) = (0, 0);
    for r in results {
        fp += u64::from(r.false_positive);
        mismatch += u64::from(r.benign_mismatch);
        for (k, s) in r.stats {
            let t = per_strategy.entry(k).or_default();
            t.pairs += s.pairs;
            t.applicable += s.applicable;
            t.fired += s.fired;
            t.detected += s.detected;
            t.diverged += s.diverged;
            t.missed += s.missed;
        }
        missed_cases.extend(r.missed);
    }
    CampaignReport {
        config: cfg.clone(),
        scripts: cfg.scripts,
        false_positives: fp,
        benign_mismatches: mismatch,
        missed: missed_cases.len() as u64,
        per_strategy,
        missed_cases,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}
