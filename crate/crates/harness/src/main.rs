use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use besfs_core::backend::AdversaryConfig;
use besfs_harness::campaign::{run_campaign, CampaignConfig};
use besfs_harness::generate::{generate, GenConfig};
use besfs_harness::runner::{run, BackendSpec, Mode, RunConfig};
use besfs_harness::script::Script;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "besfs", version, about = "Run, generate and attack filesystem workload scripts")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a script. Exit code 0 = clean, 1 = failed assertion or harness error, 2 = violation.
    Run {
        script: PathBuf,
        #[arg(long, default_value = "memory")]
        backend: BackendSpec,
        #[arg(long, default_value = "benign")]
        mode: Mode,
        /// Adversary config (TOML); required in adv mode.
        #[arg(long)]
        adv_config: Option<PathBuf>,
        /// Overrides the adversary seed and derives the sealing key.
        #[arg(long)]
        seed: Option<u64>,
        /// Stop at the first violation.
        #[arg(long)]
        strict_abort: bool,
        /// Write the JSON report here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a random script.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        len: usize,
        #[arg(long, default_value_t = 0.1)]
        invalid_fraction: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a fault-injection campaign (TOML config) and write aggregate.json.
    Campaign {
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("besfs: {e}");
            ExitCode::from(1)
        }
    }
}

fn real_main() -> Result<u8, String> {
    match Cli::parse().cmd {
        Cmd::Run { script, backend, mode, adv_config, seed, strict_abort, output } => {
            let parsed = Script::parse(&read(&script)?).map_err(|e| format!("{}: {e}", script.display()))?;
            let mut adversary: Option<AdversaryConfig> = match &adv_config {
                Some(p) => Some(toml::from_str(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?),
                None => None,
            };
            if let (Some(a), Some(s)) = (adversary.as_mut(), seed) {
                a.seed = s;
            }
            let cfg = RunConfig {
                backend,
                mode,
                seed: seed.or(adversary.as_ref().map(|a| a.seed)).unwrap_or(0),
                adversary,
                strict_abort,
                ..RunConfig::new(mode)
            };
            let name = script.file_name().map_or_else(|| script.display().to_string(), |n| n.to_string_lossy().into_owned());
            let report = run(&name, &parsed, &cfg).map_err(|e| e.to_string())?;
            println!("{}", report.human_summary());
            if let Some(out) = output {
                write(&out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
            }
            Ok(report.exit_code() as u8)
        }
        Cmd::Gen { seed, len, invalid_fraction, output } => {
            let cfg = GenConfig { length: len, invalid_fraction, ..GenConfig::default() };
            write(&output, &generate(seed, &cfg).to_string())?;
            Ok(0)
        }
        Cmd::Campaign { config, output } => {
            let cfg: CampaignConfig = toml::from_str(&read(&config)?).map_err(|e| format!("{}: {e}", config.display()))?;
            fs::create_dir_all(&output).map_err(|e| format!("{}: {e}", output.display()))?;
            let report = run_campaign(&cfg);
            write(&output.join("aggregate.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
            print!("{}", report.human_summary());
            Ok(if report.clean() { 0 } else { 1 })
        }
    }
}
