//! Workload scripts, random generation, run modes and fault-injection
//! campaigns for the checked filesystem monitor.

pub mod campaign;
pub mod exec;
pub mod generate;
pub mod runner;
pub mod script;

pub use campaign::{run_campaign, CampaignConfig, CampaignReport};
pub use exec::Client;
pub use generate::{generate, GenConfig};
pub use runner::{run, BackendSpec, Mode, RunConfig, RunReport};
pub use script::Script;
