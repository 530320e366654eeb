use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use jpa_core::config::ExperimentConfig;
use jpa_core::scenario::{run_scenario, Scenario, ScenarioError};

/// Simulated parametric-amplifier experiments and two-mode state tomography.
#[derive(Debug, Parser)]
#[command(name = "jpa-tomo", version)]
struct Args {
    /// JSON configuration; the built-in reference configuration when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.n_records.
    #[arg(long)]
    records: Option<u64>,
    /// flux-sweep, reflection, gain-map, psd or tomography.
    #[arg(long, default_value = "tomography")]
    scenario: Scenario,
}

fn load(args: &Args) -> Result<ExperimentConfig, ScenarioError> {
    let mut cfg = match &args.config {
        None => ExperimentConfig::reference(),
        Some(path) => ExperimentConfig::load(path)
            .map_err(|source| ScenarioError::Io {
                path: path.clone(),
                source,
            })?
            .map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?,
    };
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(n) = args.records {
        cfg.run.n_records = n;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = load(&args).and_then(|cfg| run_scenario(args.scenario, &cfg, &args.out));
    match result {
        Ok(manifest) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&manifest.summary).unwrap_or_default()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("jpa-tomo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
