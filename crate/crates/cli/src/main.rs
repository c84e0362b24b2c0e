use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use conjray::acceptance;
use conjray::commands;
use conjray::config::RunConfig;
use conjray::CliError;

#[derive(Parser)]
#[command(name = "conjray", version, about = "Geodesic X-ray tomography experiments with conjugate points")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key (`--set grid=101`); repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, PartialEq, Eq)]
enum Command {
    /// Sinogram of a phantom.
    Forward,
    /// Conjugate locus of `point.x, point.y`.
    Locus,
    /// Cancel the conjugate singularities of a blob from a simple subdomain.
    Cancel,
    /// Artifacts of the normal-operator reconstruction of a blob ring.
    Artifact,
    /// Two-blob attenuated recovery or the three-blob null construction.
    Attenuated,
    /// Run the acceptance criteria.
    Selftest {
        /// Only these criteria (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
    },
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(n) = cfg.thread_count()? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Failed(e.to_string()))?;
    }
    if let Command::Selftest { only } = &cli.command {
        let only = only.clone().unwrap_or_default();
        let outcomes = acceptance::run(&only, |o| println!("{o}"));
        let failed: Vec<u8> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
        println!("{}", json!({ "command": "selftest", "passed": outcomes.len() - failed.len(), "failed": failed }));
        return Ok(failed.is_empty());
    }
    std::fs::create_dir_all(&cfg.output)?;
    let summary = match &cli.command {
        Command::Forward => commands::forward_cmd(&cfg)?,
        Command::Locus => commands::locus_cmd(&cfg)?,
        Command::Cancel => commands::cancel_cmd(&cfg)?,
        Command::Artifact => commands::artifact_cmd(&cfg)?,
        Command::Attenuated => commands::attenuated_cmd(&cfg)?,
        Command::Selftest { .. } => unreachable!(),
    };
    println!("{summary}");
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("conjray: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
