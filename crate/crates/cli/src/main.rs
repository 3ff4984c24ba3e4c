use clap::{Args, Parser, Subcommand};
use nucpol::commands::{self, Invocation};
use nucpol::config::ExperimentConfig;
use nucpol::presets::load_preset;
use nucpol::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Pulsed dynamic nuclear polarization of central-spin nuclear clusters.
#[derive(Parser)]
#[command(name = "nucpol", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every point of a configuration and write polarizations.
    Simulate(Common),
    /// Write transition-amplitude spectra.
    Amplitudes(Common),
    /// Generate and archive random 13C cluster configurations.
    ClusterGen(Common),
    /// Resumable batch run with box statistics and histograms.
    Sweep(Common),
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration by name.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.jobs`.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(c: &Common) -> Result<Invocation, CliError> {
    let mut config = match (&c.config, &c.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => load_preset(name)?,
        _ => return Err(CliError::Config("give exactly one of --config or --preset".into())),
    };
    if let Some(seed) = c.seed {
        config.run.seed = seed;
    }
    if let Some(jobs) = c.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        config.run.jobs = jobs;
    }
    if let Some(out) = &c.out {
        config.output.directory = out.clone();
    }
    let out = config.output.directory.clone();
    Ok(Invocation { config, preset: c.preset.clone(), out })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Presets => {
            for (name, text) in nucpol::presets::PRESETS {
                let summary = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                println!("{name:10} {summary}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Simulate(c) => load(c).and_then(|inv| commands::simulate(&inv)),
        Command::Amplitudes(c) => load(c).and_then(|inv| commands::amplitudes(&inv)),
        Command::ClusterGen(c) => load(c).and_then(|inv| commands::cluster_gen(&inv)),
        Command::Sweep(c) => load(c).and_then(|inv| commands::sweep(&inv)),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::WithArtifacts { paths, .. } = &e {
                for p in paths {
                    println!("{}", p.display());
                }
            }
            eprintln!("nucpol: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
