//! `outbreak`: simulate surveillance data, fit outbreak models, and
//! evaluate the fits. Every command writes `manifest.json` into its output
//! directory.

mod commands;
mod error;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use commands::{DetectArgs, EvidenceArgs, FitArgs, Outcome, PpcArgs, RocArgs, SimulateArgs};
use error::CliError;
use manifest::{digest_inputs, digest_outputs, versions, RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "outbreak", version, about = "Spatio-temporal outbreak detection with hidden Markov models")]
struct Cli {
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Run the MCMC sampler.
    Fit(FitArgs),
    /// Posterior outbreak probabilities per location and time.
    Detect(DetectArgs),
    /// Marginal likelihoods and posterior model probabilities.
    #[command(alias = "compare")]
    Evidence(EvidenceArgs),
    /// Posterior predictive bands for total counts.
    Ppc(PpcArgs),
    /// ROC curves of outbreak probabilities against simulated truth.
    Roc(RocArgs),
    /// Re-run a recorded command and check its outputs are identical.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Detect(_) => "detect",
            Command::Evidence(_) => "evidence",
            Command::Ppc(_) => "ppc",
            Command::Roc(_) => "roc",
            Command::Replay { .. } => "replay",
        }
    }

    fn out(&self) -> &Path {
        match self {
            Command::Simulate(a) => &a.common.out,
            Command::Fit(a) => &a.common.out,
            Command::Detect(a) => &a.common.out,
            Command::Evidence(a) => &a.common.out,
            Command::Ppc(a) => &a.common.out,
            Command::Roc(a) => &a.common.out,
            Command::Replay { out, .. } => out,
        }
    }
}

fn run(cli: Cli, arguments: Vec<String>) -> Result<(), CliError> {
    let start = Instant::now();
    if let Command::Replay { manifest, out } = &cli.command {
        return replay(manifest, out);
    }
    let out = cli.command.out().to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let outcome: Outcome = match &cli.command {
        Command::Simulate(a) => commands::simulate(a)?,
        Command::Fit(a) => commands::fit(a)?,
        Command::Detect(a) => commands::detect(a)?,
        Command::Evidence(a) => commands::evidence(a)?,
        Command::Ppc(a) => commands::ppc(a)?,
        Command::Roc(a) => commands::roc(a)?,
        Command::Replay { .. } => unreachable!(),
    };
    let manifest = RunManifest {
        command: cli.command.name().to_owned(),
        arguments,
        config: outcome.config,
        seed: outcome.seed,
        threads: cli.threads,
        versions: versions(),
        inputs: digest_inputs(&outcome.inputs)?,
        outputs: digest_outputs(&out, &outcome.outputs)?,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    manifest.write(&out)?;
    match outcome.gate_failure {
        Some(msg) => Err(CliError::Gate(msg)),
        None => Ok(()),
    }
}

/// Recorded arguments with `--out` redirected and `--config` pointing at
/// the recorded configuration snapshot.
fn replay_arguments(recorded: &[String], out: &Path, snapshot: &Path) -> Vec<String> {
    let mut args = Vec::with_capacity(recorded.len());
    let mut it = recorded.iter();
    while let Some(a) = it.next() {
        let (flag, inline) = match a.split_once('=') {
            Some((f, _)) if f.starts_with("--") => (f, true),
            _ => (a.as_str(), false),
        };
        let replacement = match flag {
            "--out" => Some(out.display().to_string()),
            "--config" => Some(snapshot.display().to_string()),
            _ => None,
        };
        match replacement {
            Some(value) => {
                if !inline {
                    it.next();
                }
                args.push(flag.to_owned());
                args.push(value);
            }
            None => args.push(a.clone()),
        }
    }
    args
}

fn replay(manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let recorded = RunManifest::read(manifest_path)?;
    let changed = recorded.changed_inputs();
    if !changed.is_empty() {
        return Err(CliError::Validation(format!("inputs changed since the recorded run: {}", changed.join(", "))));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let snapshot = std::env::temp_dir().join(format!("outbreak-replay-{}.conf", std::process::id()));
    std::fs::write(&snapshot, &recorded.config).map_err(|e| CliError::io(&snapshot, e))?;
    let arguments = replay_arguments(&recorded.arguments, out, &snapshot);
    let cli = Cli::try_parse_from(std::iter::once("outbreak".to_owned()).chain(arguments.iter().cloned()))
        .map_err(|e| CliError::Validation(format!("recorded arguments do not parse: {e}")));
    let result = cli.and_then(|cli| run(cli, recorded.arguments.clone()));
    let _ = std::fs::remove_file(&snapshot);
    match result {
        Ok(()) | Err(CliError::Gate(_)) => {}
        Err(e) => return Err(e),
    }
    let fresh = RunManifest::read(&out.join(MANIFEST_FILE))?;
    if fresh.outputs != recorded.outputs {
        let differing: Vec<&str> = recorded
            .outputs
            .iter()
            .filter(|d| !fresh.outputs.contains(d))
            .map(|d| d.path.as_str())
            .collect();
        return Err(CliError::Validation(format!("replay outputs differ: {}", differing.join(", "))));
    }
    eprintln!("replay matches: {} outputs identical", fresh.outputs.len());
    Ok(())
}

fn main() -> ExitCode {
    let arguments: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli, arguments) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
