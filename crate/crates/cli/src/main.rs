use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gibbslab::experiment::{run_command, ExperimentConfig};
use gibbslab::LabError;

#[derive(Parser, Debug)]
#[command(name = "gibbslab", version, about = "Physical measures, dominated splittings and Gibbs F-state audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Estimate the physical measure, its entropy rate, the F-potential average and the Gibbs defect.
    GibbsAudit,
    /// Perturb along the configured family and audit every epsilon against the base system.
    StabilitySweep,
    /// Count visits of running empirical measures to a neighbourhood of a target measure.
    RecurrenceProbe,
    /// Lyapunov spectra at each initial condition.
    Lyapunov,
    /// Export the estimated dominated splitting at sample points.
    Splitting,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GibbsAudit => "gibbs-audit",
            Command::StabilitySweep => "stability-sweep",
            Command::RecurrenceProbe => "recurrence-probe",
            Command::Lyapunov => "lyapunov",
            Command::Splitting => "splitting",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| LabError::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_error(out: &Path, command: &str, err: &LabError) {
    let body = serde_json::json!({
        "command": command,
        "error": err.kind(),
        "message": err.to_string(),
    });
    let text = serde_json::to_string_pretty(&body).unwrap_or_default();
    eprintln!("{text}");
    if std::fs::create_dir_all(out).is_ok() {
        if let Err(e) = std::fs::write(out.join("error.json"), &text) {
            log::warn!("could not write error.json: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let command = cli.command.name();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }

    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            write_error(&out_dir(&cli, None), command, &e);
            return ExitCode::from(1);
        }
    };
    let out = out_dir(&cli, Some(&cfg));
    match run_command(command, &cfg, &out) {
        Ok(outcome) => {
            for f in &outcome.files {
                log::info!("wrote {}", f.display());
            }
            if outcome.partial {
                log::warn!("some rows failed; see the status column");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            write_error(&out, command, &e);
            ExitCode::from(1)
        }
    }
}
