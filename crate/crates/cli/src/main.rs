use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use relqkd_cli::campaign::{cmd_analyze, cmd_distill, cmd_simulate, write_distill};
use relqkd_cli::config::CampaignSpec;
use relqkd_cli::verify::cmd_verify;
use relqkd_cli::{exit_code, CheckFailed, InvalidInput, EXIT_OK};

#[derive(Parser)]
#[command(name = "relqkd", version, about = "Relativistic QKD simulator and analyzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Campaign configuration (TOML).
    config: PathBuf,
    /// Overrides `campaign.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `campaign.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form table over the sweep.
    Analyze(Common),
    /// Monte Carlo table over the sweep, next to the closed forms.
    Simulate(Common),
    /// One key-distillation session; writes transcript, report and keys.
    Distill(Common),
    /// Built-in self checks.
    Verify {
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(c: &Common) -> Result<(CampaignSpec, Option<PathBuf>)> {
    let mut spec = CampaignSpec::load(&c.config)?;
    if let Some(seed) = c.seed {
        spec.campaign.seed = seed;
    }
    let out = c.out.clone().or_else(|| spec.campaign.out.clone());
    Ok((spec, out))
}

fn emit(body: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().write_all(body.as_bytes())?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(c) => {
            let (spec, out) = load(&c)?;
            emit(&cmd_analyze(&spec)?, out.as_deref())
        }
        Command::Simulate(c) => {
            let (spec, out) = load(&c)?;
            emit(&cmd_simulate(&spec)?, out.as_deref())
        }
        Command::Distill(c) => {
            let (spec, out) = load(&c)?;
            let dir = out.ok_or_else(|| InvalidInput("distill needs --out or campaign.out".into()))?;
            let result = cmd_distill(&spec)?;
            write_distill(&result, &dir)?;
            print!("{}", result.report.to_text());
            if !result.keys_match() {
                let reason = result.transcript.abort.clone().unwrap_or_else(|| "keys differ".into());
                return Err(CheckFailed(reason).into());
            }
            Ok(())
        }
        Command::Verify { config, seed, out } => {
            let spec = config.as_deref().map(CampaignSpec::load).transpose()?;
            let seed = seed.or(spec.as_ref().map(|s| s.campaign.seed)).unwrap_or(0);
            let summary = cmd_verify(seed);
            let text = summary.to_text();
            print!("{text}");
            if let Some(path) = out.or_else(|| spec.and_then(|s| s.campaign.out)) {
                fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            }
            if !summary.all_passed() {
                return Err(CheckFailed("verification failed".into()).into());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
