//! `batscast`: planner and simulator front end.
//!
//! Settings come from an optional `key=value` file, then positional
//! `key=value` overrides, then the dedicated flags. Failures print a single
//! `error kind=... field=... message="..."` line to stderr.

mod config;
mod modes;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{ConfigError, ExperimentConfig, RawConfig};
use modes::RunError;

#[derive(Parser, Debug)]
#[command(name = "batscast", version, about = "Two-phase cooperative BATS broadcast: plan, simulate, sweep")]
struct Cli {
    /// plan | simulate | sweep | robustness | single-phase
    #[arg(long)]
    mode: Option<String>,
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<u64>,
    /// Batches sent in phase 1
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides such as `k=5 p2=0.1`
    overrides: Vec<String>,
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn fail(kind: &str, field: Option<&str>, message: &str, code: u8) -> ExitCode {
    let field = field.map_or(String::new(), |f| format!(" field={f}"));
    eprintln!("error kind={kind}{field} message={}", quote(message));
    ExitCode::from(code)
}

fn load(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
                field: "config".into(),
                reason: format!("{}: {e}", path.display()),
            })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for pair in &cli.overrides {
        raw.set_pair(pair)?;
    }
    if let Some(mode) = &cli.mode {
        raw.set("mode", mode)?;
    }
    if let Some(seed) = cli.seed {
        raw.set("seed", &seed.to_string())?;
    }
    if let Some(runs) = cli.runs {
        raw.set("runs", &runs.to_string())?;
    }
    if let Some(n) = cli.n {
        raw.set("n", &n.to_string())?;
    }
    if let Some(dir) = &cli.out_dir {
        raw.set("out_dir", &dir.to_string_lossy())?;
    }
    ExperimentConfig::from_raw(&raw)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => return fail("config", Some(&e.field), &e.reason, 2),
    };
    match modes::run(&cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(RunError::Core(batscast::Error::InvalidParam { field, reason })) => fail("config", Some(field), &reason, 2),
        Err(RunError::Core(e)) => fail("run", None, &e.to_string(), 1),
        Err(RunError::Io(path, e)) => fail("io", Some("out_dir"), &format!("{}: {e}", path.display()), 1),
    }
}
