//! `ahl`: runs one experiment described by a JSON config.
//!
//! Exit codes: 0 success, 1 acceptance criteria failed (`verify`), 2 invalid
//! config, 3 numerical or i/o failure. Errors are also printed to stderr as
//! one JSON object per line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use commands::RunError;
use config::ExperimentConfig;
use output::OutputDir;

#[derive(Parser, Debug)]
#[command(name = "ahl", version, about = "Anisotropic Hastings–Levitov simulations")]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Progress messages on stderr.
    #[arg(long)]
    verbose: bool,
}

/// Structured diagnostics on stderr.
pub struct Log {
    verbose: bool,
}

impl Log {
    pub fn quiet() -> Self {
        Self { verbose: false }
    }

    pub fn info(&self, message: &str) {
        if self.verbose {
            eprintln!("{}", json!({ "level": "info", "message": message }));
        }
    }

    pub fn warn(&self, message: &str) {
        eprintln!("{}", json!({ "level": "warn", "message": message }));
    }

    fn error(&self, e: &RunError) {
        eprintln!("{}", json!({ "level": "error", "kind": e.kind(), "message": e.message(), "exit_code": e.exit_code() }));
    }
}

fn load(args: &Args) -> Result<ExperimentConfig, RunError> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        match &mut cfg.seeds {
            Some(s) => s.master = seed,
            None => cfg.seeds = Some(config::Seeds { master: seed, replicas: 1 }),
        }
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set_threads(n: usize) -> Result<(), RunError> {
    if n == 0 {
        return Err(RunError::Config("`--threads` must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| RunError::Numerical(e.to_string()))?;
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let log = Log { verbose: args.verbose };
    let start = Instant::now();
    let result = (|| {
        let cfg = load(&args)?;
        if let Some(n) = args.threads {
            set_threads(n)?;
        }
        let mut out = OutputDir::create(&cfg.output)?;
        log.info(&format!("running `{}` into {}", cfg.command_name(), cfg.output.display()));
        let outcome = commands::run(&cfg, &mut out, &log);
        if matches!(outcome, Ok(()) | Err(RunError::CriteriaFailed(_))) {
            let files = out.finish(&cfg, start.elapsed().as_secs_f64())?;
            log.info(&format!("wrote {} files and manifest.json", files.len()));
        }
        outcome
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log.error(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
