//! Argument handling and the run loop shared by the binary and its tests.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use necklab::par;

use crate::commands::{run, Command, Outcome};
use crate::config::{parse_config, RunConfig};
use crate::output::{emit_csv, emit_summary, num, write_csv, Summary};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "NECKLAB_THREADS";

/// Exit code when checks ran and at least one failed.
pub const EXIT_CHECKS_FAILED: u8 = 1;
/// Exit code for configuration, numerical or I/O errors.
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "necklab", version, about = "Spectral and energy experiments for harmonic maps on degenerating annuli")]
pub struct Cli {
    /// Sectioned TOML configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory for the CSV tables and `summary.json`. Without it tables go
    /// to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Sub {
    /// Weighted radial eigenvalues on A(η, δ) against the closed form.
    AnnulusSpectrum,
    /// Weighted Wente quotients over angular modes and support scales.
    WenteBench,
    /// Lorentz norms of ∇log|x| on annuli.
    Lorentz,
    /// Fourier split of a synthesized harmonic field and its bound ratios.
    HarmonicSplit,
    /// Randomized and exhaustive weighted series comparisons.
    SeriesCheck,
    /// Index and nullity of one map on the closed sphere.
    Index,
    /// Index plus nullity along a bubbling ladder against the limits.
    IndexStability,
    /// Hardy, weighted and positivity tables on necks.
    NeckSuite,
}

impl Sub {
    pub fn command(self) -> Command {
        match self {
            Sub::AnnulusSpectrum => Command::AnnulusSpectrum,
            Sub::WenteBench => Command::WenteBench,
            Sub::Lorentz => Command::Lorentz,
            Sub::HarmonicSplit => Command::HarmonicSplit,
            Sub::SeriesCheck => Command::SeriesCheck,
            Sub::Index => Command::Index,
            Sub::IndexStability => Command::IndexStability,
            Sub::NeckSuite => Command::NeckSuite,
        }
    }
}

/// Loads the configuration file and applies the flag and environment
/// overrides (flag, then environment, then file).
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            parse_config(&text).map_err(|e| format!("invalid configuration {}:\n{e}", p.display()))?
        }
    };
    cfg.command = Some(cli.command.command().name().to_string());
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    } else if let Ok(v) = std::env::var(THREADS_ENV) {
        cfg.threads = v.trim().parse().map_err(|_| format!("{THREADS_ENV}={v} is not a thread count"))?;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.display().to_string());
    }
    Ok(cfg)
}

/// Writes every table and the summary into `dir`.
pub fn write_outputs(dir: &Path, cmd: Command, cfg: &RunConfig, outcome: &Outcome) -> io::Result<Summary> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &outcome.tables {
        let file = format!("{}.csv", t.name);
        emit_csv(t, &dir.join(&file))?;
        files.push(file);
    }
    let summary = Summary {
        command: cmd.name().into(),
        config: cfg.clone(),
        versions: Summary::versions(),
        threads: cfg.threads,
        parallel: par::is_parallel(),
        constants: outcome.constants.clone(),
        checks: outcome.checks.clone(),
        passed: outcome.passed(),
        tables: files,
    };
    emit_summary(&summary, &dir.join("summary.json"))?;
    Ok(summary)
}

fn report(outcome: &Outcome) {
    let mut err = io::stderr().lock();
    for c in &outcome.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(err, "{tag} {}: {}", c.name, c.detail);
    }
    for (k, v) in &outcome.constants {
        let _ = writeln!(err, "     {k} = {}", num(*v));
    }
}

/// Runs one invocation and returns the process exit code.
pub fn execute(cli: Cli) -> u8 {
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_ERROR;
        }
    };
    if cfg.threads > 0 {
        if let Err(e) = par::init_threads(cfg.threads) {
            eprintln!("thread pool: {e}");
            return EXIT_ERROR;
        }
    }
    let cmd = cli.command.command();
    let outcome = match run(cmd, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: {e}", cmd.name());
            return EXIT_ERROR;
        }
    };
    match &cfg.out {
        Some(dir) => {
            if let Err(e) = write_outputs(Path::new(dir), cmd, &cfg, &outcome) {
                eprintln!("{dir}: {e}");
                return EXIT_ERROR;
            }
        }
        None => {
            let mut stdout = io::stdout().lock();
            for t in &outcome.tables {
                if outcome.tables.len() > 1 {
                    let _ = writeln!(stdout, "# {}", t.name);
                }
                if let Err(e) = write_csv(t, &mut stdout) {
                    eprintln!("stdout: {e}");
                    return EXIT_ERROR;
                }
            }
        }
    }
    report(&outcome);
    if outcome.passed() {
        0
    } else {
        EXIT_CHECKS_FAILED
    }
}
