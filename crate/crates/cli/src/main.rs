//! `scres`: batch characterization of superconducting resonator data.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 unreadable or
//! malformed input, 3 a fit that the data cannot support.

mod analyze;
mod config;
mod manifest;
mod plots;
mod report;
mod simulate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Config, Overrides};

#[derive(Parser)]
#[command(name = "scres", version, about = "Superconducting resonator characterization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Master random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct WithManifest {
    /// Sweep manifest (JSON); defaults to `<out>/manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Simulate {
        /// Built-in dataset (`paper-chip`).
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit every resonance of the spectrum traces.
    Fit(WithManifest),
    /// Mattis-Bardeen fit of the temperature sweeps.
    Mbfit(WithManifest),
    /// TLS fit of the power sweeps.
    Tlsfit(WithManifest),
    /// Nonlinearity fit of the high-power series.
    Nlfit(WithManifest),
    /// Paired t-test of fitted internal quality factors between two materials.
    Compare {
        /// Fit report to read; defaults to `<out>/fit_report.json`.
        #[arg(long)]
        fits: Option<PathBuf>,
        #[arg(long, default_value = "Nb")]
        group_a: String,
        #[arg(long, default_value = "Nb/Au")]
        group_b: String,
        /// Accepted for symmetry with the other commands.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Merge report fragments in `--out` into `report.json`.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(scres::Error),
}

impl From<scres::Error> for CliError {
    fn from(e: scres::Error) -> Self {
        match e {
            scres::Error::Io(m) => CliError::Io(m),
            other => CliError::Core(other),
        }
    }
}

pub fn error_kind(e: &scres::Error) -> &'static str {
    use scres::Error::*;
    match e {
        Parse { .. } => "parse",
        Io(_) => "io",
        Unfittable(_) | Geometry(_) | Degenerate(_) | InsufficientSpan(_) => "fit",
        PairBreaking { .. } | Unphysical(_) | InvalidParam { .. } | InvalidTrace(_) => "input",
        Simulation(_) => "simulation",
        Config(_) => "config",
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Core(e) => match error_kind(e) {
                "parse" | "io" | "input" => 2,
                "fit" => 3,
                _ => 1,
            },
        }
    }

    fn diagnostic(&self) -> serde_json::Value {
        match self {
            CliError::Usage(m) => json!({ "level": "error", "kind": "usage", "message": m }),
            CliError::Io(m) => json!({ "level": "error", "kind": "io", "message": m }),
            CliError::Core(e) => {
                let mut v = json!({ "level": "error", "kind": error_kind(e), "message": e.to_string() });
                if let scres::Error::Parse { line, .. } = e {
                    v["line"] = json!(line);
                }
                v
            }
        }
    }
}

/// Structured warning on stderr.
pub fn warn(msg: &str) {
    eprintln!("{}", json!({ "level": "warning", "message": msg }));
}

fn setup(common: &Common, preset: Option<String>) -> Result<Config, CliError> {
    let cfg = Config::resolve(
        common.config.as_deref(),
        &Overrides {
            seed: common.seed,
            jobs: common.jobs,
            preset,
        },
    )?;
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::Io(format!("{}: {e}", common.out.display())))?;
    Ok(cfg)
}

fn manifest_path(m: &WithManifest) -> PathBuf {
    m.manifest.clone().unwrap_or_else(|| m.common.out.join("manifest.json"))
}

fn in_pool(jobs: usize, f: impl FnOnce() -> Result<(), CliError> + Send) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
        .install(f)
}

fn run(cli: Cli) -> Result<(), CliError> {
    type Runner = fn(&Config, &Path, &Path) -> Result<(), CliError>;
    let with_manifest = |m: &WithManifest, f: Runner| -> Result<(), CliError> {
        let cfg = setup(&m.common, None)?;
        let path = manifest_path(m);
        in_pool(cfg.jobs, || f(&cfg, &path, &m.common.out))
    };
    match cli.command {
        Command::Simulate { preset, common } => {
            let cfg = setup(&common, preset)?;
            in_pool(cfg.jobs, || simulate::run(&cfg, &common.out))
        }
        Command::Fit(m) => with_manifest(&m, analyze::fit),
        Command::Mbfit(m) => with_manifest(&m, analyze::mbfit),
        Command::Tlsfit(m) => with_manifest(&m, analyze::tlsfit),
        Command::Nlfit(m) => with_manifest(&m, analyze::nlfit),
        Command::Compare {
            fits,
            group_a,
            group_b,
            manifest: _,
            common,
        } => {
            let cfg = setup(&common, None)?;
            let fits = fits.unwrap_or_else(|| common.out.join("fit_report.json"));
            analyze::compare(&cfg, &fits, &common.out, (&group_a, &group_b))
        }
        Command::Report { common } => {
            setup(&common, None)?;
            analyze::report(&common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code())
        }
    }
}
