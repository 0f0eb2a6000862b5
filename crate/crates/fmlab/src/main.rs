use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fmlab::audit::audit;
use fmlab::error::HarnessError;
use fmlab::plots::emit_plots;
use fmlab::run::{run_file, RunOptions};
use fmlab::schema;

#[derive(Parser)]
#[command(name = "fmlab", version, about = "Numerical experiments on fractional moments of random Schrödinger resolvents")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Replace the master seed from the config.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// List the config keys of an experiment kind with defaults and admissible ranges.
    Describe { kind: String },
    /// Write Vega-Lite descriptions for the CSV files of a run directory.
    EmitPlots { dir: PathBuf },
    /// Re-check checksums and invariants of a run directory.
    Audit { dir: PathBuf },
}

fn fail(e: HarnessError) -> ExitCode {
    match &e {
        HarnessError::Validation(errs) => {
            eprintln!("invalid configuration:");
            for m in errs {
                eprintln!("  {m}");
            }
        }
        _ => eprintln!("error: {e}"),
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Run { config, out, workers, seed_override } => {
            let opts = RunOptions { out, workers, seed_override };
            match run_file(&config, &opts) {
                Ok(m) => {
                    let total: f64 = m.stages.iter().map(|s| s.seconds).sum();
                    println!("{}: ok, {} files, {} checks, {total:.2}s", m.kind, m.files.len(), m.checks.len());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Cmd::Describe { kind } => match schema::describe(&kind) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(msg) => fail(HarnessError::Validation(vec![msg])),
        },
        Cmd::EmitPlots { dir } => match emit_plots(&dir) {
            Ok(rep) => {
                for p in &rep.written {
                    println!("{}", p.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Cmd::Audit { dir } => match audit(&dir) {
            Ok(rep) => {
                for w in &rep.warnings {
                    eprintln!("warning: {w}");
                }
                for c in &rep.checks {
                    println!("{} {}/{} {}", if c.passed { "ok  " } else { "FAIL" }, c.stage, c.name, c.detail);
                }
                if rep.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(4)
                }
            }
            Err(e) => fail(e),
        },
    }
}
