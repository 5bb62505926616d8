//! `infowelfare`: classify and bound the welfare effect of seller
//! information for a family of demand curves.
//!
//! Exit codes: 0 ok, 1 assumption or inclusion failure, 2 usage or parse error.

mod commands;
mod config;
mod error;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::ClassifyMode;
use config::{Loaded, Overrides, Settings};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "infowelfare", version, about = "Welfare effects of market segmentation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Welfare weight; repeat for several. Overrides the config.
    #[arg(long, global = true, value_name = "X")]
    alpha: Vec<f64>,
    /// Lattice steps per coordinate.
    #[arg(long, global = true, value_name = "N")]
    resolution: Option<usize>,
    /// Worker threads for lattice sweeps (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    /// Report destination (default: stdout).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Price families without partial inclusion on a dense grid.
    #[arg(long, global = true)]
    fallback_grid: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check regularity of every type and partial inclusion.
    Validate,
    /// Decide whether information is monotonically good or bad.
    Classify {
        /// Classify over the config's `alpha_scan` grid and check ordering.
        #[arg(long, conflicts_with = "affine")]
        alpha_scan: bool,
        /// Use the shortcut for families of affine transforms of one curve.
        #[arg(long)]
        affine: bool,
    },
    /// Global bounds on the rate of welfare change, plus a CSV of eigenvalues.
    Bounds {
        /// Eigenvalue CSV destination (default: next to --out).
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Best and worst directions over a three-type lattice, as CSV.
    Field,
    /// Seeded search for improving and worsening refinements.
    Witness,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    library_version: &'static str,
    report_schema: &'static str,
    command: &'static str,
    config_sha256: &'a str,
    settings: &'a Settings,
    result: T,
}

fn emit<T: Serialize>(cfg: &Loaded, command: &'static str, result: T) -> Result<(), CliError> {
    let report = Report {
        tool: "infowelfare",
        version: env!("CARGO_PKG_VERSION"),
        library_version: infowelfare::VERSION,
        report_schema: "infowelfare.report/1",
        command,
        config_sha256: &cfg.sha256,
        settings: &cfg.settings,
        result,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Output(e.to_string()))?;
    write_to(cfg.settings.outputs.report.as_deref(), |w| {
        writeln!(w, "{text}").map_err(|e| CliError::Output(e.to_string()))
    })
}

fn write_to(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?);
            f(&mut w)?;
            w.flush().map_err(|e| CliError::io(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let g = cli.global;
    if let Some(k) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let path = g.config.ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let over = Overrides {
        alphas: g.alpha,
        resolution: g.resolution,
        seed: g.seed,
        out: g.out,
        fallback_grid: g.fallback_grid,
    };
    let cfg = config::load(&path, &over)?;
    match cli.command {
        Command::Validate => {
            let o = commands::validate(&cfg);
            for m in &o.messages {
                eprintln!("{m}");
            }
            emit(&cfg, "validate", o.result)?;
            Ok(!o.failed)
        }
        Command::Classify { alpha_scan, affine } => {
            let mode = if alpha_scan {
                ClassifyMode::AlphaScan
            } else if affine {
                ClassifyMode::Affine
            } else {
                ClassifyMode::Verdicts
            };
            let o = commands::classify_cmd(&cfg, mode)?;
            emit(&cfg, "classify", o.result)?;
            Ok(!o.failed)
        }
        Command::Bounds { csv } => {
            let (result, table) = commands::bounds(&cfg)?;
            let csv_path = csv
                .or_else(|| cfg.settings.outputs.csv.clone())
                .or_else(|| cfg.settings.outputs.report.as_ref().map(|r| r.with_extension("lambda.csv")));
            if let Some(p) = &csv_path {
                let file = File::create(p).map_err(|e| CliError::io(p, e))?;
                commands::write_lambda_csv(BufWriter::new(file), &table)?;
            }
            emit(&cfg, "bounds", result)?;
            Ok(true)
        }
        Command::Field => {
            let rows = commands::field(&cfg)?;
            write_to(cfg.settings.outputs.report.as_deref(), |w| commands::write_field_csv(w, &rows))?;
            Ok(true)
        }
        Command::Witness => {
            let rows = commands::witness(&cfg)?;
            emit(&cfg, "witness", rows)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
