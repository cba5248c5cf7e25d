use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hom_cli::commands;
use hom_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "hom", version, about = "Simulate and analyse Hong-Ou-Mandel counting experiments")]
struct Cli {
    /// JSON or key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample shot tables for every configured angle.
    Simulate {
        /// Also write synthetic camera signals.
        #[arg(long)]
        signals: bool,
    },
    /// Fit a signal table (shot_index,s_minus,s_zero,s_plus).
    Calibrate {
        signals: PathBuf,
        /// Quantise the shots and label them with this angle.
        #[arg(long)]
        quantize: Option<f64>,
    },
    /// Characterise states from datasets at 0 and pi/2.
    Analyze {
        /// Directories with a shot index, or path@theta.
        #[arg(required = true)]
        shots: Vec<String>,
        /// Also fit the noise channel per dataset.
        #[arg(long)]
        fit_channel: bool,
    },
    /// Fisher information from small-angle datasets.
    Fisher {
        #[arg(required = true)]
        shots: Vec<String>,
        #[arg(long)]
        quartic: bool,
        /// Drop the 14-atom point at 0.35 rad.
        #[arg(long)]
        exclude_n14: bool,
        /// Use the measured frequencies directly, without resampling.
        #[arg(long)]
        exact: bool,
    },
    /// Entanglement depth from JSON rows of collective moments.
    Depth { rows: PathBuf },
    /// Entanglement witnesses from JSON rows of collective moments.
    Witness { rows: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match cli.cmd {
        Cmd::Simulate { signals } => commands::simulate(&cfg, out, signals),
        Cmd::Calibrate { signals, quantize } => commands::calibrate_cmd(&cfg, &signals, out, quantize),
        Cmd::Analyze { shots, fit_channel } => commands::analyze(&cfg, &shots, out, fit_channel),
        Cmd::Fisher {
            shots,
            quartic,
            exclude_n14,
            exact,
        } => {
            cfg.fisher.quartic |= quartic;
            cfg.fisher.exclude_n14 |= exclude_n14;
            cfg.fisher.exact |= exact;
            commands::fisher(&cfg, &shots, out)
        }
        Cmd::Depth { rows } => commands::depth(&cfg, &rows, out),
        Cmd::Witness { rows } => commands::witness(&cfg, &rows, out),
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
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(hom_cli::exit_code(&e))
        }
    }
}
