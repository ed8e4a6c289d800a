use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use otfs_aircomp_cli::config::{CliError, Overrides, Scale, SchemeArg};
use otfs_aircomp_cli::presets::FigurePreset;
use otfs_aircomp_cli::{run_figure, run_selftest, run_sweep};

/// Delay-Doppler over-the-air computation experiments: Monte Carlo NMSE
/// sweeps over SNR and power splits, with robust and non-robust MMSE
/// precoding.
#[derive(Parser)]
#[command(name = "otfs-aircomp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct CommonArgs {
    /// Output directory for results.csv / results.json / manifest.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; falls back to OTFS_AIRCOMP_SEED, then the config file.
    #[arg(long, env = "OTFS_AIRCOMP_SEED")]
    seed: Option<u64>,
    /// Cap on worker threads for trial execution.
    #[arg(long)]
    workers: Option<usize>,
    /// Problem size family.
    #[arg(long, value_enum, default_value = "desk")]
    scale: ScaleArg,
    /// Precoder scheme selection.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Doppler mode override.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Trials-per-point override (mainly for quick smoke runs).
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ScaleArg {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Integer,
    Fractional,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo sweep described by a config file (or defaults).
    Sweep {
        /// TOML config file; missing keys take scale defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a pinned figure preset and check its trend properties.
    Figure {
        /// Which experiment to reproduce.
        #[arg(value_enum)]
        preset: FigurePreset,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the fast numerical property suites and print a pass/fail table.
    Selftest,
}

fn overrides_of(common: &CommonArgs) -> Overrides {
    Overrides {
        seed: common.seed,
        workers: common.workers,
        scheme: common.scheme,
        mode: common.mode.map(|m| match m {
            ModeArg::Integer => otfs_aircomp::DopplerMode::Integer,
            ModeArg::Fractional => otfs_aircomp::DopplerMode::Fractional,
        }),
        trials: common.trials,
    }
}

fn scale_of(common: &CommonArgs) -> Scale {
    match common.scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Full => Scale::Full,
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sweep { config, common } => {
            let result = run_sweep(
                config.as_deref(),
                &common.out,
                scale_of(&common),
                &overrides_of(&common),
            )?;
            eprintln!(
                "wrote {} rows to {} in {:.1}s",
                result.rows.len(),
                common.out.display(),
                result.elapsed_seconds
            );
            Ok(())
        }
        Command::Figure { preset, common } => {
            let outcome = run_figure(preset, &common.out, scale_of(&common), &overrides_of(&common))?;
            print!("{}", outcome.report);
            if outcome.all_passed {
                Ok(())
            } else {
                Err(CliError::TrendCheck(format!(
                    "see {}/trend_report.txt",
                    common.out.display()
                )))
            }
        }
        Command::Selftest => {
            let (table, all_ok) = run_selftest();
            print!("{table}");
            if all_ok {
                Ok(())
            } else {
                Err(CliError::Runtime("selftest failures above".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
