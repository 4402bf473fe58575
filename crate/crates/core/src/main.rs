use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use isac_beam::cli::{commands, ExperimentConfig, Table};
use isac_beam::sgcdf::DesignMode;
use isac_beam::Result;

/// Sensing-guided ISAC beamforming experiments. All commands write CSV.
#[derive(Parser, Debug)]
#[command(name = "isac-beam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides scenario.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; overrides experiment.out. Stdout when neither is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Restricts the run to one mode (sgcdf, sensing_only, no_dedicated_stream, omnidirectional).
    #[arg(long, global = true)]
    mode: Option<DesignMode>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Optimize once and print the design summary.
    Design,
    /// Sweep experiment.power_grid_dbm.
    SweepPower,
    /// Sweep the overload factor over experiment.delta_grid.
    SweepDelta,
    /// Transmit beampattern over [-90, 90] degrees.
    Beampattern,
    /// Per-stage solver timing over experiment.trials realizations.
    Timing,
    /// Print the effective configuration as TOML.
    DumpConfig,
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.experiment.modes = vec![mode];
    } else if matches!(cli.command, Command::Design) {
        cfg.experiment.modes = vec![DesignMode::Sgcdf];
    }
    let out = cli.out.clone().or_else(|| cfg.experiment.out.as_ref().map(PathBuf::from));

    if let Command::DumpConfig = cli.command {
        let text = cfg.dump()?;
        return emit_text(&text, out);
    }
    let table = match cli.command {
        Command::Design => commands::design(&cfg)?,
        Command::SweepPower => commands::sweep_power(&cfg)?,
        Command::SweepDelta => commands::sweep_delta(&cfg)?,
        Command::Beampattern => commands::beampattern(&cfg)?,
        Command::Timing => commands::timing(&cfg)?,
        Command::DumpConfig => unreachable!(),
    };
    emit(&table, out)
}

fn emit(table: &Table, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            table.write(&mut w)?;
            w.flush()?;
        }
        None => table.write(io::stdout().lock())?,
    }
    Ok(())
}

fn emit_text(text: &str, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
