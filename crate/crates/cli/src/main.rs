use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use osmps_cli::{exit, pipeline, CliError, Context};

#[derive(Parser)]
#[command(name = "osmps", version, about = "Finite-temperature real-time correlators with operator-space MPS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Imaginary-time evolution of the thermal state; writes β snapshots.
    Thermal(Common),
    /// Real-time evolution of every configured operator; writes t snapshots.
    Heisenberg(Common),
    /// Combines stored legs into the correlator grid.
    Correlate(Common),
    /// Compares the correlator output with exact diagonalization (n ≤ 8).
    Validate(Common),
    /// Writes gnuplot data files from the CSV output.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides OSMPS_OUT_DIR and the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for correlator evaluation.
    #[arg(long)]
    threads: Option<usize>,
    /// Replaces the validation tolerance of the config.
    #[arg(long)]
    tolerance_override: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Thermal(c) | Command::Heisenberg(c) | Command::Correlate(c) | Command::Validate(c) | Command::Report(c)) = &cli.command;
    if let Some(k) = c.threads {
        if k == 0 {
            return Err(osmps_cli::config::ConfigError("--threads must be positive".into()).into());
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let ctx = Context::load(&c.config, c.out.clone(), c.tolerance_override)?;
    match cli.command {
        Command::Thermal(_) => {
            let m = pipeline::run_thermal(&ctx)?;
            eprintln!("thermal: {} snapshots in {}", m.snapshots.len(), ctx.thermal_dir().display());
        }
        Command::Heisenberg(_) => {
            for m in pipeline::run_heisenberg(&ctx)? {
                eprintln!("heisenberg {}: {} snapshots", m.label, m.snapshots.len());
            }
        }
        Command::Correlate(_) => {
            pipeline::run_correlate(&ctx)?;
            eprintln!("correlate: output in {}", ctx.correlate_dir().display());
        }
        Command::Validate(_) => {
            let r = pipeline::run_validate(&ctx)?;
            print!("{}", r.render());
        }
        Command::Report(_) => {
            for p in pipeline::run_report(&ctx)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
