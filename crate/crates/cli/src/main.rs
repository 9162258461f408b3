use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nemqubit::acceptance::{Perturbation, PerturbedConstant};
use nemqubit::par::{self, ExecMode};
use nemqubit_cli::commands::{self, Context};
use nemqubit_cli::CliError;

/// Josephson phase qubits coupled to a piezoelectric nanomechanical resonator.
///
/// Exit status: 0 ok, 2 configuration or usage error, 3 integration-quality
/// error (norm drift), 4 acceptance failure, 1 I/O failure.
#[derive(Parser, Debug)]
#[command(name = "nemqubit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML with unit strings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Integration step in femtoseconds; overrides the scenario file.
    #[arg(long, global = true, value_name = "FS")]
    dt: Option<f64>,
    /// Worker threads for independent work items; 1 runs sequentially.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Nothing here draws random numbers; with this flag wall-clock times are
    /// also left out of written files, so reruns are byte-identical.
    #[arg(long, global = true)]
    seedless: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Junction levels, dipoles, barrier and plasma frequency on a bias grid.
    Spectrum,
    /// Integrate a raw schedule, or the schedule of a protocol.
    Simulate,
    /// Run and score a storage, retrieval, transfer or entanglement protocol.
    Protocol,
    /// Run a protocol over a list of parameter values.
    Sweep,
    /// Run the acceptance criteria.
    Accept {
        /// Comma-separated criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u32>>,
        /// Scale a physical constant, e.g. piezo_modulus=1.1 (mutation check).
        #[arg(long, value_parser = parse_perturbation, hide = true)]
        perturb: Option<Perturbation>,
    },
}

fn parse_perturbation(s: &str) -> Result<Perturbation, String> {
    let (name, factor) = s.split_once('=').ok_or("expected NAME=FACTOR")?;
    let constant = match name {
        "piezo_modulus" => PerturbedConstant::PiezoModulus,
        "josephson_energy" => PerturbedConstant::JosephsonEnergy,
        "charging_energy" => PerturbedConstant::ChargingEnergy,
        other => return Err(format!("unknown constant {other}")),
    };
    let factor = factor.parse().map_err(|e| format!("{e}"))?;
    Ok(Perturbation { constant, factor })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(1) => par::set_mode(ExecMode::Sequential),
        Some(n) => {
            if !par::init_threads(n) {
                log::warn!("could not size the worker pool to {n} threads");
            }
        }
        None => {}
    }
    let ctx = Context { config: cli.config, out: cli.out, dt_fs: cli.dt, seedless: cli.seedless };
    match cli.command {
        Command::Spectrum => {
            let path = commands::spectrum(&ctx)?;
            println!("wrote {}", path.display());
        }
        Command::Simulate => {
            let tr = commands::simulate(&ctx)?;
            println!("{} samples, {} steps, norm drift {:.2e}", tr.len(), tr.steps, tr.max_norm_drift);
        }
        Command::Protocol => {
            let s = commands::protocol(&ctx)?;
            println!("{:?}: fidelity {:.5}", s.protocol, s.fidelity);
            if !s.passed {
                eprintln!("fidelity below the configured minimum {:?}", s.min_fidelity.unwrap_or_default());
            }
        }
        Command::Sweep => {
            for s in commands::sweep(&ctx)? {
                println!("{:>12.6} {:.5}{}", s.sweep_value.unwrap_or_default(), s.fidelity, if s.passed { "" } else { "  below minimum" });
            }
        }
        Command::Accept { only, perturb } => {
            commands::accept(&ctx, only, perturb)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
