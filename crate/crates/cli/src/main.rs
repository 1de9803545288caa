use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pqkd_cli::verify::Level;
use pqkd_cli::CliError;
use pqkd_core::montecarlo::FaultInjection;

#[derive(Parser)]
#[command(name = "pqkd", version, about = "Key rates of QKD with an untrusted source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a scenario over distance and emit CSV.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the seeded self-verification suite.
    Verify {
        #[arg(long, value_enum, default_value_t = Level::Quick)]
        level: Level,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplies the active sampling bound; for exercising failure reporting.
        #[arg(long, default_value_t = 1.0, hide = true)]
        fault_scale_active: f64,
        #[arg(long, default_value_t = 1.0, hide = true)]
        fault_scale_passive: f64,
    },
    /// Print the bundled scenarios.
    ListScenarios,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out, seed } => pqkd_cli::run_command(&scenario, out.as_deref(), seed)
            .map(|(csv, written)| if written.is_none() { csv } else { String::new() }),
        Command::Verify { level, seed, fault_scale_active, fault_scale_passive } => {
            let faults =
                FaultInjection { active_bound_scale: fault_scale_active, passive_bound_scale: fault_scale_passive };
            pqkd_cli::verify_command(level, seed, &faults)
        }
        Command::ListScenarios => Ok(pqkd_cli::list_scenarios()),
    };
    match result {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Verification(report) = &e {
                print!("{report}");
                eprintln!("verification failed: {} check(s)", report.lines().filter(|l| l.starts_with("FAIL")).count());
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
