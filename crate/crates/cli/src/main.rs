use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use truncsa_cli::commands;
use truncsa_cli::error::{EXIT_OK, EXIT_VERDICT};
use truncsa_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "truncsa",
    version,
    about = "Randomly truncated Robbins-Monro experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the asymptotic covariance of the normalized error as JSON.
    Covariance(Common),
    /// Run one trajectory and write trajectory.csv and truncations.csv.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Run the untruncated recursion instead.
        #[arg(long)]
        plain: bool,
    },
    /// Replicate the run and test the central limit theorem.
    VerifyClt(Common),
    /// Run plain and truncated recursions from the same seed.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides run.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "TRUNC_SA_OUT", default_value = ".")]
    out_dir: PathBuf,
    /// Replication worker threads (verify-clt only).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.run.master_seed = seed;
        }
        Ok(config)
    }

    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Covariance(c) => {
            print_json(&commands::covariance(&c.load()?)?);
            Ok(EXIT_OK)
        }
        Command::Solve { common, plain } => {
            let s = commands::solve(&common.load()?, plain, &common.out_dir)?;
            println!("final_error {:.17e}", s.final_error);
            println!("sigma_final {}", s.sigma_final);
            Ok(EXIT_OK)
        }
        Command::VerifyClt(c) => {
            let (report, out) = commands::verify_clt(&c.load()?, c.workers(), &c.out_dir)?;
            println!("{}", truncsa::CltReport::CSV_HEADER);
            println!("{}", report.csv_row());
            eprintln!("report written to {}", out.report.display());
            Ok(if report.passed() {
                EXIT_OK
            } else {
                EXIT_VERDICT
            })
        }
        Command::Compare(c) => {
            print_json(&commands::compare(&c.load()?)?);
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Diverged(report)) => {
            print_json(&report);
            eprintln!(
                "error: plain recursion diverged at step {}",
                report.diverged_at
            );
            ExitCode::from(CliError::Diverged(report).exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
