use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slra_cli::commands::{self, LraArgs};
use slra_core::spectral::SchattenP;

/// Matrix-free Schatten-p low-rank approximation toolkit.
#[derive(Parser)]
#[command(name = "slra", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver once on a matrix file and print a one-row CSV.
    Lra {
        /// Dense CSV or Matrix Market file (format detected by extension
        /// and content).
        matrix: PathBuf,
        /// Target rank.
        #[arg(long)]
        k: Option<usize>,
        /// Relative accuracy in (0, 1).
        #[arg(long)]
        eps: Option<f64>,
        /// Schatten order: a number >= 1 or `inf`.
        #[arg(long, value_parser = parse_p)]
        p: Option<SchattenP>,
        /// RNG seed; defaults to SLRA_SEED or 7.
        #[arg(long)]
        seed: Option<u64>,
        /// Schedule constant shared by every stage.
        #[arg(long)]
        c: Option<f64>,
        /// Independent repetitions; the best basis wins.
        #[arg(long)]
        repetitions: Option<usize>,
        /// Upper bound on the wide-stage block size.
        #[arg(long)]
        block_cap: Option<usize>,
        /// Key-value file supplying defaults for the flags above.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the benchmark sweep described by a plan file.
    Bench {
        /// Key-value plan: instance family plus k/p/eps grids.
        plan: PathBuf,
        /// CSV file the rows are written to.
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat the minimum-eigenvalue reduction on Wishart instances.
    Hardness {
        /// Instance dimension.
        #[arg(long)]
        n: usize,
        /// Finite Schatten order, at least 1.
        #[arg(long)]
        p: f64,
        /// Number of seeded trials.
        #[arg(long)]
        trials: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run randomized property suites over the matrix-analysis inequalities.
    Verify {
        /// Suite name, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Trials per suite.
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

fn parse_p(raw: &str) -> Result<SchattenP, String> {
    raw.parse::<SchattenP>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Lra {
            matrix,
            k,
            eps,
            p,
            seed,
            c,
            repetitions,
            block_cap,
            config,
            out,
        } => {
            commands::cmd_lra(&LraArgs {
                matrix,
                k,
                eps,
                p,
                seed,
                c,
                repetitions,
                block_cap,
                config,
                out,
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { plan, out } => {
            commands::cmd_bench(&plan, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Hardness { n, p, trials, out } => {
            commands::cmd_hardness(n, p, trials, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, trials } => {
            let all_passed = commands::cmd_verify(&suite, trials, commands::default_seed()?)?;
            Ok(if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    // Clap itself exits with code 2 on usage errors, matching the convention
    // used for every other failure below.
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
