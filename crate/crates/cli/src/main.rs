use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hydrodp::io::format_number;
use hydrodp::oracle::DEFAULT_BUDGET;
use hydrodp::{Model, SolveOptions};
use hydrodp_cli::{cmd_compare, cmd_oracle, cmd_simulate, cmd_solve, CliError, InflowSource, EXIT_MISMATCH};

/// Dynamic programming for hydro-thermal scheduling.
#[derive(Parser)]
#[command(name = "hydrodp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Tuning {
    /// Control lattice refinement (controls per grid step).
    #[arg(long)]
    refine: Option<usize>,
    /// Allow the exact multi-reservoir models beyond three reservoirs.
    #[arg(long)]
    allow_high_dim: bool,
}

impl Tuning {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            refinement: self.refine,
            allow_high_dimension: self.allow_high_dim,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write value, policy and metrics tables.
    Solve {
        scenario: PathBuf,
        #[arg(long)]
        model: Model,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Play a stored policy along given or sampled inflow paths.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// CSV with columns path,period,x1..xm (period 0 is the prior inflow).
        #[arg(long, conflicts_with = "sample")]
        inflows: Option<PathBuf>,
        /// Number of paths to sample from the scenario's flow model.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact multi-reservoir model against the aggregate heuristic.
    Compare {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Check the solver against exhaustive enumeration.
    Oracle {
        scenario: PathBuf,
        #[arg(long)]
        model: Model,
        #[arg(long)]
        refine: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u128,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            scenario,
            model,
            out,
            tuning,
        } => {
            let report = cmd_solve(&scenario, model, &out, &tuning.options())?;
            for w in &report.solution.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", format_number(report.f1));
        }
        Command::Simulate {
            scenario,
            policy,
            inflows,
            sample,
            seed,
            out,
        } => {
            let source = match (inflows, sample) {
                (Some(path), _) => InflowSource::File(path),
                (None, Some(count)) => InflowSource::Sample { count, seed },
                (None, None) => InflowSource::Assumed,
            };
            match cmd_simulate(&scenario, &policy, &source, &out)? {
                Some(s) => println!(
                    "paths {} mean_cost {} min_cost {} max_cost {}",
                    s.paths,
                    format_number(s.mean_cost),
                    format_number(s.min_cost),
                    format_number(s.max_cost)
                ),
                None => println!("paths 0"),
            }
        }
        Command::Compare {
            scenario,
            out,
            tuning,
        } => {
            let c = cmd_compare(&scenario, &out, &tuning.options())?;
            let (_, rows) = hydrodp_cli::comparison_rows(&c);
            for row in rows {
                println!("{}", row.join(","));
            }
        }
        Command::Oracle {
            scenario,
            model,
            refine,
            budget,
        } => {
            let r = cmd_oracle(&scenario, model, refine, budget)?;
            println!("dp_value {}", format_number(r.dp_value));
            println!("oracle_value {}", format_number(r.oracle_value));
            println!("abs_difference {:e}", r.difference());
            if !r.agrees() {
                return Err(CliError {
                    code: EXIT_MISMATCH,
                    message: "solver and oracle disagree".into(),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("HYDRODP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
