use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lrd_harness::spec::Problem;
use lrd_harness::sweep::SweepParam;
use lrd_harness::{classify, report, sweep, toy, verify, ExperimentSpec, HarnessError, Result};

#[derive(Parser)]
#[command(name = "lrd", version, about = "Learning-rate dropout experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm and seed of a spec.
    Run {
        spec: PathBuf,
        /// Output directory; overrides the spec's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a toy-problem spec.
    Toy {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one arm per value of `p` (LRD keep probability) or `p_sd`.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients and locate the toy minimizer by grid search.
    Verify,
    /// Summarize the learning curves under a run directory into report.csv.
    Report { dir: PathBuf },
}

fn output(spec: &ExperimentSpec, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| spec.output.clone())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { spec, out } => {
            let spec = ExperimentSpec::from_path(&spec)?;
            let out = output(&spec, out);
            if spec.problem == Problem::Toy {
                toy::run_toy(&spec, &out)?;
            } else {
                classify::run_classification(&spec, &out)?;
            }
            println!("{}", out.display());
        }
        Command::Toy { spec, out } => {
            let spec = ExperimentSpec::from_path(&spec)?;
            if spec.problem != Problem::Toy {
                return Err(HarnessError::Invalid(vec![
                    "problem: the toy command needs \"toy\"".into()
                ]));
            }
            let out = output(&spec, out);
            for s in toy::run_toy(&spec, &out)? {
                println!("{}: reached {}/{} ({})", s.arm, s.reached, s.runs, s.fraction());
            }
        }
        Command::Sweep {
            spec,
            param,
            values,
            out,
        } => {
            let spec = ExperimentSpec::from_path(&spec)?;
            let out = output(&spec, out);
            println!("{},mean_test_acc,std_test_acc,n_seeds", param);
            for r in sweep::run_sweep(&spec, param, &values, &out)? {
                println!("{},{},{},{}", r.param_value, r.mean_test_acc, r.std_test_acc, r.n_seeds);
            }
        }
        Command::Verify => {
            let r = verify::verify()?;
            println!(
                "toy gradient: {} evaluations, max relative error {:.3e}",
                r.toy.evaluations, r.toy.max_relative_error
            );
            println!(
                "mlp gradient: {} evaluations, max relative error {:.3e}",
                r.mlp.evaluations, r.mlp.max_relative_error
            );
            println!(
                "grid {}x{}: argmin ({:.4}, {:.4}), f = {:.6}, distance to reference {:.4}",
                r.grid.resolution.0,
                r.grid.resolution.1,
                r.grid.argmin.0,
                r.grid.argmin.1,
                r.grid.value,
                r.grid.distance_to_reference
            );
            return Ok(r.passed());
        }
        Command::Report { dir } => {
            println!("{}", report::REPORT_HEADER);
            for r in report::report(&dir)? {
                println!("{},{},{},{}", r.arm, r.n_seeds, r.mean, r.std);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
