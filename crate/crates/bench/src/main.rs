//! `dirattack` command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use dirattack_bench::catalog::{catalog, find};
use dirattack_bench::experiments::{
    run_experiment_1, run_experiment_2, run_experiment_3, run_single,
};
use dirattack_bench::selftest::selftest;
use dirattack_bench::BenchResult;
use dirattack_core::trace::Method;
use dirattack_core::Mode;

#[derive(Parser)]
#[command(
    name = "dirattack",
    version,
    about = "Hybrid attack / covering direct search benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one catalog problem.
    Run {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        budget: usize,
        /// Override the catalog mode of the problem.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run experiment 1 (budget curves), 2 (step contributions) or 3
    /// (attack potential).
    Experiment {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        number: u8,
        /// Problem name; experiment 1 accepts a comma-separated list.
        #[arg(long, value_delimiter = ',', required = true)]
        problem: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        budget: usize,
        /// Methods of experiment 1.
        #[arg(long, value_delimiter = ',', default_value = "atk,rls,cdsm,hyb")]
        methods: Vec<Method>,
        /// Snapshot count of experiment 3.
        #[arg(long, default_value_t = 5)]
        snapshots: usize,
        /// Attack radii of experiment 3.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1,2")]
        radii: Vec<f64>,
    },
    /// Run the invariant suite; exits with status 2 on any failure.
    Selftest,
    /// List the catalog problems.
    ListProblems,
}

fn single_problem(problems: &[String]) -> BenchResult<&str> {
    match problems {
        [p] => Ok(p),
        _ => Err(dirattack_bench::BenchError::Invalid(
            "experiments 2 and 3 take a single problem".into(),
        )),
    }
}

fn execute(command: Command) -> BenchResult<ExitCode> {
    let started = Instant::now();
    match command {
        Command::Run {
            problem,
            method,
            seed,
            budget,
            mode,
            out,
        } => {
            let (summary, files) = run_single(&problem, method, seed, budget, mode, &out)?;
            println!(
                "{} {} seed {}: best {} after {} evaluations ({} iterations, stop {:?})",
                summary.problem,
                method.name(),
                seed,
                summary.final_best_f,
                summary.evaluations,
                summary.iterations,
                summary.stop
            );
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Experiment {
            number,
            problem,
            seeds,
            out,
            budget,
            methods,
            snapshots,
            radii,
        } => {
            for p in &problem {
                find(p)?;
            }
            let report = match number {
                1 => run_experiment_1(&problem, &methods, &seeds, budget, &out)?,
                2 => run_experiment_2(single_problem(&problem)?, &seeds, budget, &out)?,
                _ => run_experiment_3(
                    single_problem(&problem)?,
                    &seeds,
                    budget,
                    snapshots,
                    &radii,
                    &out,
                )?,
            };
            for s in &report.series {
                println!(
                    "{} {} seed {}: best {} after {} evaluations",
                    s.problem,
                    s.method.name(),
                    s.seed,
                    s.final_best_f,
                    s.evaluations
                );
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Selftest => {
            let lines = selftest()?;
            let failed = lines.iter().filter(|l| !l.passed).count();
            for l in &lines {
                println!("{l}");
            }
            println!("{} checks, {failed} failed", lines.len());
            eprintln!("selftest took {:.2?}", started.elapsed());
            return Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            });
        }
        Command::ListProblems => {
            for e in catalog() {
                println!("{}: {}", e.name, e.notes);
            }
        }
    }
    eprintln!("took {:.2?}", started.elapsed());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
