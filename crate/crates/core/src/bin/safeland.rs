use clap::{Parser, Subcommand};
use safeland::harness::{self, BatchResult};
use safeland::scenario::Scenario;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "safeland", version, about = "Simulated safe-landing trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trial.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a per-tick trace.csv.
        #[arg(long)]
        trace: bool,
    },
    /// Run many seeded trials.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram and percentiles of a batch's latencies.csv.
    Report {
        /// Batch output directory.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_summary(batch: &BatchResult) {
    let s = &batch.summary;
    println!(
        "trials {}  landed-safe {}  landed-unsafe {}  timed-out {}  aborted {}",
        s.trials, s.landed_safe, s.landed_unsafe, s.timed_out, s.aborted
    );
    println!("success rate {:.3}  fn-human {}", s.success_rate, s.fn_human);
    match (s.latency_median_s, s.latency_p95_s) {
        (Some(m), Some(p)) => println!("latency samples {}  median {m:.2} s  p95 {p:.2} s", s.latency_samples),
        _ => println!("latency samples 0"),
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            trace,
        } => {
            let scenario = Scenario::load(&scenario)?;
            std::fs::create_dir_all(&out)?;
            let mut rows = Vec::new();
            let result = harness::run_trial_traced(&scenario, 0, seed, trace.then_some(&mut rows));
            let batch = BatchResult {
                summary: harness::summarize(std::slice::from_ref(&result)),
                trials: vec![result],
            };
            harness::write_batch(&out, &batch)?;
            if trace {
                harness::write_trace(&out.join("trace.csv"), &rows)?;
            }
            let t = &batch.trials[0];
            println!("outcome {:?} after {} ticks", t.outcome, t.ticks);
            if let Some(reason) = &t.abort_reason {
                println!("reason: {reason}");
            }
            Ok(if t.outcome == harness::Outcome::Aborted {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Batch {
            scenario,
            trials,
            seed_base,
            jobs,
            out,
        } => {
            let scenario = Scenario::load(&scenario)?;
            let batch = harness::run_batch(&scenario, trials, seed_base, jobs)?;
            harness::write_batch(&out, &batch)?;
            print_summary(&batch);
            Ok(if batch.aborted_majority() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Report { input, out } => {
            let samples = harness::read_latencies(&input.join("latencies.csv"))?;
            let report = harness::digitize_latency_report(&samples)?;
            report.write_csv(&out)?;
            println!(
                "{} samples  p50 {:.3} s  p90 {:.3} s  p99 {:.3} s",
                samples.len(),
                report.p50,
                report.p90,
                report.p99
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
