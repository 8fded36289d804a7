use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ocm_cli::config::Problem;
use ocm_cli::pipeline::{run_refine, run_selfcheck, run_solve, RunReport, Verdict};
use ocm_cli::{CliError, EXIT_CONFIG, EXIT_FAIL};
use ocm_core::filters::selfcheck::SelfcheckOptions;
use ocm_core::filters::CheckOptions;

#[derive(Parser)]
#[command(name = "ocm", version, about = "One-sided PDE approximation with residual certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Approximate from below at the configured epsilon and certify the residual.
    Solve {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the refinement schedule and write the trace of operator images.
    Refine {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the filter-structure axioms against brute-force enumeration.
    Selfcheck {
        /// Treat one axiom as always holding (fault injection).
        #[arg(long, hide = true)]
        skip_axiom: Option<u8>,
        /// Run with no instances at all.
        #[arg(long, hide = true)]
        empty: bool,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("OCM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("OCM_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn summarize(r: &RunReport) {
    for c in &r.certificates {
        println!(
            "step {} component {}: {} samples, residual in [{}, {}], eps {}, {}",
            c.n,
            c.component,
            c.samples,
            c.min_residual,
            c.max_residual,
            c.eps,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    if r.repairs > r.repair_bound {
        eprintln!("monotonicity repairs: {} (allowed {})", r.repairs, r.repair_bound);
    }
    for o in &r.offenders {
        eprintln!(
            "offender: step {} component {} subcell {} at {:?}, residual {}",
            o.n, o.component, o.subcell, o.point, o.residual
        );
    }
    println!("pieces: {}", r.pieces);
    println!("verdict: {}", if r.verdict == Verdict::Pass { "pass" } else { "fail" });
}

fn run(cli: Cli) -> Result<i32, CliError> {
    init_threads()?;
    match cli.command {
        Command::Solve { config, out } => {
            let report = run_solve(&Problem::load(&config)?, &out)?;
            summarize(&report);
            Ok(report.exit_code())
        }
        Command::Refine { config, out } => {
            let report = run_refine(&Problem::load(&config)?, &out)?;
            summarize(&report);
            Ok(report.exit_code())
        }
        Command::Selfcheck { skip_axiom, empty } => {
            let report = run_selfcheck(&SelfcheckOptions {
                check: CheckOptions { skip_axiom },
                empty,
                ..SelfcheckOptions::default()
            });
            print!("{report}");
            Ok(if report.pass() { 0 } else { EXIT_FAIL })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
