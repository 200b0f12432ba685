use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gridfreq_core::experiment::{run_experiment, Mode, RunOptions};
use gridfreq_core::scenario::{load_scenario, parse_sweep};
use gridfreq_core::GridError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Simulate,
    Steady,
    H2sweep,
    Certify,
    Tune,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Simulate => Mode::Simulate,
            ModeArg::Steady => Mode::Steady,
            ModeArg::H2sweep => Mode::H2Sweep,
            ModeArg::Certify => Mode::Certify,
            ModeArg::Tune => Mode::Tune,
        }
    }
}

/// Frequency-control experiments on swing-equation grid models.
#[derive(Debug, Parser)]
#[command(name = "gridfreq", version)]
struct Cli {
    mode: ModeArg,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Parameter grid, e.g. `k=0.001:0.02:20` or `tau=0.01:1:10`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the scenario's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, GridError> {
    let sc = load_scenario(&cli.scenario)?;
    let opts = RunOptions {
        seed: cli.seed,
        sweep: cli.sweep.as_deref().map(parse_sweep).transpose()?,
        out_dir: cli.out.clone(),
    };
    run_experiment(&sc, cli.mode.into(), &opts)
}

fn main() -> ExitCode {
    // Usage errors count as validation errors; clap's own code 2 is reserved
    // for numerical failures here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
