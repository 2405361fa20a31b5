use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;
use vppres::scenario::{emit, load_config, run_case, Command, OutputFormat, ScenarioError};

/// Minimal VPP frequency-regulation reserve sizing and IBR allocation.
#[derive(Debug, Parser)]
#[command(name = "vppres", version)]
struct Cli {
    /// One of: min-reserve, allocate, allocate-robust, region, simulate,
    /// fit-stability, sensitivity-h0, sensitivity-dp, compare-regions.
    command: Command,
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Allocation sampling step (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Points per axis of the stability-fit lattice.
    #[arg(long)]
    lattice: Option<usize>,
}

fn run(cli: &Cli) -> Result<(), ScenarioError> {
    let mut cfg = load_config(&cli.config)?;
    if let Some(dt) = cli.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ScenarioError::Config(format!("--dt must be positive, got {dt}")));
        }
        cfg.solver.alloc_dt = dt;
    }
    if let Some(n) = cli.lattice {
        if n < 2 {
            return Err(ScenarioError::Config(format!("--lattice needs at least 2 points, got {n}")));
        }
        cfg.solver.lattice.n_h = n;
        cfg.solver.lattice.n_d = n;
    }
    let report = run_case(&cfg, cli.command)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for path in emit(&report, cli.format, &cli.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
