use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use indefsl_cli::{run_pipeline, Mode, ProblemConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    CheckBc,
    Classify,
    VerifyW,
    Solve,
    Diagnose,
    All,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::CheckBc => Mode::CheckBc,
            ModeArg::Classify => Mode::Classify,
            ModeArg::VerifyW => Mode::VerifyW,
            ModeArg::Solve => Mode::Solve,
            ModeArg::Diagnose => Mode::Diagnose,
            ModeArg::All => Mode::All,
        }
    }
}

/// Spectral analysis of indefinite Sturm-Liouville problems with
/// eigenparameter-dependent boundary conditions.
#[derive(Debug, Parser)]
#[command(name = "indefsl", version)]
struct Args {
    mode: ModeArg,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    max_eigs: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match ProblemConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("indefsl: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(o) = args.out {
        cfg.out_dir = o;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.grid_n {
        cfg.grid_n = n;
    }
    if let Some(m) = args.max_eigs {
        cfg.max_eigs = m;
    }
    let report = match run_pipeline(&cfg, args.mode.into()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("indefsl: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = report.write_outputs(&cfg.out_dir) {
        eprintln!("indefsl: cannot write to {}: {e}", cfg.out_dir.display());
        return ExitCode::from(1);
    }
    println!("{}: status {:?}, outputs in {}", report.mode, report.status, cfg.out_dir.display());
    ExitCode::from(report.exit_code as u8)
}
