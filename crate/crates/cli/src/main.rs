use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use l0cim::harness::{self, Config, Report};
use l0cim::Backend;

#[derive(Parser)]
#[command(name = "l0cim", version, about = "Coherent Ising machine solvers for L0-regularized compressed sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// First instance or mask seed.
    #[arg(long, global = true)]
    seed_base: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Use the full reference grid and default solver parameters.
    #[arg(long, global = true)]
    paper_params: bool,
    /// Restrict to these back-ends (repeatable).
    #[arg(long, global = true, value_parser = clap::value_parser!(Backend))]
    backend: Vec<Backend>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 2 if any trial failed.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write instance bundles for the configured grid.
    Gen,
    /// Run the solvers over every instance.
    Run,
    /// Reconstruct a compressed-sensing MRI image.
    Mri,
    /// Positive-P error-amplitude traces for each g².
    SweepG2,
    /// RMSE against sparseness for each target amplitude.
    SweepTau,
    /// Aggregate the CSVs of an output directory.
    Report,
}

enum Failure {
    Config(anyhow::Error),
    Other(anyhow::Error),
}

fn load(common: &Common) -> Result<Config, Failure> {
    let mut cfg = match (&common.config, common.paper_params) {
        (Some(p), paper) => {
            let mut c = Config::load(p).map_err(|e| Failure::Config(e.into()))?;
            if paper {
                c.apply_reference_params();
            }
            c
        }
        (None, true) => Config::reference(),
        (None, false) => Config::default(),
    };
    if let Some(s) = common.seed_base {
        cfg.instance.seed_base = s;
    }
    if !common.backend.is_empty() {
        cfg.solver.backends = common.backend.clone();
    }
    if let Some(o) = &common.out {
        cfg.output.dir = o.clone();
    }
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Report, Failure> {
    let cfg = load(&cli.common)?;
    let run = || -> anyhow::Result<Report> {
        let report = match cli.command {
            Command::Gen => harness::cmd_gen(&cfg)?,
            Command::Run => harness::cmd_run(&cfg)?,
            Command::Mri => harness::cmd_mri(&cfg)?,
            Command::SweepG2 => harness::cmd_sweep_g2(&cfg)?,
            Command::SweepTau => harness::cmd_sweep_tau(&cfg)?,
            Command::Report => {
                let (table, report) = harness::cmd_report(&cfg.output.dir)?;
                print!("{table}");
                report
            }
        };
        Ok(report)
    };
    harness::with_workers(cli.common.workers, run)
        .map_err(|e| Failure::Config(e.into()))?
        .map_err(Failure::Other)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            if report.failures > 0 {
                eprintln!("{} of {} trials failed", report.failures, report.trials);
                if cli.common.strict {
                    return ExitCode::from(2);
                }
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
