use clap::{Parser, Subcommand};
use irslab::optimizer::Method;
use irslab_cli::{
    cmd_estimate, cmd_optimize, cmd_simulate, cmd_sweep, cmd_validate_config, CliError, CliResult,
    ExperimentConfig,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "irslab", version, about = "RSRP-based IRS channel estimation and reflection design")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a channel and write it, its autocorrelation matrix and L measurements.
    Simulate,
    /// Train on a measurement file and write the estimated autocorrelation matrix.
    Estimate {
        #[arg(long)]
        measurements: PathBuf,
    },
    /// Design a reflection with one method.
    Optimize {
        /// proposed, rms, csm or upper_bound.
        #[arg(long, default_value = "proposed")]
        method: String,
        /// Matrix the objective is evaluated on.
        #[arg(long)]
        autocorr: PathBuf,
        /// Needed by rms and csm.
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
    /// Run a Monte Carlo campaign and write a CSV.
    Sweep {
        /// Overrides `evaluation.preset`.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Check a config and print it fully resolved.
    ValidateConfig,
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate => {
            let out = cmd_simulate(&load(&cli)?)?;
            for p in [&out.channel, &out.autocorrelation, &out.measurements] {
                println!("wrote {}", p.display());
            }
        }
        Command::Estimate { measurements } => {
            let out = cmd_estimate(&load(&cli)?, measurements)?;
            let rep = &out.train_report;
            for s in &rep.stages {
                println!("K' = {:>3}  delta = {:.4e}", s.subnetworks, s.delta);
            }
            println!("selected K* = {} (stop: {:?})", rep.selected, rep.stop_reason);
            println!("wrote {}", out.estimate.display());
            println!("wrote {}", out.report.display());
        }
        Command::Optimize { method, autocorr, measurements } => {
            let method: Method = method.parse().map_err(|e: irslab::Error| CliError::Config(e.to_string()))?;
            let out = cmd_optimize(&load(&cli)?, method, autocorr, measurements.as_deref())?;
            println!("{} objective = {:e} after {} sweeps", method, out.result.objective, out.result.sweeps);
            println!("wrote {}", out.path.display());
        }
        Command::Sweep { preset } => {
            let mut cfg = load(&cli)?;
            if let Some(p) = preset {
                cfg.evaluation.preset = p.clone();
                cfg.validate()?;
            }
            let out = cmd_sweep(&cfg)?;
            println!("wrote {}", out.path.display());
        }
        Command::ValidateConfig => {
            let text = match &cli.config {
                Some(p) => cmd_validate_config(p)?,
                None => ExperimentConfig::default().echo(),
            };
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("irslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

