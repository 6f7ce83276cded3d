use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::io::{in_file, read_input, write_atomic};
use irslab::channel::{autocorrelation, sample_channel, AutocorrMatrix, CirMatrix};
use irslab::estimator::{progressive_train, reconstruct_autocorrelation, NnModel, StopReason, TrainReport};
use irslab::evaluation::{run_sweep, SweepResult};
use irslab::measurement::{collect_measurements, MeasurementContext, MeasurementSet, RsPattern};
use irslab::optimizer::{
    baseline_result, csm_baseline, optimize_reflection, rms_baseline, Method, OptimizationResult,
};
use irslab::text::write_echo;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

fn with_echo(cfg: &ExperimentConfig, body: &str) -> String {
    let mut out = String::new();
    write_echo(&mut out, &cfg.echo());
    out.push_str(body);
    out
}

#[derive(Debug, Clone)]
pub struct SimulateOutputs {
    pub channel: PathBuf,
    pub autocorrelation: PathBuf,
    pub measurements: PathBuf,
}

/// Samples one channel, its true autocorrelation matrix and `L`
/// measurements.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> CliResult<SimulateOutputs> {
    let seeds = cfg.seeds();
    let sc = &cfg.scenario;
    let realization = sample_channel(sc, cfg.user, &mut seeds.stream("channel", 0))?;
    let cir = CirMatrix::build(&realization, sc.subcarriers)?;
    let truth = autocorrelation(&cir, sc.tx_power());
    let ctx = MeasurementContext {
        cir: &cir,
        autocorr: &truth,
        pattern: RsPattern::new(sc.subcarriers, cfg.measurement.pilots, cfg.measurement.symbols)?,
        tx_power: sc.tx_power(),
        sigma2: sc.noise_power(),
    };
    let set = collect_measurements(
        cfg.measurement.records,
        cfg.measurement.mode,
        &ctx,
        sc.phase_bits,
        &mut seeds.stream("reflections", 0),
        &mut seeds.stream("noise", 0),
    )?;
    let dir = &cfg.output_dir;
    let out = SimulateOutputs {
        channel: dir.join("channel.txt"),
        autocorrelation: dir.join("autocorr_true.txt"),
        measurements: dir.join("measurements.txt"),
    };
    write_atomic(&out.channel, &with_echo(cfg, &realization.to_text()))?;
    write_atomic(&out.autocorrelation, &with_echo(cfg, &truth.to_text()))?;
    write_atomic(&out.measurements, &with_echo(cfg, &set.to_text()))?;
    Ok(out)
}

pub fn load_measurements(path: &Path) -> CliResult<MeasurementSet> {
    MeasurementSet::from_text(&read_input(path)?).map_err(in_file(path))
}

pub fn load_autocorr(path: &Path) -> CliResult<AutocorrMatrix> {
    AutocorrMatrix::from_text(&read_input(path)?).map_err(in_file(path))
}

#[derive(Debug, Clone)]
pub struct EstimateOutputs {
    pub estimate: PathBuf,
    pub report: PathBuf,
    /// The trained model in watts.
    pub model: NnModel,
    pub train_report: TrainReport,
}

impl EstimateOutputs {
    pub fn stop_reason(&self) -> StopReason {
        self.train_report.stop_reason
    }
}

/// Progressive training on a measurement file; writes `R̂` and the report.
pub fn cmd_estimate(cfg: &ExperimentConfig, measurements: &Path) -> CliResult<EstimateOutputs> {
    let set = load_measurements(measurements)?;
    if set.elements() != cfg.scenario.elements {
        return Err(CliError::Runtime(format!(
            "{}: {} IRS elements, config has N = {}",
            measurements.display(),
            set.elements(),
            cfg.scenario.elements
        )));
    }
    let (model, report) = progressive_train(&set, &cfg.train_config())?;
    let est = reconstruct_autocorrelation(&model);
    let out_estimate = cfg.output_dir.join("autocorr_estimate.txt");
    let out_report = cfg.output_dir.join("train_report.json");
    write_atomic(&out_estimate, &with_echo(cfg, &est.to_text()))?;
    let doc = serde_json::json!({ "config": cfg.echo(), "report": report });
    write_atomic(&out_report, &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;
    Ok(EstimateOutputs {
        estimate: out_estimate,
        report: out_report,
        model,
        train_report: report,
    })
}

#[derive(Debug, Clone)]
pub struct OptimizeOutputs {
    pub path: PathBuf,
    pub result: OptimizationResult,
}

/// Designs a reflection with `method`. `autocorr` is the matrix the
/// objective is evaluated on (the estimate for `proposed`, the true matrix
/// for `upper_bound`); the baselines also need the measurements.
pub fn cmd_optimize(
    cfg: &ExperimentConfig,
    method: Method,
    autocorr: &Path,
    measurements: Option<&Path>,
) -> CliResult<OptimizeOutputs> {
    let r = load_autocorr(autocorr)?;
    if r.dim() != cfg.scenario.elements + 1 {
        return Err(CliError::Runtime(format!(
            "{}: matrix is {}×{}, config has N + 1 = {}",
            autocorr.display(),
            r.dim(),
            r.dim(),
            cfg.scenario.elements + 1
        )));
    }
    let power = cfg.scenario.tx_power();
    let bits = cfg.scenario.phase_bits;
    let mut rng = cfg.seeds().stream("randomization", 0);
    let measured = || -> CliResult<MeasurementSet> {
        let path = measurements.ok_or_else(|| {
            CliError::Config(format!("method {method} needs a measurement file"))
        })?;
        load_measurements(path)
    };
    let mut result = match method {
        Method::Proposed | Method::UpperBound => {
            optimize_reflection(r.entries(), bits, power, &cfg.optimizer, &mut rng)?
        }
        Method::Rms => baseline_result(method, rms_baseline(&measured()?)?, r.entries(), power)?,
        Method::Csm => baseline_result(method, csm_baseline(&measured()?)?, r.entries(), power)?,
        Method::NoIrs => {
            return Err(CliError::Config("no_irs is a sweep reference, not an optimization method".into()))
        }
    };
    result.method = method;
    let path = cfg.output_dir.join(format!("reflection_{method}.txt"));
    write_atomic(&path, &with_echo(cfg, &result.to_text()))?;
    Ok(OptimizeOutputs { path, result })
}

/// Short hex digest of the resolved sweep, used in the CSV file name.
pub fn scenario_hash(cfg: &ExperimentConfig) -> CliResult<String> {
    let spec = cfg.sweep_spec()?;
    let json = serde_json::to_string(&spec).expect("spec serializes");
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone)]
pub struct SweepOutputs {
    pub path: PathBuf,
    pub result: SweepResult,
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult<SweepOutputs> {
    let spec = cfg.sweep_spec()?;
    let result = run_sweep(&spec)?;
    let name = format!(
        "sweep_{}_{}_seed{}.csv",
        cfg.evaluation.preset,
        scenario_hash(cfg)?,
        cfg.seed
    );
    let path = cfg.output_dir.join(name);
    write_atomic(&path, &result.to_csv(&cfg.echo()))?;
    Ok(SweepOutputs { path, result })
}

/// The resolved config, or the first problem found in it.
pub fn cmd_validate_config(path: &Path) -> CliResult<String> {
    Ok(ExperimentConfig::load(path)?.echo())
}
