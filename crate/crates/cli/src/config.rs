//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [scenario]
//! N = 32
//! array_rows = 4
//! array_cols = 8
//! sigma2_dbm = -90.0
//!
//! [measurement]
//! L = 300
//! mode = "sampled"
//!
//! [training]
//! alpha0 = 0.1
//! T = 200
//!
//! [evaluation]
//! preset = "gain_vs_L"
//! L = [50, 100]
//! ```
//!
//! Every section and key is optional. Powers are given in dBm and converted
//! to watts once, when the config is resolved.

use crate::error::{CliError, CliResult};
use irslab::estimator::TrainConfig;
use irslab::evaluation::{Allocation, Axis, MeasurementSpec, SweepSpec};
use irslab::optimizer::{Method, OptimizerConfig};
use irslab::scenario::dbm_to_watts;
use irslab::{RsPattern, Scenario, SeedTree};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub alpha0: f64,
    pub decay_per_iter: f64,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub tau: usize,
    pub varsigma: f64,
    pub train_fraction: f64,
    /// Overrides the noise power stored with the measurements.
    pub sigma2_dbm: Option<f64>,
    pub estimate_sigma2: bool,
    pub init_scale: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_rank: Option<usize>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainingSection {
            alpha0: d.alpha0,
            decay_per_iter: d.decay_per_iter,
            iterations: d.iterations,
            tau: d.tau,
            varsigma: d.varsigma,
            train_fraction: d.train_fraction,
            sigma2_dbm: None,
            estimate_sigma2: d.estimate_sigma2,
            init_scale: d.init_scale,
            batch_size: d.batch_size,
            max_rank: d.max_rank,
        }
    }
}

impl TrainingSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            alpha0: self.alpha0,
            decay_per_iter: self.decay_per_iter,
            iterations: self.iterations,
            tau: self.tau,
            varsigma: self.varsigma,
            train_fraction: self.train_fraction,
            sigma2: self.sigma2_dbm.map(dbm_to_watts),
            estimate_sigma2: self.estimate_sigma2,
            init_scale: self.init_scale,
            batch_size: self.batch_size,
            max_rank: self.max_rank,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub preset: String,
    pub realizations: usize,
    /// Replaces the preset's method list.
    pub methods: Option<Vec<Method>>,
    /// Replaces the preset's `L` axis values.
    #[serde(rename = "L")]
    pub records: Option<Vec<usize>>,
    /// Replaces the preset's `ε` axis values.
    pub epsilon: Option<Vec<f64>>,
    pub allocation: Allocation,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            preset: "gain_vs_L".into(),
            realizations: 50,
            methods: None,
            records: None,
            epsilon: None,
            allocation: Allocation::Waterfilling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Which user of `scenario.user_positions` single-link commands use.
    pub user: usize,
    pub scenario: Scenario,
    pub measurement: MeasurementSpec,
    pub training: TrainingSection,
    pub optimizer: OptimizerConfig,
    pub evaluation: EvaluationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: PathBuf::from("irslab-out"),
            user: 0,
            scenario: Scenario::default(),
            measurement: MeasurementSpec::default(),
            training: TrainingSection::default(),
            optimizer: OptimizerConfig::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg_err = |e: irslab::Error| CliError::Config(e.to_string());
        self.scenario.validate().map_err(cfg_err)?;
        if self.user >= self.scenario.user_positions.len() {
            return Err(CliError::Config(format!(
                "user {} does not exist ({} user positions)",
                self.user,
                self.scenario.user_positions.len()
            )));
        }
        if self.measurement.records == 0 {
            return Err(CliError::Config("measurement.L must be at least 1".into()));
        }
        RsPattern::new(self.scenario.subcarriers, self.measurement.pilots, self.measurement.symbols)
            .map_err(cfg_err)?;
        self.train_config().validate().map_err(cfg_err)?;
        self.optimizer.validate().map_err(cfg_err)?;
        self.sweep_spec()?.validate().map_err(cfg_err)?;
        Ok(())
    }

    pub fn seeds(&self) -> SeedTree {
        SeedTree::new(self.seed)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = self.training.to_train_config(self.seeds().seed_for("training", 0));
        cfg.max_rank = cfg.max_rank.or(Some(self.scenario.subcarriers));
        cfg
    }

    /// The sweep described by `[evaluation]` on top of its preset.
    pub fn sweep_spec(&self) -> CliResult<SweepSpec> {
        let ev = &self.evaluation;
        let mut spec = SweepSpec::preset(&ev.preset).map_err(|e| CliError::Config(e.to_string()))?;
        spec.scenario = self.scenario.clone();
        spec.measurement = self.measurement.clone();
        spec.training = self.training.to_train_config(0);
        spec.optimizer = self.optimizer.clone();
        spec.allocation = ev.allocation;
        spec.realizations = ev.realizations;
        spec.seed = self.seed;
        if let Some(m) = &ev.methods {
            spec.methods = m.clone();
        }
        match (&mut spec.axis, &ev.records, &ev.epsilon) {
            (Axis::Records(ls), Some(l), _) => *ls = l.clone(),
            (Axis::Epsilon(es), _, Some(e)) => *es = e.clone(),
            (Axis::Records(_), None, Some(_)) | (Axis::Epsilon(_), Some(_), None) | (Axis::Tap, Some(_), _) | (Axis::Tap, _, Some(_)) => {
                return Err(CliError::Config(format!(
                    "preset `{}` does not sweep the axis given in [evaluation]",
                    ev.preset
                )))
            }
            _ => {}
        }
        Ok(spec)
    }

    /// Resolved config as TOML, used as the echo in every artifact.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
