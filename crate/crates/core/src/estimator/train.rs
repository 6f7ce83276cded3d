//! Gradient-descent training and progressive subnetwork growth.
//!
//! Internally labels are divided by `s = mean(p̄ − σ²)` over the training
//! records so that the loss landscape does not depend on the absolute power
//! level. The weights seen during training are therefore `w/√s`; the model
//! handed back to callers is rescaled to watts. Validation MSE values
//! (`delta`) are reported relative to the mean squared validation label,
//! which makes `varsigma` a dimensionless threshold.

use super::model::{Features, NnModel};
use crate::error::{Error, Result};
use crate::measurement::{Measurement, MeasurementSet};
use crate::rng::SeedTree;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Initial learning rate, in normalized label units.
    pub alpha0: f64,
    /// Fractional learning-rate drop per iteration.
    pub decay_per_iter: f64,
    /// Gradient steps per stage (`T`).
    #[serde(rename = "T")]
    pub iterations: usize,
    /// Subnetworks added per stage.
    pub tau: usize,
    /// Stop once consecutive stages differ by less than this (relative) amount.
    pub varsigma: f64,
    pub train_fraction: f64,
    /// Known noise power in watts. `None` uses the value stored with the data.
    pub sigma2: Option<f64>,
    /// Replace σ² by the smallest measured RSRP.
    pub estimate_sigma2: bool,
    /// Standard deviation of the complex initial weights, in watts^½.
    /// `None` derives it from the mean measured signal power.
    pub init_scale: Option<f64>,
    /// Records per gradient step; `None` is full batch.
    pub batch_size: Option<usize>,
    /// Upper bound on the rank of `R` besides `N + 1`, usually the subcarrier count.
    pub max_rank: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha0: 0.1,
            decay_per_iter: 0.005,
            iterations: 200,
            tau: 1,
            varsigma: 1e-2,
            train_fraction: 0.8,
            sigma2: None,
            estimate_sigma2: false,
            init_scale: None,
            batch_size: None,
            max_rank: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::domain(format!("training config: {what}")));
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad("alpha0 must be positive");
        }
        if !(0.0..1.0).contains(&self.decay_per_iter) {
            return bad("decay_per_iter must lie in [0, 1)");
        }
        if self.iterations == 0 {
            return bad("T must be at least 1");
        }
        if self.tau == 0 {
            return bad("tau must be at least 1");
        }
        if !(self.varsigma > 0.0) {
            return bad("varsigma must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if let Some(s) = self.sigma2 {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("sigma2 must be a finite non-negative power");
            }
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0 && s.is_finite()) {
                return bad("init_scale must be positive");
            }
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be at least 1");
        }
        if self.max_rank == Some(0) {
            return bad("max_rank must be at least 1");
        }
        Ok(())
    }

    fn learning_rate(&self, t: usize) -> f64 {
        self.alpha0 * (1.0 - self.decay_per_iter).powi(t as i32)
    }
}

/// Fixed partition of the records into training and validation parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl DataSplit {
    /// `L₁ = ⌈fraction·L⌉`, clamped to `1..L−1`; indices shuffled once by `seed`.
    pub fn new(records: usize, fraction: f64, seed: u64) -> Result<Self> {
        if records < 2 {
            return Err(Error::domain("at least two records are needed for a train/validation split"));
        }
        let l1 = ((fraction * records as f64).ceil() as usize).clamp(1, records - 1);
        let mut idx: Vec<usize> = (0..records).collect();
        idx.shuffle(&mut SeedTree::new(seed).stream("split", 0));
        let validation = idx.split_off(l1);
        Ok(DataSplit { train: idx, validation })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Training MSE in normalized label units.
    pub train_loss: f64,
    /// Relative validation MSE.
    pub validation_mse: f64,
}

/// Result of training one subnetwork count.
#[derive(Debug, Clone)]
pub struct FixedKOutcome {
    /// Normalized weights with the smallest validation MSE.
    pub model: NnModel,
    /// That smallest relative validation MSE, `δ(K')`.
    pub delta: f64,
    pub best_iteration: usize,
    /// Entry `t` describes `W^(t)`; entry 0 is the initialization.
    pub trajectory: Vec<IterationRecord>,
}

/// The normalized training problem shared by all stages.
#[derive(Debug, Clone)]
pub struct TrainingData {
    train: Features,
    validation: Features,
    validation_energy: f64,
    label_scale: f64,
    sigma2: f64,
}

impl TrainingData {
    pub fn new(records: &[Measurement], split: &DataSplit, sigma2: f64) -> Result<Self> {
        let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
        if split.train.is_empty() || split.validation.is_empty() {
            return Err(Error::domain("both training and validation parts must be non-empty"));
        }
        if split.train.iter().chain(&split.validation).any(|&i| i >= records.len()) {
            return Err(Error::domain("split refers to a record that does not exist"));
        }
        let train_records = pick(&split.train);
        let mean_signal = train_records.iter().map(|m| m.rsrp - sigma2).sum::<f64>()
            / train_records.len() as f64;
        let label_scale = if mean_signal > 0.0 {
            mean_signal
        } else {
            // Degenerate (all-noise) data: fall back to the raw power level.
            train_records.iter().map(|m| m.rsrp).sum::<f64>() / train_records.len() as f64
        };
        if !(label_scale > 0.0 && label_scale.is_finite()) {
            return Err(Error::domain("measurements carry no usable power"));
        }
        let train = Features::new(&train_records, sigma2, label_scale);
        let validation = Features::new(&pick(&split.validation), sigma2, label_scale);
        let validation_energy =
            validation.target.iter().map(|y| y * y).sum::<f64>() / validation.len() as f64;
        Ok(TrainingData {
            train,
            validation,
            validation_energy: validation_energy.max(f64::MIN_POSITIVE),
            label_scale,
            sigma2,
        })
    }

    pub fn dim(&self) -> usize {
        self.train.dim
    }

    pub fn label_scale(&self) -> f64 {
        self.label_scale
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn train_len(&self) -> usize {
        self.train.len()
    }

    pub fn validation_len(&self) -> usize {
        self.validation.len()
    }

    /// Initial weight scale in normalized units, such that the expected
    /// initial output matches the mean label.
    pub fn default_init_scale(&self, subnetworks: usize) -> f64 {
        let mean = self.train.target.iter().sum::<f64>() / self.train.len() as f64;
        (mean.max(1e-12) / (subnetworks * self.dim()) as f64).sqrt()
    }

    pub fn train_loss(&self, model: &NnModel) -> f64 {
        self.train.mse(model)
    }

    pub fn validation_mse(&self, model: &NnModel) -> f64 {
        self.validation.mse(model) / self.validation_energy
    }

    /// Model in normalized units → model in watts.
    pub fn denormalize(&self, model: &NnModel) -> NnModel {
        model.scaled(self.label_scale.sqrt())
    }
}

/// Observation points exposed to [`progressive_train_observed`].
#[derive(Debug)]
pub enum TrainEvent<'a> {
    /// Weights `W^(t)` before step `t + 1` (normalized units).
    Iteration {
        stage: usize,
        iteration: usize,
        model: &'a NnModel,
    },
    StageDone {
        stage: usize,
        outcome: &'a FixedKOutcome,
    },
}

/// Run up to `T` gradient steps from `init` and keep the weights with the
/// smallest validation MSE, the initialization included.
pub fn train_fixed_k(
    init: NnModel,
    data: &TrainingData,
    cfg: &TrainConfig,
    batch_rng: &mut crate::rng::StreamRng,
    mut observe: impl FnMut(usize, &NnModel),
) -> Result<FixedKOutcome> {
    if init.dim() != data.dim() {
        return Err(Error::domain(format!(
            "model dimension {} does not match data dimension {}",
            init.dim(),
            data.dim()
        )));
    }
    let kp = init.subnetworks();
    let all: Vec<usize> = (0..data.train_len()).collect();
    let mut order = all.clone();
    let mut cursor = order.len();
    let mut model = init;
    let mut trajectory = Vec::with_capacity(cfg.iterations + 1);
    let mut best = model.clone();
    let mut best_delta = f64::INFINITY;
    let mut best_iteration = 0;
    for t in 0..=cfg.iterations {
        observe(t, &model);
        let delta = data.validation_mse(&model);
        let (loss, grad) = match cfg.batch_size {
            Some(b) if b < all.len() && t < cfg.iterations => {
                if cursor + b > order.len() {
                    order.shuffle(batch_rng);
                    cursor = 0;
                }
                let rows = &order[cursor..cursor + b];
                cursor += b;
                let (_, g) = data.train.loss_and_gradient(&model, rows);
                (data.train_loss(&model), g)
            }
            _ => data.train.loss_and_gradient(&model, &all),
        };
        if !loss.is_finite() || !delta.is_finite() {
            return Err(Error::Diverged {
                subnetworks: kp,
                iteration: t,
                loss: if loss.is_finite() { delta } else { loss },
            });
        }
        trajectory.push(IterationRecord {
            iteration: t,
            train_loss: loss,
            validation_mse: delta,
        });
        if delta < best_delta {
            best_delta = delta;
            best = model.clone();
            best_iteration = t;
        }
        if t < cfg.iterations {
            let step = cfg.learning_rate(t);
            *model.weights_mut() -= grad * step;
        }
    }
    Ok(FixedKOutcome {
        model: best,
        delta: best_delta,
        best_iteration,
        trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Consecutive stages differ by less than `varsigma`.
    Converged,
    /// The next stage would exceed `min(N + 1, max_rank)` subnetworks.
    RankLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    Known,
    Config,
    MinimumRsrp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub subnetworks: usize,
    /// Relative validation MSE `δ(K')`.
    pub delta: f64,
    /// `δ(K')` in W².
    pub delta_watts2: f64,
    pub best_iteration: usize,
    pub wall_clock_s: f64,
    pub trajectory: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub train_records: usize,
    pub validation_records: usize,
    pub sigma2: f64,
    pub sigma2_source: NoiseSource,
    pub label_scale: f64,
    pub stages: Vec<StageReport>,
    /// `K*`.
    pub selected: usize,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn delta(&self, subnetworks: usize) -> Option<f64> {
        self.stages.iter().find(|s| s.subnetworks == subnetworks).map(|s| s.delta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Progressive training with default observation (none).
pub fn progressive_train(data: &MeasurementSet, cfg: &TrainConfig) -> Result<(NnModel, TrainReport)> {
    progressive_train_observed(data, cfg, |_| {})
}

/// Grow the network by `tau` subnetworks per stage, warm-starting from the
/// previous stage, until validation MSE stops changing or the rank bound is
/// reached. Returns the model in watts.
pub fn progressive_train_observed(
    data: &MeasurementSet,
    cfg: &TrainConfig,
    mut observe: impl FnMut(TrainEvent<'_>),
) -> Result<(NnModel, TrainReport)> {
    cfg.validate()?;
    let records = data.records();
    let (sigma2, sigma2_source) = if cfg.estimate_sigma2 {
        let min = records.iter().map(|m| m.rsrp).fold(f64::INFINITY, f64::min);
        (min, NoiseSource::MinimumRsrp)
    } else if let Some(s) = cfg.sigma2 {
        (s, NoiseSource::Config)
    } else {
        (data.sigma2(), NoiseSource::Known)
    };
    let split = DataSplit::new(records.len(), cfg.train_fraction, cfg.seed)?;
    let td = TrainingData::new(records, &split, sigma2)?;
    let dim = td.dim();
    let cap = cfg.max_rank.map_or(dim, |m| m.min(dim));
    let seeds = SeedTree::new(cfg.seed);

    let mut stages: Vec<StageReport> = Vec::new();
    let mut outcomes: Vec<FixedKOutcome> = Vec::new();
    let stop_reason = loop {
        let stage = outcomes.len();
        let kp = (stage + 1) * cfg.tau;
        let scale = match cfg.init_scale {
            Some(s) => s / td.label_scale().sqrt(),
            None => td.default_init_scale(kp),
        };
        let fresh = NnModel::random(dim, cfg.tau, scale, &mut seeds.stream("init", stage as u64));
        let init = match outcomes.last() {
            Some(prev) => prev.model.concat(&fresh)?,
            None => fresh,
        };
        let started = Instant::now();
        let mut batch_rng = seeds.stream("batch", stage as u64);
        let outcome = train_fixed_k(init, &td, cfg, &mut batch_rng, |t, m| {
            observe(TrainEvent::Iteration {
                stage,
                iteration: t,
                model: m,
            })
        })?;
        observe(TrainEvent::StageDone {
            stage,
            outcome: &outcome,
        });
        stages.push(StageReport {
            subnetworks: kp,
            delta: outcome.delta,
            delta_watts2: outcome.delta * td.validation_energy * td.label_scale().powi(2),
            best_iteration: outcome.best_iteration,
            wall_clock_s: started.elapsed().as_secs_f64(),
            trajectory: outcome.trajectory.clone(),
        });
        let converged = outcomes
            .last()
            .is_some_and(|prev| (outcome.delta - prev.delta).abs() < cfg.varsigma);
        outcomes.push(outcome);
        if converged {
            break StopReason::Converged;
        }
        if kp + cfg.tau > cap {
            break StopReason::RankLimit;
        }
    };

    // Smallest K' whose δ is within ς of the best one.
    let min_delta = outcomes.iter().map(|o| o.delta).fold(f64::INFINITY, f64::min);
    let chosen = outcomes
        .iter()
        .position(|o| o.delta < min_delta + cfg.varsigma)
        .unwrap_or(0);
    let model = td.denormalize(&outcomes[chosen].model);
    let report = TrainReport {
        config: cfg.clone(),
        train_records: td.train_len(),
        validation_records: td.validation_len(),
        sigma2,
        sigma2_source,
        label_scale: td.label_scale(),
        stages,
        selected: model.subnetworks(),
        stop_reason,
    };
    Ok((model, report))
}
