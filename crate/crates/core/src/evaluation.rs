//! Figures of merit and Monte Carlo sweeps.

use crate::channel::{autocorrelation, cfr, sample_channel, CirMatrix};
use crate::error::{Error, Result};
use crate::estimator::{nmse, progressive_train, reconstruct_autocorrelation, TrainConfig};
use crate::measurement::{
    collect_measurements, MeasurementContext, MeasurementMode, MeasurementSet, ReflectionVector,
    RsPattern,
};
use crate::optimizer::{csm_baseline, optimize_reflection, rms_baseline, Method, OptimizerConfig};
use crate::rng::SeedTree;
use crate::scenario::Scenario;
use crate::text::fmt_f64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// `|(G v)_k|²` for `k = 0..K`.
pub fn per_tap_power(cir: &CirMatrix, v: &ReflectionVector) -> Result<Vec<f64>> {
    crate::channel::check_reflection(v.extended(), cir.columns())?;
    let taps = cir.apply(v.extended());
    Ok(taps[..cir.support()].iter().map(|z| z.norm_sqr()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    Waterfilling,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub cp_len: usize,
    /// Total transmit power in watts.
    pub tx_power: f64,
    /// Noise power per subcarrier in watts.
    pub sigma2: f64,
    pub allocation: Allocation,
}

impl RateConfig {
    pub fn from_scenario(scenario: &Scenario, allocation: Allocation) -> Self {
        RateConfig {
            cp_len: scenario.cp_len,
            tx_power: scenario.tx_power(),
            sigma2: scenario.noise_power(),
            allocation,
        }
    }
}

/// Water level `ν` with `Σ_m max(0, ν − σ²/g_m) = P`, found by bisection to
/// relative tolerance 1e-10 and then solved exactly on the active set.
pub fn water_level(gains: &[f64], power: f64, sigma2: f64) -> Result<f64> {
    if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::domain("channel gains must be finite and non-negative"));
    }
    if !(power > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::domain("power and noise must be positive"));
    }
    let floors: Vec<f64> = gains.iter().filter(|&&g| g > 0.0).map(|g| sigma2 / g).collect();
    if floors.is_empty() {
        return Err(Error::domain("all channel gains are zero"));
    }
    let filled = |nu: f64| floors.iter().map(|c| (nu - c).max(0.0)).sum::<f64>();
    let lowest = floors.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (lowest, lowest + power);
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if filled(mid) < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut nu = 0.5 * (lo + hi);
    for _ in 0..floors.len() {
        let active: Vec<f64> = floors.iter().copied().filter(|&c| c < nu).collect();
        let next = (power + active.iter().sum::<f64>()) / active.len() as f64;
        if next == nu {
            break;
        }
        let same = floors.iter().all(|&c| (c < nu) == (c < next));
        nu = next;
        if same {
            break;
        }
    }
    Ok(nu)
}

/// `P_m = max(0, ν − σ²/g_m)`; dead subcarriers get nothing.
pub fn water_filling(gains: &[f64], power: f64, sigma2: f64) -> Result<Vec<f64>> {
    let nu = water_level(gains, power, sigma2)?;
    Ok(gains
        .iter()
        .map(|&g| if g > 0.0 { (nu - sigma2 / g).max(0.0) } else { 0.0 })
        .collect())
}

/// Largest relative violation of the water-filling optimality conditions:
/// common level on active subcarriers, level below the floor on inactive
/// ones, and the power budget.
pub fn kkt_residual(gains: &[f64], alloc: &[f64], power: f64, sigma2: f64) -> f64 {
    let active: Vec<f64> = gains
        .iter()
        .zip(alloc)
        .filter(|(_, p)| **p > 0.0)
        .map(|(g, p)| p + sigma2 / g)
        .collect();
    if active.is_empty() {
        return f64::INFINITY;
    }
    let nu = active.iter().sum::<f64>() / active.len() as f64;
    let level = active.iter().map(|l| (l - nu).abs() / nu).fold(0.0, f64::max);
    let inactive = gains
        .iter()
        .zip(alloc)
        .filter(|(g, p)| **p == 0.0 && **g > 0.0)
        .map(|(g, _)| ((nu - sigma2 / g) / nu).max(0.0))
        .fold(0.0, f64::max);
    let budget = (alloc.iter().sum::<f64>() - power).abs() / power;
    level.max(inactive).max(budget)
}

/// `Σ_m log₂(1 + P_m g_m / σ²) / (M + M_cp)`.
pub fn rate_from_gains(gains: &[f64], cfg: &RateConfig) -> Result<f64> {
    if gains.iter().all(|&g| g == 0.0) {
        return Ok(0.0);
    }
    let alloc = match cfg.allocation {
        Allocation::Waterfilling => water_filling(gains, cfg.tx_power, cfg.sigma2)?,
        Allocation::Equal => vec![cfg.tx_power / gains.len() as f64; gains.len()],
    };
    let bits: f64 = gains
        .iter()
        .zip(&alloc)
        .map(|(g, p)| (1.0 + p * g / cfg.sigma2).log2())
        .sum();
    Ok(bits / (gains.len() + cfg.cp_len) as f64)
}

pub fn achievable_rate(cir: &CirMatrix, v: &ReflectionVector, cfg: &RateConfig) -> Result<f64> {
    let h = cfr(cir, v.extended())?;
    let gains: Vec<f64> = h.iter().map(|z| z.norm_sqr()).collect();
    rate_from_gains(&gains, cfg)
}

/// Measurement settings of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementSpec {
    #[serde(rename = "L")]
    pub records: usize,
    pub mode: MeasurementMode,
    /// RS symbols averaged per measurement.
    #[serde(rename = "Q")]
    pub symbols: usize,
    /// RS-bearing subcarriers.
    #[serde(rename = "M0")]
    pub pilots: usize,
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        MeasurementSpec {
            records: 300,
            mode: MeasurementMode::Sampled,
            symbols: 30,
            pilots: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "values")]
pub enum Axis {
    /// Number of measurements `L`.
    Records(Vec<usize>),
    /// Power-delay-profile decay `ε`.
    Epsilon(Vec<f64>),
    /// Delay tap index, 1-based in the output.
    Tap,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Records(_) => "L",
            Axis::Epsilon(_) => "epsilon",
            Axis::Tap => "tap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `‖R̂ − R‖²_F / ‖R‖²_F`.
    Nmse,
    /// Average channel power gain `v^H R v / P`.
    Gain,
    /// OFDM achievable rate in bps/Hz.
    Rate,
    /// `|(G v)_k|²` per tap.
    TapPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario: Scenario,
    pub measurement: MeasurementSpec,
    pub training: TrainConfig,
    pub optimizer: OptimizerConfig,
    pub axis: Axis,
    pub metric: Metric,
    pub methods: Vec<Method>,
    pub allocation: Allocation,
    pub realizations: usize,
    pub seed: u64,
}

pub const PRESETS: [&str; 4] = ["nmse_vs_L", "gain_vs_L", "rate_vs_epsilon", "tap_power"];

impl SweepSpec {
    /// Named campaign on the default deployment.
    pub fn preset(name: &str) -> Result<Self> {
        let base = |axis, metric, methods: &[Method]| SweepSpec {
            scenario: Scenario::default(),
            measurement: MeasurementSpec::default(),
            training: TrainConfig::default(),
            optimizer: OptimizerConfig::default(),
            axis,
            metric,
            methods: methods.to_vec(),
            allocation: Allocation::Waterfilling,
            realizations: 50,
            seed: 0,
        };
        let ls = vec![50, 100, 150, 200, 250, 300];
        let all = [Method::Proposed, Method::Csm, Method::Rms, Method::UpperBound];
        Ok(match name {
            "nmse_vs_L" => base(Axis::Records(ls), Metric::Nmse, &[Method::Proposed]),
            "gain_vs_L" => base(Axis::Records(ls), Metric::Gain, &all),
            "rate_vs_epsilon" => base(
                Axis::Epsilon(vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]),
                Metric::Rate,
                &all,
            ),
            "tap_power" => base(Axis::Tap, Metric::TapPower, &[Method::Proposed, Method::NoIrs]),
            other => {
                return Err(Error::domain(format!(
                    "unknown preset `{other}`; available presets: {}",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.training.validate()?;
        self.optimizer.validate()?;
        if self.realizations == 0 {
            return Err(Error::domain("realizations must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::domain("at least one method is required"));
        }
        if self.metric == Metric::Nmse && self.methods.iter().any(|m| *m != Method::Proposed) {
            return Err(Error::domain("the NMSE metric is only defined for the proposed method"));
        }
        if (self.metric == Metric::TapPower) != (self.axis == Axis::Tap) {
            return Err(Error::domain("the tap axis goes with the tap_power metric and vice versa"));
        }
        match &self.axis {
            Axis::Records(ls) if ls.is_empty() || ls.contains(&0) => {
                Err(Error::domain("the L axis needs positive values"))
            }
            Axis::Epsilon(es) if es.is_empty() || es.iter().any(|e| !(*e >= 0.0)) => {
                Err(Error::domain("the epsilon axis needs non-negative values"))
            }
            _ => {
                RsPattern::new(self.scenario.subcarriers, self.measurement.pilots, self.measurement.symbols)?;
                Ok(())
            }
        }
    }

    fn points(&self) -> Vec<(Scenario, usize)> {
        match &self.axis {
            Axis::Records(ls) => ls.iter().map(|&l| (self.scenario.clone(), l)).collect(),
            Axis::Epsilon(es) => es
                .iter()
                .map(|&e| (Scenario { epsilon: e, ..self.scenario.clone() }, self.measurement.records))
                .collect(),
            Axis::Tap => vec![(self.scenario.clone(), self.measurement.records)],
        }
    }

    fn axis_values(&self) -> Vec<f64> {
        match &self.axis {
            Axis::Records(ls) => ls.iter().map(|&l| l as f64).collect(),
            Axis::Epsilon(es) => es.clone(),
            Axis::Tap => (1..=self.scenario.max_taps()).map(|k| k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub method: Method,
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
    /// Per-realization values in realization order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: String,
    pub metric: Metric,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, axis_value: f64, method: Method) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.axis_value == axis_value && r.method == method)
    }

    /// `axis_value,method,mean,std_err,count` preceded by `#|` echo lines.
    pub fn to_csv(&self, echo: &str) -> String {
        let mut out = String::new();
        crate::text::write_echo(&mut out, echo);
        let _ = writeln!(out, "# axis = {}", self.axis);
        let _ = writeln!(out, "axis_value,method,mean,std_err,count");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(r.axis_value),
                r.method,
                fmt_f64(r.mean),
                fmt_f64(r.std_err),
                r.count
            );
        }
        out
    }
}

/// Mean and standard error `s/√n` (zero for a single value).
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Reflection chosen by a method, and the channel it acts on.
struct Design {
    v: ReflectionVector,
    irs: bool,
    nmse: Option<f64>,
}

fn design(
    method: Method,
    spec: &SweepSpec,
    scenario: &Scenario,
    cir: &CirMatrix,
    truth: &crate::channel::AutocorrMatrix,
    set: &mut dyn FnMut() -> Result<MeasurementSet>,
    seeds: &SeedTree,
) -> Result<Design> {
    let bits = scenario.phase_bits;
    let power = scenario.tx_power();
    Ok(match method {
        Method::Proposed => {
            let data = set()?;
            let cfg = TrainConfig {
                seed: seeds.seed_for("training", 0),
                max_rank: spec.training.max_rank.or(Some(scenario.subcarriers)),
                ..spec.training.clone()
            };
            let (model, _) = progressive_train(&data, &cfg)?;
            let est = reconstruct_autocorrelation(&model);
            let err = nmse(est.entries(), truth.entries())?;
            let res = optimize_reflection(
                est.entries(),
                bits,
                power,
                &spec.optimizer,
                &mut seeds.stream("randomization", 0),
            )?;
            Design { v: res.v_star, irs: true, nmse: Some(err) }
        }
        Method::UpperBound => {
            let res = optimize_reflection(
                truth.entries(),
                bits,
                power,
                &spec.optimizer,
                &mut seeds.stream("randomization", 1),
            )?;
            Design { v: res.v_star, irs: true, nmse: None }
        }
        Method::Rms => Design { v: rms_baseline(&set()?)?, irs: true, nmse: None },
        Method::Csm => Design { v: csm_baseline(&set()?)?, irs: true, nmse: None },
        Method::NoIrs => {
            let last = (1u32 << bits) - 1;
            Design {
                v: ReflectionVector::uniform(cir.columns() - 1, bits, last)?,
                irs: false,
                nmse: None,
            }
        }
    })
}

/// One realization: `[point][method]` → metric values (one per tap for the
/// tap metric, otherwise a single value).
fn run_realization(spec: &SweepSpec, index: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let seeds = SeedTree::new(spec.seed).child("realization", index as u64);
    let mut out = Vec::new();
    for (scenario, records) in spec.points() {
        let realization = sample_channel(&scenario, 0, &mut seeds.stream("channel", 0))?;
        let cir = CirMatrix::build(&realization, scenario.subcarriers)?;
        let truth = autocorrelation(&cir, scenario.tx_power());
        let ctx = MeasurementContext {
            cir: &cir,
            autocorr: &truth,
            pattern: RsPattern::new(scenario.subcarriers, spec.measurement.pilots, spec.measurement.symbols)?,
            tx_power: scenario.tx_power(),
            sigma2: scenario.noise_power(),
        };
        let mut cached: Option<MeasurementSet> = None;
        let mut set = || -> Result<MeasurementSet> {
            if cached.is_none() {
                cached = Some(collect_measurements(
                    records,
                    spec.measurement.mode,
                    &ctx,
                    scenario.phase_bits,
                    &mut seeds.stream("reflections", 0),
                    &mut seeds.stream("noise", 0),
                )?);
            }
            Ok(cached.clone().expect("just filled"))
        };
        let rate_cfg = RateConfig::from_scenario(&scenario, spec.allocation);
        let no_irs = cir.without_irs();
        let mut per_method = Vec::new();
        for &method in &spec.methods {
            let d = design(method, spec, &scenario, &cir, &truth, &mut set, &seeds)?;
            let eff = if d.irs { &cir } else { &no_irs };
            let value = match spec.metric {
                Metric::Nmse => vec![d.nmse.ok_or_else(|| Error::domain("NMSE needs an estimate"))?],
                Metric::Gain => {
                    let taps = per_tap_power(eff, &d.v)?;
                    vec![taps.iter().sum::<f64>() / scenario.subcarriers as f64]
                }
                Metric::Rate => vec![achievable_rate(eff, &d.v, &rate_cfg)?],
                Metric::TapPower => {
                    let y = eff.apply(d.v.extended());
                    y[..scenario.max_taps()].iter().map(|z| z.norm_sqr()).collect()
                }
            };
            per_method.push(value);
        }
        out.push(per_method);
    }
    Ok(out)
}

/// Runs every realization (in parallel) and aggregates per axis value and
/// method. The result depends only on the spec, not on scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let results: Vec<Result<_>> = (0..spec.realizations)
        .into_par_iter()
        .map(|i| {
            run_realization(spec, i).map_err(|e| Error::Realization {
                index: i,
                source: Box::new(e),
            })
        })
        .collect();
    let mut per_realization = Vec::with_capacity(results.len());
    for r in results {
        per_realization.push(r?);
    }
    let axis_values = spec.axis_values();
    let mut rows = Vec::new();
    for (a, &axis_value) in axis_values.iter().enumerate() {
        for (m, &method) in spec.methods.iter().enumerate() {
            let values: Vec<f64> = per_realization
                .iter()
                .map(|r| match spec.axis {
                    Axis::Tap => r[0][m][a],
                    _ => r[a][m][0],
                })
                .collect();
            let (mean, std_err) = mean_and_std_err(&values);
            rows.push(SweepRow {
                axis_value,
                method,
                mean,
                std_err,
                count: values.len(),
                values,
            });
        }
    }
    Ok(SweepResult {
        axis: spec.axis.name().to_string(),
        metric: spec.metric,
        rows,
    })
}
