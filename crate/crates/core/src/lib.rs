//! Estimation of the wideband channel autocorrelation matrix of an
//! IRS-assisted OFDM link from received-power (RSRP) measurements, followed by
//! discrete passive-reflection design and link-level evaluation.
//!
//! The pipeline is split into modules that mirror the processing chain:
//!
//! - [`channel`]: frequency-selective channel generation, CIR/CFR and the
//!   ground-truth autocorrelation matrix `R = (P/M) G^H G`.
//! - [`measurement`]: discrete random training reflections and RSRP
//!   measurements over a uniformly spaced subset of subcarriers.
//! - [`estimator`]: the structured single-layer network whose weights recover
//!   `R`, trained with closed-form gradients and progressive subnetwork growth.
//! - [`optimizer`]: relaxation, Gaussian randomization and successive
//!   refinement over the discrete phase alphabet, plus measurement baselines.
//! - [`evaluation`]: per-tap power, water-filling rate and Monte Carlo sweeps.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod linalg;
pub mod measurement;
pub mod optimizer;
pub mod rng;
pub mod scenario;
pub mod text;

pub use num_complex::Complex64 as C64;

pub use channel::{
    autocorrelation, cfr, path_loss_db, power_delay_profile, sample_channel, AutocorrMatrix,
    ChannelRealization, CirMatrix, Link,
};
pub use error::{Error, Result};
pub use estimator::{
    nmse, progressive_train, reconstruct_autocorrelation, EstimatedAutocorr, NnModel,
    TrainConfig, TrainReport,
};
pub use measurement::{
    collect_measurements, random_reflection, MeasurementMode, MeasurementSet, PhaseAlphabet,
    ReflectionVector, RsPattern,
};
pub use optimizer::{optimize_reflection, Method, OptimizationResult, OptimizerConfig};
pub use rng::SeedTree;
pub use scenario::Scenario;
