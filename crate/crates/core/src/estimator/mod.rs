//! Recovery of the autocorrelation matrix from RSRP measurements.
//!
//! The received power is a quadratic form `v^H R v` in the reflection
//! vector, and any PSD `R` of rank `K` splits into `K` rank-one terms. A
//! network of `K'` two-unit subnetworks with tied weights therefore
//! represents exactly the PSD matrices of rank at most `K'`. It is trained on
//! `(v, p̄ − σ²)` pairs and `R̂ = Σ_k w_k w_k^H` is read off its weights.

mod model;
mod train;

pub use model::{forward, gradient, loss, NnModel};
pub use train::{
    progressive_train, progressive_train_observed, train_fixed_k, DataSplit, FixedKOutcome,
    IterationRecord, NoiseSource, StageReport, StopReason, TrainConfig, TrainEvent, TrainReport,
    TrainingData,
};

use crate::channel::{matrix_from_text, matrix_to_text, AutocorrMatrix};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, CMatrix};
use crate::text::{write_meta, Document};

/// `R̂ = Σ_k w_k w_k^H`, PSD with rank at most `rank_bound` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedAutocorr {
    entries: CMatrix,
    rank_bound: usize,
}

impl EstimatedAutocorr {
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn rank_bound(&self) -> usize {
        self.rank_bound
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_autocorr(&self) -> AutocorrMatrix {
        AutocorrMatrix::new_unchecked(self.entries.clone(), 1.0)
    }

    pub fn quad_form(&self, v: &[crate::C64]) -> f64 {
        crate::linalg::quad_form(&self.entries, v).re
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_meta(&mut out, "rank_bound", self.rank_bound);
        out.push_str(&matrix_to_text(&self.entries, "estimated_autocorrelation", 1.0));
        out
    }

    /// Parses a dump from [`EstimatedAutocorr::to_text`]. The matrix must be
    /// Hermitian PSD.
    pub fn from_text(text: &str) -> Result<Self> {
        let rank_bound = Document::parse(text).meta_parse("rank_bound")?;
        let (m, _) = matrix_from_text(text)?;
        let checked = AutocorrMatrix::from_entries(m, 1.0)?;
        Ok(EstimatedAutocorr {
            entries: checked.entries().clone(),
            rank_bound,
        })
    }
}

pub fn reconstruct_autocorrelation(model: &NnModel) -> EstimatedAutocorr {
    let g = model.gram();
    let sym = (&g + g.adjoint()).scale(0.5);
    EstimatedAutocorr {
        entries: sym,
        rank_bound: model.subnetworks(),
    }
}

/// `‖R̂ − R‖²_F / ‖R‖²_F`.
pub fn nmse(estimate: &CMatrix, truth: &CMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::domain(format!(
            "shape mismatch: {:?} vs {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let denom = frobenius_norm(truth);
    if denom == 0.0 {
        return Err(Error::domain("true matrix is zero"));
    }
    Ok((frobenius_norm(&(estimate - truth)) / denom).powi(2))
}
