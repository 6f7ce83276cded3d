//! The structured single-layer network.
//!
//! Subnetwork `k` maps the real input `u = [Re v; Im v]` to two hidden units
//! `e_k = u^T W_k` with
//!
//! ```text
//!        ┌ w_{k,1}   w_{k,2} ┐
//! W_k =  │                   │   ∈ R^{(2N+2)×2}
//!        └ w_{k,2}  −w_{k,1} ┘
//! ```
//!
//! and outputs `‖e_k‖²`. The network output is the sum over subnetworks,
//! which equals `Σ_k |v^H w_k|²` for the complex weight
//! `w_k = w_{k,1} + j w_{k,2}`. Only the `2N+2` entries of `[w_{k,1}; w_{k,2}]`
//! are stored, so the mirrored block is tied by construction.

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::measurement::{Measurement, ReflectionVector};
use crate::rng::complex_normal;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct NnModel {
    dim: usize,
    /// `(2·dim) × K'`; column `k` is `[w_{k,1}; w_{k,2}]`.
    weights: DMatrix<f64>,
}

impl NnModel {
    /// `dim = N + 1`.
    pub fn zeros(dim: usize, subnetworks: usize) -> Self {
        NnModel {
            dim,
            weights: DMatrix::zeros(2 * dim, subnetworks),
        }
    }

    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() == 0 || weights.nrows() % 2 != 0 {
            return Err(Error::domain(format!(
                "weight matrix needs an even, non-zero row count, got {}",
                weights.nrows()
            )));
        }
        Ok(NnModel {
            dim: weights.nrows() / 2,
            weights,
        })
    }

    pub fn from_complex(columns: &[Vec<Complex64>]) -> Result<Self> {
        let dim = columns.first().map_or(0, Vec::len);
        if dim == 0 || columns.iter().any(|c| c.len() != dim) {
            return Err(Error::domain("complex weights must be non-empty and equally long"));
        }
        let weights = DMatrix::from_fn(2 * dim, columns.len(), |r, k| {
            if r < dim {
                columns[k][r].re
            } else {
                columns[k][r - dim].im
            }
        });
        Ok(NnModel { dim, weights })
    }

    /// Complex entries i.i.d. `CN(0, scale²)`.
    pub fn random<R: Rng + ?Sized>(dim: usize, subnetworks: usize, scale: f64, rng: &mut R) -> Self {
        let mut cols = Vec::with_capacity(subnetworks);
        for _ in 0..subnetworks {
            cols.push((0..dim).map(|_| complex_normal(rng, scale * scale)).collect::<Vec<_>>());
        }
        let mut model = NnModel::zeros(dim, subnetworks);
        for (k, col) in cols.iter().enumerate() {
            for (i, z) in col.iter().enumerate() {
                model.weights[(i, k)] = z.re;
                model.weights[(dim + i, k)] = z.im;
            }
        }
        model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `K'`.
    pub fn subnetworks(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.weights
    }

    pub fn complex_weight(&self, k: usize) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| Complex64::new(self.weights[(i, k)], self.weights[(self.dim + i, k)]))
            .collect()
    }

    /// The full real `(2N+2) × 2` weight matrix `W_k` of subnetwork `k`.
    pub fn subnetwork_matrix(&self, k: usize) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(2 * n, 2, |r, c| match (r < n, c) {
            (true, 0) => self.weights[(r, k)],
            (true, _) => self.weights[(n + r, k)],
            (false, 0) => self.weights[(r, k)],
            (false, _) => -self.weights[(r - n, k)],
        })
    }

    /// Subnetworks of `self` followed by those of `other`.
    pub fn concat(&self, other: &NnModel) -> Result<NnModel> {
        if self.dim != other.dim {
            return Err(Error::domain("cannot concatenate models of different dimension"));
        }
        let k = self.subnetworks();
        let mut w = DMatrix::zeros(2 * self.dim, k + other.subnetworks());
        w.columns_mut(0, k).copy_from(&self.weights);
        w.columns_mut(k, other.subnetworks()).copy_from(&other.weights);
        Ok(NnModel { dim: self.dim, weights: w })
    }

    pub fn scaled(&self, factor: f64) -> NnModel {
        NnModel {
            dim: self.dim,
            weights: self.weights.scale(factor),
        }
    }

    /// `Σ_k w_k w_k^H`.
    pub fn gram(&self) -> CMatrix {
        let mut r = CMatrix::zeros(self.dim, self.dim);
        for k in 0..self.subnetworks() {
            let w = self.complex_weight(k);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    r[(i, j)] += w[i] * w[j].conj();
                }
            }
        }
        r
    }

    fn check_dim(&self, v: &ReflectionVector) -> Result<()> {
        if v.extended().len() != self.dim {
            return Err(Error::domain(format!(
                "reflection has {} entries, model expects {}",
                v.extended().len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Hidden units `(e_{k,1}, e_{k,2})` of subnetwork `k` for input `(re, im)`.
    #[inline]
    pub(crate) fn hidden(&self, k: usize, re: &[f64], im: &[f64]) -> (f64, f64) {
        let n = self.dim;
        let col = self.weights.column(k);
        let (w1, w2) = (&col.as_slice()[..n], &col.as_slice()[n..]);
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for i in 0..n {
            e1 += re[i] * w1[i] + im[i] * w2[i];
            e2 += re[i] * w2[i] - im[i] * w1[i];
        }
        (e1, e2)
    }

    pub(crate) fn output_parts(&self, re: &[f64], im: &[f64]) -> f64 {
        (0..self.subnetworks())
            .map(|k| {
                let (e1, e2) = self.hidden(k, re, im);
                e1 * e1 + e2 * e2
            })
            .sum()
    }
}

/// `p̂(v) = Σ_k ‖u^T W_k‖²`.
pub fn forward(model: &NnModel, v: &ReflectionVector) -> Result<f64> {
    model.check_dim(v)?;
    let (re, im): (Vec<f64>, Vec<f64>) = v.extended().iter().map(|z| (z.re, z.im)).unzip();
    Ok(model.output_parts(&re, &im))
}

/// Per-record features in the layout the training loop consumes.
#[derive(Debug, Clone)]
pub(crate) struct Features {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// `p̄ − σ²`, possibly rescaled.
    pub target: Vec<f64>,
}

impl Features {
    pub fn new(records: &[Measurement], sigma2: f64, label_scale: f64) -> Self {
        let dim = records.first().map_or(0, |m| m.reflection.extended().len());
        let mut re = Vec::with_capacity(records.len() * dim);
        let mut im = Vec::with_capacity(records.len() * dim);
        let mut target = Vec::with_capacity(records.len());
        for m in records {
            for z in m.reflection.extended() {
                re.push(z.re);
                im.push(z.im);
            }
            target.push((m.rsrp - sigma2) / label_scale);
        }
        Features { dim, re, im, target }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    #[inline]
    pub fn row(&self, l: usize) -> (&[f64], &[f64]) {
        let s = l * self.dim;
        (&self.re[s..s + self.dim], &self.im[s..s + self.dim])
    }

    pub fn mse(&self, model: &NnModel) -> f64 {
        let n = self.len();
        (0..n)
            .map(|l| {
                let (re, im) = self.row(l);
                (self.target[l] - model.output_parts(re, im)).powi(2)
            })
            .sum::<f64>()
            / n as f64
    }

    /// Loss and its gradient over the records in `rows`.
    pub fn loss_and_gradient(&self, model: &NnModel, rows: &[usize]) -> (f64, DMatrix<f64>) {
        let n = self.dim;
        let kp = model.subnetworks();
        let mut grad = DMatrix::zeros(2 * n, kp);
        let mut loss = 0.0;
        let mut hidden = vec![(0.0, 0.0); kp];
        let coef = 2.0 / rows.len() as f64;
        for &l in rows {
            let (re, im) = self.row(l);
            let mut out = 0.0;
            for (k, h) in hidden.iter_mut().enumerate() {
                *h = model.hidden(k, re, im);
                out += h.0 * h.0 + h.1 * h.1;
            }
            let resid = out - self.target[l];
            loss += resid * resid;
            let c = coef * resid;
            for (k, &(e1, e2)) in hidden.iter().enumerate() {
                let mut col = grad.column_mut(k);
                let g = col.as_mut_slice();
                for i in 0..n {
                    g[i] += c * 2.0 * (e1 * re[i] - e2 * im[i]);
                    g[n + i] += c * 2.0 * (e1 * im[i] + e2 * re[i]);
                }
            }
        }
        (loss / rows.len() as f64, grad)
    }
}

fn check_batch(model: &NnModel, batch: &[Measurement]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::domain("batch must contain at least one record"));
    }
    batch.iter().try_for_each(|m| model.check_dim(&m.reflection))
}

/// `(1/L₁) Σ_l (p̄_l − σ² − p̂(v_l))²`.
pub fn loss(model: &NnModel, batch: &[Measurement], sigma2: f64) -> Result<f64> {
    check_batch(model, batch)?;
    Ok(Features::new(batch, sigma2, 1.0).mse(model))
}

/// Gradient of [`loss`] with respect to the `(2N+2) × K'` free weights.
pub fn gradient(model: &NnModel, batch: &[Measurement], sigma2: f64) -> Result<DMatrix<f64>> {
    check_batch(model, batch)?;
    let rows: Vec<usize> = (0..batch.len()).collect();
    Ok(Features::new(batch, sigma2, 1.0).loss_and_gradient(model, &rows).1)
}
