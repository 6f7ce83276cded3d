//! Discrete reflection design.
//!
//! The objective `v^H R v / P` is maximized over the discrete alphabet in
//! three steps: a low-rank relaxation of `V = v v^H` with unit diagonal,
//! Gaussian randomization with phase quantization, and cyclic per-element
//! exhaustive refinement. Two measurement-only baselines (best measured
//! reflection, conditional sample means) need no estimate of `R`.

use crate::channel::AutocorrMatrix;
use crate::error::{Error, Result};
use crate::estimator::EstimatedAutocorr;
use crate::linalg::{frobenius_norm, mat_vec, quad_form, CMatrix};
use crate::measurement::{MeasurementSet, ReflectionVector};
use crate::rng::complex_normal;
use crate::text::{field, fmt_f64, write_meta, Document};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Relaxation and refinement on the estimated matrix.
    Proposed,
    /// Best measured reflection.
    Rms,
    /// Conditional sample mean.
    Csm,
    /// Relaxation and refinement on the true matrix.
    UpperBound,
    /// Direct link only; the IRS columns of the channel are zeroed.
    NoIrs,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Proposed,
        Method::Csm,
        Method::Rms,
        Method::UpperBound,
        Method::NoIrs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Rms => "rms",
            Method::Csm => "csm",
            Method::UpperBound => "upper_bound",
            Method::NoIrs => "no_irs",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown method `{s}` (expected proposed, rms, csm, upper_bound or no_irs)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub num_candidates: usize,
    pub relax_iterations: usize,
    /// Cap on refinement sweeps; refinement normally stops earlier.
    pub max_sweeps: usize,
    /// Number of best distinct randomized candidates that are refined.
    pub multi_start: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            num_candidates: 100,
            relax_iterations: 500,
            max_sweeps: 100,
            multi_start: 4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_candidates == 0 {
            return Err(Error::domain("optimizer: num_candidates must be at least 1"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::domain("optimizer: max_sweeps must be at least 1"));
        }
        if self.multi_start == 0 {
            return Err(Error::domain("optimizer: multi_start must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub v_star: ReflectionVector,
    /// `v*^H R v* / P` on the matrix the method optimized.
    pub objective: f64,
    /// Refinement sweeps performed (0 for the measurement baselines).
    pub sweeps: usize,
    pub method: Method,
    /// Objective after every accepted single-element update, starting with
    /// the initial point.
    pub trajectory: Vec<f64>,
}

impl OptimizationResult {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_meta(&mut out, "kind", "optimization_result");
        write_meta(&mut out, "method", self.method);
        write_meta(&mut out, "mu", self.v_star.alphabet().bits());
        write_meta(&mut out, "elements", self.v_star.elements());
        write_meta(&mut out, "objective", fmt_f64(self.objective));
        write_meta(&mut out, "sweeps", self.sweeps);
        let _ = writeln!(out, "# columns: element phase_index");
        for (n, i) in self.v_star.indices().iter().enumerate() {
            let _ = writeln!(out, "{} {i}", n + 1);
        }
        out
    }

    /// Parses the dump; the trajectory is not stored and comes back empty.
    pub fn from_text(text: &str) -> Result<Self> {
        let doc = Document::parse(text);
        let method: Method = doc.meta_str("method")?.parse()?;
        let bits: u32 = doc.meta_parse("mu")?;
        let elements: usize = doc.meta_parse("elements")?;
        let mut indices = vec![None; elements];
        for (line, cols) in &doc.rows {
            let n: usize = field(*line, cols, 0, "element")?;
            let idx: u32 = field(*line, cols, 1, "phase index")?;
            if n == 0 || n > elements {
                return Err(Error::parse(*line, format!("element {n} outside 1..={elements}")));
            }
            indices[n - 1] = Some(idx);
        }
        let indices = indices
            .into_iter()
            .enumerate()
            .map(|(n, i)| i.ok_or_else(|| Error::parse(0, format!("element {} missing", n + 1))))
            .collect::<Result<Vec<_>>>()?;
        Ok(OptimizationResult {
            v_star: ReflectionVector::from_indices(bits, indices)?,
            objective: doc.meta_parse("objective")?,
            sweeps: doc.meta_parse("sweeps")?,
            method,
            trajectory: Vec::new(),
        })
    }
}

fn check_dims(v: &ReflectionVector, r: &CMatrix) -> Result<()> {
    if r.nrows() != r.ncols() || r.nrows() != v.extended().len() {
        return Err(Error::domain(format!(
            "reflection of length {} does not match a {}×{} matrix",
            v.extended().len(),
            r.nrows(),
            r.ncols()
        )));
    }
    Ok(())
}

/// `v^H R v / P`.
pub fn objective(v: &ReflectionVector, r: &CMatrix, power: f64) -> Result<f64> {
    check_dims(v, r)?;
    if !(power > 0.0) {
        return Err(Error::domain("transmit power must be positive"));
    }
    let q = quad_form(r, v.extended());
    if q.im.abs() > 1e-10 * q.re.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Invariant(format!("quadratic form is not real: {q}")));
    }
    Ok(q.re / power)
}

/// Rank of the low-rank factor used for the relaxation.
pub fn relaxation_rank(dim: usize) -> usize {
    ((2 * dim) as f64).sqrt().ceil() as usize
}

/// Maximizes `Tr(R Z Z^H)` over `Z ∈ ℂ^{dim×r}` with unit-norm rows by
/// projected gradient ascent with step `1/(2‖R‖_F)`.
pub fn relax<G: Rng + ?Sized>(r: &CMatrix, iterations: usize, rng: &mut G) -> CMatrix {
    let dim = r.nrows();
    let rank = relaxation_rank(dim);
    let mut z = CMatrix::from_fn(dim, rank, |_, _| complex_normal(rng, 1.0));
    normalize_rows(&mut z);
    let norm = frobenius_norm(r);
    if norm == 0.0 {
        return z;
    }
    for _ in 0..iterations {
        let grad = r * &z;
        z += grad.unscale(norm);
        normalize_rows(&mut z);
    }
    z
}

fn normalize_rows(z: &mut CMatrix) {
    for mut row in z.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row.unscale_mut(n);
        } else {
            row[0] = Complex64::new(1.0, 0.0);
        }
    }
}

/// Rotate so entry 0 has zero phase, then quantize entries `1..` onto the
/// alphabet.
pub fn quantize_candidate(xi: &[Complex64], bits: u32) -> Result<ReflectionVector> {
    let alphabet = crate::measurement::PhaseAlphabet::new(bits)?;
    let rot = if xi[0].norm() > 0.0 { xi[0].conj() / xi[0].norm() } else { Complex64::new(1.0, 0.0) };
    let indices = xi[1..]
        .iter()
        .map(|z| alphabet.quantize((z * rot).arg()) as u32)
        .collect();
    ReflectionVector::from_indices(bits, indices)
}

/// Every distinct quantization of `e^{jθ} ξ` as `θ` sweeps the circle,
/// each rotated so entry 0 is exactly 1. The objective ignores a global phase
/// of a continuous vector, but quantization does not, so each rotation gives a
/// different feasible point. The first element is [`quantize_candidate`].
pub fn rotated_quantizations(xi: &[Complex64], bits: u32) -> Result<Vec<ReflectionVector>> {
    let alphabet = crate::measurement::PhaseAlphabet::new(bits)?;
    let levels = alphabet.levels();
    let step = alphabet.step();
    let mut out = vec![quantize_candidate(xi, bits)?];
    // Rotations at which some entry crosses a decision boundary, modulo one step.
    let mut cuts: Vec<f64> = xi.iter().map(|z| (0.5 * step - z.arg()).rem_euclid(step)).collect();
    cuts.sort_by(f64::total_cmp);
    for k in 0..cuts.len() {
        let next = if k + 1 < cuts.len() { cuts[k + 1] } else { cuts[0] + step };
        if next - cuts[k] < 1e-12 {
            continue;
        }
        let theta = 0.5 * (cuts[k] + next);
        let q: Vec<usize> = xi.iter().map(|z| alphabet.quantize(z.arg() + theta)).collect();
        // Phase (q_i - q_0)·ω is alphabet index (q_i - q_0 - 1) mod 2^μ.
        let indices = q[1..].iter().map(|&qi| ((qi + 2 * levels - q[0] - 1) % levels) as u32).collect();
        let v = ReflectionVector::from_indices(bits, indices)?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Distinct quantized randomization candidates ranked by objective, best
/// first; ties keep draw order.
pub fn randomized_candidates<G: Rng + ?Sized>(
    r: &CMatrix,
    bits: u32,
    num_candidates: usize,
    relax_iterations: usize,
    rng: &mut G,
) -> Result<Vec<(ReflectionVector, f64)>> {
    if r.nrows() < 2 || r.nrows() != r.ncols() {
        return Err(Error::domain("matrix must be square with at least one IRS element"));
    }
    let z = relax(r, relax_iterations, rng);
    let draws: Vec<Vec<Complex64>> = (0..num_candidates.max(1))
        .map(|_| {
            let g: Vec<Complex64> = (0..z.ncols()).map(|_| complex_normal(rng, 1.0)).collect();
            (0..z.nrows())
                .map(|i| (0..z.ncols()).map(|c| z[(i, c)] * g[c]).sum())
                .collect()
        })
        .collect();
    let scored = draws
        .par_iter()
        .map(|xi| {
            rotated_quantizations(xi, bits)?
                .into_iter()
                .map(|v| {
                    let f = quad_form(r, v.extended()).re;
                    Ok((v, f))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen = HashSet::new();
    let mut scored: Vec<_> = scored.into_iter().flatten().filter(|(v, _)| seen.insert(v.indices().to_vec())).collect();
    // Stable sort keeps the earliest draw first among equal objectives.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored)
}

pub fn relax_and_randomize<G: Rng + ?Sized>(
    r: &CMatrix,
    bits: u32,
    num_candidates: usize,
    rng: &mut G,
) -> Result<ReflectionVector> {
    let mut c = randomized_candidates(r, bits, num_candidates, OptimizerConfig::default().relax_iterations, rng)?;
    Ok(c.swap_remove(0).0)
}

/// Cyclic per-element exhaustive search over the alphabet, ascending element
/// order, until a full sweep changes nothing or `max_sweeps` is reached.
/// An element is only moved on a strict increase; ties among the other
/// phases go to the smallest index.
pub fn successive_refine(
    v0: &ReflectionVector,
    r: &CMatrix,
    power: f64,
    max_sweeps: usize,
) -> Result<OptimizationResult> {
    check_dims(v0, r)?;
    let levels = v0.alphabet().levels();
    let phasors: Vec<Complex64> = (0..levels).map(|i| v0.alphabet().phasor(i)).collect();
    let mut v = v0.clone();
    let mut f = quad_form(r, v.extended()).re;
    let mut trajectory = vec![f / power];
    let mut sweeps = 0;
    while sweeps < max_sweeps.max(1) {
        sweeps += 1;
        let mut changed = false;
        for n in 0..v.elements() {
            let y = mat_vec(r, v.extended());
            let cur = v.extended()[n + 1];
            let rnn = r[(n + 1, n + 1)].re;
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in phasors.iter().enumerate() {
                let d = p - cur;
                let cand = f + 2.0 * (d.conj() * y[n + 1]).re + d.norm_sqr() * rnn;
                if best.is_none_or(|(_, b)| cand > b) {
                    best = Some((i, cand));
                }
            }
            let (idx, cand) = best.expect("alphabet is non-empty");
            let incumbent = v.indices()[n] as usize;
            if idx != incumbent && cand > f + 1e-12 * f.abs().max(f64::MIN_POSITIVE) {
                let next = v.with_index(n, idx as u32);
                let fresh = quad_form(r, next.extended()).re;
                if fresh >= f {
                    v = next;
                    f = fresh;
                    trajectory.push(f / power);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(OptimizationResult {
        v_star: v,
        objective: f / power,
        sweeps,
        method: Method::Proposed,
        trajectory,
    })
}

/// Relaxation, randomization and refinement of the `multi_start` best
/// candidates; the best refined result wins (earliest on ties).
pub fn optimize_reflection<G: Rng + ?Sized>(
    r: &CMatrix,
    bits: u32,
    power: f64,
    cfg: &OptimizerConfig,
    rng: &mut G,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let cands = randomized_candidates(r, bits, cfg.num_candidates, cfg.relax_iterations, rng)?;
    let mut best: Option<OptimizationResult> = None;
    for (v, _) in cands.iter().take(cfg.multi_start) {
        let res = successive_refine(v, r, power, cfg.max_sweeps)?;
        if best.as_ref().is_none_or(|b| res.objective > b.objective) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Exhaustive maximum over all `(2^μ)^N` reflections; the first maximizer in
/// lexicographic index order is returned. Intended for small instances.
pub fn exhaustive_optimum(r: &CMatrix, bits: u32, power: f64) -> Result<(ReflectionVector, f64)> {
    let n = r.nrows().saturating_sub(1);
    let levels = 1usize << bits;
    let total = (levels as f64).powi(n as i32);
    if n == 0 || total > 1e8 {
        return Err(Error::domain(format!("exhaustive search over {total} candidates is not supported")));
    }
    let mut idx = vec![0u32; n];
    let mut best = (ReflectionVector::from_indices(bits, idx.clone())?, f64::NEG_INFINITY);
    loop {
        let v = ReflectionVector::from_indices(bits, idx.clone())?;
        let f = objective(&v, r, power)?;
        if f > best.1 {
            best = (v, f);
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            idx[pos] += 1;
            if (idx[pos] as usize) < levels {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Measured reflection with the largest RSRP; lowest index on ties.
pub fn rms_baseline(set: &MeasurementSet) -> Result<ReflectionVector> {
    let mut best: Option<(usize, f64)> = None;
    for (l, m) in set.records().iter().enumerate() {
        if best.is_none_or(|(_, p)| m.rsrp > p) {
            best = Some((l, m.rsrp));
        }
    }
    let (l, _) = best.ok_or_else(|| Error::domain("RMS needs at least one measurement"))?;
    Ok(set.records()[l].reflection.clone())
}

/// Conditional mean RSRP of every `(element, phase)` bin, `[n][ψ]`.
pub fn conditional_means(set: &MeasurementSet) -> Result<Vec<Vec<f64>>> {
    let levels = 1usize << set.bits();
    let mut sum = vec![vec![0.0; levels]; set.elements()];
    let mut count = vec![vec![0usize; levels]; set.elements()];
    for m in set.records() {
        for (n, &i) in m.reflection.indices().iter().enumerate() {
            sum[n][i as usize] += m.rsrp;
            count[n][i as usize] += 1;
        }
    }
    for n in 0..set.elements() {
        if let Some(psi) = count[n].iter().position(|&c| c == 0) {
            return Err(Error::domain(format!(
                "no measurement has element {} at phase index {psi}; more records are needed for this alphabet",
                n + 1
            )));
        }
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| s.into_iter().zip(c).map(|(s, c)| s / c as f64).collect())
        .collect())
}

/// Per element, the phase with the largest conditional mean RSRP; smallest
/// phase on ties.
pub fn csm_baseline(set: &MeasurementSet) -> Result<ReflectionVector> {
    let means = conditional_means(set)?;
    let indices = means
        .iter()
        .map(|row| {
            let mut best = 0;
            for (i, &m) in row.iter().enumerate() {
                if m > row[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect();
    ReflectionVector::from_indices(set.bits(), indices)
}

/// Entry-wise mean of several users' estimates.
pub fn multiuser_average(estimates: &[EstimatedAutocorr]) -> Result<AutocorrMatrix> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::domain("at least one estimate is required"))?;
    let mut acc = CMatrix::zeros(first.dim(), first.dim());
    for e in estimates {
        if e.dim() != first.dim() {
            return Err(Error::domain("estimates have different dimensions"));
        }
        acc += e.entries();
    }
    AutocorrMatrix::from_entries(acc.unscale(estimates.len() as f64), 1.0)
}

/// Result wrapper for the measurement baselines.
pub fn baseline_result(method: Method, v: ReflectionVector, r: &CMatrix, power: f64) -> Result<OptimizationResult> {
    let obj = objective(&v, r, power)?;
    Ok(OptimizationResult {
        v_star: v,
        objective: obj,
        sweeps: 0,
        method,
        trajectory: vec![obj],
    })
}
