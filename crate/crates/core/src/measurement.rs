//! Random discrete training reflections and RSRP measurements.

use crate::channel::{cfr, AutocorrMatrix, CirMatrix};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rng::complex_normal;
use crate::text::{field, fmt_f64, write_meta, Document};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write;

/// The discrete phase set `{ω, 2ω, ..., 2^μ ω}` with `ω = 2π / 2^μ`.
///
/// Phase index `i ∈ 0..2^μ` denotes the phase `(i+1)·ω`, so index 0 is the
/// smallest phase `ω` and the last index is `2π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseAlphabet {
    bits: u32,
}

fn snap(x: f64) -> f64 {
    if x.abs() < 1e-15 {
        0.0
    } else if (x.abs() - 1.0).abs() < 1e-15 {
        x.signum()
    } else {
        x
    }
}

impl PhaseAlphabet {
    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::domain(format!("phase bits must be in 1..=16, got {bits}")));
        }
        Ok(PhaseAlphabet { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> usize {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.levels() as f64
    }

    pub fn phase(&self, index: usize) -> f64 {
        (index + 1) as f64 * self.step()
    }

    /// `e^{jθ}` with components snapped to exact 0/±1 where they are within
    /// round-off of them.
    pub fn phasor(&self, index: usize) -> Complex64 {
        let z = Complex64::from_polar(1.0, self.phase(index));
        Complex64::new(snap(z.re), snap(z.im))
    }

    /// Index of the alphabet phase circularly nearest to `angle`; ties go to
    /// the smaller phase.
    pub fn quantize(&self, angle: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.levels() {
            let d = (angle - self.phase(i)).rem_euclid(2.0 * PI);
            let d = d.min(2.0 * PI - d);
            if d < best_d - 1e-12 {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Extended reflection vector `[1, e^{jθ_1}, ..., e^{jθ_N}]` with every
/// `θ_n` in the phase alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionVector {
    alphabet: PhaseAlphabet,
    indices: Vec<u32>,
    extended: Vec<Complex64>,
}

impl ReflectionVector {
    pub fn from_indices(bits: u32, indices: Vec<u32>) -> Result<Self> {
        let alphabet = PhaseAlphabet::new(bits)?;
        if indices.is_empty() {
            return Err(Error::domain("a reflection needs at least one element"));
        }
        if let Some(bad) = indices.iter().find(|&&i| i as usize >= alphabet.levels()) {
            return Err(Error::domain(format!(
                "phase index {bad} outside 0..{}",
                alphabet.levels()
            )));
        }
        let mut extended = Vec::with_capacity(indices.len() + 1);
        extended.push(Complex64::new(1.0, 0.0));
        extended.extend(indices.iter().map(|&i| alphabet.phasor(i as usize)));
        Ok(ReflectionVector {
            alphabet,
            indices,
            extended,
        })
    }

    /// Every element at the same phase index.
    pub fn uniform(elements: usize, bits: u32, index: u32) -> Result<Self> {
        Self::from_indices(bits, vec![index; elements])
    }

    pub fn alphabet(&self) -> PhaseAlphabet {
        self.alphabet
    }

    pub fn elements(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn phases(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| self.alphabet.phase(i as usize)).collect()
    }

    /// Length `N + 1`, leading entry exactly 1.
    pub fn extended(&self) -> &[Complex64] {
        &self.extended
    }

    /// Real-valued input `u = [Re(v); Im(v)]` of length `2N + 2`.
    pub fn real_input(&self) -> Vec<f64> {
        self.extended
            .iter()
            .map(|z| z.re)
            .chain(self.extended.iter().map(|z| z.im))
            .collect()
    }

    /// Copy with element `n` (0-based, excluding the leading entry) set to
    /// phase index `index`.
    pub fn with_index(&self, n: usize, index: u32) -> Self {
        let mut out = self.clone();
        out.indices[n] = index;
        out.extended[n + 1] = self.alphabet.phasor(index as usize);
        out
    }
}

/// Draws `N` phases independently and uniformly from the alphabet.
pub fn random_reflection<R: Rng + ?Sized>(
    elements: usize,
    bits: u32,
    rng: &mut R,
) -> Result<ReflectionVector> {
    let levels = PhaseAlphabet::new(bits)?.levels() as u32;
    let indices = (0..elements).map(|_| rng.random_range(0..levels)).collect();
    ReflectionVector::from_indices(bits, indices)
}

/// Uniformly spaced reference-signal subcarriers starting at subcarrier 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsPattern {
    subcarriers: usize,
    pilots: usize,
    symbols: usize,
}

impl RsPattern {
    pub fn new(subcarriers: usize, pilots: usize, symbols: usize) -> Result<Self> {
        if pilots == 0 || pilots > subcarriers || subcarriers % pilots != 0 {
            return Err(Error::domain(format!(
                "M0 = {pilots} must divide M = {subcarriers}"
            )));
        }
        if symbols == 0 {
            return Err(Error::domain("Q must be at least 1"));
        }
        Ok(RsPattern {
            subcarriers,
            pilots,
            symbols,
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    /// `M0`.
    pub fn pilots(&self) -> usize {
        self.pilots
    }

    /// `Q`.
    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        let step = self.subcarriers / self.pilots;
        (0..self.pilots).map(move |i| i * step)
    }
}

/// Rows of the unnormalized `M`-point DFT matrix at the RS subcarriers.
pub fn partial_dft(subcarriers: usize, pilots: usize) -> Result<CMatrix> {
    let pattern = RsPattern::new(subcarriers, pilots, 1)?;
    let rows: Vec<usize> = pattern.indices().collect();
    Ok(CMatrix::from_fn(pilots, subcarriers, |i, k| {
        let e = (rows[i] * k) % subcarriers;
        Complex64::from_polar(1.0, -2.0 * PI * e as f64 / subcarriers as f64)
    }))
}

/// Noise-free expectation `v^H R v + σ²`; equal to the full-band ARSP and,
/// when `M0 ≥ K`, to the RS-subset power.
pub fn rsrp_exact(v: &ReflectionVector, autocorr: &AutocorrMatrix, sigma2: f64) -> Result<f64> {
    if v.extended().len() != autocorr.dim() {
        return Err(Error::domain(format!(
            "reflection has {} entries, R is {}×{}",
            v.extended().len(),
            autocorr.dim(),
            autocorr.dim()
        )));
    }
    let q = autocorr.quad_form(v.extended());
    let scale = autocorr.trace().abs() * v.extended().len() as f64;
    if q < -1e-9 * scale {
        return Err(Error::Invariant(format!(
            "v^H R v = {q:e} is negative; R is not PSD"
        )));
    }
    Ok(q.max(0.0) + sigma2)
}

/// Expected RS-subset power `(P/(M0·M))·‖F̄ G v‖² + σ²` computed through the
/// partial DFT matrix.
pub fn subset_arsp(
    v: &ReflectionVector,
    cir: &CirMatrix,
    pattern: &RsPattern,
    tx_power: f64,
    sigma2: f64,
) -> Result<f64> {
    let f = partial_dft(cir.subcarriers(), pattern.pilots())?;
    let gv = nalgebra::DVector::from_vec(cir.apply(v.extended()));
    let h = f * gv;
    let e: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    let m = cir.subcarriers() as f64;
    Ok(tx_power / (pattern.pilots() as f64 * m) * e + sigma2)
}

/// One simulated RSRP report: average of `|x_m h_m + z_m(q)|²` over the RS
/// subcarriers and `Q` symbols, fresh unit-modulus RS symbols of power `P/M`
/// per symbol and fresh noise per resource element.
pub fn rsrp_sampled<R: Rng + ?Sized>(
    v: &ReflectionVector,
    cir: &CirMatrix,
    pattern: &RsPattern,
    tx_power: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<f64> {
    if pattern.subcarriers() != cir.subcarriers() {
        return Err(Error::domain(format!(
            "RS pattern for M = {} applied to a channel with M = {}",
            pattern.subcarriers(),
            cir.subcarriers()
        )));
    }
    let h = cfr(cir, v.extended())?;
    let amp = (tx_power / cir.subcarriers() as f64).sqrt();
    let mut acc = 0.0;
    for _ in 0..pattern.symbols() {
        for m in pattern.indices() {
            let x = Complex64::from_polar(amp, rng.random::<f64>() * 2.0 * PI);
            let z = if sigma2 > 0.0 {
                complex_normal(rng, sigma2)
            } else {
                Complex64::new(0.0, 0.0)
            };
            acc += (x * h[m] + z).norm_sqr();
        }
    }
    Ok(acc / (pattern.symbols() * pattern.pilots()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementMode {
    /// `v^H R v + σ²`, no measurement noise.
    Exact,
    /// Simulated RS symbols and receiver noise.
    Sampled,
}

impl std::str::FromStr for MeasurementMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MeasurementMode::Exact),
            "sampled" => Ok(MeasurementMode::Sampled),
            other => Err(Error::domain(format!("unknown measurement mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for MeasurementMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeasurementMode::Exact => "exact",
            MeasurementMode::Sampled => "sampled",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub reflection: ReflectionVector,
    /// Watts.
    pub rsrp: f64,
}

/// Training labels: reflections and their RSRP values.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    bits: u32,
    elements: usize,
    sigma2: f64,
    mode: MeasurementMode,
    records: Vec<Measurement>,
}

impl MeasurementSet {
    pub fn new(sigma2: f64, mode: MeasurementMode, records: Vec<Measurement>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::domain("a measurement set needs at least one record"))?;
        let bits = first.reflection.alphabet().bits();
        let elements = first.reflection.elements();
        for (l, r) in records.iter().enumerate() {
            if r.reflection.elements() != elements || r.reflection.alphabet().bits() != bits {
                return Err(Error::domain(format!("record {l} has a different shape")));
            }
            if !(r.rsrp >= 0.0) || !r.rsrp.is_finite() {
                return Err(Error::domain(format!("record {l} has invalid RSRP {}", r.rsrp)));
            }
        }
        Ok(MeasurementSet {
            bits,
            elements,
            sigma2,
            mode,
            records,
        })
    }

    pub fn records(&self) -> &[Measurement] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn mode(&self) -> MeasurementMode {
        self.mode
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    /// One row per record: `l θ-index_1 ... θ-index_N rsrp`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&mut out);
        out
    }

    pub fn write_text(&self, out: &mut String) {
        write_meta(out, "kind", "measurement_set");
        write_meta(out, "mode", self.mode);
        write_meta(out, "mu", self.bits);
        write_meta(out, "elements", self.elements);
        write_meta(out, "records", self.records.len());
        write_meta(out, "sigma2", fmt_f64(self.sigma2));
        let _ = writeln!(out, "# columns: l phase_index[1..N] rsrp_watts");
        for (l, r) in self.records.iter().enumerate() {
            let _ = write!(out, "{l}");
            for i in r.reflection.indices() {
                let _ = write!(out, " {i}");
            }
            let _ = writeln!(out, " {}", fmt_f64(r.rsrp));
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc = Document::parse(text);
        let bits: u32 = doc.meta_parse("mu")?;
        let elements: usize = doc.meta_parse("elements")?;
        let sigma2: f64 = doc.meta_parse("sigma2")?;
        let mode: MeasurementMode = doc.meta_str("mode")?.parse()?;
        let mut records = Vec::with_capacity(doc.rows.len());
        for (line, cols) in &doc.rows {
            if cols.len() != elements + 2 {
                return Err(Error::parse(
                    *line,
                    format!("expected {} columns, got {}", elements + 2, cols.len()),
                ));
            }
            let l: usize = field(*line, cols, 0, "record index")?;
            if l != records.len() {
                return Err(Error::parse(*line, format!("record index {l} out of sequence")));
            }
            let indices = (1..=elements)
                .map(|c| field::<u32>(*line, cols, c, "phase index"))
                .collect::<Result<Vec<_>>>()?;
            let reflection = ReflectionVector::from_indices(bits, indices)
                .map_err(|e| Error::parse(*line, e.to_string()))?;
            let rsrp: f64 = field(*line, cols, elements + 1, "rsrp")?;
            if !(rsrp >= 0.0) || !rsrp.is_finite() {
                return Err(Error::parse(*line, format!("invalid RSRP {rsrp}")));
            }
            records.push(Measurement { reflection, rsrp });
        }
        if let Ok(n) = doc.meta_parse::<usize>("records") {
            if n != records.len() {
                return Err(Error::parse(0, format!("header says {n} records, found {}", records.len())));
            }
        }
        MeasurementSet::new(sigma2, mode, records)
    }
}

/// Everything a measurement needs to know about the link.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementContext<'a> {
    pub cir: &'a CirMatrix,
    pub autocorr: &'a AutocorrMatrix,
    pub pattern: RsPattern,
    pub tx_power: f64,
    pub sigma2: f64,
}

/// Measures RSRP for given reflections.
pub fn measure<R: Rng + ?Sized>(
    reflections: &[ReflectionVector],
    mode: MeasurementMode,
    ctx: &MeasurementContext<'_>,
    rng: &mut R,
) -> Result<MeasurementSet> {
    let records = reflections
        .iter()
        .map(|v| {
            let rsrp = match mode {
                MeasurementMode::Exact => rsrp_exact(v, ctx.autocorr, ctx.sigma2)?,
                MeasurementMode::Sampled => {
                    rsrp_sampled(v, ctx.cir, &ctx.pattern, ctx.tx_power, ctx.sigma2, rng)?
                }
            };
            Ok(Measurement {
                reflection: v.clone(),
                rsrp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(ctx.sigma2, mode, records)
}

/// Draws `count` random training reflections.
pub fn random_reflections<R: Rng + ?Sized>(
    count: usize,
    elements: usize,
    bits: u32,
    rng: &mut R,
) -> Result<Vec<ReflectionVector>> {
    (0..count).map(|_| random_reflection(elements, bits, rng)).collect()
}

/// `L` random reflections and their RSRP values. Reflections and
/// measurement noise come from separate generators.
pub fn collect_measurements<R: Rng + ?Sized, S: Rng + ?Sized>(
    count: usize,
    mode: MeasurementMode,
    ctx: &MeasurementContext<'_>,
    bits: u32,
    reflection_rng: &mut R,
    noise_rng: &mut S,
) -> Result<MeasurementSet> {
    if count == 0 {
        return Err(Error::domain("L must be at least 1"));
    }
    let elements = ctx.cir.columns() - 1;
    let reflections = random_reflections(count, elements, bits, reflection_rng)?;
    measure(&reflections, mode, ctx, noise_rng)
}
