//! Frequency-selective IRS channel generation and the exact quantities
//! derived from one realization: the CIR matrix `G`, the CFR `F_M G v` and the
//! autocorrelation matrix `R = (P/M) G^H G`.

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, hermitian_defect, hermitian_eigenvalues, quad_form, CMatrix};
use crate::rng::complex_normal;
use crate::scenario::{LinkBudget, Scenario};
use crate::text::{field, fmt_f64, write_meta, Document};
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Direct,
    BsIrs,
    IrsUser,
}

/// Distance-dependent path loss in dB.
pub fn path_loss_db(link: Link, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::domain(format!("distance must be positive, got {distance_m}")));
    }
    let lg = distance_m.log10();
    Ok(match link {
        Link::Direct => 33.0 + 37.0 * lg,
        Link::BsIrs | Link::IrsUser => 30.0 + 20.0 * lg,
    })
}

/// Exponentially decaying power-delay profile normalized to unit sum.
pub fn power_delay_profile(taps: usize, epsilon: f64) -> Result<Vec<f64>> {
    if taps == 0 {
        return Err(Error::domain("power delay profile needs at least one tap"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::domain(format!("decay factor must be >= 0, got {epsilon}")));
    }
    let raw: Vec<f64> = (0..taps).map(|k| (-epsilon * k as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|x| x / total).collect())
}

/// Linear convolution.
pub fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Unnormalized forward DFT, entry `exp(−j2πmk/M)`.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if buf.is_empty() {
        return buf;
    }
    let fft = FftPlanner::new().plan_fft_forward(buf.len());
    fft.process(&mut buf);
    buf
}

/// Tap vectors of one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    direct: Vec<Complex64>,
    bs_irs: Vec<Vec<Complex64>>,
    irs_user: Vec<Vec<Complex64>>,
    cascaded: Vec<Vec<Complex64>>,
}

impl ChannelRealization {
    /// Builds a realization and derives the cascaded taps `q_n * b_n`.
    pub fn new(
        direct: Vec<Complex64>,
        bs_irs: Vec<Vec<Complex64>>,
        irs_user: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        if direct.is_empty() {
            return Err(Error::domain("direct link needs at least one tap"));
        }
        if bs_irs.len() != irs_user.len() || bs_irs.is_empty() {
            return Err(Error::domain(format!(
                "element count mismatch: {} BS-IRS vs {} IRS-user",
                bs_irs.len(),
                irs_user.len()
            )));
        }
        let k2 = bs_irs[0].len();
        let k3 = irs_user[0].len();
        if k2 == 0 || k3 == 0 {
            return Err(Error::domain("IRS links need at least one tap"));
        }
        if bs_irs.iter().any(|q| q.len() != k2) || irs_user.iter().any(|b| b.len() != k3) {
            return Err(Error::domain("tap counts must agree across elements"));
        }
        let cascaded = bs_irs.iter().zip(&irs_user).map(|(q, b)| convolve(q, b)).collect();
        Ok(ChannelRealization {
            direct,
            bs_irs,
            irs_user,
            cascaded,
        })
    }

    pub fn elements(&self) -> usize {
        self.bs_irs.len()
    }

    pub fn direct(&self) -> &[Complex64] {
        &self.direct
    }

    pub fn bs_irs(&self) -> &[Vec<Complex64>] {
        &self.bs_irs
    }

    pub fn irs_user(&self) -> &[Vec<Complex64>] {
        &self.irs_user
    }

    pub fn cascaded(&self) -> &[Vec<Complex64>] {
        &self.cascaded
    }

    pub fn direct_taps(&self) -> usize {
        self.direct.len()
    }

    pub fn cascaded_taps(&self) -> usize {
        self.cascaded[0].len()
    }

    /// Columnar dump: blocks `# link = <name>` followed by rows
    /// `tap element re im`. The cascaded block is written for cross-checks and
    /// recomputed on load.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_meta(&mut out, "kind", "channel_realization");
        write_meta(&mut out, "elements", self.elements());
        write_meta(&mut out, "K1", self.direct.len());
        write_meta(&mut out, "K2", self.bs_irs[0].len());
        write_meta(&mut out, "K3", self.irs_user[0].len());
        let _ = writeln!(out, "# columns: link tap element re im");
        let mut block = |name: &str, per_element: &[Vec<Complex64>], offset: usize| {
            for (n, taps) in per_element.iter().enumerate() {
                for (k, z) in taps.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{name} {k} {} {} {}",
                        n + offset,
                        fmt_f64(z.re),
                        fmt_f64(z.im)
                    );
                }
            }
        };
        block("direct", std::slice::from_ref(&self.direct), 0);
        block("bs_irs", &self.bs_irs, 1);
        block("irs_user", &self.irs_user, 1);
        block("cascaded", &self.cascaded, 1);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc = Document::parse(text);
        let n: usize = doc.meta_parse("elements")?;
        let k1: usize = doc.meta_parse("K1")?;
        let k2: usize = doc.meta_parse("K2")?;
        let k3: usize = doc.meta_parse("K3")?;
        let zero = Complex64::new(0.0, 0.0);
        let mut direct = vec![zero; k1];
        let mut bs_irs = vec![vec![zero; k2]; n];
        let mut irs_user = vec![vec![zero; k3]; n];
        for (line, cols) in &doc.rows {
            let tap: usize = field(*line, cols, 1, "tap index")?;
            let el: usize = field(*line, cols, 2, "element index")?;
            let z = Complex64::new(
                field(*line, cols, 3, "real part")?,
                field(*line, cols, 4, "imaginary part")?,
            );
            let slot = match cols[0] {
                "direct" if el == 0 => direct.get_mut(tap),
                "bs_irs" if (1..=n).contains(&el) => bs_irs[el - 1].get_mut(tap),
                "irs_user" if (1..=n).contains(&el) => irs_user[el - 1].get_mut(tap),
                "cascaded" => continue,
                other => {
                    return Err(Error::parse(
                        *line,
                        format!("unexpected link/element `{other}` / {el}"),
                    ))
                }
            };
            *slot.ok_or_else(|| Error::parse(*line, format!("tap {tap} out of range")))? = z;
        }
        ChannelRealization::new(direct, bs_irs, irs_user)
    }
}

/// Statistical description of the three links for one user.
#[derive(Debug, Clone)]
pub struct FadingModel {
    pub budget: LinkBudget,
    pub direct_taps: usize,
    pub bs_irs_taps: usize,
    pub irs_user_taps: usize,
    pub epsilon: f64,
    /// Linear Rician factor; `f64::INFINITY` gives a pure LoS first tap.
    pub kappa: f64,
    /// LoS phasor of the IRS-user first tap, per element.
    pub los: Vec<Complex64>,
}

impl FadingModel {
    pub fn from_scenario(scenario: &Scenario, user_index: usize) -> Result<Self> {
        scenario.validate()?;
        Ok(FadingModel {
            budget: scenario.link_budget(user_index)?,
            direct_taps: scenario.direct_taps,
            bs_irs_taps: scenario.bs_irs_taps,
            irs_user_taps: scenario.irs_user_taps,
            epsilon: scenario.epsilon,
            kappa: scenario.kappa(),
            los: scenario.los_phasors(user_index)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelRealization> {
        let pdp1 = power_delay_profile(self.direct_taps, self.epsilon)?;
        let pdp2 = power_delay_profile(self.bs_irs_taps, self.epsilon)?;
        let pdp3 = power_delay_profile(self.irs_user_taps, self.epsilon)?;
        let g1 = 10f64.powf(-self.budget.direct_db / 10.0);
        let g2 = 10f64.powf(-self.budget.bs_irs_db / 10.0);
        let g3 = 10f64.powf(-self.budget.irs_user_db / 10.0);
        let (los_amp, nlos_amp) = if self.kappa.is_infinite() {
            (1.0, 0.0)
        } else {
            (
                (self.kappa / (self.kappa + 1.0)).sqrt(),
                (1.0 / (self.kappa + 1.0)).sqrt(),
            )
        };

        let direct = pdp1.iter().map(|&z| complex_normal(rng, g1 * z)).collect();
        let mut bs_irs = Vec::with_capacity(self.los.len());
        let mut irs_user = Vec::with_capacity(self.los.len());
        for los in &self.los {
            bs_irs.push(pdp2.iter().map(|&z| complex_normal(rng, g2 * z)).collect());
            let b = pdp3
                .iter()
                .enumerate()
                .map(|(k, &z)| {
                    let scale = (g3 * z).sqrt();
                    if k == 0 {
                        scale * (los_amp * los + nlos_amp * complex_normal(rng, 1.0))
                    } else {
                        scale * complex_normal(rng, 1.0)
                    }
                })
                .collect();
            irs_user.push(b);
        }
        ChannelRealization::new(direct, bs_irs, irs_user)
    }
}

/// Draws one realization for `user_index` of `scenario`.
pub fn sample_channel<R: Rng + ?Sized>(
    scenario: &Scenario,
    user_index: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    FadingModel::from_scenario(scenario, user_index)?.sample(rng)
}

/// The zero-padded `M × (N+1)` matrix `G = [f, g_1, ..., g_N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CirMatrix {
    entries: CMatrix,
    support: usize,
}

impl CirMatrix {
    pub fn build(realization: &ChannelRealization, subcarriers: usize) -> Result<Self> {
        let k1 = realization.direct_taps();
        let kr = realization.cascaded_taps();
        let support = k1.max(kr);
        if subcarriers < support {
            return Err(Error::domain(format!(
                "M = {subcarriers} is smaller than the channel support {support}"
            )));
        }
        let n = realization.elements();
        let mut g = CMatrix::zeros(subcarriers, n + 1);
        for (k, z) in realization.direct().iter().enumerate() {
            g[(k, 0)] = *z;
        }
        for (col, taps) in realization.cascaded().iter().enumerate() {
            for (k, z) in taps.iter().enumerate() {
                g[(k, col + 1)] = *z;
            }
        }
        Ok(CirMatrix { entries: g, support })
    }

    /// Wraps an arbitrary matrix; the support is the index past the last
    /// nonzero row.
    pub fn from_matrix(entries: CMatrix) -> Self {
        let support = (0..entries.nrows())
            .rev()
            .find(|&r| entries.row(r).iter().any(|z| *z != Complex64::new(0.0, 0.0)))
            .map_or(0, |r| r + 1);
        CirMatrix { entries, support }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn subcarriers(&self) -> usize {
        self.entries.nrows()
    }

    /// `N + 1`.
    pub fn columns(&self) -> usize {
        self.entries.ncols()
    }

    /// `K`, the number of leading rows that may be nonzero.
    pub fn support(&self) -> usize {
        self.support
    }

    /// Superimposed CIR `G v`.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        crate::linalg::mat_vec(&self.entries, v)
    }

    /// Same channel with every IRS column zeroed (the no-IRS reference).
    pub fn without_irs(&self) -> CirMatrix {
        let mut g = self.entries.clone();
        for c in 1..g.ncols() {
            g.column_mut(c).fill(Complex64::new(0.0, 0.0));
        }
        CirMatrix::from_matrix(g)
    }
}

pub(crate) fn check_reflection(v: &[Complex64], columns: usize) -> Result<()> {
    if v.len() != columns {
        return Err(Error::domain(format!(
            "reflection length {} does not match N+1 = {columns}",
            v.len()
        )));
    }
    if (v[0] - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
        return Err(Error::domain(format!("leading entry must be 1, got {}", v[0])));
    }
    if let Some((i, z)) = v.iter().enumerate().find(|(_, z)| (z.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::domain(format!("|v[{i}]| = {} is not unit modulus", z.norm())));
    }
    Ok(())
}

/// Channel frequency response `F_M G v`.
pub fn cfr(cir: &CirMatrix, v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_reflection(v, cir.columns())?;
    Ok(dft(&cir.apply(v)))
}

/// Hermitian PSD `(N+1) × (N+1)` autocorrelation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrMatrix {
    entries: CMatrix,
    power_scale: f64,
}

impl AutocorrMatrix {
    /// Validates Hermitian symmetry and positive semi-definiteness.
    pub fn from_entries(entries: CMatrix, power_scale: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::domain("autocorrelation matrix must be square and non-empty"));
        }
        let norm = frobenius_norm(&entries);
        if hermitian_defect(&entries) > 1e-12 * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Invariant("matrix is not Hermitian".into()));
        }
        let trace: f64 = (0..entries.nrows()).map(|i| entries[(i, i)].re).sum();
        let min_eig = hermitian_eigenvalues(&entries)[0];
        if min_eig < -1e-10 * trace.abs().max(norm) {
            return Err(Error::Invariant(format!(
                "matrix is not PSD: minimum eigenvalue {min_eig:e}"
            )));
        }
        Ok(AutocorrMatrix {
            entries,
            power_scale,
        })
    }

    pub(crate) fn new_unchecked(entries: CMatrix, power_scale: f64) -> Self {
        AutocorrMatrix {
            entries,
            power_scale,
        }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// The factor `P/M` baked into the matrix (1 when unknown).
    pub fn power_scale(&self) -> f64 {
        self.power_scale
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Real part of `v^H R v`.
    pub fn quad_form(&self, v: &[Complex64]) -> f64 {
        quad_form(&self.entries, v).re
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).sum()
    }

    /// Dense dump, one `row col re im` line per entry.
    pub fn to_text(&self) -> String {
        matrix_to_text(&self.entries, "autocorrelation", self.power_scale)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (m, scale) = matrix_from_text(text)?;
        AutocorrMatrix::from_entries(m, scale)
    }
}

pub(crate) fn matrix_to_text(m: &CMatrix, kind: &str, power_scale: f64) -> String {
    let mut out = String::new();
    write_meta(&mut out, "kind", kind);
    write_meta(&mut out, "dim", m.nrows());
    write_meta(&mut out, "power_scale", fmt_f64(power_scale));
    let _ = writeln!(out, "# columns: row col re im");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            let _ = writeln!(out, "{r} {c} {} {}", fmt_f64(z.re), fmt_f64(z.im));
        }
    }
    out
}

pub(crate) fn matrix_from_text(text: &str) -> Result<(CMatrix, f64)> {
    let doc = Document::parse(text);
    let dim: usize = doc.meta_parse("dim")?;
    let scale: f64 = doc.meta_parse("power_scale").unwrap_or(1.0);
    let mut m = CMatrix::zeros(dim, dim);
    let mut seen = vec![false; dim * dim];
    for (line, cols) in &doc.rows {
        if cols.len() != 4 {
            return Err(Error::parse(*line, format!("expected 4 columns, got {}", cols.len())));
        }
        let r: usize = field(*line, cols, 0, "row")?;
        let c: usize = field(*line, cols, 1, "col")?;
        if r >= dim || c >= dim {
            return Err(Error::parse(*line, format!("index ({r},{c}) outside {dim}×{dim}")));
        }
        m[(r, c)] = Complex64::new(
            field(*line, cols, 2, "real part")?,
            field(*line, cols, 3, "imaginary part")?,
        );
        seen[r * dim + c] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::parse(0, format!("entry ({},{}) missing", i / dim, i % dim)));
    }
    Ok((m, scale))
}

/// `R = (P/M) G^H G`.
pub fn autocorrelation(cir: &CirMatrix, tx_power: f64) -> AutocorrMatrix {
    let scale = tx_power / cir.subcarriers() as f64;
    let g = cir.entries();
    let gram = g.adjoint() * g;
    // Exact symmetrization removes O(ε) round-off asymmetry.
    let sym = (&gram + gram.adjoint()).scale(0.5 * scale);
    AutocorrMatrix::new_unchecked(sym, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::numerical_rank;
    use crate::rng::SeedTree;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let m = x.len();
        (0..m)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(n, v)| {
                        v * Complex64::from_polar(
                            1.0,
                            -2.0 * std::f64::consts::PI * (k * n) as f64 / m as f64,
                        )
                    })
                    .sum()
            })
            .collect()
    }

    fn random_unit(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU))
            .collect();
        v[0] = c(1.0, 0.0);
        v
    }

    fn small_realization(rng: &mut impl Rng, n: usize, k1: usize, k2: usize, k3: usize) -> ChannelRealization {
        let d = (0..k1).map(|_| complex_normal(rng, 1.0)).collect();
        let q = (0..n).map(|_| (0..k2).map(|_| complex_normal(rng, 1.0)).collect()).collect();
        let b = (0..n).map(|_| (0..k3).map(|_| complex_normal(rng, 1.0)).collect()).collect();
        ChannelRealization::new(d, q, b).unwrap()
    }

    #[test]
    fn path_loss_closed_form() {
        assert!((path_loss_db(Link::Direct, 10.0).unwrap() - 70.0).abs() < 1e-12);
        assert!((path_loss_db(Link::BsIrs, 1.0).unwrap() - 30.0).abs() < 1e-12);
        assert!((path_loss_db(Link::IrsUser, 100.0).unwrap() - 70.0).abs() < 1e-12);
        assert!(path_loss_db(Link::Direct, 0.0).is_err());
        assert!(path_loss_db(Link::Direct, -1.0).is_err());
    }

    #[test]
    fn delay_profile_examples() {
        assert_eq!(power_delay_profile(1, 2.0).unwrap(), vec![1.0]);
        assert_eq!(power_delay_profile(4, 0.0).unwrap(), vec![0.25; 4]);
        let p = power_delay_profile(2, 2.0).unwrap();
        let e = (-2.0f64).exp();
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.8808).abs() < 1e-4 && (p[1] - 0.1192).abs() < 1e-4);
        assert!(power_delay_profile(0, 1.0).is_err());
        let p = power_delay_profile(6, 0.7).unwrap();
        assert!(p.windows(2).all(|w| w[0] > w[1]));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cascade_is_convolution_in_frequency() {
        let mut rng = SeedTree::new(3).stream("conv", 0);
        let r = small_realization(&mut rng, 5, 2, 4, 3);
        let kr = r.cascaded_taps();
        assert_eq!(kr, 6);
        for n in 0..5 {
            let pad = |x: &[Complex64]| {
                let mut y = x.to_vec();
                y.resize(kr, c(0.0, 0.0));
                y
            };
            let lhs = dft(&r.cascaded()[n]);
            let q = dft(&pad(&r.bs_irs()[n]));
            let b = dft(&pad(&r.irs_user()[n]));
            for k in 0..kr {
                let rhs = q[k] * b[k];
                assert!((lhs[k] - rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
            }
        }
    }

    #[test]
    fn pure_los_irs_user_tap_is_deterministic() {
        let scenario = Scenario {
            irs_user_taps: 1,
            kappa_db: 400.0,
            ..Scenario::default()
        };
        let tree = SeedTree::new(9);
        let a = sample_channel(&scenario, 0, &mut tree.stream("c", 0)).unwrap();
        let b = sample_channel(&scenario, 0, &mut tree.stream("c", 1)).unwrap();
        let g3 = 10f64.powf(-scenario.link_budget(0).unwrap().irs_user_db / 10.0).sqrt();
        let los = scenario.los_phasors(0).unwrap();
        for n in 0..scenario.elements {
            assert!((a.irs_user()[n][0] - b.irs_user()[n][0]).norm() < 1e-12 * g3);
            assert!((a.irs_user()[n][0] - g3 * los[n]).norm() < 1e-12 * g3);
        }
    }

    #[test]
    fn per_tap_second_moments_match_budget() {
        let scenario = Scenario {
            elements: 2,
            array_rows: 1,
            array_cols: 2,
            ..Scenario::default()
        };
        let model = FadingModel::from_scenario(&scenario, 0).unwrap();
        let draws = 10_000;
        let mut rng = SeedTree::new(11).stream("moments", 0);
        let mut direct = vec![0.0; scenario.direct_taps];
        let mut bs_irs = vec![0.0; scenario.bs_irs_taps];
        let mut irs_user = vec![0.0; scenario.irs_user_taps];
        for _ in 0..draws {
            let r = model.sample(&mut rng).unwrap();
            for (acc, z) in direct.iter_mut().zip(r.direct()) {
                *acc += z.norm_sqr() / draws as f64;
            }
            for (acc, z) in bs_irs.iter_mut().zip(&r.bs_irs()[0]) {
                *acc += z.norm_sqr() / draws as f64;
            }
            for (acc, z) in irs_user.iter_mut().zip(&r.irs_user()[0]) {
                *acc += z.norm_sqr() / draws as f64;
            }
        }
        let b = model.budget;
        let check = |emp: &[f64], db: f64, taps: usize| {
            let pdp = power_delay_profile(taps, scenario.epsilon).unwrap();
            for (e, z) in emp.iter().zip(&pdp) {
                let expect = 10f64.powf(-db / 10.0) * z;
                assert!((e / expect - 1.0).abs() < 0.05, "{e} vs {expect}");
            }
        };
        check(&direct, b.direct_db, scenario.direct_taps);
        check(&bs_irs, b.bs_irs_db, scenario.bs_irs_taps);
        // Rician first tap: |LoS|² = 1, so the second moment is unchanged.
        check(&irs_user, b.irs_user_db, scenario.irs_user_taps);
    }

    #[test]
    fn unit_budget_gives_unit_link_energy() {
        let scenario = Scenario {
            epsilon: 0.0,
            ..Scenario::default()
        };
        let mut model = FadingModel::from_scenario(&scenario, 0).unwrap();
        model.budget = LinkBudget::unity();
        let mut rng = SeedTree::new(5).stream("energy", 0);
        let draws = 2000;
        let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let r = model.sample(&mut rng).unwrap();
            e1 += r.direct().iter().map(|z| z.norm_sqr()).sum::<f64>();
            e2 += r.bs_irs().iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / 32.0;
            e3 += r.irs_user().iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / 32.0;
        }
        for e in [e1, e2, e3] {
            assert!((e / draws as f64 - 1.0).abs() < 0.05, "{}", e / draws as f64);
        }
    }

    #[test]
    fn single_tap_cir_has_one_nonzero_row() {
        let r = ChannelRealization::new(
            vec![c(1.0, 0.5)],
            vec![vec![c(0.3, -0.2)]],
            vec![vec![c(2.0, 1.0)]],
        )
        .unwrap();
        let g = CirMatrix::build(&r, 4).unwrap();
        assert_eq!(g.entries().shape(), (4, 2));
        for row in 1..4 {
            assert!(g.entries().row(row).iter().all(|z| z.norm() == 0.0));
        }
        assert!(g.entries().row(0).iter().all(|z| z.norm() > 0.0));
        assert!(CirMatrix::build(&r, 0).is_err());
    }

    #[test]
    fn cir_matrix_padding_and_superposition() {
        let mut rng = SeedTree::new(8).stream("cir", 0);
        let r = small_realization(&mut rng, 6, 4, 4, 3);
        let g = CirMatrix::build(&r, 16).unwrap();
        assert_eq!(g.support(), 6);
        for row in 6..16 {
            assert!(g.entries().row(row).iter().all(|z| z.norm() == 0.0));
        }
        for row in 4..16 {
            assert_eq!(g.entries()[(row, 0)], c(0.0, 0.0));
        }

        let mut e0 = vec![c(0.0, 0.0); 7];
        e0[0] = c(1.0, 0.0);
        let direct = g.apply(&e0);
        for k in 0..16 {
            let expect = r.direct().get(k).copied().unwrap_or_default();
            assert_eq!(direct[k], expect);
        }

        let v = random_unit(&mut rng, 7);
        let gv = g.apply(&v);
        for k in 0..16 {
            let mut expect = r.direct().get(k).copied().unwrap_or_default();
            for n in 0..6 {
                expect += v[n + 1] * r.cascaded()[n].get(k).copied().unwrap_or_default();
            }
            assert!((gv[k] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn cfr_of_impulse_and_parseval() {
        let mut g = CMatrix::zeros(8, 2);
        g[(0, 0)] = c(1.0, 0.0);
        let cir = CirMatrix::from_matrix(g);
        let h = cfr(&cir, &[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        assert!(h.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-14));

        let mut rng = SeedTree::new(2).stream("cfr", 0);
        let r = small_realization(&mut rng, 4, 4, 2, 2);
        let cir = CirMatrix::build(&r, 32).unwrap();
        let v = random_unit(&mut rng, 5);
        let h = cfr(&cir, &v).unwrap();
        let gv = cir.apply(&v);
        let e_h: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        let e_t: f64 = gv.iter().map(|z| z.norm_sqr()).sum();
        assert!((e_h - 32.0 * e_t).abs() < 1e-10 * e_h);

        let naive = naive_dft(&gv);
        let scale = e_h.sqrt();
        for (a, b) in h.iter().zip(&naive) {
            assert!((a - b).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn cfr_rejects_non_unit_modulus() {
        let cir = CirMatrix::from_matrix(CMatrix::zeros(4, 3));
        assert!(cfr(&cir, &[c(1.0, 0.0), c(0.5, 0.0), c(1.0, 0.0)]).is_err());
        assert!(cfr(&cir, &[c(1.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn autocorrelation_examples() {
        let zero = CirMatrix::from_matrix(CMatrix::zeros(8, 3));
        let r0 = autocorrelation(&zero, 1.0);
        assert!(r0.entries().iter().all(|z| z.norm() == 0.0));

        let mut rng = SeedTree::new(4).stream("r", 0);
        let single = small_realization(&mut rng, 5, 1, 1, 1);
        let r1 = autocorrelation(&CirMatrix::build(&single, 8).unwrap(), 2.0);
        assert_eq!(numerical_rank(r1.entries(), 1e-10), 1);

        let real = small_realization(&mut rng, 8, 4, 4, 3);
        let cir = CirMatrix::build(&real, 64).unwrap();
        let p = 3.0;
        let r = autocorrelation(&cir, p);
        assert!(hermitian_defect(r.entries()) <= 1e-12 * frobenius_norm(r.entries()));
        assert!(numerical_rank(r.entries(), 1e-10) <= 6);
        for _ in 0..100 {
            let v = random_unit(&mut rng, 9);
            let gv: f64 = cir.apply(&v).iter().map(|z| z.norm_sqr()).sum();
            let expect = p / 64.0 * gv;
            assert!((r.quad_form(&v) - expect).abs() <= 1e-10 * expect);
        }
    }

    #[test]
    fn arsp_identity_by_symbol_averaging() {
        // (1/M) E‖X F G v‖² = v^H R v for unit-modulus symbols with E‖x‖² = P.
        let mut rng = SeedTree::new(21).stream("arsp", 0);
        let real = small_realization(&mut rng, 4, 3, 2, 2);
        let m = 16;
        let p = 2.0;
        let cir = CirMatrix::build(&real, m).unwrap();
        let r = autocorrelation(&cir, p);
        let v = random_unit(&mut rng, 5);
        let h = cfr(&cir, &v).unwrap();
        let draws = 10_000;
        let amp = (p / m as f64).sqrt();
        let mut acc = 0.0;
        for _ in 0..draws {
            acc += h
                .iter()
                .map(|hm| {
                    let x = Complex64::from_polar(amp, rng.random::<f64>() * std::f64::consts::TAU);
                    (x * hm).norm_sqr()
                })
                .sum::<f64>()
                / m as f64;
        }
        let emp = acc / draws as f64;
        let exact = r.quad_form(&v);
        assert!((emp / exact - 1.0).abs() < 0.02, "{emp} vs {exact}");
    }

    #[test]
    fn dumps_round_trip() {
        let mut rng = SeedTree::new(6).stream("dump", 0);
        let real = small_realization(&mut rng, 3, 2, 2, 2);
        let back = ChannelRealization::from_text(&real.to_text()).unwrap();
        assert_eq!(back, real);

        let r = autocorrelation(&CirMatrix::build(&real, 8).unwrap(), 1.0);
        let back = AutocorrMatrix::from_text(&r.to_text()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn non_psd_matrix_rejected() {
        let mut m = CMatrix::identity(2, 2);
        m[(1, 1)] = c(-1.0, 0.0);
        assert!(matches!(AutocorrMatrix::from_entries(m, 1.0), Err(Error::Invariant(_))));
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = c(0.0, 0.5);
        assert!(matches!(AutocorrMatrix::from_entries(m, 1.0), Err(Error::Invariant(_))));
    }
}
