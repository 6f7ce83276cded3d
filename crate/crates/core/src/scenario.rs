//! Deployment geometry and link parameters of one experiment.

use crate::channel::{path_loss_db, Link};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Point = [f64; 3];

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Keys in serialized form use the conventional symbols (`N`, `M`, `K1`,
/// `P_dbm`, ...). Powers stay in dBm here and are converted by the accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub bs_position: Point,
    pub irs_reference_position: Point,
    pub user_positions: Vec<Point>,
    #[serde(rename = "N")]
    pub elements: usize,
    pub array_rows: usize,
    pub array_cols: usize,
    /// Inter-element spacing in wavelengths.
    pub element_spacing: f64,
    #[serde(rename = "M")]
    pub subcarriers: usize,
    #[serde(rename = "K1")]
    pub direct_taps: usize,
    #[serde(rename = "K2")]
    pub bs_irs_taps: usize,
    #[serde(rename = "K3")]
    pub irs_user_taps: usize,
    pub epsilon: f64,
    pub kappa_db: f64,
    #[serde(rename = "P_dbm")]
    pub tx_power_dbm: f64,
    pub sigma2_dbm: f64,
    #[serde(rename = "mu")]
    pub phase_bits: u32,
    #[serde(rename = "M_cp")]
    pub cp_len: usize,
}

impl Default for Scenario {
    /// The reference deployment: 4×8 IRS at (−2,−1,0) parallel to the y-z
    /// plane, BS at (35,−20,15), user at (0,1,0), 128 subcarriers.
    fn default() -> Self {
        Scenario {
            bs_position: [35.0, -20.0, 15.0],
            irs_reference_position: [-2.0, -1.0, 0.0],
            user_positions: vec![[0.0, 1.0, 0.0]],
            elements: 32,
            array_rows: 4,
            array_cols: 8,
            element_spacing: 0.5,
            subcarriers: 128,
            direct_taps: 4,
            bs_irs_taps: 4,
            irs_user_taps: 3,
            epsilon: 2.0,
            kappa_db: 7.0,
            tx_power_dbm: 30.0,
            sigma2_dbm: -90.0,
            phase_bits: 2,
            cp_len: 16,
        }
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Path losses (dB) of the three links for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub direct_db: f64,
    pub bs_irs_db: f64,
    pub irs_user_db: f64,
}

impl LinkBudget {
    /// All links at 0 dB.
    pub fn unity() -> Self {
        LinkBudget {
            direct_db: 0.0,
            bs_irs_db: 0.0,
            irs_user_db: 0.0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::domain(m));
        if self.elements == 0 {
            return fail("N must be at least 1".into());
        }
        if self.array_rows * self.array_cols != self.elements {
            return fail(format!(
                "array_rows·array_cols = {}·{} != N = {}",
                self.array_rows, self.array_cols, self.elements
            ));
        }
        if self.direct_taps == 0 || self.bs_irs_taps == 0 || self.irs_user_taps == 0 {
            return fail("K1, K2, K3 must all be at least 1".into());
        }
        let k = self.max_taps();
        if self.subcarriers <= k {
            return fail(format!(
                "M = {} must exceed max(K1, K2+K3-1) = {k}",
                self.subcarriers
            ));
        }
        if self.cp_len + 1 < k {
            return fail(format!("M_cp = {} must be at least {}", self.cp_len, k - 1));
        }
        if !(self.element_spacing > 0.0) {
            return fail("element_spacing must be positive".into());
        }
        if !(self.epsilon >= 0.0) {
            return fail("epsilon must be non-negative".into());
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return fail(format!("mu = {} must be in 1..=16", self.phase_bits));
        }
        if self.user_positions.is_empty() {
            return fail("at least one user position is required".into());
        }
        if !self.kappa_db.is_finite() || !self.tx_power_dbm.is_finite() || !self.sigma2_dbm.is_finite()
        {
            return fail("kappa_db, P_dbm and sigma2_dbm must be finite".into());
        }
        Ok(())
    }

    /// `K_r = K2 + K3 − 1`.
    pub fn cascaded_taps(&self) -> usize {
        self.bs_irs_taps + self.irs_user_taps - 1
    }

    /// `K = max(K1, K_r)`.
    pub fn max_taps(&self) -> usize {
        self.direct_taps.max(self.cascaded_taps())
    }

    pub fn tx_power(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.sigma2_dbm)
    }

    pub fn kappa(&self) -> f64 {
        db_to_linear(self.kappa_db)
    }

    fn user(&self, user_index: usize) -> Result<&Point> {
        self.user_positions.get(user_index).ok_or_else(|| {
            Error::domain(format!(
                "user index {user_index} out of range ({} users)",
                self.user_positions.len()
            ))
        })
    }

    pub fn link_budget(&self, user_index: usize) -> Result<LinkBudget> {
        let user = self.user(user_index)?;
        Ok(LinkBudget {
            direct_db: path_loss_db(Link::Direct, distance(&self.bs_position, user))?,
            bs_irs_db: path_loss_db(
                Link::BsIrs,
                distance(&self.bs_position, &self.irs_reference_position),
            )?,
            irs_user_db: path_loss_db(
                Link::IrsUser,
                distance(&self.irs_reference_position, user),
            )?,
        })
    }

    /// Element offsets from the reference element in wavelengths. The array
    /// lies in the y-z plane; element `n = row·cols + col` sits at
    /// `(0, col·d, row·d)`.
    pub fn element_offsets(&self) -> Vec<Point> {
        let d = self.element_spacing;
        (0..self.array_rows)
            .flat_map(|r| (0..self.array_cols).map(move |c| [0.0, c as f64 * d, r as f64 * d]))
            .collect()
    }

    /// Unit-modulus LoS phasors of the IRS-user first tap, one per element:
    /// `exp(−j2π ⟨offset, û⟩)` with `û` the unit direction from the IRS
    /// reference element to the user.
    pub fn los_phasors(&self, user_index: usize) -> Result<Vec<Complex64>> {
        let user = self.user(user_index)?;
        let r = &self.irs_reference_position;
        let dist = distance(r, user);
        if dist <= 0.0 {
            return Err(Error::domain("user coincides with the IRS reference point"));
        }
        let dir: Vec<f64> = (0..3).map(|i| (user[i] - r[i]) / dist).collect();
        Ok(self
            .element_offsets()
            .iter()
            .map(|o| {
                let proj: f64 = o.iter().zip(&dir).map(|(a, b)| a * b).sum();
                Complex64::from_polar(1.0, -2.0 * PI * proj)
            })
            .collect())
    }
}
