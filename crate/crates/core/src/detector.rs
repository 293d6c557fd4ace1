//! Closed-form click statistics of an `n`-element multiplexed click detector.
//!
//! Every bin is assumed to share one efficiency `eta` and one dark-count
//! probability `p_d`. Per-bin heterogeneity is only available in
//! [`crate::montecarlo`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{binomial, ln_binomial, CompensatedSum};

/// Largest tolerated negative excursion (or normalization defect) of the
/// alternating Fock sum before it is rejected.
const FOCK_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("mean photon number must be finite and non-negative, got {0}")]
    NegativeMu(f64),
    #[error("quantum efficiency is zero")]
    ZeroEfficiency,
    #[error("closed form requires p_d = 0, got {0}")]
    NonzeroDarkCounts(f64),
}

/// The `(n, eta, p_d)` triple describing a homogeneous array detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Number of effective elements (time-bins).
    pub n: u32,
    /// Overall quantum efficiency.
    pub eta: f64,
    /// Dark-count probability per bin per pulse.
    pub p_d: f64,
}

impl DetectorConfig {
    pub fn new(n: u32, eta: f64, p_d: f64) -> Result<Self, ModelError> {
        let cfg = Self { n, eta, p_d };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n == 0 {
            return Err(ModelError::InvalidConfig("n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(ModelError::InvalidConfig(format!(
                "eta must lie in [0, 1], got {}",
                self.eta
            )));
        }
        if !(0.0..1.0).contains(&self.p_d) {
            return Err(ModelError::InvalidConfig(format!(
                "p_d must lie in [0, 1), got {}",
                self.p_d
            )));
        }
        Ok(())
    }

    /// Single-bin click probability `q = 1 - (1 - p_d) exp(-mu eta / n)`
    /// for a Poissonian input of mean `mu`.
    pub fn click_probability(&self, mu: f64) -> f64 {
        -self.ln_no_click(mu).exp_m1()
    }

    /// `ln(1 - q)`, kept separate so large `mu` does not round `1 - q` to zero.
    fn ln_no_click(&self, mu: f64) -> f64 {
        (-self.p_d).ln_1p() - mu * self.eta / self.n as f64
    }
}

/// Probability mass over click counts `0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickPmf {
    probs: Vec<f64>,
}

impl ClickPmf {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// Number of elements `n` (one less than the support size).
    pub fn n(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn get(&self, x: usize) -> f64 {
        self.probs.get(x).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().copied().collect::<CompensatedSum>().total()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(x, p)| x as f64 * p)
            .collect::<CompensatedSum>()
            .total()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(x, p)| (x as f64 - mean).powi(2) * p)
            .collect::<CompensatedSum>()
            .total()
    }

    fn point_mass(n: u32, at: usize) -> Self {
        let mut probs = vec![0.0; n as usize + 1];
        probs[at] = 1.0;
        Self { probs }
    }
}

fn check_mu(mu: f64) -> Result<(), ModelError> {
    if mu.is_finite() && mu >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::NegativeMu(mu))
    }
}

/// Click distribution for a Poissonian pulse of mean photon number `mu`.
///
/// Each bin independently receives a Poisson(mu/n) photon number, so the click
/// count is Binomial(n, q) with `q = 1 - (1 - p_d) e^{-mu eta / n}`. The
/// binomial is evaluated in the log domain so `mu eta >> n` stays finite.
pub fn click_pmf_poisson(cfg: &DetectorConfig, mu: f64) -> Result<ClickPmf, ModelError> {
    cfg.validate()?;
    check_mu(mu)?;
    let n = cfg.n;
    let ln_keep = cfg.ln_no_click(mu);
    let q = -ln_keep.exp_m1();
    if q <= 0.0 {
        return Ok(ClickPmf::point_mass(n, 0));
    }
    if ln_keep == f64::NEG_INFINITY {
        return Ok(ClickPmf::point_mass(n, n as usize));
    }
    let ln_q = q.ln();
    let probs = (0..=n as u64)
        .map(|x| {
            let ln_p = ln_binomial(n as u64, x) + x as f64 * ln_q + (n as u64 - x) as f64 * ln_keep;
            ln_p.exp()
        })
        .collect();
    Ok(ClickPmf { probs })
}

/// Click distribution for a Fock state of exactly `m` photons.
///
/// Uses the inclusion-exclusion sum over empty bins, accumulated with
/// compensated summation. If the sum shows a negative excursion or a
/// normalization defect above 1e-9 (large `n`, `m`), the distribution is
/// recomputed with the occupancy recursion, which only adds positive terms.
pub fn click_pmf_fock(cfg: &DetectorConfig, m: u32) -> Result<ClickPmf, ModelError> {
    cfg.validate()?;
    match fock_alternating_sum(cfg, m) {
        Some(probs) => Ok(ClickPmf { probs }),
        None => Ok(ClickPmf {
            probs: fock_occupancy(cfg, m),
        }),
    }
}

fn fock_alternating_sum(cfg: &DetectorConfig, m: u32) -> Option<Vec<f64>> {
    let n = cfg.n as u64;
    let nf = n as f64;
    let keep = 1.0 - cfg.p_d;
    let mut probs = Vec::with_capacity(n as usize + 1);
    for x in 0..=n {
        let mut acc = CompensatedSum::default();
        for l in 0..=x {
            let empty = n - x + l;
            let base = 1.0 - empty as f64 * cfg.eta / nf;
            let term = binomial(x, l) * keep.powi(empty as i32) * powu(base.max(0.0), m);
            acc.add(if l % 2 == 0 { term } else { -term });
        }
        let p = binomial(n, x) * acc.total();
        if p < -FOCK_SUM_TOLERANCE || !p.is_finite() {
            return None;
        }
        probs.push(p.clamp(0.0, 1.0));
    }
    let total: f64 = probs.iter().copied().collect::<CompensatedSum>().total();
    if (total - 1.0).abs() > FOCK_SUM_TOLERANCE {
        return None;
    }
    Some(probs)
}

fn powu(base: f64, exp: u32) -> f64 {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(exp as f64),
    }
}

/// Distribution of occupied bins built photon by photon, then dark counts on
/// the still-empty bins.
fn fock_occupancy(cfg: &DetectorConfig, m: u32) -> Vec<f64> {
    let n = cfg.n as usize;
    let nf = n as f64;
    let mut occupied = vec![0.0; n + 1];
    occupied[0] = 1.0;
    for _ in 0..m {
        let mut next = vec![0.0; n + 1];
        for (k, &p) in occupied.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let fresh = cfg.eta * (n - k) as f64 / nf;
            next[k] += p * (1.0 - fresh);
            if k < n {
                next[k + 1] += p * fresh;
            }
        }
        occupied = next;
    }
    if cfg.p_d == 0.0 {
        return occupied;
    }
    let mut probs = vec![0.0; n + 1];
    for (k, &p) in occupied.iter().enumerate() {
        let empty = (n - k) as u64;
        for d in 0..=empty {
            let ln_dark = ln_binomial(empty, d) + d as f64 * cfg.p_d.ln() + (empty - d) as f64 * (-cfg.p_d).ln_1p();
            probs[k + d as usize] += p * ln_dark.exp();
        }
    }
    probs
}

/// Mean and variance of the click count for a Poissonian input.
pub fn click_moments(cfg: &DetectorConfig, mu: f64) -> Result<(f64, f64), ModelError> {
    cfg.validate()?;
    check_mu(mu)?;
    let q = cfg.click_probability(mu);
    let n = cfg.n as f64;
    Ok((n * q, n * q * (1.0 - q)))
}

/// The mean photon number `n ln 2 / eta` at which the click variance peaks.
/// Only valid without dark counts.
pub fn variance_maximizing_mu(cfg: &DetectorConfig) -> Result<f64, ModelError> {
    cfg.validate()?;
    if cfg.eta == 0.0 {
        return Err(ModelError::ZeroEfficiency);
    }
    if cfg.p_d != 0.0 {
        return Err(ModelError::NonzeroDarkCounts(cfg.p_d));
    }
    Ok(cfg.n as f64 * std::f64::consts::LN_2 / cfg.eta)
}
