//! Mean-photon-number estimation from click samples.
//!
//! The maximum-likelihood estimate depends on the data only through the mean
//! click count `<x>`:
//!
//! ```text
//! mu_hat(<x>) = -(n / eta) ln((n - <x>) / ((1 - p_d) n))
//! ```
//!
//! Its error has a statistical part (delta-method std, bounded below by the
//! Cramér-Rao bound) and a discretization part, the spacing to the next value
//! `mu_hat(<x> + 1/N)` that `N` pulses can produce.

mod classify;
mod fit;

pub use classify::{default_m_max, fock_classify, FockClassification, MAX_FOCK_CANDIDATES};
pub use fit::{attenuation_fit, AttenuationFit};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{DetectorConfig, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("click sample is empty")]
    EmptySample,
    #[error("pulse {index}: click count {value} exceeds array size {n}")]
    CountOutOfRange { index: usize, value: u32, n: u32 },
    #[error("sample was taken with n = {sample} but the detector has n = {detector}")]
    MismatchedN { sample: u32, detector: u32 },
    #[error("detector saturated: mean clicks {mean} reached n = {n}, the estimate diverges")]
    Saturated { mean: f64, n: u32 },
    #[error("sample standard deviation needs at least two pulses")]
    SingleSample,
    #[error("mean clicks {mean} is outside the finite range (limit {limit})")]
    OutOfRange { mean: f64, limit: f64 },
    #[error("quantum efficiency is zero")]
    ZeroEfficiency,
    #[error("number of pulses must be positive")]
    ZeroPulses,
    #[error("attenuation fit needs at least two distinct attenuation values")]
    InsufficientPoints,
    #[error("point {index}: estimate {value} is not positive")]
    NonpositiveEstimate { index: usize, value: f64 },
    #[error("m_max = {0} exceeds the supported maximum of {MAX_FOCK_CANDIDATES}")]
    TooManyCandidates(u32),
}

/// Per-pulse click counts measured against an `n`-element array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickSample {
    counts: Vec<u32>,
    n_bins: u32,
}

impl ClickSample {
    pub fn new(counts: Vec<u32>, n_bins: u32) -> Result<Self, EstimationError> {
        if counts.is_empty() {
            return Err(EstimationError::EmptySample);
        }
        if let Some((index, &value)) = counts.iter().enumerate().find(|(_, &x)| x > n_bins) {
            return Err(EstimationError::CountOutOfRange {
                index,
                value,
                n: n_bins,
            });
        }
        Ok(Self { counts, n_bins })
    }

    /// Expands a histogram over `0..=n` into pulses ordered by click count.
    pub fn from_histogram(histogram: &[u64]) -> Result<Self, EstimationError> {
        if histogram.is_empty() {
            return Err(EstimationError::EmptySample);
        }
        let n_bins = (histogram.len() - 1) as u32;
        let total: u64 = histogram.iter().sum();
        let mut counts = Vec::with_capacity(total as usize);
        for (x, &c) in histogram.iter().enumerate() {
            counts.extend(std::iter::repeat_n(x as u32, c as usize));
        }
        Self::new(counts, n_bins)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n_bins(&self) -> u32 {
        self.n_bins
    }

    pub fn n_pulses(&self) -> usize {
        self.counts.len()
    }

    pub fn histogram(&self) -> Vec<u64> {
        let mut hist = vec![0u64; self.n_bins as usize + 1];
        for &x in &self.counts {
            hist[x as usize] += 1;
        }
        hist
    }

    fn sums(&self) -> (u128, u128) {
        self.counts.iter().fold((0u128, 0u128), |(s, s2), &x| {
            let x = x as u128;
            (s + x, s2 + x * x)
        })
    }

    /// Unbiased sample variance, exact up to the final division.
    fn sample_variance(&self) -> Option<f64> {
        let n = self.counts.len() as u128;
        if n < 2 {
            return None;
        }
        let (s, s2) = self.sums();
        let numer = n * s2 - s * s;
        Some(numer as f64 / (n * (n - 1)) as f64)
    }
}

/// Point estimate with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub mu_hat: f64,
    /// Delta-method standard deviation (primary error bar).
    pub std: f64,
    /// Square root of the Cramér-Rao variance bound evaluated at `mu_hat`.
    pub crb_floor: f64,
    /// Spacing to the next representable estimate; infinite at the last finite value.
    pub resolution: f64,
    pub mean_clicks: f64,
    pub n_pulses: u64,
    /// Set when dark counts pushed the raw estimate below zero and it was clamped.
    pub clamped: bool,
}

/// Average number of clicks per pulse.
pub fn sample_mean(sample: &ClickSample) -> f64 {
    let (s, _) = sample.sums();
    s as f64 / sample.n_pulses() as f64
}

fn require_efficiency(cfg: &DetectorConfig) -> Result<(), EstimationError> {
    cfg.validate()?;
    if cfg.eta == 0.0 {
        return Err(EstimationError::ZeroEfficiency);
    }
    Ok(())
}

/// The estimator as a function of the mean click count. May be negative when
/// `mean < n p_d`; [`mle_mu`] clamps that case.
pub fn mle_from_mean(cfg: &DetectorConfig, mean_clicks: f64) -> Result<f64, EstimationError> {
    require_efficiency(cfg)?;
    let n = cfg.n as f64;
    if mean_clicks.is_nan() || mean_clicks >= n {
        return Err(EstimationError::Saturated {
            mean: mean_clicks,
            n: cfg.n,
        });
    }
    let ln_ratio = (-mean_clicks / n).ln_1p() - (-cfg.p_d).ln_1p();
    Ok(-(n / cfg.eta) * ln_ratio)
}

/// Maximum-likelihood estimate of the mean photon number with its error budget.
///
/// Requires at least two pulses so the delta-method std is defined.
pub fn mle_mu(cfg: &DetectorConfig, sample: &ClickSample) -> Result<MuEstimate, EstimationError> {
    require_efficiency(cfg)?;
    if sample.n_bins() != cfg.n {
        return Err(EstimationError::MismatchedN {
            sample: sample.n_bins(),
            detector: cfg.n,
        });
    }
    let mean = sample_mean(sample);
    let raw = mle_from_mean(cfg, mean)?;
    let (mu_hat, clamped) = if raw < 0.0 { (0.0, true) } else { (raw, false) };
    let n_pulses = sample.n_pulses() as u64;
    let std = delta_method_std(cfg, sample)?;
    let resolution = match resolution_spacing(cfg, mean, n_pulses) {
        Ok(r) => r,
        Err(EstimationError::OutOfRange { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let crb_floor = cramer_rao_bound(cfg, mu_hat, n_pulses)?.sqrt();
    Ok(MuEstimate {
        mu_hat,
        std,
        crb_floor,
        resolution,
        mean_clicks: mean,
        n_pulses,
        clamped,
    })
}

/// Cramér-Rao lower bound on the variance of any unbiased estimate of `mu`
/// from `n_pulses` pulses.
pub fn cramer_rao_bound(cfg: &DetectorConfig, mu: f64, n_pulses: u64) -> Result<f64, EstimationError> {
    require_efficiency(cfg)?;
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(ModelError::NegativeMu(mu).into());
    }
    if n_pulses == 0 {
        return Err(EstimationError::ZeroPulses);
    }
    let n = cfg.n as f64;
    // (1 - p_d)^-1 e^t - 1 written to stay exact as t -> 0.
    let t = mu * cfg.eta / n;
    let excess = (t.exp_m1() + cfg.p_d) / (1.0 - cfg.p_d);
    Ok(n * excess / (cfg.eta * cfg.eta * n_pulses as f64))
}

/// Standard deviation of the estimate obtained by propagating the sample
/// standard deviation of the click counts through the estimator.
pub fn delta_method_std(cfg: &DetectorConfig, sample: &ClickSample) -> Result<f64, EstimationError> {
    require_efficiency(cfg)?;
    let n = cfg.n as f64;
    let mean = sample_mean(sample);
    if mean.is_nan() || mean >= n {
        return Err(EstimationError::Saturated { mean, n: cfg.n });
    }
    let var = sample.sample_variance().ok_or(EstimationError::SingleSample)?;
    let slope = n / (cfg.eta * (n - mean));
    Ok(slope * (var / sample.n_pulses() as f64).sqrt())
}

/// Gap between `mu_hat(mean)` and the next attainable `mu_hat(mean + 1/N)`.
pub fn resolution_spacing(cfg: &DetectorConfig, mean_clicks: f64, n_pulses: u64) -> Result<f64, EstimationError> {
    require_efficiency(cfg)?;
    if n_pulses == 0 {
        return Err(EstimationError::ZeroPulses);
    }
    let n = cfg.n as f64;
    let step = 1.0 / n_pulses as f64;
    let limit = n - step;
    if !(mean_clicks >= 0.0 && mean_clicks < limit) {
        return Err(EstimationError::OutOfRange {
            mean: mean_clicks,
            limit,
        });
    }
    Ok(-(n / cfg.eta) * (-step / (n - mean_clicks)).ln_1p())
}

/// Largest estimate that still has a finite successor, `mu_hat(n - 2/N)`.
pub fn max_resolvable_mu(cfg: &DetectorConfig, n_pulses: u64) -> Result<f64, EstimationError> {
    require_efficiency(cfg)?;
    if n_pulses == 0 {
        return Err(EstimationError::ZeroPulses);
    }
    let n = cfg.n as f64;
    let product = n * n_pulses as f64;
    if product < 2.0 {
        return Err(EstimationError::OutOfRange {
            mean: n - 2.0 / n_pulses as f64,
            limit: 0.0,
        });
    }
    Ok((n / cfg.eta) * (product * (1.0 - cfg.p_d) / 2.0).ln())
}
