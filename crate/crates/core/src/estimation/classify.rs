use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::detector::{click_pmf_fock, ClickPmf, DetectorConfig};

/// Upper limit on the number of photon-number hypotheses.
pub const MAX_FOCK_CANDIDATES: u32 = 50;

/// Single-shot photon-number classification under a uniform prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockClassification {
    /// `likelihoods[m]` is the click distribution for `m` input photons.
    pub likelihoods: Vec<ClickPmf>,
    /// `decision[x]` is the photon number reported for `x` clicks.
    pub decision: Vec<u32>,
    /// Probability that an `m`-photon input is reported as `m`.
    pub success: Vec<f64>,
    /// Largest `M` with `success[m] >= 0.5` for every `m <= M`.
    pub max_resolvable: Option<u32>,
}

impl FockClassification {
    pub fn m_max(&self) -> u32 {
        (self.likelihoods.len() - 1) as u32
    }

    /// `Pr(x clicks | m photons)`.
    pub fn likelihood(&self, x: usize, m: usize) -> f64 {
        self.likelihoods[m].get(x)
    }
}

/// Default candidate range: twice the array size, capped.
pub fn default_m_max(cfg: &DetectorConfig) -> u32 {
    (2 * cfg.n).min(MAX_FOCK_CANDIDATES)
}

/// Maps each click count to the most likely photon number in `0..=m_max`
/// (ties go to the smaller photon number) and scores the rule per input.
pub fn fock_classify(cfg: &DetectorConfig, m_max: u32) -> Result<FockClassification, EstimationError> {
    cfg.validate()?;
    if m_max > MAX_FOCK_CANDIDATES {
        return Err(EstimationError::TooManyCandidates(m_max));
    }
    let likelihoods = (0..=m_max)
        .map(|m| click_pmf_fock(cfg, m))
        .collect::<Result<Vec<_>, _>>()?;

    let decision: Vec<u32> = (0..=cfg.n as usize)
        .map(|x| {
            let mut best = 0usize;
            for m in 1..likelihoods.len() {
                if likelihoods[m].get(x) > likelihoods[best].get(x) {
                    best = m;
                }
            }
            best as u32
        })
        .collect();

    let success: Vec<f64> = likelihoods
        .iter()
        .enumerate()
        .map(|(m, pmf)| {
            decision
                .iter()
                .enumerate()
                .filter(|(_, &d)| d as usize == m)
                .map(|(x, _)| pmf.get(x))
                .fold(0.0, |acc, p| acc + p)
        })
        .collect();

    let max_resolvable = success
        .iter()
        .take_while(|&&p| p >= 0.5)
        .count()
        .checked_sub(1)
        .map(|m| m as u32);

    Ok(FockClassification {
        likelihoods,
        decision,
        success,
        max_resolvable,
    })
}
