//! Seeded simulation of the detection chain: photon source, splitting over
//! time-bins, per-bin loss, dark counts, click counting.
//!
//! Randomness for pulse `i` comes from a ChaCha8 stream keyed by the master
//! seed with stream id `i`, so a histogram does not depend on how pulses are
//! distributed over worker threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::detector::{ClickPmf, DetectorConfig, ModelError};
use crate::ingest::{IngestError, TimeTagRecord, TriggerConfig, TRIGGER_CHANNEL};

/// Below this mean the photon number is drawn by CDF inversion.
const POISSON_INVERSION_LIMIT: f64 = 30.0;
/// Above this many photons the per-photon loop is replaced by a
/// binomial-chain multinomial split.
const PER_PHOTON_LIMIT: u64 = 10_000;
/// Pulses per work item; fixed so chunking never depends on the thread count.
const CHUNK: u64 = 1 << 14;
const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid detector: {0}")]
    InvalidDetector(String),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("two-arm detector needs an even number of bins, got {0}")]
    OddN(u32),
    #[error("number of pulses must be positive")]
    ZeroPulses,
    #[error("pulse {pulse}: {clicks} clicks requested but only {windows} windows exist")]
    TooManyClicks { pulse: usize, clicks: u32, windows: usize },
    #[error("trigger config: {0}")]
    Trigger(String),
}

impl From<IngestError> for SimError {
    fn from(e: IngestError) -> Self {
        SimError::Trigger(e.to_string())
    }
}

/// Per-bin splitting weights, efficiencies and dark-count probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDetector {
    weights: Vec<f64>,
    etas: Vec<f64>,
    p_ds: Vec<f64>,
}

impl SimDetector {
    pub fn new(weights: Vec<f64>, etas: Vec<f64>, p_ds: Vec<f64>) -> Result<Self, SimError> {
        let det = Self { weights, etas, p_ds };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.weights.len();
        if n == 0 {
            return Err(SimError::InvalidDetector("no bins".into()));
        }
        if self.etas.len() != n || self.p_ds.len() != n {
            return Err(SimError::InvalidDetector(format!(
                "length mismatch: {} weights, {} etas, {} dark probabilities",
                n,
                self.etas.len(),
                self.p_ds.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SimError::InvalidDetector("weights must be non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(SimError::InvalidDetector(format!("weights sum to {total}, not 1")));
        }
        if self.etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(SimError::InvalidDetector("efficiencies must lie in [0, 1]".into()));
        }
        if self.p_ds.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(SimError::InvalidDetector(
                "dark probabilities must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    pub fn p_ds(&self) -> &[f64] {
        &self.p_ds
    }

    /// Arithmetic mean of the per-bin efficiencies.
    pub fn mean_eta(&self) -> f64 {
        self.etas.iter().sum::<f64>() / self.n() as f64
    }

    /// Replaces the splitting weights, e.g. with multiplexer bin fractions.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, SimError> {
        self.weights = weights;
        self.validate()?;
        Ok(self)
    }
}

/// Photon statistics of the input pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    Poisson { mu: f64 },
    Fock { m: u32 },
}

impl Source {
    fn validate(&self) -> Result<(), SimError> {
        match *self {
            Source::Poisson { mu } if !(mu.is_finite() && mu >= 0.0) => {
                Err(SimError::InvalidSource(format!("mean photon number {mu}")))
            }
            _ => Ok(()),
        }
    }
}

/// Click-count histogram of a simulated run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    pub histogram: Vec<u64>,
    pub n_pulses: u64,
    pub seed: u64,
}

impl SimResult {
    pub fn empirical_pmf(&self) -> Vec<f64> {
        self.histogram
            .iter()
            .map(|&c| c as f64 / self.n_pulses as f64)
            .collect()
    }
}

/// Identical bins with weight `1/n`.
pub fn uniform_detector(cfg: &DetectorConfig) -> Result<SimDetector, SimError> {
    cfg.validate()?;
    let n = cfg.n as usize;
    SimDetector::new(vec![1.0 / n as f64; n], vec![cfg.eta; n], vec![cfg.p_d; n])
}

/// Two detectors reading half of the bins each, with efficiencies `eta_a`
/// (first half) and `eta_b` (second half).
pub fn heterogeneous_two_arm(cfg: &DetectorConfig, eta_a: f64, eta_b: f64) -> Result<SimDetector, SimError> {
    cfg.validate()?;
    if !cfg.n.is_multiple_of(2) {
        return Err(SimError::OddN(cfg.n));
    }
    let n = cfg.n as usize;
    let etas = std::iter::repeat_n(eta_a, n / 2)
        .chain(std::iter::repeat_n(eta_b, n / 2))
        .collect();
    SimDetector::new(vec![1.0 / n as f64; n], etas, vec![cfg.p_d; n])
}

enum PhotonNumber {
    Fixed(u64),
    Inversion { mu: f64, p0: f64 },
    Rejection(Poisson<f64>),
}

impl PhotonNumber {
    fn new(source: &Source) -> Self {
        match *source {
            Source::Fock { m } => PhotonNumber::Fixed(m as u64),
            Source::Poisson { mu } if mu < POISSON_INVERSION_LIMIT => PhotonNumber::Inversion { mu, p0: (-mu).exp() },
            Source::Poisson { mu } => PhotonNumber::Rejection(Poisson::new(mu).expect("mu validated")),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        match self {
            PhotonNumber::Fixed(k) => *k,
            PhotonNumber::Inversion { mu, p0 } => {
                let u: f64 = rng.random();
                let mut k = 0u64;
                let mut p = *p0;
                let mut cdf = p;
                while u > cdf && p > 0.0 {
                    k += 1;
                    p *= mu / k as f64;
                    cdf += p;
                }
                k
            }
            PhotonNumber::Rejection(dist) => dist.sample(rng) as u64,
        }
    }
}

struct PulseSampler<'a> {
    det: &'a SimDetector,
    photons: PhotonNumber,
    bins: WeightedIndex<f64>,
    base: ChaCha8Rng,
}

impl<'a> PulseSampler<'a> {
    fn new(det: &'a SimDetector, source: &Source, seed: u64) -> Result<Self, SimError> {
        det.validate()?;
        source.validate()?;
        let bins =
            WeightedIndex::new(det.weights.iter().copied()).map_err(|e| SimError::InvalidDetector(e.to_string()))?;
        Ok(Self {
            det,
            photons: PhotonNumber::new(source),
            bins,
            base: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn rng_for(&self, pulse: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(pulse);
        rng
    }

    fn clicks(&self, pulse: u64, hit: &mut [bool]) -> u32 {
        let mut rng = self.rng_for(pulse);
        hit.fill(false);
        let k = self.photons.draw(&mut rng);
        if k <= PER_PHOTON_LIMIT {
            for _ in 0..k {
                let bin = self.bins.sample(&mut rng);
                if rng.random::<f64>() < self.det.etas[bin] {
                    hit[bin] = true;
                }
            }
        } else {
            self.split_many(k, hit, &mut rng);
        }
        for (bin, &p_d) in self.det.p_ds.iter().enumerate() {
            if !hit[bin] && p_d > 0.0 && rng.random::<f64>() < p_d {
                hit[bin] = true;
            }
        }
        hit.iter().filter(|&&h| h).count() as u32
    }

    /// Exact multinomial split of `k` photons as a chain of conditional
    /// binomials, followed by binomial thinning per bin.
    fn split_many(&self, k: u64, hit: &mut [bool], rng: &mut ChaCha8Rng) {
        let mut remaining = k;
        let mut mass = 1.0;
        for (bin, (&w, &eta)) in self.det.weights.iter().zip(&self.det.etas).enumerate() {
            if remaining == 0 {
                break;
            }
            let p = if mass > 0.0 { (w / mass).clamp(0.0, 1.0) } else { 1.0 };
            let here = Binomial::new(remaining, p).expect("valid p").sample(rng);
            remaining -= here;
            mass -= w;
            if here > 0 && eta > 0.0 {
                let detected = Binomial::new(here, eta).expect("valid eta").sample(rng);
                hit[bin] = detected > 0;
            }
        }
    }
}

/// Click count of pulse `pulse` in the stream keyed by `seed`.
pub fn sample_pulse(det: &SimDetector, source: &Source, seed: u64, pulse: u64) -> Result<u32, SimError> {
    let sampler = PulseSampler::new(det, source, seed)?;
    let mut hit = vec![false; det.n()];
    Ok(sampler.clicks(pulse, &mut hit))
}

/// A single pulse; identical to the first pulse of [`run_experiment`] with the same seed.
pub fn sample_clicks(det: &SimDetector, source: &Source, seed: u64) -> Result<u32, SimError> {
    sample_pulse(det, source, seed, 0)
}

/// Simulates `n_pulses` independent pulses in parallel and returns their histogram.
pub fn run_experiment(det: &SimDetector, source: &Source, n_pulses: u64, seed: u64) -> Result<SimResult, SimError> {
    if n_pulses == 0 {
        return Err(SimError::ZeroPulses);
    }
    let sampler = PulseSampler::new(det, source, seed)?;
    let n = det.n();
    let chunks = n_pulses.div_ceil(CHUNK);
    let histogram = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut hist = vec![0u64; n + 1];
            let mut hit = vec![false; n];
            let end = ((c + 1) * CHUNK).min(n_pulses);
            for pulse in c * CHUNK..end {
                hist[sampler.clicks(pulse, &mut hit) as usize] += 1;
            }
            hist
        })
        .reduce(
            || vec![0u64; n + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(SimResult {
        histogram,
        n_pulses,
        seed,
    })
}

/// Half the L1 distance between an observed histogram and a model PMF.
pub fn tv_distance(histogram: &[u64], pmf: &ClickPmf) -> f64 {
    let total: u64 = histogram.iter().sum();
    let len = histogram.len().max(pmf.probs().len());
    0.5 * (0..len)
        .map(|x| {
            let observed = histogram.get(x).copied().unwrap_or(0) as f64 / total as f64;
            (observed - pmf.get(x)).abs()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square goodness of fit. Adjacent click counts are pooled until
/// every group expects at least five events.
pub fn chi_square_gof(histogram: &[u64], pmf: &ClickPmf) -> GofResult {
    const MIN_EXPECTED: f64 = 5.0;
    let total: u64 = histogram.iter().sum();
    let len = histogram.len().max(pmf.probs().len());
    let impossible = (0..len).any(|x| histogram.get(x).copied().unwrap_or(0) > 0 && pmf.get(x) <= 0.0);
    if impossible {
        return GofResult {
            statistic: f64::INFINITY,
            dof: len.saturating_sub(1),
            p_value: 0.0,
        };
    }
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for x in 0..len {
        obs += histogram.get(x).copied().unwrap_or(0) as f64;
        exp += pmf.get(x) * total as f64;
        if exp >= MIN_EXPECTED {
            groups.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if obs > 0.0 || exp > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => groups.push((obs, exp)),
        }
    }
    let statistic: f64 = groups
        .iter()
        .map(|&(o, e)| {
            if e > 0.0 {
                (o - e).powi(2) / e
            } else if o > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let dof = groups.len().saturating_sub(1);
    let p_value = if statistic.is_infinite() {
        0.0
    } else if dof == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(dof as f64).expect("positive dof");
        1.0 - dist.cdf(statistic)
    };
    GofResult {
        statistic,
        dof,
        p_value,
    }
}

/// Writes a time-tag stream that produces the given per-pulse click counts.
///
/// Trigger `i` fires at `i * period`. For each pulse a random subset of the
/// configured windows of size `clicks[i]` is lit, each with one to three
/// detector events at random instants inside the window. Records come out
/// sorted by timestamp.
pub fn synthetic_timetags(clicks: &[u32], cfg: &TriggerConfig, seed: u64) -> Result<Vec<TimeTagRecord>, SimError> {
    cfg.validate()?;
    let windows = cfg.windows();
    let period_ps = (cfg.period_ns * 1e3).round() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (pulse, &x) in clicks.iter().enumerate() {
        if x as usize > windows.len() {
            return Err(SimError::TooManyClicks {
                pulse,
                clicks: x,
                windows: windows.len(),
            });
        }
        let t0 = pulse as u64 * period_ps;
        records.push(TimeTagRecord {
            channel: TRIGGER_CHANNEL,
            timestamp_ps: t0,
        });
        let mut events = Vec::new();
        for w in sample_indices(&mut rng, windows.len(), x as usize) {
            let win = &windows[w];
            let lo = win.lo_ps.ceil() as i64;
            let hi = win.hi_ps.ceil() as i64;
            for _ in 0..rng.random_range(1..=3) {
                let dt = rng.random_range(lo..hi);
                events.push(TimeTagRecord {
                    channel: win.channel,
                    timestamp_ps: (t0 as i64 + dt) as u64,
                });
            }
        }
        events.sort_by_key(|r| (r.timestamp_ps, r.channel));
        records.extend(events);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{click_pmf_fock, click_pmf_poisson};

    fn cfg(n: u32, eta: f64, p_d: f64) -> DetectorConfig {
        DetectorConfig::new(n, eta, p_d).unwrap()
    }

    #[test]
    fn uniform_detector_fields() {
        let det = uniform_detector(&cfg(2, 1.0, 0.0)).unwrap();
        assert_eq!(det.weights(), &[0.5, 0.5]);
        assert_eq!(det.etas(), &[1.0, 1.0]);
        assert_eq!(det.p_ds(), &[0.0, 0.0]);
        let det = uniform_detector(&cfg(16, 0.49, 0.0)).unwrap();
        assert!(det.weights().iter().all(|&w| w == 1.0 / 16.0));
    }

    #[test]
    fn detector_validation() {
        assert!(SimDetector::new(vec![0.5, 0.4], vec![1.0; 2], vec![0.0; 2]).is_err());
        assert!(SimDetector::new(vec![0.5, 0.5], vec![1.0], vec![0.0; 2]).is_err());
        assert!(SimDetector::new(vec![0.5, 0.5], vec![1.2, 1.0], vec![0.0; 2]).is_err());
        assert!(SimDetector::new(vec![0.5, 0.5], vec![1.0; 2], vec![1.0, 0.0]).is_err());
        assert!(SimDetector::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn trivial_sources() {
        let det = uniform_detector(&cfg(16, 0.7, 0.0)).unwrap();
        for seed in 0..50 {
            assert_eq!(sample_clicks(&det, &Source::Fock { m: 0 }, seed).unwrap(), 0);
        }
        let single = uniform_detector(&cfg(1, 1.0, 0.0)).unwrap();
        for seed in 0..50 {
            assert_eq!(sample_clicks(&single, &Source::Fock { m: 1 }, seed).unwrap(), 1);
        }
    }

    #[test]
    fn invalid_source_rejected() {
        let det = uniform_detector(&cfg(4, 0.7, 0.0)).unwrap();
        assert!(matches!(
            run_experiment(&det, &Source::Poisson { mu: -1.0 }, 10, 0),
            Err(SimError::InvalidSource(_))
        ));
        assert_eq!(
            run_experiment(&det, &Source::Poisson { mu: 1.0 }, 0, 0),
            Err(SimError::ZeroPulses)
        );
    }

    #[test]
    fn single_pulse_experiment_is_sample_clicks() {
        let det = uniform_detector(&cfg(16, 0.49, 1e-3)).unwrap();
        let src = Source::Poisson { mu: 12.0 };
        for seed in 0..20 {
            let x = sample_clicks(&det, &src, seed).unwrap();
            let run = run_experiment(&det, &src, 1, seed).unwrap();
            assert_eq!(run.histogram[x as usize], 1);
        }
    }

    #[test]
    fn concentrated_weight_gives_at_most_one_click() {
        let mut weights = vec![0.0; 8];
        weights[0] = 1.0;
        let det = SimDetector::new(weights, vec![0.9; 8], vec![0.0; 8]).unwrap();
        let run = run_experiment(&det, &Source::Poisson { mu: 50.0 }, 2000, 3).unwrap();
        assert_eq!(run.histogram[0] + run.histogram[1], 2000);
    }

    #[test]
    fn two_arm_detector() {
        let c = cfg(16, 0.57, 0.0);
        let det = heterogeneous_two_arm(&c, 0.50, 0.64).unwrap();
        assert!((det.mean_eta() - 0.57).abs() < 1e-12);
        assert_eq!(det.etas()[7], 0.50);
        assert_eq!(det.etas()[8], 0.64);
        assert_eq!(
            heterogeneous_two_arm(&c, 0.57, 0.57).unwrap(),
            uniform_detector(&c).unwrap()
        );
        assert_eq!(
            heterogeneous_two_arm(&cfg(15, 0.5, 0.0), 0.5, 0.6),
            Err(SimError::OddN(15))
        );
    }

    #[test]
    fn large_photon_numbers_use_exact_split() {
        // mu far above the per-photon limit: every bin must click.
        let det = uniform_detector(&cfg(16, 0.49, 0.0)).unwrap();
        let run = run_experiment(&det, &Source::Fock { m: 50_000 }, 200, 1).unwrap();
        assert_eq!(run.histogram[16], 200);
        // Moderately large Fock state agrees with the analytic distribution.
        let c = cfg(2000, 0.8, 0.0);
        let det = uniform_detector(&c).unwrap();
        let m = 12_000;
        let run = run_experiment(&det, &Source::Fock { m }, 5_000, 9).unwrap();
        let mean = run
            .histogram
            .iter()
            .enumerate()
            .map(|(x, &h)| x as f64 * h as f64)
            .sum::<f64>()
            / 5_000.0;
        let expected = 2000.0 * (1.0 - (1.0 - 0.8 / 2000.0f64).powi(m as i32));
        assert!((mean - expected).abs() < 0.5, "{mean} vs {expected}");
    }

    #[test]
    fn fock_small_arrays_match_analytic() {
        for &(n, m, eta, pd) in &[(3, 4, 0.7, 0.0), (5, 2, 1.0, 0.01), (6, 6, 0.3, 0.01)] {
            let c = cfg(n, eta, pd);
            let det = uniform_detector(&c).unwrap();
            let run = run_experiment(&det, &Source::Fock { m }, 100_000, 11).unwrap();
            let tv = tv_distance(&run.histogram, &click_pmf_fock(&c, m).unwrap());
            assert!(tv < 0.01, "n={n} m={m}: tv {tv}");
        }
    }

    #[test]
    fn poisson_inversion_and_rejection_both_match() {
        for mu in [0.5, 29.0, 31.0, 80.0] {
            let c = cfg(16, 0.49, 0.0);
            let det = uniform_detector(&c).unwrap();
            let run = run_experiment(&det, &Source::Poisson { mu }, 200_000, 5).unwrap();
            let pmf = click_pmf_poisson(&c, mu).unwrap();
            let gof = chi_square_gof(&run.histogram, &pmf);
            assert!(gof.p_value > 1e-3, "mu={mu}: {gof:?}");
        }
    }

    #[test]
    fn gof_flags_a_wrong_model() {
        let c = cfg(16, 0.49, 0.0);
        let det = uniform_detector(&c).unwrap();
        let run = run_experiment(&det, &Source::Poisson { mu: 10.0 }, 100_000, 2).unwrap();
        let wrong = click_pmf_poisson(&c, 10.5).unwrap();
        assert!(chi_square_gof(&run.histogram, &wrong).p_value < 1e-6);
    }

    #[test]
    fn gof_point_mass() {
        let pmf = ClickPmf::from_probs(vec![1.0, 0.0, 0.0]);
        let ok = chi_square_gof(&[100, 0, 0], &pmf);
        assert_eq!(ok.statistic, 0.0);
        assert_eq!(ok.p_value, 1.0);
        let bad = chi_square_gof(&[99, 1, 0], &pmf);
        assert!(bad.p_value < 1e-3);
    }

    #[test]
    fn tv_distance_basics() {
        let pmf = ClickPmf::from_probs(vec![0.5, 0.5]);
        assert_eq!(tv_distance(&[5, 5], &pmf), 0.0);
        assert_eq!(tv_distance(&[10, 0], &pmf), 0.5);
    }
}
