//! Run configuration loaded from TOML.
//!
//! Every section has defaults, so an empty file is a valid configuration.
//! The defaults describe the reference setup: 16 bins, overall efficiency
//! 0.49, no dark counts, 10^6 pulses per run.

use std::path::{Path, PathBuf};

use pnr_core::ingest::{DEFAULT_LATENCY_NS, DEFAULT_PERIOD_NS, DEFAULT_WINDOW_NS};
use pnr_core::{
    heterogeneous_two_arm, uniform_detector, DetectorConfig, MultiplexerSpec, SimDetector, Source, TriggerConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_pulses: u64,
    pub detector: DetectorSection,
    pub source: Source,
    pub sweep: SweepSection,
    pub classify: ClassifySection,
    pub bandwidth: BandwidthSection,
    pub multiplexer: MultiplexerSpec,
    pub trigger: TriggerSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub n: u32,
    pub eta: f64,
    pub p_d: f64,
    /// Efficiencies of the two physical detectors, each reading half the
    /// bins. Only the simulator uses them; the estimators see their mean.
    pub arm_etas: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Mean photon number at the smallest optical density.
    pub mu0: f64,
    pub od_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    /// Largest candidate photon number; `None` selects `min(2n, 50)`.
    pub m_max: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandwidthSection {
    /// `[start, stop, step]` in nm, stop inclusive.
    pub delta_lambda_range: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerSection {
    pub period_ns: f64,
    pub window_ns: f64,
    /// Delay between the trigger and the first bin (ns).
    pub latency_ns: f64,
    /// Explicit window centres per detector channel; overrides the
    /// multiplexer schedule when set.
    pub bin_offsets_ns: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_pulses: 1_000_000,
            detector: DetectorSection::default(),
            source: Source::Poisson { mu: 5.0 },
            sweep: SweepSection::default(),
            classify: ClassifySection::default(),
            bandwidth: BandwidthSection::default(),
            multiplexer: MultiplexerSpec::default(),
            trigger: TriggerSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            n: 16,
            eta: 0.49,
            p_d: 0.0,
            arm_etas: None,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        // mu * eta = 150 at the first point, five decades below at the last.
        Self {
            mu0: 150.0 / 0.49,
            od_list: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
        }
    }
}

impl Default for BandwidthSection {
    fn default() -> Self {
        Self {
            delta_lambda_range: [-20.0, 20.0, 1.0],
        }
    }
}

impl Default for TriggerSection {
    fn default() -> Self {
        Self {
            period_ns: DEFAULT_PERIOD_NS,
            window_ns: DEFAULT_WINDOW_NS,
            latency_ns: DEFAULT_LATENCY_NS,
            bin_offsets_ns: None,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks every sub-configuration against its own invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        self.detector_config()?;
        self.sim_detector()?;
        if self.n_pulses == 0 {
            return Err(CliError::Config("n_pulses must be positive".into()));
        }
        if let Source::Poisson { mu } = self.source {
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(CliError::Config(format!(
                    "source mu must be finite and nonnegative, got {mu}"
                )));
            }
        }
        self.multiplexer
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.trigger_config()?;
        self.delta_lambda_grid()?;
        if !(self.sweep.mu0.is_finite() && self.sweep.mu0 > 0.0) {
            return Err(CliError::Config(format!(
                "sweep mu0 must be positive, got {}",
                self.sweep.mu0
            )));
        }
        if let Some(od) = self.sweep.od_list.iter().find(|od| !od.is_finite()) {
            return Err(CliError::Config(format!("optical density {od} is not finite")));
        }
        Ok(())
    }

    pub fn detector_config(&self) -> Result<DetectorConfig, CliError> {
        let d = &self.detector;
        DetectorConfig::new(d.n, d.eta, d.p_d).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Homogeneous detector, or a two-arm one when `arm_etas` is set.
    pub fn sim_detector(&self) -> Result<SimDetector, CliError> {
        let cfg = self.detector_config()?;
        let det = match self.detector.arm_etas {
            Some([a, b]) => heterogeneous_two_arm(&cfg, a, b),
            None => uniform_detector(&cfg),
        };
        det.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn trigger_config(&self) -> Result<TriggerConfig, CliError> {
        let t = &self.trigger;
        let cfg = match &t.bin_offsets_ns {
            Some(offsets) => {
                let cfg = TriggerConfig {
                    period_ns: t.period_ns,
                    window_ns: t.window_ns,
                    bin_offsets_ns: offsets.clone(),
                };
                cfg.validate().map(|_| cfg)
            }
            None => TriggerConfig::from_multiplexer(&self.multiplexer, t.period_ns, t.window_ns, t.latency_ns),
        };
        cfg.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn delta_lambda_grid(&self) -> Result<Vec<f64>, CliError> {
        let [start, stop, step] = self.bandwidth.delta_lambda_range;
        if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start) {
            return Err(CliError::Config(format!(
                "delta_lambda_range needs start <= stop and step > 0, got [{start}, {stop}, {step}]"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| start + i as f64 * step).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sed = 3"), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_detector_is_a_config_error() {
        let cfg = RunConfig::from_toml("[detector]\neta = 1.5").unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn grid_includes_stop() {
        let mut cfg = RunConfig::default();
        cfg.bandwidth.delta_lambda_range = [-1.0, 1.0, 0.1];
        let grid = cfg.delta_lambda_grid().unwrap();
        assert_eq!(grid.len(), 21);
        assert!((grid[20] - 1.0).abs() < 1e-12);
    }
}
