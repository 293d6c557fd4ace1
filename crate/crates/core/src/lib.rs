//! Models of temporal-array photon-number-resolving detectors.
//!
//! A temporal array splits every input pulse over `n` time-bins that are read
//! out by ordinary click (on/off) detectors. This crate provides:
//!
//! * [`detector`]: exact click-count distributions for Poissonian and Fock inputs,
//! * [`estimation`]: maximum-likelihood mean-photon-number estimation, error
//!   bounds and single-shot Fock classification,
//! * [`montecarlo`]: a seeded, partition-independent simulator of the detection chain,
//! * [`multiplexer`]: the fiber-coupler delay tree (bin weights, loss, schedule),
//! * [`ingest`]: time-tag parsing and trigger-synchronized binning.

pub mod detector;
pub mod estimation;
pub mod ingest;
pub mod montecarlo;
pub mod multiplexer;
mod numeric;

pub use detector::{
    click_moments, click_pmf_fock, click_pmf_poisson, variance_maximizing_mu, ClickPmf, DetectorConfig, ModelError,
};
pub use estimation::{
    attenuation_fit, cramer_rao_bound, default_m_max, delta_method_std, fock_classify, max_resolvable_mu,
    mle_from_mean, mle_mu, resolution_spacing, sample_mean, AttenuationFit, ClickSample, EstimationError,
    FockClassification, MuEstimate,
};
pub use ingest::{
    bin_events, dark_prob_per_bin, parse_timetags, read_click_sample, write_click_sample, write_timetags, BinnedEvents,
    IngestError, TimeTagRecord, TriggerConfig,
};
pub use montecarlo::{
    chi_square_gof, heterogeneous_two_arm, run_experiment, sample_clicks, sample_pulse, synthetic_timetags,
    tv_distance, uniform_detector, GofResult, SimDetector, SimError, SimResult, Source,
};
pub use multiplexer::{
    bin_schedule, bin_weights, effective_array_size, loss_budget, overall_efficiency, BinSlot, BinWeights, CouplerSpec,
    LossBudget, MultiplexerSpec, MuxError, Pass, Port,
};
