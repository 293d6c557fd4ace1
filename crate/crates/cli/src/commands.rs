use std::path::{Path, PathBuf};
use std::time::Instant;

use pnr_core::multiplexer::min_bin_spacing_ns;
use pnr_core::{
    attenuation_fit, bin_events, bin_schedule, bin_weights, chi_square_gof, click_pmf_fock, click_pmf_poisson,
    default_m_max, effective_array_size, fock_classify, loss_budget, mle_mu, parse_timetags, read_click_sample,
    run_experiment, tv_distance, write_click_sample, AttenuationFit, BinSlot, ClickSample, DetectorConfig,
    EstimationError, FockClassification, GofResult, LossBudget, MuEstimate, MultiplexerSpec, SimDetector, Source,
    TriggerConfig,
};
use serde::Serialize;

use crate::report::{ensure_dir, open, write_file, write_json};
use crate::{ingest_error, CliError, RunConfig};

/// Odd constant used to derive per-point seeds in a sweep.
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub config: RunConfig,
    pub sim_detector: SimDetector,
    pub seed: u64,
    pub n_pulses: u64,
    pub runtime_s: f64,
    pub histogram: Vec<u64>,
    /// Homogeneous model evaluated with the configured `(n, eta, p_d)`.
    pub model_pmf: Vec<f64>,
    pub tv_distance: f64,
    pub gof: GofResult,
    pub estimate: Option<MuEstimate>,
    pub estimate_error: Option<String>,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateReport, CliError> {
    cfg.validate()?;
    let det_cfg = cfg.detector_config()?;
    let det = cfg.sim_detector()?;
    let start = Instant::now();
    let sim = run_experiment(&det, &cfg.source, cfg.n_pulses, cfg.seed)?;
    let runtime_s = start.elapsed().as_secs_f64();
    let model = match cfg.source {
        Source::Poisson { mu } => click_pmf_poisson(&det_cfg, mu),
        Source::Fock { m } => click_pmf_fock(&det_cfg, m),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    let (estimate, estimate_error) =
        match ClickSample::from_histogram(&sim.histogram).and_then(|s| mle_mu(&det_cfg, &s)) {
            Ok(e) => (Some(e), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let empirical = sim.empirical_pmf();

    ensure_dir(out)?;
    write_file(out, "histogram.csv", |w| {
        writeln!(w, "# x,count,empirical,model")?;
        for (x, count) in sim.histogram.iter().enumerate() {
            writeln!(w, "{x},{count},{},{}", empirical[x], model.get(x))?;
        }
        Ok(())
    })?;
    let report = SimulateReport {
        config: cfg.clone(),
        sim_detector: det,
        seed: sim.seed,
        n_pulses: sim.n_pulses,
        runtime_s,
        tv_distance: tv_distance(&sim.histogram, &model),
        gof: chi_square_gof(&sim.histogram, &model),
        histogram: sim.histogram,
        model_pmf: model.into_vec(),
        estimate,
        estimate_error,
    };
    write_json(out, "simulate.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    /// One click count per line.
    Counts,
    /// `x,count` rows as written by `simulate`.
    Histogram,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub input: PathBuf,
    pub format: SampleFormat,
    pub detector: DetectorConfig,
    pub n_pulses: u64,
    pub mean_clicks: f64,
    pub estimate: MuEstimate,
}

pub fn load_sample(path: &Path, format: SampleFormat, n: u32) -> Result<ClickSample, CliError> {
    let sample = match format {
        SampleFormat::Counts => read_click_sample(open(path)?, n).map_err(|e| ingest_error(path, e))?,
        SampleFormat::Histogram => {
            let histogram = crate::report::read_histogram(path)?;
            let sample = ClickSample::from_histogram(&histogram).map_err(|e| CliError::Parse {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            if sample.n_bins() != n {
                return Err(EstimationError::MismatchedN {
                    sample: sample.n_bins(),
                    detector: n,
                }
                .into());
            }
            sample
        }
    };
    Ok(sample)
}

pub fn estimate(cfg: &RunConfig, input: &Path, format: SampleFormat, out: &Path) -> Result<EstimateReport, CliError> {
    let det_cfg = cfg.detector_config()?;
    let sample = load_sample(input, format, det_cfg.n)?;
    let estimate = mle_mu(&det_cfg, &sample)?;
    let report = EstimateReport {
        input: input.to_path_buf(),
        format,
        detector: det_cfg,
        n_pulses: estimate.n_pulses,
        mean_clicks: estimate.mean_clicks,
        estimate,
    };
    ensure_dir(out)?;
    write_json(out, "estimate.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub od: f64,
    pub mu_true: f64,
    pub seed: u64,
    pub mu_hat: Option<f64>,
    pub std: Option<f64>,
    pub saturated: bool,
    /// False for saturated rows and for rows without a single click.
    pub in_fit: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub config: RunConfig,
    pub rows: Vec<SweepRow>,
    pub fit: AttenuationFit,
}

/// Simulates the configured source at `mu0 * 10^-(od - min od)` for every
/// optical density, estimates each point and fits the attenuation line.
pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<SweepReport, CliError> {
    cfg.validate()?;
    let det_cfg = cfg.detector_config()?;
    let det = cfg.sim_detector()?;
    let ods = &cfg.sweep.od_list;
    let od_min = ods.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rows = Vec::with_capacity(ods.len());
    for (i, &od) in ods.iter().enumerate() {
        let mu_true = cfg.sweep.mu0 * 10f64.powf(-(od - od_min));
        let seed = cfg.seed.wrapping_add((i as u64).wrapping_mul(SEED_STRIDE));
        let sim = run_experiment(&det, &Source::Poisson { mu: mu_true }, cfg.n_pulses, seed)?;
        let sample = ClickSample::from_histogram(&sim.histogram)?;
        let row = match mle_mu(&det_cfg, &sample) {
            Ok(est) => SweepRow {
                od,
                mu_true,
                seed,
                mu_hat: Some(est.mu_hat),
                std: Some(est.std),
                saturated: false,
                in_fit: est.mu_hat > 0.0,
            },
            Err(EstimationError::Saturated { .. }) => SweepRow {
                od,
                mu_true,
                seed,
                mu_hat: None,
                std: None,
                saturated: true,
                in_fit: false,
            },
            Err(e) => return Err(e.into()),
        };
        rows.push(row);
    }

    ensure_dir(out)?;
    write_file(out, "sweep.csv", |w| {
        writeln!(w, "# od,mu_true,mu_hat,std,saturated,in_fit")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.od,
                r.mu_true,
                r.mu_hat.unwrap_or(f64::NAN),
                r.std.unwrap_or(f64::NAN),
                u8::from(r.saturated),
                u8::from(r.in_fit)
            )?;
        }
        Ok(())
    })?;
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.in_fit)
        .map(|r| (r.od, r.mu_hat.unwrap_or_default()))
        .collect();
    let fit = attenuation_fit(&points)?;
    let report = SweepReport {
        config: cfg.clone(),
        rows,
        fit,
    };
    write_json(out, "sweep.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub detector: DetectorConfig,
    pub m_max: u32,
    #[serde(flatten)]
    pub classification: FockClassification,
}

pub fn classify(cfg: &RunConfig, out: &Path) -> Result<ClassifyReport, CliError> {
    let det_cfg = cfg.detector_config()?;
    let m_max = cfg.classify.m_max.unwrap_or_else(|| default_m_max(&det_cfg));
    let classification = fock_classify(&det_cfg, m_max)?;

    ensure_dir(out)?;
    write_file(out, "classify_matrix.csv", |w| {
        let header: Vec<String> = (0..=m_max).map(|m| format!("m{m}")).collect();
        writeln!(w, "# x,{},decision", header.join(","))?;
        for x in 0..=det_cfg.n as usize {
            let row: Vec<String> = (0..=m_max as usize)
                .map(|m| classification.likelihood(x, m).to_string())
                .collect();
            writeln!(w, "{x},{},{}", row.join(","), classification.decision[x])?;
        }
        Ok(())
    })?;
    write_file(out, "classify_success.csv", |w| {
        writeln!(w, "# m,success")?;
        for (m, p) in classification.success.iter().enumerate() {
            writeln!(w, "{m},{p}")?;
        }
        Ok(())
    })?;
    let report = ClassifyReport {
        detector: det_cfg,
        m_max,
        classification,
    };
    write_json(out, "classify.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BandwidthRow {
    pub delta_lambda_nm: f64,
    pub fractions: Vec<f64>,
    pub effective_size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandwidthReport {
    pub multiplexer: MultiplexerSpec,
    pub schedule: Vec<BinSlot>,
    pub linear_coeffs: Vec<f64>,
    pub min_bin_spacing_ns: Option<f64>,
    pub loss: LossBudget,
    pub rows: Vec<BandwidthRow>,
}

pub fn bandwidth(cfg: &RunConfig, out: &Path) -> Result<BandwidthReport, CliError> {
    let spec = &cfg.multiplexer;
    let config = |e: pnr_core::MuxError| CliError::Config(e.to_string());
    let schedule = bin_schedule(spec).map_err(config)?;
    let linear_coeffs = bin_weights(spec, 0.0).map_err(config)?.linear_coeffs;
    let rows = cfg
        .delta_lambda_grid()?
        .into_iter()
        .map(|dl| {
            Ok(BandwidthRow {
                delta_lambda_nm: dl,
                fractions: bin_weights(spec, dl).map_err(config)?.fractions,
                effective_size: effective_array_size(spec, dl).map_err(config)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    ensure_dir(out)?;
    write_file(out, "bandwidth.csv", |w| {
        let header: Vec<String> = (1..=schedule.len()).map(|i| format!("bin{i}")).collect();
        writeln!(w, "# delta_lambda_nm,{},effective_size", header.join(","))?;
        for r in &rows {
            let cols: Vec<String> = r.fractions.iter().map(f64::to_string).collect();
            writeln!(w, "{},{},{}", r.delta_lambda_nm, cols.join(","), r.effective_size)?;
        }
        Ok(())
    })?;
    write_file(out, "bandwidth_coefficients.csv", |w| {
        writeln!(w, "# bin,fiber,offset_ns,route,linear_coeff")?;
        for (i, (slot, c)) in schedule.iter().zip(&linear_coeffs).enumerate() {
            writeln!(w, "{},{},{},{},{}", i + 1, slot.fiber, slot.offset_ns, slot.route, c)?;
        }
        Ok(())
    })?;
    let report = BandwidthReport {
        multiplexer: spec.clone(),
        min_bin_spacing_ns: min_bin_spacing_ns(&schedule),
        schedule,
        linear_coeffs,
        loss: loss_budget(spec),
        rows,
    };
    write_json(out, "bandwidth.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub input: PathBuf,
    pub trigger: TriggerConfig,
    pub detector: DetectorConfig,
    pub n_triggers: u64,
    pub detector_events: u64,
    pub assigned_events: u64,
    pub stray_events: u64,
    pub estimate: Option<MuEstimate>,
    pub estimate_error: Option<String>,
}

/// Bins a time-tag file into a click sample and estimates from it. The
/// sample and the report are written even when estimation fails.
pub fn ingest(cfg: &RunConfig, input: &Path, out: &Path) -> Result<IngestReport, CliError> {
    let det_cfg = cfg.detector_config()?;
    let trigger = cfg.trigger_config()?;
    let channels = u8::try_from(trigger.n_channels())
        .map_err(|_| CliError::Config(format!("{} detector channels", trigger.n_channels())))?;
    let records = parse_timetags(open(input)?, channels).map_err(|e| ingest_error(input, e))?;
    let binned = bin_events(&records, &trigger).map_err(|e| ingest_error(input, e))?;
    let estimate = mle_mu(&det_cfg, &binned.sample);

    ensure_dir(out)?;
    write_file(out, "sample.csv", |w| write_click_sample(w, &binned.sample))?;
    let report = IngestReport {
        input: input.to_path_buf(),
        trigger,
        detector: det_cfg,
        n_triggers: binned.n_triggers,
        detector_events: binned.detector_events,
        assigned_events: binned.assigned_events,
        stray_events: binned.stray_events,
        estimate: estimate.as_ref().ok().copied(),
        estimate_error: estimate.as_ref().err().map(ToString::to_string),
    };
    write_json(out, "ingest.json", &report)?;
    estimate?;
    Ok(report)
}
