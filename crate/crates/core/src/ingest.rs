//! Time-tag streams to per-pulse click counts.
//!
//! Time-tag CSV: one `channel,timestamp_ps` record per LF-terminated line, no
//! header. Channel 0 is the trigger, channels `1..` are detectors.
//! Click-sample CSV: one click count per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{ClickSample, EstimationError};
use crate::multiplexer::{bin_schedule, MultiplexerSpec, MuxError};

pub const TRIGGER_CHANNEL: u8 = 0;
/// Default trigger period: 100 kHz repetition rate.
pub const DEFAULT_PERIOD_NS: f64 = 10_000.0;
pub const DEFAULT_WINDOW_NS: f64 = 30.0;
/// Default delay between the trigger and the first bin.
pub const DEFAULT_LATENCY_NS: f64 = 100.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unknown channel {channel}")]
    UnknownChannel { line: usize, channel: u32 },
    #[error("detector event on channel {0}, which has no configured windows")]
    UnconfiguredChannel(u8),
    #[error("stream contains no trigger records")]
    NoTrigger,
    #[error("invalid trigger config: {0}")]
    InvalidConfig(String),
    #[error("channel {channel}: windows at {a} ns and {b} ns overlap")]
    OverlappingWindows { channel: u8, a: f64, b: f64 },
    #[error("rate {rate_hz} Hz over {window_ns} ns gives a probability of at least 1")]
    Nonphysical { rate_hz: f64, window_ns: f64 },
    #[error(transparent)]
    Sample(#[from] EstimationError),
    #[error(transparent)]
    Multiplexer(#[from] MuxError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTagRecord {
    pub channel: u8,
    pub timestamp_ps: u64,
}

/// Detection windows relative to each trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    pub period_ns: f64,
    pub window_ns: f64,
    /// Expected arrival offsets per detector channel; entry `i` belongs to channel `i + 1`.
    pub bin_offsets_ns: Vec<Vec<f64>>,
}

/// Half-open window `[lo_ps, hi_ps)` relative to the trigger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub channel: u8,
    pub lo_ps: f64,
    pub hi_ps: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self::from_multiplexer(
            &MultiplexerSpec::default(),
            DEFAULT_PERIOD_NS,
            DEFAULT_WINDOW_NS,
            DEFAULT_LATENCY_NS,
        )
        .expect("default multiplexer schedule is valid")
    }
}

impl TriggerConfig {
    /// Windows centred on the multiplexer arrival schedule, shifted by
    /// `latency_ns`. Fiber `f` is read on channel `f`.
    pub fn from_multiplexer(
        spec: &MultiplexerSpec,
        period_ns: f64,
        window_ns: f64,
        latency_ns: f64,
    ) -> Result<Self, IngestError> {
        let schedule = bin_schedule(spec)?;
        let mut bin_offsets_ns = vec![Vec::new(); 2];
        for slot in schedule {
            bin_offsets_ns[slot.fiber as usize - 1].push(slot.offset_ns + latency_ns);
        }
        for offsets in &mut bin_offsets_ns {
            offsets.sort_by(f64::total_cmp);
        }
        let cfg = Self {
            period_ns,
            window_ns,
            bin_offsets_ns,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_channels(&self) -> usize {
        self.bin_offsets_ns.len()
    }

    pub fn n_windows(&self) -> usize {
        self.bin_offsets_ns.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.window_ns.is_finite() && self.window_ns > 0.0) {
            return Err(IngestError::InvalidConfig(format!(
                "window_ns must be positive, got {}",
                self.window_ns
            )));
        }
        if !(self.period_ns.is_finite() && self.period_ns > 0.0) {
            return Err(IngestError::InvalidConfig(format!(
                "period_ns must be positive, got {}",
                self.period_ns
            )));
        }
        if self.bin_offsets_ns.len() >= u8::MAX as usize {
            return Err(IngestError::InvalidConfig("too many channels".into()));
        }
        let half = self.window_ns / 2.0;
        for (i, offsets) in self.bin_offsets_ns.iter().enumerate() {
            let channel = i as u8 + 1;
            let mut sorted = offsets.clone();
            sorted.sort_by(f64::total_cmp);
            for &o in &sorted {
                if !(o.is_finite() && o - half >= 0.0 && o + half <= self.period_ns) {
                    return Err(IngestError::InvalidConfig(format!(
                        "channel {channel}: window around {o} ns leaves the trigger period"
                    )));
                }
            }
            if let Some(w) = sorted.windows(2).find(|w| w[1] - w[0] < self.window_ns) {
                return Err(IngestError::OverlappingWindows {
                    channel,
                    a: w[0],
                    b: w[1],
                });
            }
        }
        Ok(())
    }

    /// All windows, channel by channel, each channel's in offset order.
    pub fn windows(&self) -> Vec<Window> {
        let half_ps = self.window_ns * 500.0;
        let mut out = Vec::with_capacity(self.n_windows());
        for (i, offsets) in self.bin_offsets_ns.iter().enumerate() {
            let mut sorted = offsets.clone();
            sorted.sort_by(f64::total_cmp);
            for o in sorted {
                let centre = o * 1e3;
                out.push(Window {
                    channel: i as u8 + 1,
                    lo_ps: centre - half_ps,
                    hi_ps: centre + half_ps,
                });
            }
        }
        out
    }
}

/// Parses the time-tag CSV. Channels above `detector_channels` are rejected.
pub fn parse_timetags<R: BufRead>(reader: R, detector_channels: u8) -> Result<Vec<TimeTagRecord>, IngestError> {
    let mut records = Vec::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let line_no = i + 1;
        let bytes = line?;
        let text = std::str::from_utf8(&bytes).map_err(|_| IngestError::Malformed {
            line: line_no,
            reason: "not UTF-8".into(),
        })?;
        let mut fields = text.split(',');
        let (Some(ch), Some(ts), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(IngestError::Malformed {
                line: line_no,
                reason: format!("expected `channel,timestamp_ps`, got {text:?}"),
            });
        };
        let channel: u32 = ch.parse().map_err(|_| IngestError::Malformed {
            line: line_no,
            reason: format!("bad channel {ch:?}"),
        })?;
        let timestamp_ps: u64 = ts.parse().map_err(|_| IngestError::Malformed {
            line: line_no,
            reason: format!("bad timestamp {ts:?}"),
        })?;
        if channel > detector_channels as u32 {
            return Err(IngestError::UnknownChannel { line: line_no, channel });
        }
        records.push(TimeTagRecord {
            channel: channel as u8,
            timestamp_ps,
        });
    }
    Ok(records)
}

pub fn write_timetags<W: Write>(mut writer: W, records: &[TimeTagRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(writer, "{},{}", r.channel, r.timestamp_ps)?;
    }
    Ok(())
}

/// Reads one click count per line.
pub fn read_click_sample<R: BufRead>(reader: R, n_bins: u32) -> Result<ClickSample, IngestError> {
    let mut counts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let x: u32 = line.parse().map_err(|_| IngestError::Malformed {
            line: i + 1,
            reason: format!("bad click count {line:?}"),
        })?;
        counts.push(x);
    }
    Ok(ClickSample::new(counts, n_bins)?)
}

pub fn write_click_sample<W: Write>(mut writer: W, sample: &ClickSample) -> std::io::Result<()> {
    for x in sample.counts() {
        writeln!(writer, "{x}")?;
    }
    Ok(())
}

/// Result of binning a time-tag stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinnedEvents {
    pub sample: ClickSample,
    pub n_triggers: u64,
    pub detector_events: u64,
    /// Events inside a window, counted with multiplicity.
    pub assigned_events: u64,
    /// Events before the first trigger or outside every window.
    pub stray_events: u64,
}

/// Assigns detector events to the windows of their most recent trigger and
/// counts lit windows per trigger.
pub fn bin_events(records: &[TimeTagRecord], cfg: &TriggerConfig) -> Result<BinnedEvents, IngestError> {
    cfg.validate()?;
    let mut sorted = records.to_vec();
    sorted.sort_unstable_by_key(|r| (r.timestamp_ps, r.channel));

    let windows = cfg.windows();
    // Per channel: window index range into `windows`.
    let mut ranges = vec![0..0; cfg.n_channels() + 1];
    let mut start = 0;
    for (c, offsets) in cfg.bin_offsets_ns.iter().enumerate() {
        ranges[c + 1] = start..start + offsets.len();
        start += offsets.len();
    }

    let mut counts = Vec::new();
    let mut lit = vec![false; windows.len()];
    let mut trigger: Option<u64> = None;
    let (mut detector_events, mut assigned, mut stray) = (0u64, 0u64, 0u64);

    let close = |lit: &mut [bool], counts: &mut Vec<u32>| {
        counts.push(lit.iter().filter(|&&l| l).count() as u32);
        lit.fill(false);
    };

    for r in &sorted {
        if r.channel == TRIGGER_CHANNEL {
            if trigger.is_some() {
                close(&mut lit, &mut counts);
            }
            trigger = Some(r.timestamp_ps);
            continue;
        }
        let range = ranges
            .get(r.channel as usize)
            .cloned()
            .ok_or(IngestError::UnconfiguredChannel(r.channel))?;
        detector_events += 1;
        let Some(t0) = trigger else {
            stray += 1;
            continue;
        };
        let dt = (r.timestamp_ps - t0) as f64;
        match windows[range.clone()]
            .iter()
            .position(|w| w.lo_ps <= dt && dt < w.hi_ps)
        {
            Some(k) => {
                lit[range.start + k] = true;
                assigned += 1;
            }
            None => stray += 1,
        }
    }
    if trigger.is_none() {
        return Err(IngestError::NoTrigger);
    }
    close(&mut lit, &mut counts);

    let n_triggers = counts.len() as u64;
    Ok(BinnedEvents {
        sample: ClickSample::new(counts, windows.len() as u32)?,
        n_triggers,
        detector_events,
        assigned_events: assigned,
        stray_events: stray,
    })
}

/// First-order probability of a dark count inside a window of `window_ns`.
pub fn dark_prob_per_bin(rate_hz: f64, window_ns: f64) -> Result<f64, IngestError> {
    if !(rate_hz.is_finite() && rate_hz >= 0.0) || !(window_ns.is_finite() && window_ns > 0.0) {
        return Err(IngestError::InvalidConfig(format!(
            "rate {rate_hz} Hz and window {window_ns} ns must be non-negative and positive"
        )));
    }
    let p = rate_hz * window_ns * 1e-9;
    if p >= 1.0 {
        return Err(IngestError::Nonphysical { rate_hz, window_ns });
    }
    Ok(p)
}
