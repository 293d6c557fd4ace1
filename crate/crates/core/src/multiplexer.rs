//! Fiber-coupler delay tree that turns one input pulse into `2^stages`
//! time-bins on two output fibers.
//!
//! Coupler `k` feeds coupler `k + 1` through two arms; the arm leaving the
//! lower port carries the `k`-th delay loop. A bin is identified by the
//! sequence of straight (`S`) and cross (`X`) passes its light takes. Straight
//! transmission is `1/2 + a dl`, cross transmission `1/2 - a dl`.
//!
//! Fiber 1 is the output port opposite the chosen input port, fiber 2 the one
//! on the same side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Multiplexer loss measured on the reference setup, in dB.
pub const MEASURED_LOSS_DB: f64 = 0.63;
/// Maximum count rate of the reference click detectors.
pub const DETECTOR_MAX_COUNT_RATE_HZ: f64 = 10e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MuxError {
    #[error("invalid multiplexer spec: {0}")]
    InvalidSpec(String),
    #[error("invalid routing table: {0}")]
    InvalidRouting(String),
    #[error("|a * dl| = {0} must stay below 1/2")]
    CouplingOutOfRange(f64),
    #[error("fiber {fiber}: bins at {a} ns and {b} ns are closer than the {window} ns window")]
    OverlappingBins { fiber: u8, a: f64, b: f64, window: f64 },
    #[error("efficiency list must be non-empty with entries in [0, 1]")]
    InvalidEta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    Upper,
    Lower,
}

impl Port {
    fn flip(self) -> Self {
        match self {
            Port::Upper => Port::Lower,
            Port::Lower => Port::Upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Straight,
    Cross,
}

impl Pass {
    fn sign(self) -> f64 {
        match self {
            Pass::Straight => 1.0,
            Pass::Cross => -1.0,
        }
    }

    fn parse(c: char) -> Option<Self> {
        match c {
            'S' => Some(Pass::Straight),
            'X' => Some(Pass::Cross),
            _ => None,
        }
    }

    fn symbol(self) -> char {
        match self {
            Pass::Straight => 'S',
            Pass::Cross => 'X',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplerSpec {
    /// Change of straight-through transmission per nm of detuning (1/nm).
    pub slope_a: f64,
    /// Excess loss per coupler (dB).
    pub excess_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiplexerSpec {
    /// Couplers in series.
    pub stages: u32,
    /// Delay of the loop after each coupler but the last (ns).
    pub loop_delays_ns: Vec<f64>,
    pub fiber_loss_db_per_km: f64,
    /// Average fiber length travelled by a pulse (m).
    pub avg_path_m: f64,
    pub coupler: CouplerSpec,
    pub input_port: Port,
    /// Detection window used to check that bins do not overlap (ns).
    pub window_ns: f64,
    /// Pass sequences (`"SXSS"`, ...) in bin order. `None` selects the
    /// default order: fiber 1 then fiber 2, each by arrival time.
    pub routing: Option<Vec<String>>,
}

impl Default for MultiplexerSpec {
    fn default() -> Self {
        Self {
            stages: 4,
            loop_delays_ns: vec![150.0, 300.0, 600.0],
            fiber_loss_db_per_km: 2.5,
            avg_path_m: 105.0,
            coupler: CouplerSpec {
                slope_a: 0.005,
                excess_loss_db: 0.1,
            },
            input_port: Port::Upper,
            window_ns: 30.0,
            routing: None,
        }
    }
}

/// Where and when a bin arrives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSlot {
    pub fiber: u8,
    pub offset_ns: f64,
    pub route: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinWeights {
    /// Normalized power per bin.
    pub fractions: Vec<f64>,
    /// First-order coefficient `c_i` in `fraction_i = 2^-stages + c_i a dl`.
    pub linear_coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub total_db: f64,
    pub transmission: f64,
}

impl MultiplexerSpec {
    pub fn n_bins(&self) -> usize {
        1usize << self.stages
    }

    pub fn validate(&self) -> Result<(), MuxError> {
        if self.stages == 0 || self.stages > 16 {
            return Err(MuxError::InvalidSpec(format!(
                "stages must be in 1..=16, got {}",
                self.stages
            )));
        }
        if self.loop_delays_ns.len() + 1 != self.stages as usize {
            return Err(MuxError::InvalidSpec(format!(
                "{} stages need {} loop delays, got {}",
                self.stages,
                self.stages - 1,
                self.loop_delays_ns.len()
            )));
        }
        if self.loop_delays_ns.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(MuxError::InvalidSpec("loop delays must be positive".into()));
        }
        if self.loop_delays_ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MuxError::InvalidSpec("loop delays must be strictly increasing".into()));
        }
        let nonneg = [
            ("fiber_loss_db_per_km", self.fiber_loss_db_per_km),
            ("avg_path_m", self.avg_path_m),
            ("excess_loss_db", self.coupler.excess_loss_db),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MuxError::InvalidSpec(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.coupler.slope_a.is_finite() {
            return Err(MuxError::InvalidSpec("slope_a must be finite".into()));
        }
        if !(self.window_ns.is_finite() && self.window_ns > 0.0) {
            return Err(MuxError::InvalidSpec("window_ns must be positive".into()));
        }
        self.routes().map(|_| ())
    }

    /// Resolved routing table, one pass sequence per bin.
    pub fn routes(&self) -> Result<Vec<Vec<Pass>>, MuxError> {
        match &self.routing {
            None => Ok(self.default_routes()),
            Some(table) => self.parse_routes(table),
        }
    }

    fn parse_routes(&self, table: &[String]) -> Result<Vec<Vec<Pass>>, MuxError> {
        let k = self.stages as usize;
        if table.len() != self.n_bins() {
            return Err(MuxError::InvalidRouting(format!(
                "expected {} routes, got {}",
                self.n_bins(),
                table.len()
            )));
        }
        let mut routes = Vec::with_capacity(table.len());
        let mut seen = std::collections::HashSet::new();
        for (i, text) in table.iter().enumerate() {
            let route: Option<Vec<Pass>> = text.chars().map(Pass::parse).collect();
            let route = route
                .filter(|r| r.len() == k)
                .ok_or_else(|| MuxError::InvalidRouting(format!("bin {i}: {text:?} is not {k} of S/X")))?;
            if !seen.insert(text.clone()) {
                return Err(MuxError::InvalidRouting(format!("bin {i}: route {text} repeated")));
            }
            routes.push(route);
        }
        Ok(routes)
    }

    fn default_routes(&self) -> Vec<Vec<Pass>> {
        let k = self.stages as usize;
        let mut routes: Vec<Vec<Pass>> = (0..self.n_bins())
            .map(|bits| {
                (0..k)
                    .map(|i| {
                        if bits >> (k - 1 - i) & 1 == 0 {
                            Pass::Straight
                        } else {
                            Pass::Cross
                        }
                    })
                    .collect()
            })
            .collect();
        routes.sort_by(|a, b| {
            let (fa, oa) = self.trace(a);
            let (fb, ob) = self.trace(b);
            fa.cmp(&fb).then(oa.total_cmp(&ob))
        });
        routes
    }

    /// Output fiber and accumulated loop delay of a route.
    fn trace(&self, route: &[Pass]) -> (u8, f64) {
        let mut port = self.input_port;
        let mut delay = 0.0;
        for (k, pass) in route.iter().enumerate() {
            if *pass == Pass::Cross {
                port = port.flip();
            }
            if port == Port::Lower {
                if let Some(d) = self.loop_delays_ns.get(k) {
                    delay += d;
                }
            }
        }
        let fiber = if port == self.input_port { 2 } else { 1 };
        (fiber, delay)
    }
}

fn route_string(route: &[Pass]) -> String {
    route.iter().map(|p| p.symbol()).collect()
}

/// Normalized per-bin power at detuning `delta_lambda_nm` and its first-order
/// coefficients.
pub fn bin_weights(spec: &MultiplexerSpec, delta_lambda_nm: f64) -> Result<BinWeights, MuxError> {
    spec.validate()?;
    let eps = coupling_offset(spec, delta_lambda_nm)?;
    let routes = spec.routes()?;
    let raw: Vec<f64> = routes
        .iter()
        .map(|r| r.iter().map(|p| 0.5 + p.sign() * eps).product())
        .collect();
    let total: f64 = raw.iter().sum();
    let scale = 2f64.powi(1 - spec.stages as i32);
    Ok(BinWeights {
        fractions: raw.iter().map(|p| p / total).collect(),
        linear_coeffs: routes
            .iter()
            .map(|r| scale * r.iter().map(|p| p.sign()).sum::<f64>())
            .collect(),
    })
}

fn coupling_offset(spec: &MultiplexerSpec, delta_lambda_nm: f64) -> Result<f64, MuxError> {
    let eps = spec.coupler.slope_a * delta_lambda_nm;
    if eps.is_nan() || eps.abs() >= 0.5 {
        return Err(MuxError::CouplingOutOfRange(eps.abs()));
    }
    Ok(eps)
}

/// Number of bins whose power does not drop, to first order, at the given detuning.
pub fn effective_array_size(spec: &MultiplexerSpec, delta_lambda_nm: f64) -> Result<usize, MuxError> {
    let weights = bin_weights(spec, delta_lambda_nm)?;
    let direction = spec.coupler.slope_a * delta_lambda_nm;
    if direction == 0.0 {
        return Ok(weights.linear_coeffs.len());
    }
    let sign = direction.signum();
    Ok(weights.linear_coeffs.iter().filter(|&&c| c * sign >= 0.0).count())
}

/// Coupler excess loss plus fiber propagation loss.
pub fn loss_budget(spec: &MultiplexerSpec) -> LossBudget {
    let total_db =
        spec.stages as f64 * spec.coupler.excess_loss_db + spec.fiber_loss_db_per_km * spec.avg_path_m / 1000.0;
    LossBudget {
        total_db,
        transmission: 10f64.powf(-total_db / 10.0),
    }
}

/// Fiber and arrival offset of every bin, in bin order.
pub fn bin_schedule(spec: &MultiplexerSpec) -> Result<Vec<BinSlot>, MuxError> {
    spec.validate()?;
    let slots: Vec<BinSlot> = spec
        .routes()?
        .iter()
        .map(|r| {
            let (fiber, offset_ns) = spec.trace(r);
            BinSlot {
                fiber,
                offset_ns,
                route: route_string(r),
            }
        })
        .collect();
    for fiber in [1u8, 2] {
        let mut offsets: Vec<f64> = slots.iter().filter(|s| s.fiber == fiber).map(|s| s.offset_ns).collect();
        offsets.sort_by(f64::total_cmp);
        if let Some(w) = offsets.windows(2).find(|w| w[1] - w[0] < spec.window_ns) {
            return Err(MuxError::OverlappingBins {
                fiber,
                a: w[0],
                b: w[1],
                window: spec.window_ns,
            });
        }
    }
    Ok(slots)
}

/// Smallest gap between consecutive bins on one fiber.
pub fn min_bin_spacing_ns(schedule: &[BinSlot]) -> Option<f64> {
    [1u8, 2]
        .iter()
        .filter_map(|&fiber| {
            let mut offsets: Vec<f64> = schedule
                .iter()
                .filter(|s| s.fiber == fiber)
                .map(|s| s.offset_ns)
                .collect();
            offsets.sort_by(f64::total_cmp);
            offsets.windows(2).map(|w| w[1] - w[0]).min_by(f64::total_cmp)
        })
        .min_by(f64::total_cmp)
}

/// Multiplexer transmission times the mean detector efficiency.
pub fn overall_efficiency(spec: &MultiplexerSpec, detector_etas: &[f64]) -> Result<f64, MuxError> {
    efficiency_from_transmission(loss_budget(spec).transmission, detector_etas)
}

pub fn efficiency_from_transmission(transmission: f64, detector_etas: &[f64]) -> Result<f64, MuxError> {
    if detector_etas.is_empty() || detector_etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(MuxError::InvalidEta);
    }
    Ok(transmission * detector_etas.iter().sum::<f64>() / detector_etas.len() as f64)
}
