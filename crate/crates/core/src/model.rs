//! Scenario and policy data model, plus the unit conversions between
//! power, capacity, rate and distortion.
//!
//! All rates are in bits per source sample (base-2 logs). Samples per slot
//! and slot duration are normalized to one, so a slot's energy equals its
//! average power.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected} slots, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// Upper limit on buffered compressed data, in bits per source sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BufferLimit {
    Finite(f64),
    Infinite,
}

impl BufferLimit {
    pub fn is_finite(&self) -> bool {
        matches!(self, BufferLimit::Finite(_))
    }

    /// The limit as a float, `f64::INFINITY` when unbounded.
    pub fn value(&self) -> f64 {
        match *self {
            BufferLimit::Finite(b) => b,
            BufferLimit::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for BufferLimit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            BufferLimit::Finite(b) => s.serialize_f64(b),
            BufferLimit::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for BufferLimit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(b) => Ok(BufferLimit::Finite(b)),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "Infinity" | "infinite") => {
                Ok(BufferLimit::Infinite)
            }
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// How energy becomes available to the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyModel {
    /// A single budget available before the first slot.
    Battery(f64),
    /// Packets arriving at the start of each slot.
    Harvest(Vec<f64>),
}

impl EnergyModel {
    /// Cumulative energy available by the end of each slot.
    pub fn cumulative(&self, n: usize) -> Vec<f64> {
        match self {
            EnergyModel::Battery(e) => vec![*e; n],
            EnergyModel::Harvest(packets) => packets
                .iter()
                .scan(0.0, |acc, e| {
                    *acc += e;
                    Some(*acc)
                })
                .collect(),
        }
    }

    pub fn total(&self) -> f64 {
        match self {
            EnergyModel::Battery(e) => *e,
            EnergyModel::Harvest(packets) => packets.iter().sum(),
        }
    }
}

/// Which of the studied energy models a scenario falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Battery,
    Harvest,
    Processing,
    Sampling,
    /// More than one of harvesting, processing cost and sampling cost.
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub gains: Vec<f64>,
    pub variances: Vec<f64>,
    pub energy: EnergyModel,
    pub buffer: BufferLimit,
    pub delay: usize,
    #[serde(default)]
    pub proc_cost: f64,
    #[serde(default)]
    pub samp_cost: f64,
}

impl Scenario {
    /// Battery-run scenario without processing or sampling cost.
    pub fn battery(
        gains: Vec<f64>,
        variances: Vec<f64>,
        energy: f64,
        buffer: BufferLimit,
        delay: usize,
    ) -> Result<Self, ModelError> {
        let s = Scenario {
            gains,
            variances,
            energy: EnergyModel::Battery(energy),
            buffer,
            delay,
            proc_cost: 0.0,
            samp_cost: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n_slots(&self) -> usize {
        self.gains.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.gains.len();
        if n == 0 {
            return Err(ModelError::InvalidScenario("at least one slot is required".into()));
        }
        if self.variances.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: self.variances.len() });
        }
        if let Some((i, h)) = self.gains.iter().enumerate().find(|(_, h)| !(**h > 0.0 && h.is_finite())) {
            return Err(ModelError::InvalidScenario(format!("gain {i} must be positive, got {h}")));
        }
        if let Some((i, v)) =
            self.variances.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(ModelError::InvalidScenario(format!("variance {i} must be positive, got {v}")));
        }
        match &self.energy {
            EnergyModel::Battery(e) if !(*e >= 0.0 && e.is_finite()) => {
                return Err(ModelError::InvalidScenario(format!("battery energy must be >= 0, got {e}")));
            }
            EnergyModel::Harvest(packets) => {
                if packets.len() != n {
                    return Err(ModelError::DimensionMismatch { expected: n, got: packets.len() });
                }
                if let Some((i, e)) = packets.iter().enumerate().find(|(_, e)| !(**e >= 0.0 && e.is_finite())) {
                    return Err(ModelError::InvalidScenario(format!(
                        "harvested energy {i} must be >= 0, got {e}"
                    )));
                }
            }
            _ => {}
        }
        if let BufferLimit::Finite(b) = self.buffer {
            if !(b > 0.0 && b.is_finite()) {
                return Err(ModelError::InvalidScenario(format!("buffer limit must be positive, got {b}")));
            }
        }
        if self.delay < 1 || self.delay > n {
            return Err(ModelError::InvalidScenario(format!(
                "delay must lie in [1, {n}], got {}",
                self.delay
            )));
        }
        if !(self.proc_cost >= 0.0 && self.proc_cost.is_finite()) {
            return Err(ModelError::InvalidScenario(format!("processing cost must be >= 0, got {}", self.proc_cost)));
        }
        if !(self.samp_cost >= 0.0 && self.samp_cost.is_finite()) {
            return Err(ModelError::InvalidScenario(format!("sampling cost must be >= 0, got {}", self.samp_cost)));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        let harvest = matches!(self.energy, EnergyModel::Harvest(_));
        let proc = self.proc_cost > 0.0;
        let samp = self.samp_cost > 0.0;
        match (harvest, proc, samp) {
            (false, false, false) => Variant::Battery,
            (true, false, false) => Variant::Harvest,
            (false, true, false) => Variant::Processing,
            (false, false, true) => Variant::Sampling,
            _ => Variant::Combined,
        }
    }

    /// False when several energy mechanisms are combined; such scenarios are
    /// solved but their structure has not been characterized.
    pub fn is_validated(&self) -> bool {
        self.variant() != Variant::Combined
    }

    /// Sum of source variances, the distortion of sending nothing.
    pub fn total_variance(&self) -> f64 {
        self.variances.iter().sum()
    }

    /// Power needed in slot `i` to fill the buffer limit in one slot.
    pub fn power_cap(&self, i: usize) -> f64 {
        match self.buffer {
            BufferLimit::Finite(b) => (2f64.powf(2.0 * b) - 1.0) / self.gains[i],
            BufferLimit::Infinite => f64::INFINITY,
        }
    }
}

/// Per-slot transmission policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Transmit power while transmitting (burst power when `burst < 1`).
    pub power: Vec<f64>,
    pub cap_rate: Vec<f64>,
    pub src_rate: Vec<f64>,
    pub distortion: Vec<f64>,
    pub burst: Vec<f64>,
    pub sample_frac: Vec<f64>,
}

impl Policy {
    /// The policy that transmits nothing.
    pub fn idle(scenario: &Scenario) -> Self {
        let n = scenario.n_slots();
        Policy {
            power: vec![0.0; n],
            cap_rate: vec![0.0; n],
            src_rate: vec![0.0; n],
            distortion: scenario.variances.clone(),
            burst: vec![if scenario.proc_cost > 0.0 { 0.0 } else { 1.0 }; n],
            sample_frac: vec![if scenario.samp_cost > 0.0 { 0.0 } else { 1.0 }; n],
        }
    }

    pub fn n_slots(&self) -> usize {
        self.power.len()
    }

    /// Energy drawn in each slot, including processing and sampling costs.
    pub fn slot_energy(&self, scenario: &Scenario) -> Vec<f64> {
        (0..self.n_slots())
            .map(|i| {
                let tx = if self.burst[i] > 0.0 {
                    self.burst[i] * (self.power[i] + scenario.proc_cost)
                } else {
                    0.0
                };
                tx + self.sample_frac[i] * scenario.samp_cost
            })
            .collect()
    }

    pub fn check_dims(&self, scenario: &Scenario) -> Result<(), ModelError> {
        let n = scenario.n_slots();
        for len in [
            self.power.len(),
            self.cap_rate.len(),
            self.src_rate.len(),
            self.distortion.len(),
            self.burst.len(),
            self.sample_frac.len(),
        ] {
            if len != n {
                return Err(ModelError::DimensionMismatch { expected: n, got: len });
            }
        }
        Ok(())
    }
}

/// Capacity in bits per sample delivered by power `p` used over a fraction
/// `theta` of the slot.
pub fn cap_from_power(p: f64, h: f64, theta: f64) -> Result<f64, ModelError> {
    if !(p >= 0.0) {
        return Err(ModelError::Domain(format!("power must be >= 0, got {p}")));
    }
    if !(h > 0.0) {
        return Err(ModelError::Domain(format!("gain must be > 0, got {h}")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(ModelError::Domain(format!("burst fraction must lie in [0, 1], got {theta}")));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    Ok(0.5 * theta * (h * p).ln_1p() / std::f64::consts::LN_2)
}

/// Energy spent in a slot to deliver `c` bits per sample in a fraction
/// `theta` of the slot: `theta * (2^(2c/theta) - 1) / h`. Equals the power
/// when `theta = 1`; closed at `theta = 0, c = 0`.
pub fn power_from_cap(c: f64, h: f64, theta: f64) -> Result<f64, ModelError> {
    let p = burst_power_from_cap(c, h, theta)?;
    Ok(theta * p)
}

/// Transmit power during the burst needed for `c` bits per sample in a
/// fraction `theta` of the slot. Exact inverse of [`cap_from_power`].
pub fn burst_power_from_cap(c: f64, h: f64, theta: f64) -> Result<f64, ModelError> {
    if !(c >= 0.0) {
        return Err(ModelError::Domain(format!("capacity must be >= 0, got {c}")));
    }
    if !(h > 0.0) {
        return Err(ModelError::Domain(format!("gain must be > 0, got {h}")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(ModelError::Domain(format!("burst fraction must lie in [0, 1], got {theta}")));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    if theta == 0.0 {
        return Err(ModelError::Domain("positive capacity with zero burst fraction".into()));
    }
    Ok((2.0 * std::f64::consts::LN_2 * c / theta).exp_m1() / h)
}

/// Mean squared error of a Gaussian source of variance `var` compressed at
/// `r` bits per sample when a fraction `phi` of its samples is collected.
pub fn distortion_from_rate(r: f64, var: f64, phi: f64) -> Result<f64, ModelError> {
    if !(r >= 0.0) {
        return Err(ModelError::Domain(format!("rate must be >= 0, got {r}")));
    }
    if !(var > 0.0) {
        return Err(ModelError::Domain(format!("variance must be > 0, got {var}")));
    }
    if !(0.0..=1.0).contains(&phi) {
        return Err(ModelError::Domain(format!("sampling fraction must lie in [0, 1], got {phi}")));
    }
    if phi == 0.0 {
        if r > 0.0 {
            return Err(ModelError::Domain("positive rate with zero sampling fraction".into()));
        }
        return Ok(var);
    }
    Ok(var * (1.0 - phi) + var * phi * (-2.0 * r / phi).exp2())
}

/// Rate needed to reach distortion `d` when all samples are collected.
pub fn rate_from_distortion(d: f64, var: f64) -> Result<f64, ModelError> {
    if !(d > 0.0 && d <= var) {
        return Err(ModelError::Domain(format!("distortion must lie in (0, {var}], got {d}")));
    }
    Ok(0.5 * (var / d).log2())
}

pub fn total_distortion(policy: &Policy, scenario: &Scenario) -> Result<f64, ModelError> {
    policy.check_dims(scenario)?;
    Ok(policy.distortion.iter().sum())
}
