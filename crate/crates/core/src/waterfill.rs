//! Closed-form and bisection solvers for the strict-delay case (d = 1),
//! where every source must be delivered in its own slot and the problem
//! separates across slots apart from the energy budget.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::model::{BufferLimit, EnergyModel, ModelError, Policy, Scenario};

const A: f64 = 2.0 * LN_2;
const MAX_BISECT: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaterfillError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("bisection did not converge: {0}")]
    NoConvergence(String),
    #[error("no finite root: scaled cost {0} is at or above the supremum 1")]
    NoRoot(f64),
}

/// Rectangle geometry of one slot in the 2D waterfilling picture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotGeometry {
    /// Width σ/√h.
    pub m: f64,
    /// Base height 1/(σ√h).
    pub k: f64,
    /// Level at which the slot's rate hits the buffer limit.
    pub cap_level: f64,
}

impl SlotGeometry {
    pub fn new(h: f64, var: f64, buffer: BufferLimit) -> Self {
        let sigma = var.sqrt();
        let k = 1.0 / (sigma * h.sqrt());
        let cap_level = match buffer {
            BufferLimit::Finite(b) => k * (A * b).exp(),
            BufferLimit::Infinite => f64::INFINITY,
        };
        SlotGeometry { m: sigma / h.sqrt(), k, cap_level }
    }

    /// Power poured into the slot at water level `w`. A level at or above
    /// the cap counts as saturated.
    pub fn power_at(&self, w: f64) -> f64 {
        let top = if w >= self.cap_level { self.cap_level } else { w };
        (self.m * (top - self.k)).max(0.0)
    }

    /// Power that saturates the slot, infinite without a buffer limit.
    pub fn power_cap(&self) -> f64 {
        if self.cap_level.is_finite() {
            self.m * (self.cap_level - self.k)
        } else {
            f64::INFINITY
        }
    }

    /// Achieved level `K + p/M`.
    pub fn level_of(&self, p: f64) -> f64 {
        self.k + p / self.m
    }
}

pub fn geometry(s: &Scenario) -> Vec<SlotGeometry> {
    s.gains.iter().zip(&s.variances).map(|(&h, &v)| SlotGeometry::new(h, v, s.buffer)).collect()
}

fn check_plain_d1(s: &Scenario) -> Result<(), WaterfillError> {
    s.validate()?;
    if s.delay != 1 {
        return Err(WaterfillError::Precondition(format!("delay must be 1, got {}", s.delay)));
    }
    if s.proc_cost != 0.0 || s.samp_cost != 0.0 {
        return Err(WaterfillError::Precondition("processing and sampling costs must be zero".into()));
    }
    Ok(())
}

/// Water level spending `energy` over `slots`; infinite when the energy
/// exceeds what the slots can absorb before saturating.
fn fill_level(geo: &[SlotGeometry], energy: f64, tol: f64) -> Result<f64, WaterfillError> {
    let capacity: f64 = geo.iter().map(|g| g.power_cap()).sum();
    if energy > capacity {
        return Ok(f64::INFINITY);
    }
    let lo0 = geo.iter().map(|g| g.k).fold(f64::INFINITY, f64::min);
    if energy <= 0.0 {
        return Ok(lo0);
    }
    let min_m = geo.iter().map(|g| g.m).fold(f64::INFINITY, f64::min);
    let kmax = geo.iter().map(|g| g.k).fold(0.0, f64::max);
    let cap_max = geo.iter().map(|g| g.cap_level).fold(0.0, f64::max);
    let mut hi = (kmax + energy / min_m).min(cap_max);
    let mut lo = lo0;
    let used = |w: f64| geo.iter().map(|g| g.power_at(w)).sum::<f64>();
    if used(hi) < energy {
        // only possible through rounding at the saturation boundary
        return Ok(hi);
    }
    for _ in 0..MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        if used(mid) < energy {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol * hi.max(1.0) {
            return Ok(hi);
        }
    }
    if hi - lo <= 1e-9 * hi.max(1.0) {
        return Ok(hi);
    }
    Err(WaterfillError::NoConvergence(format!("water level bracket [{lo}, {hi}]")))
}

fn policy_from_powers(s: &Scenario, power: Vec<f64>) -> Policy {
    let mut policy = Policy::idle(s);
    for (i, &p) in power.iter().enumerate() {
        // a saturating power delivers the cap exactly
        let c = match s.buffer {
            BufferLimit::Finite(b) => (0.5 * (s.gains[i] * p).ln_1p() / LN_2).min(b),
            BufferLimit::Infinite => 0.5 * (s.gains[i] * p).ln_1p() / LN_2,
        };
        policy.power[i] = p;
        policy.cap_rate[i] = c;
        policy.src_rate[i] = c;
        policy.distortion[i] = s.variances[i] * (-A * c).exp();
    }
    policy
}

/// 2D waterfilling for a battery budget and strict delay.
pub fn waterfill_battery_d1(s: &Scenario, tol: f64) -> Result<Policy, WaterfillError> {
    check_plain_d1(s)?;
    let EnergyModel::Battery(e) = s.energy else {
        return Err(WaterfillError::Precondition("battery energy model required".into()));
    };
    let geo = geometry(s);
    let w = fill_level(&geo, e, tol)?;
    let power = geo.iter().map(|g| g.power_at(w)).collect();
    Ok(policy_from_powers(s, power))
}

/// Directional waterfilling under energy harvesting with strict delay.
///
/// Energy only flows forward in time. Starting at the first unassigned
/// slot, the window whose own arrivals fill it to the lowest level is
/// committed at that level (the latest such window on ties); energy a
/// saturated window cannot absorb carries into the next window.
pub fn waterfill_harvest_d1(s: &Scenario, tol: f64) -> Result<Policy, WaterfillError> {
    check_plain_d1(s)?;
    let EnergyModel::Harvest(packets) = &s.energy else {
        return Err(WaterfillError::Precondition("harvest energy model required".into()));
    };
    let geo = geometry(s);
    let n = geo.len();
    let mut power = vec![0.0; n];
    let mut start = 0;
    let mut carry = 0.0;
    while start < n {
        let mut best: Option<(usize, f64)> = None;
        let mut energy = carry;
        for end in start..n {
            energy += packets[end];
            let level = fill_level(&geo[start..=end], energy, tol)?;
            let better = match best {
                None => true,
                Some((_, b)) => level <= b,
            };
            if better {
                best = Some((end, level));
            }
        }
        let (end, level) = best.expect("window list is non-empty");
        let window_energy = carry + packets[start..=end].iter().sum::<f64>();
        let mut spent = 0.0;
        for i in start..=end {
            power[i] = geo[i].power_at(level);
            spent += power[i];
        }
        carry = (window_energy - spent).max(0.0);
        start = end + 1;
    }
    Ok(policy_from_powers(s, power))
}

/// Energy-efficient burst power: the unique `p >= 0` with
/// `ln(1+hp)·(1/h + p) = ε_p + p`.
pub fn proc_root_vp(h: f64, eps_p: f64, tol: f64) -> Result<f64, WaterfillError> {
    if !(h > 0.0) || !(eps_p >= 0.0) {
        return Err(ModelError::Domain(format!("need h > 0 and ε_p >= 0, got h={h}, ε_p={eps_p}")).into());
    }
    if eps_p == 0.0 {
        return Ok(0.0);
    }
    let f = |p: f64| (h * p).ln_1p() * (1.0 / h + p) - p - eps_p;
    let mut lo = 0.0;
    let mut hi = 1.0 / h;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut p = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECT {
        let v = f(p);
        if v.abs() <= tol {
            return Ok(p);
        }
        if v < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        // Newton on the convex increasing residual, bisection when it leaves the bracket
        let slope = (h * p).ln_1p();
        let next = p - v / slope;
        p = if slope > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            return Ok(p);
        }
    }
    Err(WaterfillError::NoConvergence(format!("burst power root near {p}")))
}

/// Marginal value of collecting more samples at per-sample rate `k`,
/// normalized by the variance: `1 − (1 + 2 ln2·k)·2^(−2k)`. Increases from
/// 0 to 1.
pub fn samp_marginal(k: f64) -> f64 {
    -((-A * k).exp_m1()) - A * k * (-A * k).exp()
}

/// Per-collected-sample rate `k >= 0` at which the sampling marginal equals
/// `scaled_cost = λ·ε_s/σ²`.
pub fn samp_root_vs(var: f64, scaled_cost: f64, tol: f64) -> Result<f64, WaterfillError> {
    if !(var > 0.0) {
        return Err(ModelError::Domain(format!("variance must be > 0, got {var}")).into());
    }
    if !(scaled_cost >= 0.0) {
        return Err(ModelError::Domain(format!("scaled cost must be >= 0, got {scaled_cost}")).into());
    }
    if scaled_cost >= 1.0 {
        return Err(WaterfillError::NoRoot(scaled_cost));
    }
    if scaled_cost == 0.0 {
        return Ok(0.0);
    }
    let f = |k: f64| samp_marginal(k) - scaled_cost;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(WaterfillError::NoRoot(scaled_cost));
        }
    }
    let mut k = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECT {
        let v = f(k);
        if v.abs() <= tol {
            return Ok(k);
        }
        if v < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let slope = A * A * k * (-A * k).exp();
        let next = k - v / slope;
        k = if slope > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            return Ok(k);
        }
    }
    Err(WaterfillError::NoConvergence(format!("sampling rate root near {k}")))
}

#[derive(Debug, Clone, Copy)]
struct SlotChoice {
    theta: f64,
    power: f64,
    value: f64,
}

impl SlotChoice {
    fn energy(&self, eps_p: f64) -> f64 {
        self.theta * (self.power + eps_p)
    }
    fn cap(&self, h: f64) -> f64 {
        0.5 * self.theta * (h * self.power).ln_1p() / LN_2
    }
}

/// Per-slot minimizer of `D + λ·energy` with processing cost.
fn best_choice(h: f64, var: f64, eps_p: f64, vp: f64, buffer: BufferLimit, lambda: f64) -> SlotChoice {
    let bmax = buffer.value();
    let pcap = if buffer.is_finite() { (A * bmax).exp_m1() / h } else { f64::INFINITY };
    let value = |theta: f64, p: f64| var * (-theta * (h * p).ln_1p()).exp() + lambda * theta * (p + eps_p);
    let mut best = SlotChoice { theta: 0.0, power: 0.0, value: var };
    let full_p = if lambda > 0.0 { ((var / (h * lambda)).sqrt() - 1.0 / h).clamp(0.0, pcap) } else { pcap };
    if full_p.is_finite() && full_p > 0.0 {
        let v = value(1.0, full_p);
        if v < best.value {
            best = SlotChoice { theta: 1.0, power: full_p, value: v };
        }
    }
    if vp > 0.0 && vp.is_finite() {
        let cv = 0.5 * (h * vp).ln_1p() / LN_2;
        let theta_max = (bmax / cv).min(1.0);
        let theta = if lambda > 0.0 {
            ((A * cv * var / (lambda * (vp + eps_p))).log2() / (2.0 * cv)).clamp(0.0, theta_max)
        } else {
            theta_max
        };
        if theta > 0.0 {
            let v = value(theta, vp);
            if v < best.value {
                best = SlotChoice { theta, power: vp, value: v };
            }
        }
    }
    best
}

/// Bursty policy for a battery budget with processing cost and strict delay.
pub fn processing_policy_d1(s: &Scenario, tol: f64) -> Result<Policy, WaterfillError> {
    s.validate()?;
    if s.delay != 1 {
        return Err(WaterfillError::Precondition(format!("delay must be 1, got {}", s.delay)));
    }
    if s.samp_cost != 0.0 {
        return Err(WaterfillError::Precondition("sampling cost must be zero".into()));
    }
    let EnergyModel::Battery(e) = s.energy else {
        return Err(WaterfillError::Precondition("battery energy model required".into()));
    };
    if s.proc_cost == 0.0 {
        return waterfill_battery_d1(s, tol);
    }
    let n = s.n_slots();
    let vps: Vec<f64> = s
        .gains
        .iter()
        .map(|&h| proc_root_vp(h, s.proc_cost, 1e-13))
        .collect::<Result<_, _>>()?;
    let choose = |lambda: f64| -> Vec<SlotChoice> {
        (0..n)
            .map(|i| best_choice(s.gains[i], s.variances[i], s.proc_cost, vps[i], s.buffer, lambda))
            .collect()
    };
    let used = |c: &[SlotChoice]| c.iter().map(|x| x.energy(s.proc_cost)).sum::<f64>();

    let mut choices = if s.buffer.is_finite() { Some(choose(0.0)) } else { None };
    let saturated = choices.as_ref().is_some_and(|c| used(c) <= e);
    if !saturated {
        let (mut lo, mut hi) = (1e-12f64, 1.0f64);
        while used(&choose(hi)) > e {
            lo = hi;
            hi *= 4.0;
            if hi > 1e300 {
                return Err(WaterfillError::NoConvergence("energy price bracket".into()));
            }
        }
        while used(&choose(lo)) < e && lo > 1e-300 {
            hi = lo;
            lo *= 0.25;
        }
        for _ in 0..MAX_BISECT {
            let mid = (lo * hi).sqrt();
            if used(&choose(mid)) > e {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 <= tol {
                break;
            }
        }
        choices = Some(choose(hi));
    }
    let choices = choices.expect("set on both branches");
    let mut policy = Policy::idle(s);
    for (i, ch) in choices.iter().enumerate() {
        let c = ch.cap(s.gains[i]).min(s.buffer.value());
        policy.burst[i] = ch.theta;
        policy.power[i] = if ch.theta > 0.0 { ch.power } else { 0.0 };
        policy.cap_rate[i] = c;
        policy.src_rate[i] = c;
        policy.distortion[i] = s.variances[i] * (-A * c).exp();
    }
    Ok(policy)
}
