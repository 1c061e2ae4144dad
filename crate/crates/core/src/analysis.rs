//! Water levels, buffer and battery trajectories of a policy, and checks of
//! the structure every optimal policy must have.
//!
//! The water level `ν_i = p_i + 1/h_i` of a transmitting slot is proportional
//! to the price of channel capacity in that slot (divided by the energy price
//! still in force), and the reverse level `ξ_i` is proportional to the price
//! of source rate. Prices only move across a slot boundary when a scheduling
//! constraint whose window starts or ends there is tight, or, under
//! harvesting, when the battery runs dry there. `check_structure` looks for
//! such a tight constraint behind every level change.

use serde::Serialize;
use thiserror::Error;

use crate::model::{EnergyModel, ModelError, Policy, Scenario};
use crate::solver::{policy_violation, scheduling_rows};

/// Tolerance for accepting a policy as feasible.
pub const FEAS_TOL: f64 = 1e-7;
/// Channel rates below this count as idle.
const ACTIVE: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("policy is infeasible: {constraint} violated by {violation:.3e}")]
    Infeasible { constraint: String, violation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterProfile {
    /// `p_i + 1/h_i` on transmitting slots.
    pub nu: Vec<Option<f64>>,
    /// Distortion of the collected samples, `σ_i² 2^(−2 r_i/φ_i)`.
    pub xi: Vec<f64>,
    /// Height `1/(σ_i√h_i) + p_i√h_i/σ_i` of the 2D water surface on
    /// uncapped transmitting slots; only for strict delay without fixed costs.
    pub fill: Vec<Option<f64>>,
    /// Buffered bits at the start of each slot, after that slot's arrivals.
    pub occupancy: Vec<f64>,
    /// Buffered bits left at the end of each slot.
    pub occupancy_end: Vec<f64>,
    /// Energy left at the end of each slot.
    pub battery: Vec<f64>,
}

pub fn extract_profile(policy: &Policy, scenario: &Scenario) -> Result<WaterProfile, AnalysisError> {
    scenario.validate()?;
    policy.check_dims(scenario)?;
    let (violation, constraint) = policy_violation(policy, scenario);
    if violation > FEAS_TOL || violation.is_nan() {
        return Err(AnalysisError::Infeasible { constraint, violation });
    }
    let n = scenario.n_slots();
    let nu = (0..n)
        .map(|i| {
            let active = policy.cap_rate[i] > ACTIVE && policy.power[i] > 0.0 && policy.burst[i] > 0.0;
            active.then(|| policy.power[i] + 1.0 / scenario.gains[i])
        })
        .collect();
    let plain = scenario.delay == 1 && scenario.proc_cost == 0.0 && scenario.samp_cost == 0.0;
    let bmax = scenario.buffer.value();
    let fill = (0..n)
        .map(|i| {
            let (h, sigma) = (scenario.gains[i], scenario.variances[i].sqrt());
            let open = plain && policy.cap_rate[i] > ACTIVE && policy.src_rate[i] < bmax - ACTIVE;
            open.then(|| 1.0 / (sigma * h.sqrt()) + policy.power[i] * h.sqrt() / sigma)
        })
        .collect();
    let xi = (0..n)
        .map(|i| {
            let phi = policy.sample_frac[i];
            if phi > 0.0 {
                scenario.variances[i] * (-2.0 * std::f64::consts::LN_2 * policy.src_rate[i] / phi).exp()
            } else {
                scenario.variances[i]
            }
        })
        .collect();
    let r = &policy.src_rate;
    let c = &policy.cap_rate;
    // Lindley recursion: the windowed maxima of arrivals minus service
    let mut occupancy = vec![0.0; n];
    let mut occupancy_end = vec![0.0; n];
    let mut carried = 0.0;
    for k in 0..n {
        occupancy[k] = carried + r[k];
        occupancy_end[k] = (occupancy[k] - c[k]).max(0.0);
        carried = occupancy_end[k];
    }
    let avail = scenario.energy.cumulative(n);
    let used = policy.slot_energy(scenario);
    let mut spent = 0.0;
    let battery = (0..n)
        .map(|i| {
            spent += used[i];
            avail[i] - spent
        })
        .collect();
    Ok(WaterProfile { nu, fill, xi, occupancy, occupancy_end, battery })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    LevelIncrease,
    LevelDecrease,
    FillIncrease,
    FillDecrease,
    ReverseIncrease,
    ReverseDecrease,
    Clamping,
    BatteryEmpty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub kind: FindingKind,
    /// 1-based slots; for level changes the pair of slots compared.
    pub from: usize,
    pub to: usize,
    /// Slot boundary (1-based, change occurs after it) the first
    /// justification points to.
    pub after: Option<usize>,
    pub passed: bool,
    pub detail: String,
}

/// Contiguous 0-based index windows of a scheduling row in `r` and in `c`.
struct Window {
    r: Option<(usize, usize)>,
    c: Option<(usize, usize)>,
    tight: bool,
    label: String,
}

fn span(coeffs: &[f64]) -> Option<(usize, usize)> {
    let lo = coeffs.iter().position(|a| *a != 0.0)?;
    let hi = coeffs.iter().rposition(|a| *a != 0.0)?;
    Some((lo, hi))
}

fn windows(policy: &Policy, scenario: &Scenario, eps: f64) -> Vec<Window> {
    let n = scenario.n_slots();
    let x: Vec<f64> = policy.src_rate.iter().chain(&policy.cap_rate).copied().collect();
    scheduling_rows(scenario)
        .into_iter()
        .filter(|row| !row.label.starts_with("rate_cap"))
        .map(|row| Window {
            r: span(&row.coeffs[..n]),
            c: span(&row.coeffs[n..]),
            tight: row.slack(&x) <= eps,
            label: row.label,
        })
        .collect()
}

/// Plain-language reading of a tight scheduling row.
fn describe(label: &str, delay: usize) -> String {
    let nums: Vec<usize> = label
        .trim_end_matches(']')
        .split(['[', ','])
        .skip(1)
        .filter_map(|t| t.parse().ok())
        .collect();
    match (label.split('[').next(), nums.as_slice()) {
        (Some("causality"), [i]) if *i > 1 => format!("buffer empty at end of slot {}", i - 1),
        (Some("buffer"), [_, i]) => format!("buffer full at start of slot {}", i + 1),
        (Some("delay"), [k, i]) => format!("delay window {k}..{i} tight (deadline slot {})", i + delay - 1),
        _ => format!("{label} tight"),
    }
}

/// Whether the energy budget binds at the end of slot `m`: the battery is
/// empty there and fresh energy arrives next (or the horizon ends), so the
/// cumulative constraint is not implied by a later one.
fn drained(profile: &WaterProfile, scenario: &Scenario, m: usize, eps: f64) -> bool {
    let next_arrival = match &scenario.energy {
        EnergyModel::Battery(_) => m + 1 == scenario.n_slots(),
        EnergyModel::Harvest(packets) => m + 1 == scenario.n_slots() || packets[m + 1] > 0.0,
    };
    next_arrival && profile.battery[m] <= eps
}

enum Side {
    Channel,
    Source,
    /// The 2D surface moves only with the energy price.
    Energy,
}

/// Reasons for a price change across the boundary after slot `m` (0-based).
fn reasons(
    wins: &[Window],
    profile: &WaterProfile,
    scenario: &Scenario,
    side: &Side,
    increase: bool,
    m: usize,
    eps: f64,
) -> Vec<String> {
    let mut out = Vec::new();
    if increase && !matches!(side, Side::Source) && m + 1 < scenario.n_slots() && drained(profile, scenario, m, eps) {
        out.push(format!("battery empty at slot {}", m + 1));
    }
    for w in wins.iter().filter(|w| w.tight) {
        let win = match side {
            Side::Channel => w.c,
            Side::Source => w.r,
            Side::Energy => None,
        };
        let Some((lo, hi)) = win else { continue };
        let hit = if increase { lo == m + 1 } else { hi == m };
        if hit {
            out.push(describe(&w.label, scenario.delay));
        }
    }
    out
}

fn level_findings(
    levels: &[Option<f64>],
    kinds: (FindingKind, FindingKind),
    side: Side,
    wins: &[Window],
    profile: &WaterProfile,
    scenario: &Scenario,
    eps: f64,
    out: &mut Vec<Finding>,
) {
    let active: Vec<usize> = (0..levels.len()).filter(|&i| levels[i].is_some()).collect();
    for pair in active.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (la, lb) = (levels[a].unwrap(), levels[b].unwrap());
        if (lb - la).abs() <= eps {
            continue;
        }
        let increase = lb > la;
        let mut found = Vec::new();
        let mut after = None;
        let mut drained_at = None;
        for m in a..b {
            let rs = reasons(wins, profile, scenario, &side, increase, m, eps);
            if !rs.is_empty() && after.is_none() {
                after = Some(m + 1);
            }
            if rs.first().is_some_and(|r| r.starts_with("battery")) && drained_at.is_none() {
                drained_at = Some(m + 1);
            }
            found.extend(rs);
        }
        // an emptied battery is the stronger explanation of a rise
        let after = drained_at.or(after);
        let verb = if increase { "rises" } else { "falls" };
        let passed = !found.is_empty();
        let detail = if passed {
            format!("level {verb} from {la:.6} to {lb:.6}: {}", found.join("; "))
        } else {
            format!("level {verb} from {la:.6} to {lb:.6} with no tight constraint in between")
        };
        out.push(Finding {
            kind: if increase { kinds.0 } else { kinds.1 },
            from: a + 1,
            to: b + 1,
            after,
            passed,
            detail,
        });
    }
}

/// Structural findings for a feasible policy: one per level change between
/// consecutive active slots, failed clamping bounds, and (under
/// harvesting) slots where the battery runs dry before the horizon ends.
pub fn check_structure(profile: &WaterProfile, policy: &Policy, scenario: &Scenario, eps: f64) -> Vec<Finding> {
    let n = scenario.n_slots();
    let wins = windows(policy, scenario, eps);
    let mut out = Vec::new();
    // without a binding energy budget later on, a slot's energy price is zero
    // and its water level carries no information
    let priced: Vec<Option<f64>> = (0..n)
        .map(|i| profile.nu[i].filter(|_| (i..n).any(|m| drained(profile, scenario, m, eps))))
        .collect();
    level_findings(
        &priced,
        (FindingKind::LevelIncrease, FindingKind::LevelDecrease),
        Side::Channel,
        &wins,
        profile,
        scenario,
        eps,
        &mut out,
    );
    let priced_fill: Vec<Option<f64>> = (0..n)
        .map(|i| profile.fill[i].filter(|_| (i..n).any(|m| drained(profile, scenario, m, eps))))
        .collect();
    level_findings(
        &priced_fill,
        (FindingKind::FillIncrease, FindingKind::FillDecrease),
        Side::Energy,
        &wins,
        profile,
        scenario,
        eps,
        &mut out,
    );
    // reverse levels are tied to the rate price only strictly between the clamps
    let bmax = scenario.buffer.value();
    let reverse: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let r = policy.src_rate[i];
            (r > ACTIVE && r < bmax - ACTIVE && policy.sample_frac[i] > 0.0).then_some(profile.xi[i])
        })
        .collect();
    level_findings(
        &reverse,
        (FindingKind::ReverseIncrease, FindingKind::ReverseDecrease),
        Side::Source,
        &wins,
        profile,
        scenario,
        eps,
        &mut out,
    );
    if scenario.samp_cost == 0.0 {
        out.extend(clamping_failures(policy, scenario, CLAMP_TOL));
    }
    if matches!(scenario.energy, EnergyModel::Harvest(_)) {
        for m in 0..n.saturating_sub(1) {
            if drained(profile, scenario, m, eps) && profile.nu.iter().skip(m + 1).any(Option::is_some) {
                out.push(Finding {
                    kind: FindingKind::BatteryEmpty,
                    from: m + 1,
                    to: m + 1,
                    after: Some(m + 1),
                    passed: true,
                    detail: format!("battery empty at slot {}", m + 1),
                });
            }
        }
    }
    out
}

pub const CLAMP_TOL: f64 = 1e-8;

/// Slots whose distortion leaves `[σ² 2^(−2 B_max), σ²]` by more than `tol`.
pub fn clamping_failures(policy: &Policy, scenario: &Scenario, tol: f64) -> Vec<Finding> {
    let bmax = scenario.buffer.value();
    (0..scenario.n_slots())
        .filter_map(|i| {
            let var = scenario.variances[i];
            let floor = var * (-2.0 * std::f64::consts::LN_2 * bmax).exp();
            let d = policy.distortion[i];
            (d < floor - tol || d > var + tol).then(|| Finding {
                kind: FindingKind::Clamping,
                from: i + 1,
                to: i + 1,
                after: None,
                passed: false,
                detail: format!("distortion {d:.9} outside [{floor:.9}, {var:.9}]"),
            })
        })
        .collect()
}

pub fn all_passed(findings: &[Finding]) -> bool {
    findings.iter().all(|f| f.passed)
}
