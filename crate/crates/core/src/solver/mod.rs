//! Interior-point solver for the general allocation problem: any delay,
//! any buffer limit, battery or harvested energy, optional processing and
//! sampling costs.

pub mod barrier;
pub mod problem;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{build_reduced_system, BufferSpec, DenseRow, BUFFER_VAR};
use crate::model::{
    burst_power_from_cap, distortion_from_rate, BufferLimit, EnergyModel, ModelError, Policy, Scenario, Variant,
};
use barrier::{minimize, BarrierProgram, BarrierSettings, SparseRow};
use problem::{Checkpoint, Layout, SensorProgram};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub max_newton: usize,
    pub barrier_mu: f64,
    pub theta_floor: f64,
    pub phi_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_gap: 1e-9,
            tol_feas: 1e-9,
            max_newton: 500,
            barrier_mu: 10.0,
            theta_floor: 1e-7,
            phi_floor: 1e-7,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [
            ("tol_gap", self.tol_gap),
            ("tol_feas", self.tol_feas),
            ("theta_floor", self.theta_floor),
            ("phi_floor", self.phi_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolveError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.barrier_mu > 1.0) {
            return Err(SolveError::Config(format!("barrier_mu must exceed 1, got {}", self.barrier_mu)));
        }
        if self.max_newton == 0 {
            return Err(SolveError::Config("max_newton must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scenario is a {got:?} scenario, expected {expected:?}")]
    WrongVariant { expected: Variant, got: Variant },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub constraint: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub policy: Policy,
    pub objective: f64,
    pub feas_residual: f64,
    pub iterations: usize,
    pub status: Status,
    pub multiplier_estimates: Option<Vec<Multiplier>>,
}

/// The scheduling constraints of a scenario as floating-point rows over
/// `[r_1..r_N, c_1..c_N]`, with a finite buffer limit substituted.
pub fn scheduling_rows(scenario: &Scenario) -> Vec<DenseRow> {
    let n = scenario.n_slots();
    let spec = match scenario.buffer {
        BufferLimit::Infinite => BufferSpec::Infinite,
        BufferLimit::Finite(_) => BufferSpec::Symbolic,
    };
    let sys = build_reduced_system(n, scenario.delay, spec).expect("validated scenario has a valid delay");
    let order: Vec<String> = (1..=n).map(|i| format!("r_{i}")).chain((1..=n).map(|i| format!("c_{i}"))).collect();
    let mut values = BTreeMap::new();
    values.insert(BUFFER_VAR.to_string(), scenario.buffer.value());
    sys.dense_rows(&order, &values).expect("reduced system is over r, c and B")
}

/// Largest violation of the scheduling and energy constraints by a policy
/// (zero when feasible), with the name of the worst constraint.
pub fn policy_violation(policy: &Policy, scenario: &Scenario) -> (f64, String) {
    let n = scenario.n_slots();
    let x: Vec<f64> = policy.src_rate.iter().chain(&policy.cap_rate).copied().collect();
    let mut worst = (0.0, String::new());
    let mut note = |v: f64, name: String| {
        if v > worst.0 || v.is_nan() {
            worst = (v, name);
        }
    };
    for row in scheduling_rows(scenario) {
        note(-row.slack(&x), row.label);
    }
    for i in 0..n {
        note(-policy.src_rate[i], format!("r[{}]>=0", i + 1));
        note(-policy.cap_rate[i], format!("c[{}]>=0", i + 1));
        if scenario.buffer.is_finite() {
            note(policy.src_rate[i] - scenario.buffer.value(), format!("rate_cap[{}]", i + 1));
        }
    }
    let used = policy.slot_energy(scenario);
    let avail = scenario.energy.cumulative(n);
    let mut acc = 0.0;
    for i in 0..n {
        acc += used[i];
        let scale = 1.0 + avail[i].abs();
        note((acc - avail[i]) / scale, format!("energy[{}]", i + 1));
    }
    worst
}

fn require(s: &Scenario, expected: Variant) -> Result<(), SolveError> {
    s.validate()?;
    let got = s.variant();
    if got != expected {
        return Err(SolveError::WrongVariant { expected, got });
    }
    Ok(())
}

pub fn solve_battery(s: &Scenario, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    require(s, Variant::Battery)?;
    solve(s, cfg)
}

pub fn solve_harvest(s: &Scenario, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    require(s, Variant::Harvest)?;
    solve(s, cfg)
}

pub fn solve_processing(s: &Scenario, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    require(s, Variant::Processing)?;
    solve(s, cfg)
}

pub fn solve_sampling(s: &Scenario, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    require(s, Variant::Sampling)?;
    solve(s, cfg)
}

fn idle_report(s: &Scenario) -> SolveReport {
    let policy = Policy::idle(s);
    SolveReport {
        objective: policy.distortion.iter().sum(),
        policy,
        feas_residual: 0.0,
        iterations: 0,
        status: Status::Optimal,
        multiplier_estimates: None,
    }
}

/// Solves any scenario, including combinations of energy mechanisms.
pub fn solve(s: &Scenario, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    s.validate()?;
    cfg.validate()?;
    let n = s.n_slots();
    if s.energy.total() <= 0.0 {
        return Ok(idle_report(s));
    }
    let layout = Layout { n, proc: s.proc_cost > 0.0, samp: s.samp_cost > 0.0 };
    let checkpoints = checkpoints(&s.energy, n);
    let start = StartPoint::new(s, &layout, &checkpoints, cfg);
    let rows = full_rows(s, &layout, &start);

    let mut fixed: Vec<Option<f64>> = vec![None; layout.dim()];
    if let EnergyModel::Harvest(packets) = &s.energy {
        let first = packets.iter().position(|e| *e > 0.0).unwrap_or(n);
        for i in 0..first {
            pin_slot_silent(&layout, &mut fixed, i);
            if layout.samp {
                fixed[layout.r(i)] = Some(0.0);
            }
        }
    }
    propagate(&layout, &mut fixed, &rows);

    let settings = BarrierSettings { tol_gap: cfg.tol_gap, max_newton: cfg.max_newton, mu: cfg.barrier_mu };
    let mut iterations = 0;
    let mut converged = true;
    let mut duals = Vec::new();
    let mut x;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let live: Vec<Checkpoint> = checkpoints
            .iter()
            .filter(|cp| (0..=cp.last).any(|i| slot_has_free_energy(&layout, &fixed, i)))
            .cloned()
            .collect();
        let program = SensorProgram::new(
            layout,
            s.gains.clone(),
            s.variances.clone(),
            s.proc_cost,
            s.samp_cost,
            fixed.clone(),
            &rows,
            live,
        );
        if program.dim() == 0 {
            x = program.full(&[]);
            break;
        }
        let y0 = start.find(&program)?;
        let res = minimize(&program, y0, &settings);
        iterations += res.iterations;
        converged = res.converged;
        duals = res.duals;
        x = program.full(&res.x);
        let mut snapped = false;
        for i in 0..n {
            if let Some(k) = layout.theta(i) {
                if fixed[k].is_none() && x[k] < 2.0 * start.theta_floor {
                    fixed[k] = Some(0.0);
                    fixed[layout.c(i)] = Some(0.0);
                    snapped = true;
                }
            }
            if let Some(k) = layout.phi(i) {
                if fixed[k].is_none() && x[k] < 2.0 * start.phi_floor {
                    fixed[k] = Some(0.0);
                    fixed[layout.r(i)] = Some(0.0);
                    snapped = true;
                }
            }
        }
        if !snapped || !converged || rounds > n + 1 {
            break;
        }
        propagate(&layout, &mut fixed, &rows);
    }

    let policy = build_policy(s, &layout, &x)?;
    let (feas_residual, _) = policy_violation(&policy, s);
    let feas_residual = feas_residual.max(0.0);
    let status = if converged && feas_residual <= cfg.tol_feas { Status::Optimal } else { Status::MaxIter };
    Ok(SolveReport {
        objective: policy.distortion.iter().sum(),
        policy,
        feas_residual,
        iterations,
        status,
        multiplier_estimates: Some(
            duals.into_iter().map(|(constraint, value)| Multiplier { constraint, value }).collect(),
        ),
    })
}

fn checkpoints(energy: &EnergyModel, n: usize) -> Vec<Checkpoint> {
    match energy {
        EnergyModel::Battery(e) => vec![Checkpoint { last: n - 1, available: *e }],
        EnergyModel::Harvest(packets) => {
            let cum = energy.cumulative(n);
            // a checkpoint followed by an empty slot is implied by the next one
            (0..n)
                .filter(|&i| i + 1 == n || packets[i + 1] > 0.0)
                .map(|i| Checkpoint { last: i, available: cum[i] })
                .collect()
        }
    }
}

fn pin_slot_silent(l: &Layout, fixed: &mut [Option<f64>], i: usize) {
    fixed[l.c(i)] = Some(0.0);
    if let Some(k) = l.theta(i) {
        fixed[k] = Some(0.0);
    }
    if let Some(k) = l.phi(i) {
        fixed[k] = Some(0.0);
    }
}

fn slot_has_free_energy(l: &Layout, fixed: &[Option<f64>], i: usize) -> bool {
    fixed[l.c(i)].is_none()
        || l.theta(i).is_some_and(|k| fixed[k].is_none())
        || l.phi(i).is_some_and(|k| fixed[k].is_none())
}

/// Pins variables that the scheduling rows force to zero: a row whose free
/// part has only positive coefficients on nonnegative rates and a bound that
/// has dropped to zero. Pinned channel rates also pin their burst fraction,
/// pinned source rates their sampling fraction.
fn propagate(l: &Layout, fixed: &mut [Option<f64>], rows: &[SparseRow]) {
    let rate_var = |k: usize| k < 2 * l.n;
    loop {
        let mut changed = false;
        for row in rows {
            let mut bound = row.bound;
            let mut free = Vec::new();
            for &(k, a) in &row.coeffs {
                match fixed[k] {
                    Some(v) => bound -= a * v,
                    None => free.push((k, a)),
                }
            }
            if !free.is_empty() && bound <= 0.0 && free.iter().all(|&(k, a)| a > 0.0 && rate_var(k)) {
                for (k, _) in free {
                    fixed[k] = Some(0.0);
                }
                changed = true;
            }
        }
        for i in 0..l.n {
            if let Some(k) = l.theta(i) {
                if fixed[l.c(i)] == Some(0.0) && fixed[k].is_none() {
                    fixed[k] = Some(0.0);
                    changed = true;
                }
            }
            if let Some(k) = l.phi(i) {
                if fixed[l.r(i)] == Some(0.0) && fixed[k].is_none() {
                    fixed[k] = Some(0.0);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Scheduling rows, nonnegativity and fraction bounds over the full layout.
fn full_rows(s: &Scenario, l: &Layout, start: &StartPoint) -> Vec<SparseRow> {
    let n = l.n;
    let mut rows: Vec<SparseRow> = scheduling_rows(s)
        .into_iter()
        .map(|row| SparseRow {
            coeffs: row
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(k, a)| (if k < n { l.r(k) } else { l.c(k - n) }, *a))
                .collect(),
            bound: row.bound,
            label: row.label,
        })
        .collect();
    let bound = |k: usize, a: f64, b: f64, label: String| SparseRow { coeffs: vec![(k, a)], bound: b, label };
    for i in 0..n {
        rows.push(bound(l.r(i), -1.0, 0.0, format!("r[{}]>=0", i + 1)));
        rows.push(bound(l.c(i), -1.0, 0.0, format!("c[{}]>=0", i + 1)));
        if let Some(k) = l.theta(i) {
            rows.push(bound(k, 1.0, 1.0, format!("theta[{}]<=1", i + 1)));
            rows.push(bound(k, -1.0, -start.theta_floor, format!("theta[{}]>=floor", i + 1)));
        }
        if let Some(k) = l.phi(i) {
            rows.push(bound(k, 1.0, 1.0, format!("phi[{}]<=1", i + 1)));
            rows.push(bound(k, -1.0, -start.phi_floor, format!("phi[{}]>=floor", i + 1)));
        }
    }
    rows
}

/// Strictly feasible starting values and the effective fraction floors.
struct StartPoint {
    theta0: f64,
    phi0: f64,
    theta_floor: f64,
    phi_floor: f64,
    rate0: f64,
}

impl StartPoint {
    fn new(s: &Scenario, l: &Layout, checkpoints: &[Checkpoint], cfg: &SolverConfig) -> Self {
        // spread at most a quarter of the scarcest budget over each fixed cost
        let scarce = checkpoints
            .iter()
            .filter(|cp| cp.available > 0.0)
            .map(|cp| cp.available / (cp.last + 1) as f64)
            .fold(f64::INFINITY, f64::min);
        let theta0 = if l.proc { (scarce / (4.0 * s.proc_cost)).min(0.5) } else { 1.0 };
        let phi0 = if l.samp { (scarce / (4.0 * s.samp_cost)).min(0.5) } else { 1.0 };
        let rate0 = match s.buffer {
            BufferLimit::Finite(b) => (b / 4.0).min(0.25),
            BufferLimit::Infinite => 0.25,
        };
        StartPoint {
            theta0,
            phi0,
            theta_floor: cfg.theta_floor.min(theta0 / 10.0),
            phi_floor: cfg.phi_floor.min(phi0 / 10.0),
            rate0,
        }
    }

    fn find(&self, p: &SensorProgram) -> Result<Vec<f64>, SolveError> {
        let l = p.layout;
        let mut t = self.rate0;
        for _ in 0..200 {
            let mut x = vec![0.0; l.dim()];
            for i in 0..l.n {
                x[l.r(i)] = t / (4.0 * l.n as f64);
                x[l.c(i)] = t;
                if let Some(k) = l.theta(i) {
                    x[k] = self.theta0;
                }
                if let Some(k) = l.phi(i) {
                    x[k] = self.phi0;
                }
            }
            let y = p.restrict(&x);
            let rows_ok = p.rows.iter().all(|row| row.slack(&y) > 0.0);
            let energy_ok = (0..p.n_nonlinear()).all(|k| {
                p.constraint(k, &y).is_some_and(|g| g < -0.25 * p.checkpoints[k].available)
            });
            if rows_ok && energy_ok {
                return Ok(y);
            }
            t *= 0.5;
        }
        Err(SolveError::Numerical("no strictly feasible starting point found".into()))
    }
}

fn build_policy(s: &Scenario, l: &Layout, x: &[f64]) -> Result<Policy, SolveError> {
    let n = l.n;
    let mut policy = Policy::idle(s);
    for i in 0..n {
        let r = x[l.r(i)].max(0.0);
        let c = x[l.c(i)].max(0.0);
        let theta = l.theta(i).map_or(1.0, |k| x[k].clamp(0.0, 1.0));
        let phi = l.phi(i).map_or(1.0, |k| x[k].clamp(0.0, 1.0));
        let (c, theta) = if theta == 0.0 { (0.0, 0.0) } else { (c, theta) };
        let r = if phi == 0.0 { 0.0 } else { r };
        policy.src_rate[i] = r;
        policy.cap_rate[i] = c;
        policy.burst[i] = theta;
        policy.sample_frac[i] = phi;
        policy.power[i] = if theta > 0.0 { burst_power_from_cap(c, s.gains[i], theta)? } else { 0.0 };
        policy.distortion[i] = distortion_from_rate(r, s.variances[i], phi)?;
    }
    Ok(policy)
}
