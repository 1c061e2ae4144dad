//! Solver dispatch shared by `solve`, `verify` and `sweep`.

use serde::Serialize;
use sensopt_core::analysis::{check_structure, extract_profile, Finding, WaterProfile};
use sensopt_core::solver::{policy_violation, solve, Multiplier, SolverConfig, Status};
use sensopt_core::waterfill::{processing_policy_d1, waterfill_battery_d1, waterfill_harvest_d1};
use sensopt_core::{Policy, Scenario, Variant};

use crate::CliError;

const WATERFILL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Waterfill,
    Barrier,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub method: Method,
    pub status: Status,
    pub objective: f64,
    pub feas_residual: f64,
    pub iterations: usize,
    pub policy: Policy,
    pub multiplier_estimates: Option<Vec<Multiplier>>,
}

/// Closed-form path for strict delay where one exists, interior point
/// otherwise.
pub fn run(s: &Scenario, cfg: &SolverConfig) -> Result<Outcome, CliError> {
    let fast = if s.delay == 1 {
        match s.variant() {
            Variant::Battery => Some(waterfill_battery_d1(s, WATERFILL_TOL)),
            Variant::Harvest => Some(waterfill_harvest_d1(s, WATERFILL_TOL)),
            Variant::Processing => Some(processing_policy_d1(s, WATERFILL_TOL)),
            _ => None,
        }
    } else {
        None
    };
    match fast {
        Some(res) => {
            let policy = res.map_err(|e| CliError::Solver(e.to_string()))?;
            let (viol, _) = policy_violation(&policy, s);
            Ok(Outcome {
                method: Method::Waterfill,
                status: Status::Optimal,
                objective: policy.distortion.iter().sum(),
                feas_residual: viol.max(0.0),
                iterations: 0,
                policy,
                multiplier_estimates: None,
            })
        }
        None => barrier(s, cfg),
    }
}

pub fn barrier(s: &Scenario, cfg: &SolverConfig) -> Result<Outcome, CliError> {
    let rep = solve(s, cfg).map_err(|e| CliError::Solver(e.to_string()))?;
    Ok(Outcome {
        method: Method::Barrier,
        status: rep.status,
        objective: rep.objective,
        feas_residual: rep.feas_residual,
        iterations: rep.iterations,
        policy: rep.policy,
        multiplier_estimates: rep.multiplier_estimates,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub objective: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub variant: Variant,
    /// False for combinations of energy mechanisms whose structure is
    /// not characterized.
    pub validated: bool,
    #[serde(flatten)]
    pub outcome: Outcome,
    pub profile: Option<WaterProfile>,
    pub findings: Vec<Finding>,
    pub xcheck: Option<CrossCheck>,
}

pub fn report(s: &Scenario, outcome: Outcome, eps_struct: f64) -> Report {
    let profile = extract_profile(&outcome.policy, s).ok();
    let findings = profile.as_ref().map(|p| check_structure(p, &outcome.policy, s, eps_struct)).unwrap_or_default();
    Report { variant: s.variant(), validated: s.is_validated(), outcome, profile, findings, xcheck: None }
}
