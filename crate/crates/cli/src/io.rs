//! Scenario files, report serialization and CSV formatting.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sensopt_core::analysis::WaterProfile;
use sensopt_core::solver::SolverConfig;
use sensopt_core::{BufferLimit, EnergyModel, Policy, Scenario};

use crate::CliError;

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n_slots: usize,
    pub gains: Vec<f64>,
    pub variances: Vec<f64>,
    pub energy: EnergyModel,
    pub b_max: BufferLimit,
    pub delay: usize,
    #[serde(default)]
    pub eps_p: f64,
    #[serde(default)]
    pub eps_s: f64,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Schema(format!("{}: {}", path.into(), message.into()))
}

fn check_positive(field: &str, values: &[f64]) -> Result<(), CliError> {
    for (i, v) in values.iter().enumerate() {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(schema(format!("{field}[{i}]"), format!("must be positive and finite, got {v}")));
        }
    }
    Ok(())
}

impl ScenarioFile {
    /// Checks the document field by field, reporting the offending path.
    pub fn into_scenario(self) -> Result<(Scenario, SolverConfig), CliError> {
        let n = self.n_slots;
        if n == 0 {
            return Err(schema("n_slots", "must be at least 1"));
        }
        for (field, len) in [("gains", self.gains.len()), ("variances", self.variances.len())] {
            if len != n {
                return Err(schema(field, format!("expected {n} entries, got {len}")));
            }
        }
        check_positive("gains", &self.gains)?;
        check_positive("variances", &self.variances)?;
        match &self.energy {
            EnergyModel::Battery(e) if !(*e >= 0.0 && e.is_finite()) => {
                return Err(schema("energy.battery", format!("must be >= 0, got {e}")));
            }
            EnergyModel::Harvest(packets) => {
                if packets.len() != n {
                    return Err(schema("energy.harvest", format!("expected {n} entries, got {}", packets.len())));
                }
                if let Some((i, e)) = packets.iter().enumerate().find(|(_, e)| !(**e >= 0.0 && e.is_finite())) {
                    return Err(schema(format!("energy.harvest[{i}]"), format!("must be >= 0, got {e}")));
                }
            }
            _ => {}
        }
        if let BufferLimit::Finite(b) = self.b_max {
            if !(b > 0.0 && b.is_finite()) {
                return Err(schema("b_max", format!("must be positive or \"inf\", got {b}")));
            }
        }
        if self.delay < 1 || self.delay > n {
            return Err(schema("delay", format!("must lie in [1, {n}], got {}", self.delay)));
        }
        for (field, v) in [("eps_p", self.eps_p), ("eps_s", self.eps_s)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(schema(field, format!("must be >= 0, got {v}")));
            }
        }
        let cfg = self.solver.unwrap_or_default();
        cfg.validate().map_err(|e| schema("solver", e.to_string()))?;
        let scenario = Scenario {
            gains: self.gains,
            variances: self.variances,
            energy: self.energy,
            buffer: self.b_max,
            delay: self.delay,
            proc_cost: self.eps_p,
            samp_cost: self.eps_s,
        };
        scenario.validate().map_err(|e| schema("scenario", e.to_string()))?;
        Ok((scenario, cfg))
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: cannot read: {e}", path.display())))
}

/// Parses JSON, reporting the path of the first offending field.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &Path) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { format!(" at {path}") };
        CliError::Schema(format!("{}{path}: {}", origin.display(), e.inner()))
    })
}

pub fn load_scenario(path: &Path) -> Result<(Scenario, SolverConfig), CliError> {
    let file: ScenarioFile = parse_json(&read_text(path)?, path)?;
    file.into_scenario().map_err(|e| match e {
        CliError::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// A policy given either on its own or inside a solve report.
pub fn load_policy(path: &Path) -> Result<Policy, CliError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Doc {
        Report { policy: Policy },
        Bare(Policy),
    }
    match parse_json::<Doc>(&read_text(path)?, path)? {
        Doc::Report { policy } | Doc::Bare(policy) => Ok(policy),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Six significant digits, shortest form, `inf` for infinity.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".into()
    } else {
        format!("{rounded}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn policy_csv(s: &Scenario, p: &Policy, prof: &WaterProfile) -> String {
    let mut out = String::from("i,h,sigma2,p,c,r,D,theta,phi,nu,xi,occupancy,battery\n");
    for i in 0..s.n_slots() {
        let cells = [
            (i + 1).to_string(),
            fmt_num(s.gains[i]),
            fmt_num(s.variances[i]),
            fmt_num(p.power[i]),
            fmt_num(p.cap_rate[i]),
            fmt_num(p.src_rate[i]),
            fmt_num(p.distortion[i]),
            fmt_num(p.burst[i]),
            fmt_num(p.sample_frac[i]),
            opt(prof.nu[i]),
            fmt_num(prof.xi[i]),
            fmt_num(prof.occupancy[i]),
            fmt_num(prof.battery[i]),
        ];
        writeln!(out, "{}", cells.join(",")).expect("writing to a string");
    }
    out
}
