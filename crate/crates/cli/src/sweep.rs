//! Parameter sweeps over a base scenario.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer};
use sensopt_core::solver::{SolverConfig, Status};
use sensopt_core::{BufferLimit, EnergyModel, Scenario};

use crate::io::fmt_num;
use crate::run::run;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    BMax,
    Delay,
    Energy,
    EpsP,
    EpsS,
}

impl Parameter {
    fn name(self) -> &'static str {
        match self {
            Parameter::BMax => "b_max",
            Parameter::Delay => "delay",
            Parameter::Energy => "energy",
            Parameter::EpsP => "eps_p",
            Parameter::EpsS => "eps_s",
        }
    }
}

/// A grid value: a number, or `"inf"` for an unlimited buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Value(pub f64);

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Value(BufferLimit::deserialize(d)?.value()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<Value>),
    /// `steps` evenly spaced points from `lo` to `hi` inclusive.
    Range { lo: f64, hi: f64, steps: usize },
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.iter().map(|x| x.0).collect(),
            Grid::Range { lo, hi, steps } => match steps {
                0 => Vec::new(),
                1 => vec![*lo],
                _ => (0..*steps).map(|k| lo + (hi - lo) * k as f64 / (*steps - 1) as f64).collect(),
            },
        }
    }
}

/// Scenario overrides for one curve of the sweep.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub label: String,
    pub delay: Option<usize>,
    pub b_max: Option<BufferLimit>,
    pub energy: Option<EnergyModel>,
    pub eps_p: Option<f64>,
    pub eps_s: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: Parameter,
    pub grid: Grid,
    #[serde(default)]
    pub variants: Vec<VariantSpec>,
}

fn apply(base: &Scenario, v: &VariantSpec, param: Parameter, x: f64) -> Result<Scenario, String> {
    let mut s = base.clone();
    if let Some(d) = v.delay {
        s.delay = d;
    }
    if let Some(b) = v.b_max {
        s.buffer = b;
    }
    if let Some(e) = &v.energy {
        s.energy = e.clone();
    }
    if let Some(e) = v.eps_p {
        s.proc_cost = e;
    }
    if let Some(e) = v.eps_s {
        s.samp_cost = e;
    }
    match param {
        Parameter::BMax => s.buffer = if x.is_infinite() { BufferLimit::Infinite } else { BufferLimit::Finite(x) },
        Parameter::Delay => {
            if x.fract() != 0.0 || x < 1.0 {
                return Err(format!("delay must be a positive integer, got {x}"));
            }
            s.delay = x as usize;
        }
        Parameter::Energy => match s.energy {
            EnergyModel::Battery(_) => s.energy = EnergyModel::Battery(x),
            EnergyModel::Harvest(_) => return Err("energy sweeps need a battery scenario".into()),
        },
        Parameter::EpsP => s.proc_cost = x,
        Parameter::EpsS => s.samp_cost = x,
    }
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub parameter: &'static str,
    pub variant: String,
    pub value: f64,
    pub objective: Option<f64>,
    pub status: String,
}

impl Row {
    pub fn failed(&self) -> bool {
        self.status != "optimal"
    }
}

/// Checks the whole grid up front so that malformed specs fail as schema
/// errors rather than as failed rows.
pub fn plan(base: &Scenario, spec: &SweepSpec) -> Result<Vec<(usize, usize, Scenario)>, CliError> {
    let points = spec.grid.points();
    if points.is_empty() {
        return Err(CliError::Schema("grid: must not be empty".into()));
    }
    let variants = if spec.variants.is_empty() {
        vec![VariantSpec { label: "base".into(), ..Default::default() }]
    } else {
        spec.variants.clone()
    };
    let mut jobs = Vec::new();
    for (gi, &x) in points.iter().enumerate() {
        for (vi, v) in variants.iter().enumerate() {
            let s = apply(base, v, spec.parameter, x)
                .map_err(|e| CliError::Schema(format!("variants[{vi}] ({}) at grid[{gi}]={x}: {e}", v.label)))?;
            jobs.push((gi, vi, s));
        }
    }
    Ok(jobs)
}

/// One solve per grid point and variant on a pool of `jobs` threads; rows
/// come back in grid order, variants in declaration order.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec, cfg: &SolverConfig, jobs: usize) -> Result<Vec<Row>, CliError> {
    let plan = plan(base, spec)?;
    let points = spec.grid.points();
    let labels: Vec<String> = if spec.variants.is_empty() {
        vec!["base".into()]
    } else {
        spec.variants.iter().map(|v| v.label.clone()).collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        plan.par_iter()
            .map(|(gi, vi, s)| {
                let (objective, status) = match run(s, cfg) {
                    Ok(o) if o.status == Status::Optimal => (Some(o.objective), "optimal".to_string()),
                    Ok(o) => (Some(o.objective), format!("{:?}", o.status).to_lowercase()),
                    Err(e) => (None, format!("failed: {e}")),
                };
                Row { parameter: spec.parameter.name(), variant: labels[*vi].clone(), value: points[*gi], objective, status }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

pub fn rows_csv(rows: &[Row]) -> String {
    let mut out = String::from("parameter,variant,value,objective,status\n");
    for r in rows {
        let status = r.status.replace([',', '\n'], ";");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.parameter,
            r.variant,
            fmt_num(r.value),
            r.objective.map(fmt_num).unwrap_or_default(),
            status
        ));
    }
    out
}
