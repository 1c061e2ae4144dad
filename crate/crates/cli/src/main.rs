//! `sensopt`: solve, sweep and verify sensor transmission scenarios, and
//! derive the reduced scheduling constraints.
//!
//! Exit codes: 0 success, 2 schema or I/O error, 3 solver failure,
//! 4 verification failure.

mod io;
mod run;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_rational::BigRational;
use sensopt_core::analysis::{all_passed, check_structure, clamping_failures, extract_profile, AnalysisError, Finding};
use sensopt_core::constraints::{
    build_raw_system, build_reduced_system, eliminate_all, parse_rational, systems_equivalent, BufferSpec, Pruning,
};
use sensopt_core::solver::Status;

use crate::io::{load_policy, load_scenario, parse_json, policy_csv, read_text, write_text};
use crate::run::{barrier, report, run, CrossCheck};

#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Io(String),
    Solver(String),
    Verify(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Schema(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Verify(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "schema error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
        }
    }
}

/// Largest horizon `fm-reduce` accepts; elimination blows up beyond it.
const FM_MAX_SLOTS: usize = 8;
const STRUCT_EPS: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "sensopt", version, about = "Distortion-optimal sensor transmission under energy and buffer limits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a scenario; writes report.json and policy.csv with --out.
    Solve {
        file: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cross-check the closed-form result against the convex solver.
        #[arg(long)]
        xcheck: bool,
        /// Objective tolerance for --xcheck.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Solve a scenario over a parameter grid.
    Sweep {
        file: PathBuf,
        /// Sweep specification (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Check the structure of the optimal (or a given) policy.
    Verify {
        file: PathBuf,
        /// Policy to check instead of solving: a bare policy or a solve report.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Tolerance on level comparisons.
        #[arg(long, default_value_t = STRUCT_EPS)]
        tol: f64,
        /// Write the findings as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive the reduced scheduling constraints by Fourier–Motzkin elimination.
    FmReduce {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        /// Buffer limit: `inf`, `B` (symbolic) or a number such as 3/20 or 0.15.
        #[arg(long, default_value = "B")]
        b: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn cmd_solve(file: &Path, out: Option<&Path>, xcheck: bool, tol: f64) -> Result<(), CliError> {
    let (s, cfg) = load_scenario(file)?;
    let outcome = run(&s, &cfg)?;
    if outcome.status != Status::Optimal {
        return Err(CliError::Solver(format!(
            "status {:?} after {} iterations, objective {}, residual {:.3e}",
            outcome.status, outcome.iterations, outcome.objective, outcome.feas_residual
        )));
    }
    let mut rep = report(&s, outcome, STRUCT_EPS);
    if xcheck {
        let other = barrier(&s, &cfg)?;
        let difference = (rep.outcome.objective - other.objective).abs();
        rep.xcheck = Some(CrossCheck { objective: other.objective, difference, tolerance: tol, passed: difference <= tol });
    }
    let profile = rep.profile.as_ref().ok_or_else(|| CliError::Solver("solver returned an infeasible policy".into()))?;
    let csv = policy_csv(&s, &rep.outcome.policy, profile);
    match out {
        Some(dir) => {
            write_text(&dir.join("report.json"), &to_json(&rep))?;
            write_text(&dir.join("policy.csv"), &csv)?;
        }
        None => print!("{csv}"),
    }
    eprintln!("objective {} ({:?}, {:?})", io::fmt_num(rep.outcome.objective), rep.outcome.method, rep.variant);
    match &rep.xcheck {
        Some(x) if !x.passed => Err(CliError::Verify(format!(
            "closed form {} and convex solver {} differ by {:.3e} > {:.1e}",
            rep.outcome.objective, x.objective, x.difference, x.tolerance
        ))),
        _ => Ok(()),
    }
}

fn cmd_sweep(file: &Path, spec: &Path, out: Option<&Path>, jobs: usize) -> Result<(), CliError> {
    let (s, cfg) = load_scenario(file)?;
    let spec: sweep::SweepSpec = parse_json(&read_text(spec)?, spec)?;
    let rows = sweep::run_sweep(&s, &spec, &cfg, jobs)?;
    emit(out, &sweep::rows_csv(&rows))?;
    let failed = rows.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        return Err(CliError::Solver(format!("{failed} of {} points failed", rows.len())));
    }
    Ok(())
}

fn cmd_verify(file: &Path, policy: Option<&Path>, tol: f64, out: Option<&Path>) -> Result<(), CliError> {
    let (s, cfg) = load_scenario(file)?;
    let policy = match policy {
        Some(p) => load_policy(p)?,
        None => {
            let o = run(&s, &cfg)?;
            if o.status != Status::Optimal {
                return Err(CliError::Solver(format!("status {:?}", o.status)));
            }
            o.policy
        }
    };
    let profile = extract_profile(&policy, &s).map_err(|e| match e {
        AnalysisError::Model(m) => CliError::Schema(format!("policy: {m}")),
        AnalysisError::Infeasible { constraint, violation } => {
            CliError::Verify(format!("policy violates {constraint} by {violation:.3e}"))
        }
    })?;
    let mut findings: Vec<Finding> = check_structure(&profile, &policy, &s, tol);
    findings.extend(clamping_failures(&policy, &s, tol));
    for f in &findings {
        let mark = if f.passed { "ok  " } else { "FAIL" };
        println!("{mark} {:?} slots {}-{}: {}", f.kind, f.from, f.to, f.detail);
    }
    if let Some(p) = out {
        write_text(p, &to_json(&findings))?;
    }
    if !s.is_validated() {
        eprintln!("note: structural results are not characterized for this combination of energy models");
    }
    if all_passed(&findings) {
        println!("structure verified ({} findings)", findings.len());
        Ok(())
    } else {
        let bad = findings.iter().filter(|f| !f.passed).map(|f| format!("{}-{}", f.from, f.to)).collect::<Vec<_>>();
        Err(CliError::Verify(format!("unjustified transitions at slots {}", bad.join(", "))))
    }
}

/// `inf`, `B`, an integer, a fraction `p/q`, or a plain decimal.
fn parse_buffer(text: &str) -> Result<BufferSpec, CliError> {
    let t = text.trim();
    match t {
        "B" | "b" => return Ok(BufferSpec::Symbolic),
        "inf" | "Inf" | "infinity" => return Ok(BufferSpec::Infinite),
        _ => {}
    }
    let q = parse_rational(t).or_else(|| {
        let (int, frac) = t.split_once('.')?;
        if !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let digits: num_bigint::BigInt = format!("{int}{frac}").parse().ok()?;
        Some(BigRational::new(digits, num_bigint::BigInt::from(10u32).pow(frac.len() as u32)))
    });
    match q {
        Some(q) if q > BigRational::from_integer(0.into()) => Ok(BufferSpec::Finite(q)),
        _ => Err(CliError::Schema(format!("--b: expected inf, B or a positive number, got {text:?}"))),
    }
}

fn cmd_fm_reduce(n: usize, d: usize, b: &str, out: Option<&Path>) -> Result<(), CliError> {
    if n > FM_MAX_SLOTS {
        return Err(CliError::Schema(format!(
            "--n {n} exceeds {FM_MAX_SLOTS}: elimination grows combinatorially; \
             use the closed-form reduced system instead (solve builds it directly for any N)"
        )));
    }
    if n == 0 || d == 0 || d > n {
        return Err(CliError::Schema(format!("need 1 <= d <= n, got n={n}, d={d}")));
    }
    let buffer = parse_buffer(b)?;
    let algebra = |e: sensopt_core::constraints::AlgebraError| CliError::Solver(e.to_string());
    let raw = build_raw_system(n, d, buffer.clone()).map_err(algebra)?;
    let eliminated: Vec<String> = raw.variables.iter().filter(|v| v.starts_with("R_")).cloned().collect();
    let refs: Vec<&str> = eliminated.iter().map(String::as_str).collect();
    let reduced = eliminate_all(&raw, &refs, Pruning::Lp).map_err(algebra)?;
    let expected = build_reduced_system(n, d, buffer).map_err(algebra)?;
    let cert = systems_equivalent(&reduced, &expected, 200, 0).map_err(algebra)?;
    let mut text = reduced.to_text();
    if cert.equivalent {
        text.push_str("# certificate: equivalent\n");
    } else {
        let detail = cert.witness.and_then(|w| w.violated).unwrap_or_default();
        text.push_str(&format!("# certificate: NOT equivalent ({detail})\n"));
    }
    emit(out, &text)?;
    if cert.equivalent {
        Ok(())
    } else {
        Err(CliError::Verify("eliminated system differs from the closed-form reduced system".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Solve { file, out, xcheck, tol } => cmd_solve(file, out.as_deref(), *xcheck, *tol),
        Cmd::Sweep { file, spec, out, jobs } => cmd_sweep(file, spec, out.as_deref(), *jobs),
        Cmd::Verify { file, policy, tol, out } => cmd_verify(file, policy.as_deref(), *tol, out.as_deref()),
        Cmd::FmReduce { n, d, b, out } => cmd_fm_reduce(*n, *d, b, out.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sensopt: {e}");
            ExitCode::from(e.code())
        }
    }
}
