//! Builders for the per-source scheduling system and its reduced form.

use super::{rat, AlgebraError, ConstraintSystem, LinIneq, Rational};

/// Buffer limit as seen by the constraint builders.
#[derive(Debug, Clone, PartialEq)]
pub enum BufferSpec {
    Infinite,
    Finite(Rational),
    /// Keep the limit as a nonnegative variable named `B`.
    Symbolic,
}

pub const BUFFER_VAR: &str = "B";

/// Name of the bits of source `i` delivered in slot `j` (1-based).
pub fn raw_rate_var(i: usize, j: usize) -> String {
    format!("R_{i}_{j}")
}

fn r(i: usize) -> String {
    format!("r_{i}")
}

fn c(i: usize) -> String {
    format!("c_{i}")
}

fn check(n: usize, d: usize) -> Result<(), AlgebraError> {
    if n == 0 || d == 0 || d > n {
        return Err(AlgebraError::InvalidDelay { n, d });
    }
    Ok(())
}

/// Appends the buffer bound to `terms`/`bound` according to the spec.
/// Returns `None` when the buffer is unlimited and the row should be dropped.
fn with_buffer(
    mut terms: Vec<(String, Rational)>,
    bound: Rational,
    buffer: &BufferSpec,
) -> Option<LinIneq> {
    match buffer {
        BufferSpec::Infinite => None,
        BufferSpec::Finite(b) => Some(LinIneq::new(terms, bound + b)),
        BufferSpec::Symbolic => {
            terms.push((BUFFER_VAR.to_string(), rat(-1)));
            Some(LinIneq::new(terms, bound))
        }
    }
}

fn declare(vars: Vec<String>, buffer: &BufferSpec) -> ConstraintSystem {
    let mut vars = vars;
    if *buffer == BufferSpec::Symbolic {
        vars.push(BUFFER_VAR.to_string());
    }
    ConstraintSystem::new(vars).all_nonneg()
}

/// The scheduling system over `R_i_j` (bits of source `i` sent in slot `j`,
/// `i <= j <= i+d-1`), source rates `r_i` and slot capacities `c_i`.
pub fn build_raw_system(n: usize, d: usize, buffer: BufferSpec) -> Result<ConstraintSystem, AlgebraError> {
    check(n, d)?;
    let last = |i: usize| (i + d - 1).min(n);
    let first = |j: usize| (j + 1).saturating_sub(d).max(1);
    let mut vars = Vec::new();
    for i in 1..=n {
        for j in i..=last(i) {
            vars.push(raw_rate_var(i, j));
        }
    }
    vars.extend((1..=n).map(r));
    vars.extend((1..=n).map(c));
    let mut sys = declare(vars, &buffer);
    for j in 1..=n {
        let mut terms: Vec<(String, Rational)> = (first(j)..=j).map(|i| (raw_rate_var(i, j), rat(1))).collect();
        terms.push((c(j), rat(-1)));
        sys.push(LinIneq::new(terms, rat(0)).with_label(format!("capacity[{j}]")))?;
    }
    for i in 1..=n {
        let mut terms: Vec<(String, Rational)> = vec![(r(i), rat(1))];
        terms.extend((i..=last(i)).map(|j| (raw_rate_var(i, j), rat(-1))));
        sys.push(LinIneq::new(terms, rat(0)).with_label(format!("rate[{i}]")))?;
    }
    for k in 1..=n {
        // data of unexpired sources still waiting at the start of slot k
        let mut terms = Vec::new();
        for j in k..=last(k) {
            for i in first(j)..=k {
                terms.push((raw_rate_var(i, j), rat(1)));
            }
        }
        if let Some(q) = with_buffer(terms, rat(0), &buffer) {
            sys.push(q.with_label(format!("buffer[{k}]")))?;
        }
    }
    Ok(sys)
}

/// The causality, delay and buffer constraints over `r_i`, `c_i`.
pub fn build_reduced_system(n: usize, d: usize, buffer: BufferSpec) -> Result<ConstraintSystem, AlgebraError> {
    check(n, d)?;
    let span = |var: fn(usize) -> String, lo: usize, hi: usize, sign: i64| {
        (lo..=hi).map(move |j| (var(j), rat(sign)))
    };
    let mut vars: Vec<String> = (1..=n).map(r).collect();
    vars.extend((1..=n).map(c));
    let mut sys = declare(vars, &buffer);
    for i in 1..=n {
        let terms = span(r, i, n, 1).chain(span(c, i, n, -1));
        sys.push(LinIneq::new(terms, rat(0)).with_label(format!("causality[{i}]")))?;
    }
    for k in 1..=n.saturating_sub(d) {
        for i in k..=n - d {
            let terms = span(r, k, i, 1).chain(span(c, k, i + d - 1, -1));
            sys.push(LinIneq::new(terms, rat(0)).with_label(format!("delay[{k},{i}]")))?;
        }
    }
    if buffer != BufferSpec::Infinite {
        for k in 1..n {
            for i in k..n {
                let terms = span(r, k, i + 1, 1).chain(span(c, k, i, -1)).collect();
                if let Some(q) = with_buffer(terms, rat(0), &buffer) {
                    sys.push(q.with_label(format!("buffer[{k},{i}]")))?;
                }
            }
        }
        for i in 1..=n {
            if let Some(q) = with_buffer(vec![(r(i), rat(1))], rat(0), &buffer) {
                sys.push(q.with_label(format!("rate_cap[{i}]")))?;
            }
        }
    }
    Ok(sys)
}
