//! Fourier-Motzkin elimination with redundancy pruning.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};

use super::lp::{maximize, LpOutcome, Row};
use super::{AlgebraError, ConstraintSystem, LinIneq, Rational};

/// How aggressively redundant rows are removed after each elimination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pruning {
    /// Duplicates, trivially true rows and coefficient-wise dominated rows.
    Syntactic,
    /// Syntactic pass followed by an exact LP redundancy certificate per row.
    Lp,
}

/// Projects `var` out of `sys`.
pub fn fm_eliminate(
    sys: &ConstraintSystem,
    var: &str,
    pruning: Pruning,
) -> Result<ConstraintSystem, AlgebraError> {
    if !sys.declares(var) {
        return Err(AlgebraError::UnknownVariable(var.to_string()));
    }
    let mut rows: Vec<LinIneq> = sys.inequalities.clone();
    if sys.nonneg.contains(var) {
        rows.push(LinIneq::new([(var, -Rational::from_integer(1.into()))], Rational::zero()));
    }
    let (mut upper, mut lower, mut rest) = (Vec::new(), Vec::new(), Vec::new());
    for q in rows {
        let c = q.coeff(var);
        if c.is_positive() {
            upper.push(q);
        } else if c.is_negative() {
            lower.push(q);
        } else {
            rest.push(q);
        }
    }
    for u in &upper {
        let cu = u.coeff(var);
        for l in &lower {
            let cl = -l.coeff(var);
            // cl * u + cu * l cancels var
            let terms = u
                .coeffs
                .iter()
                .map(|(v, c)| (v.clone(), c * &cl))
                .chain(l.coeffs.iter().map(|(v, c)| (v.clone(), c * &cu)));
            let mut combined = LinIneq::new(terms, &u.bound * &cl + &l.bound * &cu);
            combined.coeffs.remove(var);
            rest.push(combined);
        }
    }
    let mut out = ConstraintSystem {
        variables: sys.variables.iter().filter(|v| *v != var).cloned().collect(),
        inequalities: rest.into_iter().map(|q| q.canonical()).collect(),
        nonneg: sys.nonneg.iter().filter(|v| *v != var).cloned().collect(),
    };
    out = prune_syntactic(&out);
    if pruning == Pruning::Lp {
        out = prune_lp(&out);
    }
    Ok(out)
}

/// Eliminates `vars` in order.
pub fn eliminate_all(
    sys: &ConstraintSystem,
    vars: &[&str],
    pruning: Pruning,
) -> Result<ConstraintSystem, AlgebraError> {
    let mut cur = sys.clone();
    for v in vars {
        cur = fm_eliminate(&cur, v, pruning)?;
    }
    Ok(cur)
}

fn trivially_true(q: &LinIneq, nonneg: &BTreeSet<String>) -> bool {
    !q.bound.is_negative()
        && q.coeffs.iter().all(|(v, c)| c.is_negative() && nonneg.contains(v))
}

/// `a` is implied by `b` alone: same coefficients on free variables, no
/// larger on nonnegative ones, and a bound at least as loose.
fn dominated(a: &LinIneq, b: &LinIneq, nonneg: &BTreeSet<String>) -> bool {
    if a.bound < b.bound {
        return false;
    }
    let vars: BTreeSet<&String> = a.coeffs.keys().chain(b.coeffs.keys()).collect();
    vars.into_iter().all(|v| {
        let (ca, cb) = (a.coeff(v), b.coeff(v));
        if nonneg.contains(v) {
            ca <= cb
        } else {
            ca == cb
        }
    })
}

/// Drops trivially true rows, duplicates (keeping the first) and rows
/// dominated by another row. Rows are compared in canonical form.
pub fn prune_syntactic(sys: &ConstraintSystem) -> ConstraintSystem {
    let mut kept: Vec<LinIneq> = Vec::new();
    for q in &sys.inequalities {
        let c = q.canonical();
        if trivially_true(&c, &sys.nonneg) || kept.contains(&c) {
            continue;
        }
        kept.push(c);
    }
    let mut drop = vec![false; kept.len()];
    for i in 0..kept.len() {
        for j in 0..kept.len() {
            if i != j && !drop[j] && dominated(&kept[i], &kept[j], &sys.nonneg) {
                drop[i] = true;
                break;
            }
        }
    }
    let inequalities = kept
        .into_iter()
        .zip(drop)
        .filter(|(_, d)| !d)
        .map(|(q, _)| q)
        .collect();
    ConstraintSystem { inequalities, ..sys.clone() }
}

pub(crate) fn dense(sys: &ConstraintSystem, q: &LinIneq) -> Row {
    Row {
        coeffs: sys.variables.iter().map(|v| q.coeff(v)).collect(),
        bound: q.bound.clone(),
    }
}

/// Removes every row that the remaining rows (plus nonnegativity) imply,
/// checked by an exact LP. Later rows are tried first, so earlier rows
/// survive among mutually redundant ones. An infeasible system is returned
/// unchanged.
pub fn prune_lp(sys: &ConstraintSystem) -> ConstraintSystem {
    let nonneg: Vec<bool> = sys.variables.iter().map(|v| sys.nonneg.contains(v)).collect();
    let mut keep = vec![true; sys.inequalities.len()];
    for idx in (0..sys.inequalities.len()).rev() {
        let others: Vec<Row> = sys
            .inequalities
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != idx && keep[*k])
            .map(|(_, q)| dense(sys, q))
            .collect();
        let target = dense(sys, &sys.inequalities[idx]);
        match maximize(&target.coeffs, &others, &nonneg) {
            LpOutcome::Optimal { value, .. } if value <= target.bound => keep[idx] = false,
            LpOutcome::Infeasible => return sys.clone(),
            _ => {}
        }
    }
    let inequalities = sys
        .inequalities
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(q, _)| q.clone())
        .collect();
    ConstraintSystem { inequalities, ..sys.clone() }
}

/// Given a point of the projected system, finds a value of `var` that makes
/// the extended point satisfy `sys`, by intersecting the interval of bounds
/// on `var`. Returns `None` if the interval is empty.
pub fn lift_point(
    sys: &ConstraintSystem,
    var: &str,
    point: &BTreeMap<String, Rational>,
) -> Option<Rational> {
    let mut lo: Option<Rational> = if sys.nonneg.contains(var) { Some(Rational::zero()) } else { None };
    let mut hi: Option<Rational> = None;
    for q in &sys.inequalities {
        let c = q.coeff(var);
        let mut rest = q.clone();
        rest.coeffs.remove(var);
        let slack = &q.bound - rest.lhs(point);
        if c.is_positive() {
            let b = slack / c;
            hi = Some(hi.map_or(b.clone(), |h| h.min(b)));
        } else if c.is_negative() {
            let b = slack / c;
            lo = Some(lo.map_or(b.clone(), |l| l.max(b)));
        } else if slack.is_negative() {
            return None;
        }
    }
    match (lo, hi) {
        (Some(l), Some(h)) => (l <= h).then_some(l),
        (Some(l), None) => Some(l),
        (None, Some(h)) => Some(h),
        (None, None) => Some(Rational::zero()),
    }
}
