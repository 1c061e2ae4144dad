//! Polyhedral equivalence checks between constraint systems.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fm::dense;
use super::lp::{maximize, LpOutcome};
use super::{rat, AlgebraError, ConstraintSystem, LinIneq, Rational};

/// A point in exactly one of the two compared systems.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub point: BTreeMap<String, Rational>,
    pub in_first: bool,
    pub in_second: bool,
    /// Rendering of a row the point violates.
    pub violated: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equivalence {
    pub equivalent: bool,
    pub witness: Option<Witness>,
}

fn to_point(sys: &ConstraintSystem, x: &[Rational]) -> BTreeMap<String, Rational> {
    sys.variables.iter().cloned().zip(x.iter().cloned()).collect()
}

fn witness(a: &ConstraintSystem, b: &ConstraintSystem, point: BTreeMap<String, Rational>) -> Witness {
    let violated = a
        .first_violation(&point)
        .or_else(|| b.first_violation(&point))
        .map(|q| q.render(&a.variables))
        .or_else(|| {
            a.nonneg
                .iter()
                .find(|v| point.get(*v).is_some_and(|x| x.is_negative()))
                .map(|v| format!("{v} >= 0"))
        });
    Witness { in_first: a.contains(&point), in_second: b.contains(&point), point, violated }
}

/// Searches for a point of `inner` outside `outer` using one exact LP per
/// row of `outer` (including its sign constraints).
fn escape_point(inner: &ConstraintSystem, outer: &ConstraintSystem) -> Option<BTreeMap<String, Rational>> {
    let rows: Vec<_> = inner.inequalities.iter().map(|q| dense(inner, q)).collect();
    let nonneg: Vec<bool> = inner.variables.iter().map(|v| inner.nonneg.contains(v)).collect();
    let mut targets: Vec<LinIneq> = outer.inequalities.clone();
    for v in &outer.nonneg {
        if !inner.nonneg.contains(v) {
            targets.push(LinIneq::new([(v.clone(), rat(-1))], Rational::zero()));
        }
    }
    for q in targets {
        let obj = dense(inner, &q);
        match maximize(&obj.coeffs, &rows, &nonneg) {
            LpOutcome::Infeasible => return None,
            LpOutcome::Optimal { value, point } => {
                if value > q.bound {
                    return Some(to_point(inner, &point));
                }
            }
            LpOutcome::Unbounded { point, ray } => {
                let dot = |x: &[Rational]| {
                    obj.coeffs.iter().zip(x).map(|(a, b)| a * b).fold(Rational::zero(), |s, v| s + v)
                };
                let gain = dot(&ray);
                let base = dot(&point);
                let t = if base > q.bound { Rational::zero() } else { (&q.bound - base) / gain + Rational::one() };
                let x: Vec<Rational> = point.iter().zip(&ray).map(|(p, r)| p + &t * r).collect();
                return Some(to_point(inner, &x));
            }
        }
    }
    None
}

/// Decides whether two systems over the same variables describe the same
/// polyhedron. Containment is certified in both directions by exact LPs;
/// `trials` seeded random points are also tested for membership agreement.
pub fn systems_equivalent(
    a: &ConstraintSystem,
    b: &ConstraintSystem,
    trials: usize,
    seed: u64,
) -> Result<Equivalence, AlgebraError> {
    let va: BTreeSet<&String> = a.variables.iter().collect();
    let vb: BTreeSet<&String> = b.variables.iter().collect();
    if va != vb {
        return Err(AlgebraError::VariableMismatch(a.variables.clone(), b.variables.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let point: BTreeMap<String, Rational> = a
            .variables
            .iter()
            .map(|v| {
                let lo = if a.nonneg.contains(v) || b.nonneg.contains(v) { 0 } else { -32 };
                (v.clone(), Rational::new(rng.gen_range(lo..=32).into(), 8.into()))
            })
            .collect();
        if a.contains(&point) != b.contains(&point) {
            return Ok(Equivalence { equivalent: false, witness: Some(witness(a, b, point)) });
        }
    }
    // the LP works over `inner`'s variable order; both orders hold the same names
    for (inner, outer) in [(a, b), (b, a)] {
        if let Some(point) = escape_point(inner, outer) {
            return Ok(Equivalence { equivalent: false, witness: Some(witness(a, b, point)) });
        }
    }
    Ok(Equivalence { equivalent: true, witness: None })
}
