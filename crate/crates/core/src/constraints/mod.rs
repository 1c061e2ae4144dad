//! Exact rational linear inequality systems over named variables.
//!
//! Used to derive and certify the scheduling constraints on source rates
//! and channel capacities. No floating point is used here except in the
//! explicit conversion helpers at the solver boundary.

mod build;
mod equiv;
mod fm;
pub mod lp;

pub use build::{build_raw_system, build_reduced_system, raw_rate_var, BufferSpec, BUFFER_VAR};
pub use equiv::{systems_equivalent, Equivalence, Witness};
pub use fm::{eliminate_all, fm_eliminate, lift_point, prune_lp, prune_syntactic, Pruning};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("variable {0:?} is not declared in the system")]
    UnknownVariable(String),
    #[error("systems are over different variables: {0:?} vs {1:?}")]
    VariableMismatch(Vec<String>, Vec<String>),
    #[error("delay {d} must lie in [1, {n}]")]
    InvalidDelay { n: usize, d: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `Σ coeffs[v] * v <= bound`. Zero coefficients are never stored.
#[derive(Debug, Clone)]
pub struct LinIneq {
    pub coeffs: BTreeMap<String, Rational>,
    pub bound: Rational,
    /// Provenance tag such as `causality[2]`; ignored by comparisons.
    pub label: Option<String>,
}

impl PartialEq for LinIneq {
    fn eq(&self, other: &Self) -> bool {
        self.coeffs == other.coeffs && self.bound == other.bound
    }
}

impl Eq for LinIneq {}

impl LinIneq {
    pub fn new<I, S>(terms: I, bound: Rational) -> Self
    where
        I: IntoIterator<Item = (S, Rational)>,
        S: Into<String>,
    {
        let mut coeffs: BTreeMap<String, Rational> = BTreeMap::new();
        for (v, c) in terms {
            *coeffs.entry(v.into()).or_insert_with(Rational::zero) += c;
        }
        coeffs.retain(|_, c| !c.is_zero());
        LinIneq { coeffs, bound, label: None }
    }

    /// Integer-coefficient shorthand, mostly for tests and builders.
    pub fn int(terms: &[(&str, i64)], bound: i64) -> Self {
        LinIneq::new(terms.iter().map(|(v, c)| (*v, rat(*c))), rat(bound))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn coeff(&self, var: &str) -> Rational {
        self.coeffs.get(var).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn lhs(&self, point: &BTreeMap<String, Rational>) -> Rational {
        self.coeffs
            .iter()
            .map(|(v, c)| c * point.get(v).cloned().unwrap_or_else(Rational::zero))
            .fold(Rational::zero(), |a, b| a + b)
    }

    pub fn satisfied_by(&self, point: &BTreeMap<String, Rational>) -> bool {
        self.lhs(point) <= self.bound
    }

    /// Scale by a positive factor so that all coefficients and the bound are
    /// coprime integers. Rows equal up to positive scaling become identical.
    pub fn canonical(&self) -> LinIneq {
        let mut lcm = BigInt::one();
        for c in self.coeffs.values().chain(std::iter::once(&self.bound)) {
            lcm = lcm.lcm(c.denom());
        }
        let scaled: Vec<(String, BigInt)> = self
            .coeffs
            .iter()
            .map(|(v, c)| (v.clone(), (c * Rational::from_integer(lcm.clone())).to_integer()))
            .collect();
        let bound = (&self.bound * Rational::from_integer(lcm)).to_integer();
        let mut g = bound.abs();
        for (_, c) in &scaled {
            g = g.gcd(c);
        }
        if g.is_zero() {
            g = BigInt::one();
        }
        LinIneq {
            coeffs: scaled
                .into_iter()
                .map(|(v, c)| (v, Rational::from_integer(c / &g)))
                .collect(),
            bound: Rational::from_integer(bound / &g),
            label: self.label.clone(),
        }
    }

    /// Render with terms in the given variable order.
    pub fn render(&self, order: &[String]) -> String {
        let mut terms = Vec::new();
        for v in order {
            if let Some(c) = self.coeffs.get(v) {
                terms.push(format!("{}*{}", fmt_rational(c), v));
            }
        }
        for (v, c) in &self.coeffs {
            if !order.contains(v) {
                terms.push(format!("{}*{}", fmt_rational(c), v));
            }
        }
        let lhs = if terms.is_empty() { "0".to_string() } else { terms.join(" + ") };
        format!("{} <= {}", lhs, fmt_rational(&self.bound))
    }
}

impl fmt::Display for LinIneq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[]))
    }
}

pub fn fmt_rational(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                None
            } else {
                Some(Rational::new(n, d))
            }
        }
        None => s.parse::<BigInt>().ok().map(Rational::from_integer),
    }
}

/// A conjunction of linear inequalities with declared variables, some of
/// which are additionally constrained to be nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub variables: Vec<String>,
    pub inequalities: Vec<LinIneq>,
    pub nonneg: BTreeSet<String>,
}

impl ConstraintSystem {
    pub fn new(variables: Vec<String>) -> Self {
        ConstraintSystem { variables, inequalities: Vec::new(), nonneg: BTreeSet::new() }
    }

    /// Declares every variable nonnegative.
    pub fn all_nonneg(mut self) -> Self {
        self.nonneg = self.variables.iter().cloned().collect();
        self
    }

    pub fn push(&mut self, ineq: LinIneq) -> Result<(), AlgebraError> {
        if let Some(v) = ineq.coeffs.keys().find(|v| !self.variables.contains(v)) {
            return Err(AlgebraError::UnknownVariable(v.clone()));
        }
        self.inequalities.push(ineq);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inequalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inequalities.is_empty()
    }

    pub fn declares(&self, var: &str) -> bool {
        self.variables.iter().any(|v| v == var)
    }

    /// Point membership, including nonnegativity.
    pub fn contains(&self, point: &BTreeMap<String, Rational>) -> bool {
        self.nonneg
            .iter()
            .all(|v| point.get(v).is_none_or(|x| !x.is_negative()))
            && self.inequalities.iter().all(|q| q.satisfied_by(point))
    }

    /// The first inequality violated by the point, if any.
    pub fn first_violation(&self, point: &BTreeMap<String, Rational>) -> Option<&LinIneq> {
        self.inequalities.iter().find(|q| !q.satisfied_by(point))
    }

    /// Canonical rows as a set, for order-insensitive comparison.
    pub fn canonical_rows(&self) -> BTreeSet<String> {
        let order: Vec<String> = {
            let mut v = self.variables.clone();
            v.sort();
            v
        };
        self.inequalities.iter().map(|q| q.canonical().render(&order)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# variables: {}\n", self.variables.join(" ")));
        let nonneg: Vec<&str> =
            self.variables.iter().filter(|v| self.nonneg.contains(*v)).map(|v| v.as_str()).collect();
        out.push_str(&format!("# nonneg: {}\n", nonneg.join(" ")));
        for q in &self.inequalities {
            out.push_str(&q.render(&self.variables));
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`ConstraintSystem::to_text`]. Without a
    /// `# variables:` header the variables are collected in order of
    /// appearance.
    pub fn from_text(text: &str) -> Result<Self, AlgebraError> {
        let mut declared: Option<Vec<String>> = None;
        let mut nonneg = BTreeSet::new();
        let mut rows = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(vars) = rest.strip_prefix("variables:") {
                    declared = Some(vars.split_whitespace().map(str::to_string).collect());
                } else if let Some(vars) = rest.strip_prefix("nonneg:") {
                    nonneg.extend(vars.split_whitespace().map(str::to_string));
                }
                continue;
            }
            let err = |message: &str| AlgebraError::Parse { line: line_no, message: message.to_string() };
            let (lhs, rhs) = line.split_once("<=").ok_or_else(|| err("missing '<='"))?;
            let bound = parse_rational(rhs).ok_or_else(|| err("bad bound"))?;
            let mut terms = Vec::new();
            if lhs.trim() != "0" {
                for term in lhs.split(" + ") {
                    let (c, v) = term.trim().split_once('*').ok_or_else(|| err("term must be coeff*var"))?;
                    let c = parse_rational(c).ok_or_else(|| err("bad coefficient"))?;
                    let v = v.trim().to_string();
                    if v.is_empty() {
                        return Err(err("empty variable name"));
                    }
                    if !seen.contains(&v) {
                        seen.push(v.clone());
                    }
                    terms.push((v, c));
                }
            }
            rows.push(LinIneq::new(terms, bound));
        }
        let variables = declared.unwrap_or(seen);
        let mut sys = ConstraintSystem::new(variables);
        for v in &nonneg {
            if !sys.declares(v) {
                return Err(AlgebraError::UnknownVariable(v.clone()));
            }
        }
        sys.nonneg = nonneg;
        for q in rows {
            sys.push(q)?;
        }
        Ok(sys)
    }

    /// Dense floating-point rows `a·x <= b` over `order`. Variables listed in
    /// `values` are substituted and moved into the bound; any other variable
    /// missing from `order` is an error.
    pub fn dense_rows(
        &self,
        order: &[String],
        values: &BTreeMap<String, f64>,
    ) -> Result<Vec<DenseRow>, AlgebraError> {
        let index: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        self.inequalities
            .iter()
            .map(|q| {
                let mut coeffs = vec![0.0; order.len()];
                let mut bound = q.bound.to_f64().unwrap_or(f64::NAN);
                for (v, c) in &q.coeffs {
                    let c = c.to_f64().unwrap_or(f64::NAN);
                    if let Some(&i) = index.get(v.as_str()) {
                        coeffs[i] = c;
                    } else if let Some(x) = values.get(v) {
                        bound -= c * x;
                    } else {
                        return Err(AlgebraError::UnknownVariable(v.clone()));
                    }
                }
                Ok(DenseRow { coeffs, bound, label: q.label.clone().unwrap_or_default() })
            })
            .collect()
    }
}

/// A floating-point inequality `coeffs·x <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRow {
    pub coeffs: Vec<f64>,
    pub bound: f64,
    pub label: String,
}

impl DenseRow {
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.bound - self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}
