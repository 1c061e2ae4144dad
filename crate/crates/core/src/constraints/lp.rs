//! Exact two-phase tableau simplex over rationals with Bland's rule.
//!
//! Small and slow by design: it certifies redundancy and containment on
//! systems with a few dozen variables, where exactness matters more than
//! speed.

use num_traits::{One, Signed, Zero};

use super::Rational;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: Rational, point: Vec<Rational> },
    /// `point + t * ray` is feasible for all `t >= 0` and the objective grows
    /// without bound along it.
    Unbounded { point: Vec<Rational>, ray: Vec<Rational> },
    Infeasible,
}

/// A dense row `coeffs · x <= bound`.
#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<Rational>,
    pub bound: Rational,
}

struct Tableau {
    a: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let inv = Rational::one() / &self.a[r][col];
        for v in self.a[r].iter_mut() {
            if !v.is_zero() {
                *v *= &inv;
            }
        }
        self.rhs[r] *= &inv;
        let prow = self.a[r].clone();
        let prhs = self.rhs[r].clone();
        for k in 0..self.a.len() {
            if k == r || self.a[k][col].is_zero() {
                continue;
            }
            let f = self.a[k][col].clone();
            for (v, p) in self.a[k].iter_mut().zip(&prow) {
                if !p.is_zero() {
                    *v -= &f * p;
                }
            }
            self.rhs[k] -= &f * &prhs;
        }
        self.basis[r] = col;
    }

    /// Maximizes `obj · x` over the columns flagged in `allowed`. Returns the
    /// entering column on unboundedness.
    fn optimize(&mut self, obj: &[Rational], allowed: &[bool]) -> Result<(), usize> {
        loop {
            let mut entering = None;
            for j in 0..obj.len() {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = obj[j].clone();
                for (i, &b) in self.basis.iter().enumerate() {
                    if !obj[b].is_zero() && !self.a[i][j].is_zero() {
                        rc -= &obj[b] * &self.a[i][j];
                    }
                }
                if rc.is_positive() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else { return Ok(()) };
            let mut leave: Option<(usize, Rational)> = None;
            for i in 0..self.a.len() {
                if !self.a[i][col].is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / &self.a[i][col];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, col),
                None => return Err(col),
            }
        }
    }

    fn column_values(&self, ncols: usize) -> Vec<Rational> {
        let mut x = vec![Rational::zero(); ncols];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < ncols {
                x[b] = self.rhs[i].clone();
            }
        }
        x
    }
}

/// Maximizes `objective · x` subject to `rows` and `x_j >= 0` wherever
/// `nonneg[j]`. Free variables are split into a difference of two
/// nonnegative columns.
pub fn maximize(objective: &[Rational], rows: &[Row], nonneg: &[bool]) -> LpOutcome {
    let n = objective.len();
    // column layout: one per variable, plus a negative part for free ones
    let mut neg_col = vec![None; n];
    let mut ncols = n;
    for j in 0..n {
        if !nonneg[j] {
            neg_col[j] = Some(ncols);
            ncols += 1;
        }
    }
    let m = rows.len();
    let n_struct = ncols;
    let slack0 = n_struct;
    let art0 = slack0 + m;
    let needs_art: Vec<usize> = (0..m).filter(|&i| rows[i].bound.is_negative()).collect();
    let total = art0 + needs_art.len();

    let mut a = vec![vec![Rational::zero(); total]; m];
    let mut rhs = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art_k = 0;
    for (i, row) in rows.iter().enumerate() {
        for j in 0..n {
            a[i][j] = row.coeffs[j].clone();
            if let Some(nc) = neg_col[j] {
                a[i][nc] = -row.coeffs[j].clone();
            }
        }
        a[i][slack0 + i] = Rational::one();
        if row.bound.is_negative() {
            for v in a[i].iter_mut() {
                *v = -v.clone();
            }
            a[i][art0 + art_k] = Rational::one();
            basis.push(art0 + art_k);
            art_k += 1;
            rhs.push(-row.bound.clone());
        } else {
            basis.push(slack0 + i);
            rhs.push(row.bound.clone());
        }
    }
    let mut t = Tableau { a, rhs, basis };

    if !needs_art.is_empty() {
        let mut obj1 = vec![Rational::zero(); total];
        for v in obj1.iter_mut().skip(art0) {
            *v = -Rational::one();
        }
        let all = vec![true; total];
        // phase one is bounded above by zero
        let _ = t.optimize(&obj1, &all);
        let infeas: Rational = (0..m)
            .filter(|&i| t.basis[i] >= art0)
            .map(|i| t.rhs[i].clone())
            .fold(Rational::zero(), |s, v| s + v);
        if infeas.is_positive() {
            return LpOutcome::Infeasible;
        }
        for i in 0..m {
            if t.basis[i] >= art0 {
                if let Some(j) = (0..art0).find(|&j| !t.a[i][j].is_zero()) {
                    t.pivot(i, j);
                }
            }
        }
    }

    let mut obj2 = vec![Rational::zero(); total];
    for j in 0..n {
        obj2[j] = objective[j].clone();
        if let Some(nc) = neg_col[j] {
            obj2[nc] = -objective[j].clone();
        }
    }
    let allowed: Vec<bool> = (0..total).map(|j| j < art0).collect();
    let outcome = t.optimize(&obj2, &allowed);

    let cols = t.column_values(total);
    let fold = |c: &[Rational]| -> Vec<Rational> {
        (0..n)
            .map(|j| match neg_col[j] {
                Some(nc) => &c[j] - &c[nc],
                None => c[j].clone(),
            })
            .collect()
    };
    let point = fold(&cols);
    match outcome {
        Ok(()) => {
            let value = objective
                .iter()
                .zip(&point)
                .map(|(c, x)| c * x)
                .fold(Rational::zero(), |s, v| s + v);
            LpOutcome::Optimal { value, point }
        }
        Err(col) => {
            let mut dir = vec![Rational::zero(); total];
            dir[col] = Rational::one();
            for (i, &b) in t.basis.iter().enumerate() {
                dir[b] = -t.a[i][col].clone();
            }
            LpOutcome::Unbounded { point, ray: fold(&dir) }
        }
    }
}
