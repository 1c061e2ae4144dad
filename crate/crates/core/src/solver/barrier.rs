//! Primal log-barrier method for small dense smooth convex programs.
//!
//! minimize f(x) s.t. g_k(x) <= 0, a_j·x <= b_j, started from a strictly
//! feasible point. Each centering step is a damped Newton iteration with
//! Armijo backtracking; the barrier weight grows geometrically until the
//! surrogate gap m/t drops below the tolerance.

use nalgebra::{DMatrix, DVector};

/// Sparse linear inequality `Σ coeffs · x <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
    pub label: String,
}

impl SparseRow {
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.bound - self.coeffs.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }
}

pub trait BarrierProgram {
    fn dim(&self) -> usize;
    fn linear_rows(&self) -> &[SparseRow];
    fn n_nonlinear(&self) -> usize;
    fn nonlinear_label(&self, k: usize) -> String;

    /// Objective value, or `None` outside the domain.
    fn objective(&self, x: &[f64]) -> Option<f64>;
    /// Adds the objective gradient and Hessian into `g` and `h`.
    fn objective_derivs(&self, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>);
    /// Value of the k-th nonlinear constraint, or `None` outside the domain.
    fn constraint(&self, k: usize, x: &[f64]) -> Option<f64>;
    /// Overwrites `g` and `h` with the k-th constraint's derivatives.
    fn constraint_derivs(&self, k: usize, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierSettings {
    pub tol_gap: f64,
    pub max_newton: usize,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct BarrierResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gap: f64,
    /// Dual estimates, linear rows first, then nonlinear constraints.
    pub duals: Vec<(String, f64)>,
}

const ARMIJO: f64 = 0.25;
const NEWTON_TOL: f64 = 1e-11;
const STALL_DECREMENT: f64 = 1e-6;
/// Near-centered steps allowed per centering before giving up on rounding noise.
const STALL_STEPS: usize = 3;

struct Eval {
    f: f64,
    log_slacks: f64,
}

fn evaluate<P: BarrierProgram>(p: &P, x: &[f64]) -> Option<Eval> {
    let f = p.objective(x)?;
    let mut log_slacks = 0.0;
    for row in p.linear_rows() {
        let s = row.slack(x);
        if !(s > 0.0) {
            return None;
        }
        log_slacks += s.ln();
    }
    for k in 0..p.n_nonlinear() {
        let g = p.constraint(k, x)?;
        if !(g < 0.0) || !g.is_finite() {
            return None;
        }
        log_slacks += (-g).ln();
    }
    if !f.is_finite() {
        return None;
    }
    Some(Eval { f, log_slacks })
}

fn barrier_derivs<P: BarrierProgram>(p: &P, x: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
    let n = p.dim();
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    p.objective_derivs(x, &mut g, &mut h);
    g *= t;
    h *= t;
    for row in p.linear_rows() {
        let s = row.slack(x);
        let inv = 1.0 / s;
        for &(i, a) in &row.coeffs {
            g[i] += a * inv;
            for &(j, b) in &row.coeffs {
                h[(i, j)] += a * b * inv * inv;
            }
        }
    }
    let mut cg = DVector::zeros(n);
    let mut ch = DMatrix::zeros(n, n);
    for k in 0..p.n_nonlinear() {
        let gk = p.constraint(k, x).unwrap_or(f64::NAN);
        cg.fill(0.0);
        ch.fill(0.0);
        p.constraint_derivs(k, x, &mut cg, &mut ch);
        let inv = -1.0 / gk;
        g.axpy(inv, &cg, 1.0);
        h += &ch * inv;
        h.ger(inv * inv, &cg, &cg, 1.0);
    }
    (g, h)
}

/// Solves `h d = -g` with symmetric diagonal scaling and a Cholesky
/// factorization, regularizing if the matrix is numerically indefinite.
fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let scale: DVector<f64> = DVector::from_iterator(n, (0..n).map(|i| {
        let d = h[(i, i)];
        if d > 0.0 && d.is_finite() {
            1.0 / d.sqrt()
        } else {
            1.0
        }
    }));
    let mut hs = h.clone();
    for i in 0..n {
        for j in 0..n {
            hs[(i, j)] *= scale[i] * scale[j];
        }
    }
    let gs = g.component_mul(&scale);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut m = hs.clone();
        for i in 0..n {
            m[(i, i)] += reg;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&(-&gs));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d.component_mul(&scale));
            }
        }
        reg = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
    }
    None
}

pub fn minimize<P: BarrierProgram>(p: &P, x0: Vec<f64>, settings: &BarrierSettings) -> BarrierResult {
    let m = (p.linear_rows().len() + p.n_nonlinear()) as f64;
    let mut x = x0;
    let mut iterations = 0;
    let mut t = 1.0;
    let mut converged = true;
    if m == 0.0 {
        return BarrierResult { x, iterations, converged, gap: 0.0, duals: Vec::new() };
    }
    loop {
        let mut steps = 0;
        let mut near = 0;
        loop {
            let Some(cur) = evaluate(p, &x) else {
                converged = false;
                break;
            };
            let (g, h) = barrier_derivs(p, &x, t);
            let Some(dx) = newton_direction(&g, &h) else {
                converged = false;
                break;
            };
            let decrement = -g.dot(&dx);
            if !(decrement > 0.0) || decrement / 2.0 <= NEWTON_TOL {
                break;
            }
            if steps >= settings.max_newton {
                converged = false;
                break;
            }
            steps += 1;
            iterations += 1;
            // rounding noise of the barrier value at this scale
            let noise = 1e-13 * (t * cur.f.abs() + cur.log_slacks.abs() + 1.0);
            let base = t * cur.f - cur.log_slacks;
            let mut s = 1.0;
            let mut accepted = false;
            let mut stalled = false;
            let mut trial = x.clone();
            while s > 1e-16 {
                for i in 0..x.len() {
                    trial[i] = x[i] + s * dx[i];
                }
                if let Some(next) = evaluate(p, &trial) {
                    let val = t * next.f - next.log_slacks;
                    if val <= base - ARMIJO * s * decrement + noise {
                        accepted = true;
                        // near-centered: a few more steps, then only rounding noise is left
                        if decrement < STALL_DECREMENT {
                            near += 1;
                            stalled = near >= STALL_STEPS;
                        }
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                // no representable progress: the iterate is centered to precision
                break;
            }
            x.copy_from_slice(&trial);
            if stalled {
                break;
            }
        }
        if !converged {
            break;
        }
        if m / t <= settings.tol_gap {
            break;
        }
        t *= settings.mu;
    }
    let mut duals: Vec<(String, f64)> = p
        .linear_rows()
        .iter()
        .map(|row| (row.label.clone(), 1.0 / (t * row.slack(&x))))
        .collect();
    for k in 0..p.n_nonlinear() {
        let g = p.constraint(k, &x).unwrap_or(f64::NAN);
        duals.push((p.nonlinear_label(k), -1.0 / (t * g)));
    }
    BarrierResult { x, iterations, converged, gap: m / t, duals }
}
