//! The sensor allocation program in barrier form.
//!
//! Decision vector layout: `r` (source rates), `c` (channel rates), then
//! burst fractions `θ` when processing cost is charged, then sampling
//! fractions `φ` when sampling cost is charged. Variables pinned by the
//! scenario (or by a previous snap) are removed from the Newton system.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use super::barrier::{BarrierProgram, SparseRow};

const A: f64 = 2.0 * LN_2;

/// Per-slot objective `σ²(1−φ) + σ²φ·2^(−2r/φ)` (with φ = 1 when sampling
/// is free). Returns value, gradient in (r, φ), and Hessian
/// entries (rr, rφ, φφ).
pub fn objective_terms(var: f64, r: f64, phi: Option<f64>) -> (f64, [f64; 2], [f64; 3]) {
    match phi {
        None => {
            let e = (-A * r).exp();
            (var * e, [-A * var * e, 0.0], [A * A * var * e, 0.0, 0.0])
        }
        Some(phi) => {
            let k = r / phi;
            let e = (-A * k).exp();
            let f = var * (1.0 - phi) + var * phi * e;
            let gr = -A * var * e;
            let gphi = -var + var * e * (1.0 + A * k);
            let w = A * A * var * e / phi;
            (f, [gr, gphi], [w, -w * k, w * k * k])
        }
    }
}

/// Per-slot channel energy `θ((2^(2c/θ) − 1)/h + ε_p)` (θ = 1 without
/// processing cost). Returns value, gradient in (c, θ) and Hessian entries
/// (cc, cθ, θθ). Infinite when the exponent overflows.
pub fn energy_terms(h: f64, eps_p: f64, c: f64, theta: Option<f64>) -> (f64, [f64; 2], [f64; 3]) {
    match theta {
        None => {
            let e = (A * c).exp();
            ((A * c).exp_m1() / h, [A * e / h, 0.0], [A * A * e / h, 0.0, 0.0])
        }
        Some(theta) => {
            let u = c / theta;
            let e = (A * u).exp();
            let f = theta * ((A * u).exp_m1() / h + eps_p);
            let gc = A * e / h;
            let gt = (A * u).exp_m1() / h + eps_p - u * A * e / h;
            let w = A * A * e / (h * theta);
            (f, [gc, gt], [w, -w * u, w * u * u])
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub n: usize,
    pub proc: bool,
    pub samp: bool,
}

impl Layout {
    pub fn r(&self, i: usize) -> usize {
        i
    }
    pub fn c(&self, i: usize) -> usize {
        self.n + i
    }
    pub fn theta(&self, i: usize) -> Option<usize> {
        self.proc.then_some(2 * self.n + i)
    }
    pub fn phi(&self, i: usize) -> Option<usize> {
        let base = if self.proc { 3 } else { 2 };
        self.samp.then_some(base * self.n + i)
    }
    pub fn dim(&self) -> usize {
        self.n * (2 + self.proc as usize + self.samp as usize)
    }
}

/// Cumulative energy constraint over slots `0..=last`.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub last: usize,
    pub available: f64,
}

pub struct SensorProgram {
    pub layout: Layout,
    pub gains: Vec<f64>,
    pub variances: Vec<f64>,
    pub eps_p: f64,
    pub eps_s: f64,
    /// Values of pinned variables, indexed by full position.
    pub fixed: Vec<Option<f64>>,
    /// Full position of each free variable.
    pub free: Vec<usize>,
    /// Free index of each full position.
    pub pos: Vec<Option<usize>>,
    pub rows: Vec<SparseRow>,
    pub checkpoints: Vec<Checkpoint>,
}

impl SensorProgram {
    /// `rows` are over the full layout; pinned variables are substituted.
    /// Rows left without free variables are dropped (callers check them).
    pub fn new(
        layout: Layout,
        gains: Vec<f64>,
        variances: Vec<f64>,
        eps_p: f64,
        eps_s: f64,
        fixed: Vec<Option<f64>>,
        full_rows: &[SparseRow],
        checkpoints: Vec<Checkpoint>,
    ) -> Self {
        let free: Vec<usize> = (0..layout.dim()).filter(|&i| fixed[i].is_none()).collect();
        let mut pos = vec![None; layout.dim()];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = Some(k);
        }
        let rows = full_rows
            .iter()
            .filter_map(|row| {
                let mut bound = row.bound;
                let mut coeffs = Vec::new();
                for &(i, a) in &row.coeffs {
                    match fixed[i] {
                        Some(v) => bound -= a * v,
                        None => coeffs.push((pos[i].unwrap(), a)),
                    }
                }
                (!coeffs.is_empty()).then(|| SparseRow { coeffs, bound, label: row.label.clone() })
            })
            .collect();
        SensorProgram { layout, gains, variances, eps_p, eps_s, fixed, free, pos, rows, checkpoints }
    }

    /// Expands a free vector into the full layout.
    pub fn full(&self, y: &[f64]) -> Vec<f64> {
        self.fixed
            .iter()
            .enumerate()
            .map(|(i, f)| f.unwrap_or_else(|| y[self.pos[i].unwrap()]))
            .collect()
    }

    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| x[i]).collect()
    }

    fn slot_objective(&self, x: &[f64], i: usize) -> (f64, [f64; 2], [f64; 3]) {
        let l = self.layout;
        let phi = l.phi(i).map(|k| x[k]);
        match phi {
            Some(p) if p <= 0.0 => (self.variances[i], [0.0; 2], [0.0; 3]),
            _ => objective_terms(self.variances[i], x[l.r(i)], phi),
        }
    }

    /// Slot energy including sampling cost; derivatives in (c, θ), plus the
    /// constant φ-slope `ε_s`.
    fn slot_energy(&self, x: &[f64], i: usize) -> (f64, [f64; 2], [f64; 3]) {
        let l = self.layout;
        let theta = l.theta(i).map(|k| x[k]);
        let c = x[l.c(i)];
        let (mut e, g, h) = match theta {
            Some(t) if t <= 0.0 => {
                if c > 0.0 {
                    (f64::INFINITY, [0.0; 2], [0.0; 3])
                } else {
                    (0.0, [0.0; 2], [0.0; 3])
                }
            }
            _ => energy_terms(self.gains[i], self.eps_p, c, theta),
        };
        if let Some(k) = l.phi(i) {
            e += self.eps_s * x[k];
        }
        (e, g, h)
    }

    fn add_pair(&self, slots: [Option<usize>; 2], gs: [f64; 2], hs: [f64; 3], scale: f64, g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        let idx = slots.map(|s| s.and_then(|k| self.pos[k]));
        for a in 0..2 {
            if let Some(p) = idx[a] {
                g[p] += scale * gs[a];
                for b in 0..2 {
                    if let Some(q) = idx[b] {
                        let hv = match (a, b) {
                            (0, 0) => hs[0],
                            (1, 1) => hs[2],
                            _ => hs[1],
                        };
                        h[(p, q)] += scale * hv;
                    }
                }
            }
        }
    }
}

impl BarrierProgram for SensorProgram {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn linear_rows(&self) -> &[SparseRow] {
        &self.rows
    }

    fn n_nonlinear(&self) -> usize {
        self.checkpoints.len()
    }

    fn nonlinear_label(&self, k: usize) -> String {
        if self.checkpoints.len() == 1 {
            "energy".to_string()
        } else {
            format!("energy[{}]", self.checkpoints[k].last + 1)
        }
    }

    fn objective(&self, y: &[f64]) -> Option<f64> {
        let x = self.full(y);
        let f: f64 = (0..self.layout.n).map(|i| self.slot_objective(&x, i).0).sum();
        f.is_finite().then_some(f)
    }

    fn objective_derivs(&self, y: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        let x = self.full(y);
        let l = self.layout;
        for i in 0..l.n {
            let (_, gs, hs) = self.slot_objective(&x, i);
            self.add_pair([Some(l.r(i)), l.phi(i)], gs, hs, 1.0, g, h);
        }
    }

    fn constraint(&self, k: usize, y: &[f64]) -> Option<f64> {
        let x = self.full(y);
        let cp = &self.checkpoints[k];
        let used: f64 = (0..=cp.last).map(|i| self.slot_energy(&x, i).0).sum();
        used.is_finite().then_some(used - cp.available)
    }

    fn constraint_derivs(&self, k: usize, y: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        let x = self.full(y);
        let l = self.layout;
        for i in 0..=self.checkpoints[k].last {
            let (_, gs, hs) = self.slot_energy(&x, i);
            self.add_pair([Some(l.c(i)), l.theta(i)], gs, hs, 1.0, g, h);
            if let Some(p) = l.phi(i).and_then(|q| self.pos[q]) {
                g[p] += self.eps_s;
            }
        }
    }
}
