#![allow(dead_code, clippy::needless_range_loop)]

use std::f64::consts::LN_2;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sensopt_core::{BufferLimit, EnergyModel, Scenario};

pub const GAINS: [f64; 10] = [0.4, 0.2, 0.2, 0.5, 0.4, 0.6, 0.9, 0.3, 0.4, 1.0];
pub const VARIANCES: [f64; 10] = [0.7, 0.6, 1.0, 0.5, 0.3, 0.6, 0.2, 0.3, 0.7, 0.5];

pub fn reference(energy: EnergyModel, buffer: BufferLimit, delay: usize) -> Scenario {
    Scenario {
        gains: GAINS.to_vec(),
        variances: VARIANCES.to_vec(),
        energy,
        buffer,
        delay,
        proc_cost: 0.0,
        samp_cost: 0.0,
    }
}

pub fn reference_battery(e: f64, buffer: BufferLimit, delay: usize) -> Scenario {
    reference(EnergyModel::Battery(e), buffer, delay)
}

pub fn reference_harvest() -> Scenario {
    let mut packets = vec![0.0; 10];
    packets[0] = 1.0;
    packets[5] = 3.0;
    reference(EnergyModel::Harvest(packets), BufferLimit::Infinite, 1)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Battery,
    Harvest,
    Processing,
    Sampling,
}

/// Random small scenario of the given kind.
pub fn random_scenario(rng: &mut ChaCha8Rng, kind: Kind, max_n: usize, delay_one: bool) -> Scenario {
    let n = rng.gen_range(1..=max_n);
    let gains = (0..n).map(|_| rng.gen_range(0.2..1.5)).collect();
    let variances = (0..n).map(|_| rng.gen_range(0.2..1.5)).collect();
    let total = rng.gen_range(0.2..3.0);
    let energy = if kind == Kind::Harvest {
        let mut packets: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) }).collect();
        if packets.iter().all(|e| *e == 0.0) {
            packets[rng.gen_range(0..n)] = total;
        }
        EnergyModel::Harvest(packets)
    } else {
        EnergyModel::Battery(total)
    };
    let buffer = if rng.gen_bool(0.4) { BufferLimit::Infinite } else { BufferLimit::Finite(rng.gen_range(0.1..1.0)) };
    let delay = if delay_one { 1 } else { rng.gen_range(1..=n) };
    Scenario {
        gains,
        variances,
        energy,
        buffer,
        delay,
        proc_cost: if kind == Kind::Processing { rng.gen_range(0.05..1.5) } else { 0.0 },
        samp_cost: if kind == Kind::Sampling { rng.gen_range(0.05..0.6) } else { 0.0 },
    }
}

const FEAS_TOL: f64 = 1e-12;

/// Data still queued after serving the first `c.len()` slots oldest-first
/// with their full capacity. `None` if some of it misses its deadline or
/// the buffer overflows on the way.
fn fifo_backlog(r: &[f64], c: &[f64], d: usize, buffer: f64) -> Option<f64> {
    let mut queue: Vec<(usize, f64)> = Vec::new();
    for (j, &cap) in c.iter().enumerate() {
        queue.push((j, r[j]));
        let held: f64 = queue.iter().map(|q| q.1).sum();
        if held > buffer + FEAS_TOL {
            return None;
        }
        let mut cap = cap;
        for q in queue.iter_mut() {
            let sent = q.1.min(cap);
            q.1 -= sent;
            cap -= sent;
        }
        queue.retain(|q| q.1 > 0.0);
        if queue.iter().any(|q| q.0 + d - 1 <= j && q.1 > FEAS_TOL) {
            return None;
        }
    }
    Some(queue.iter().map(|q| q.1).sum())
}

/// Largest feasible source rate of the last slot given the earlier source
/// rates and all channel rates. `None` if the earlier rates already cannot
/// be delivered in time or within the buffer.
pub fn last_rate_headroom(r: &[f64], c: &[f64], d: usize, buffer: f64) -> Option<f64> {
    let n = c.len();
    let backlog = fifo_backlog(r, &c[..n - 1], d, buffer)?;
    let room = c[n - 1].min(buffer) - backlog;
    (room >= -FEAS_TOL).then_some(room.max(0.0))
}

/// Smallest last-slot channel rate that delivers all of `r` given the
/// earlier channel rates `c` (one fewer than `r`).
fn last_capacity_need(r: &[f64], c: &[f64], d: usize, buffer: f64) -> Option<f64> {
    let backlog = fifo_backlog(r, c, d, buffer)?;
    let need = backlog + r[r.len() - 1];
    (need <= buffer + FEAS_TOL).then_some(need)
}

/// Minimum of `f` over the box by a full grid followed by grid refinements
/// around the incumbent, down to a final step of at most `step`.
pub fn grid_min<F: FnMut(&[f64]) -> Option<f64>>(lo: &[f64], hi: &[f64], step: f64, mut f: F) -> Option<(f64, Vec<f64>)> {
    let dim = lo.len();
    if dim == 0 {
        return f(&[]).map(|v| (v, Vec::new()));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut widths: Vec<f64> = (0..dim).map(|k| (hi[k] - lo[k]) / 20.0).collect();
    let mut centers: Vec<f64> = (0..dim).map(|k| 0.5 * (lo[k] + hi[k])).collect();
    let mut half = 10i64;
    loop {
        let per = (2 * half + 1) as usize;
        let mut idx = vec![0usize; dim];
        let mut x = vec![0.0; dim];
        loop {
            for k in 0..dim {
                x[k] = (centers[k] + (idx[k] as i64 - half) as f64 * widths[k]).clamp(lo[k], hi[k]);
            }
            if let Some(v) = f(&x) {
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, x.clone()));
                }
            }
            let mut k = 0;
            while k < dim {
                idx[k] += 1;
                if idx[k] < per {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == dim {
                break;
            }
        }
        let (_, arg) = best.as_ref()?;
        if widths.iter().all(|w| *w <= step) {
            return best;
        }
        centers = arg.clone();
        for w in widths.iter_mut() {
            *w = (*w / 4.0).max(step.min(*w));
        }
        half = 5;
    }
}

fn slot_objective(var: f64, r: f64, phi: f64) -> f64 {
    if phi <= 0.0 {
        var
    } else {
        var * (1.0 - phi) + var * phi * (-2.0 * LN_2 * r / phi).exp()
    }
}

/// Energy of sending channel rate `c` with burst fraction `theta`.
fn slot_energy(h: f64, eps_p: f64, c: f64, theta: f64) -> Option<f64> {
    if theta <= 0.0 {
        return (c <= 0.0).then_some(0.0);
    }
    Some(theta * ((2.0 * LN_2 * c / theta).exp_m1() / h + eps_p))
}

/// Channel rate bought by spending `e` with burst fraction `theta`.
fn rate_for_energy(h: f64, eps_p: f64, e: f64, theta: f64) -> Option<f64> {
    if theta <= 0.0 {
        return Some(0.0);
    }
    let p = e / theta - eps_p;
    (p >= 0.0).then(|| 0.5 * theta * (h * p).ln_1p() / LN_2)
}

/// Cheapest way to send rate `c` in one slot, searching the burst fraction
/// on a grid. Without a processing cost, continuous transmission is best.
fn min_slot_energy(h: f64, eps_p: f64, c: f64, step: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    if eps_p == 0.0 {
        return slot_energy(h, 0.0, c, 1.0).unwrap();
    }
    grid_min(&[0.0], &[1.0], step, |t| slot_energy(h, eps_p, c, t[0])).unwrap().0
}

/// Largest rate one slot can send on energy `e`.
fn max_slot_rate(h: f64, eps_p: f64, e: f64, step: f64) -> f64 {
    if e <= 0.0 {
        return 0.0;
    }
    if eps_p == 0.0 {
        return rate_for_energy(h, 0.0, e, 1.0).unwrap();
    }
    -grid_min(&[0.0], &[1.0], step, |t| rate_for_energy(h, eps_p, e, t[0]).map(|c| -c)).unwrap().0
}

/// Exhaustive-grid estimate of the optimal total distortion.
///
/// Without sampling cost the outer grid runs over channel rates of all but
/// the last slot, which spends whatever energy is left; burst fractions are
/// chosen per slot to make each rate cheapest, which is optimal since more
/// channel rate never hurts. The inner grid assigns source rates, the last
/// one taking all remaining headroom.
///
/// With a sampling cost the outer grid runs over source rates instead; for
/// each, a grid finds the cheapest channel schedule and another splits the
/// remaining energy across sample fractions.
pub fn grid_oracle(s: &Scenario, step: f64) -> f64 {
    if s.samp_cost > 0.0 {
        return sampling_oracle(s, step);
    }
    let n = s.n_slots();
    let avail = s.energy.cumulative(n);
    let total = avail[n - 1];
    let bmax = s.buffer.value();
    let cmax: Vec<f64> =
        s.gains.iter().map(|h| (0.5 * (h * total).ln_1p() / LN_2).min(bmax.max(0.0) * n as f64)).collect();

    let outer = |x: &[f64]| -> Option<f64> {
        let mut c = vec![0.0; n];
        let mut used = 0.0;
        for i in 0..n - 1 {
            c[i] = x[i];
            used += min_slot_energy(s.gains[i], s.proc_cost, c[i], step);
            if used > avail[i] + FEAS_TOL {
                return None;
            }
        }
        c[n - 1] = max_slot_rate(s.gains[n - 1], s.proc_cost, (total - used).max(0.0), step);
        let rhi: Vec<f64> = (0..n - 1).map(|i| c[i..].iter().sum::<f64>().min(bmax)).collect();
        let inner = grid_min(&vec![0.0; n - 1], &rhi, step, |r| {
            let last = last_rate_headroom(r, &c, s.delay, bmax)?;
            let mut v = slot_objective(s.variances[n - 1], last, 1.0);
            for i in 0..n - 1 {
                v += slot_objective(s.variances[i], r[i], 1.0);
            }
            Some(v)
        });
        inner.map(|(v, _)| v)
    };
    grid_min(&vec![0.0; n - 1], &cmax[..n - 1], step, outer).expect("the idle point is always feasible").0
}

fn sampling_oracle(s: &Scenario, step: f64) -> f64 {
    let EnergyModel::Battery(total) = s.energy else { panic!("sampling oracle needs a battery") };
    assert_eq!(s.proc_cost, 0.0, "sampling oracle has no processing cost");
    let n = s.n_slots();
    let bmax = s.buffer.value();
    let cmax: Vec<f64> = s.gains.iter().map(|h| 0.5 * (h * total).ln_1p() / LN_2).collect();
    let rhi: Vec<f64> =
        (0..n).map(|i| cmax[i..(i + s.delay).min(n)].iter().sum::<f64>().min(bmax)).collect();

    let outer = |r: &[f64]| -> Option<f64> {
        let channel = grid_min(&vec![0.0; n - 1], &cmax[..n - 1], step, |c| {
            let need = last_capacity_need(r, c, s.delay, bmax)?;
            let mut e = slot_energy(s.gains[n - 1], 0.0, need, 1.0)?;
            for i in 0..n - 1 {
                e += slot_energy(s.gains[i], 0.0, c[i], 1.0)?;
            }
            (e <= total + FEAS_TOL).then_some(e)
        })?
        .0;
        let budget = ((total - channel) / s.samp_cost).max(0.0);
        let split = grid_min(&vec![0.0; n - 1], &vec![1.0; n - 1], step, |phi| {
            let left = budget - phi.iter().sum::<f64>();
            if left < -FEAS_TOL {
                return None;
            }
            let mut v = slot_objective(s.variances[n - 1], r[n - 1], left.clamp(0.0, 1.0));
            for i in 0..n - 1 {
                v += slot_objective(s.variances[i], r[i], phi[i]);
            }
            Some(v)
        })?;
        Some(split.0)
    };
    grid_min(&vec![0.0; n], &rhi, step, outer).expect("the idle point is always feasible").0
}
