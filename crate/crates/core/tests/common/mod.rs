//! Reference solvers for the integration suites.
//!
//! Nothing here calls into the solver modules of the crate: gains are
//! recomputed from `(H H^H)^-1`, power duals are found by plain bisection.

#![allow(dead_code)]

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use zfmiso::{ChannelRealization, Grid};

/// `beta[n][k]`, zero where user `k` is not on subchannel `n`.
pub type Gains = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct RefSolution {
    pub p: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    pub objective: f64,
    pub used: f64,
    pub theta: f64,
    pub delta: f64,
}

/// `beta_k = [(H H^H)^-1]_kk` for the users of `set` on subchannel `n`.
pub fn reference_beta(chan: &ChannelRealization, n: usize, set: &[usize]) -> Option<Vec<f64>> {
    let m = chan.antennas();
    let h = DMatrix::<Complex64>::from_fn(set.len(), m, |r, c| chan.vector(n, set[r])[c]);
    let gram = &h * h.adjoint();
    let inv = gram.try_inverse()?;
    let beta: Vec<f64> = (0..set.len()).map(|i| inv[(i, i)].re).collect();
    beta.iter().all(|b| b.is_finite() && *b > 0.0 && *b < 1e12).then_some(beta)
}

pub fn grid(g: &Gains) -> Grid {
    let mut out = Grid::zeros(g.len(), g[0].len());
    for (n, row) in g.iter().enumerate() {
        out.row_mut(n).copy_from_slice(row);
    }
    out
}

pub fn gains_for(chan: &ChannelRealization, sets: &[Vec<usize>]) -> Option<Gains> {
    let mut g = vec![vec![0.0; chan.users()]; chan.subchannels()];
    for (n, set) in sets.iter().enumerate() {
        if set.is_empty() {
            continue;
        }
        for (k, b) in set.iter().zip(reference_beta(chan, n, set)?) {
            g[n][*k] = b;
        }
    }
    Some(g)
}

fn powers(g: &Gains, w: &[f64], theta: f64) -> Vec<Vec<f64>> {
    g.iter()
        .map(|row| {
            row.iter()
                .zip(w)
                .map(|(&b, &w)| if b > 0.0 { (w / (theta * b * LN_2) - 1.0).max(0.0) } else { 0.0 })
                .collect()
        })
        .collect()
}

fn used(g: &Gains, p: &[Vec<f64>]) -> f64 {
    g.iter().zip(p).flat_map(|(gr, pr)| gr.iter().zip(pr).map(|(b, p)| b * p)).sum()
}

fn rates(p: &[Vec<f64>], users: usize) -> Vec<f64> {
    (0..users).map(|k| p.iter().map(|row| (1.0 + row[k]).log2()).sum()).collect()
}

/// Water-filling with weights `w` that spends exactly `power`, by bisection
/// on `ln theta`. None when no entry can receive power.
pub fn waterfill_oracle(g: &Gains, c: &[f64], w: &[f64], power: f64) -> Option<RefSolution> {
    let hi0 = g
        .iter()
        .flat_map(|row| row.iter().zip(w).filter(|(b, _)| **b > 0.0).map(|(b, w)| w / (b * LN_2)))
        .fold(0.0, f64::max);
    if hi0 <= 0.0 {
        return None;
    }
    let (mut lo, mut hi) = ((hi0 * 1e-15).ln(), hi0.ln());
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if used(g, &powers(g, w, mid.exp())) > power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = (0.5 * (lo + hi)).exp();
    let p = powers(g, w, theta);
    let r = rates(&p, w.len());
    Some(RefSolution {
        objective: r.iter().zip(c).map(|(r, c)| r * c).sum(),
        used: used(g, &p),
        rates: r,
        p,
        theta,
        delta: 0.0,
    })
}

pub fn max_throughput_oracle(g: &Gains, c: &[f64], power: f64) -> Option<RefSolution> {
    waterfill_oracle(g, c, c, power)
}

/// Optimal power allocation with one minimum rate `d` on user `k`.
///
/// KKT by nested bisection: the rate of `k` grows with its dual `delta`, and
/// for each `delta` the power dual is solved exactly. None when `d` cannot
/// be met on this assignment.
pub fn constrained_oracle(g: &Gains, c: &[f64], power: f64, k: usize, d: f64) -> Option<RefSolution> {
    let at = |delta: f64| {
        let mut w = c.to_vec();
        w[k] += delta;
        waterfill_oracle(g, c, &w, power).map(|mut s| {
            s.delta = delta;
            s
        })
    };
    let base = at(0.0)?;
    if base.rates[k] >= d {
        return Some(base);
    }
    // All power to k bounds what k can reach.
    let mut only_k = vec![vec![0.0; c.len()]; g.len()];
    for (row, out) in g.iter().zip(only_k.iter_mut()) {
        out[k] = row[k];
    }
    let unit: Vec<f64> = (0..c.len()).map(|j| if j == k { 1.0 } else { 0.0 }).collect();
    if waterfill_oracle(&only_k, &unit, &unit, power)?.rates[k] <= d {
        return None;
    }
    let mut hi = 1.0;
    while at(hi)?.rates[k] < d {
        hi *= 2.0;
        if hi > 1e15 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid)?.rates[k] < d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Every SDMA set of size `0..=m` over `users`, smallest first.
pub fn all_sets(users: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for mask in 1u32..(1 << users) {
        if mask.count_ones() as usize <= m {
            out.push((0..users).filter(|k| mask & (1 << k) != 0).collect());
        }
    }
    out
}

/// Best objective over every assignment of a tiny instance, with at most one
/// RT user. None when no assignment meets the minimum rate.
pub fn exhaustive_optimum(chan: &ChannelRealization, m: usize, c: &[f64], power: f64, rt: Option<(usize, f64)>) -> Option<f64> {
    let sets = all_sets(chan.users(), m);
    let n = chan.subchannels();
    let mut idx = vec![0usize; n];
    let mut best: Option<f64> = None;
    loop {
        let choice: Vec<Vec<usize>> = idx.iter().map(|&i| sets[i].clone()).collect();
        if let Some(g) = gains_for(chan, &choice) {
            let sol = match rt {
                Some((k, d)) => constrained_oracle(&g, c, power, k, d),
                None => max_throughput_oracle(&g, c, power),
            };
            if let Some(s) = sol {
                best = Some(best.map_or(s.objective, |b: f64| b.max(s.objective)));
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            idx[pos] += 1;
            if idx[pos] < sets.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
