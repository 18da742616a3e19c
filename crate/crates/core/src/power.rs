//! Power allocation over a fixed SDMA assignment.
//!
//! Every solver here returns powers of the water-filling form
//! `p = [(c_k + delta_k) / (theta beta ln 2) - 1]^+` and differs only in how
//! the duals `theta` and `delta` are chosen:
//!
//! * [`max_throughput_pa`] finds the `theta` meeting the power budget with
//!   equality by a fixed point on the active sets (exact, no tolerance).
//! * [`rate_constrained_pa`] picks `delta` for unsatisfied users in closed
//!   form and then re-solves `theta`. It never iterates on the rates, so rate
//!   constraints may stay unmet.
//! * [`optimal_pa_subgradient`] drives `delta` by projected subgradient steps;
//!   it is the slow reference the heuristics are measured against.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{SystemConfig, RATE_TOL};
use crate::ops;
use crate::zf::{rate, EffectiveGains};

/// Powers, duals and resulting rates for one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    pub p: Grid,
    /// Dual of the total power constraint.
    pub theta: f64,
    /// Duals of the per-user minimum-rate constraints.
    pub delta: Vec<f64>,
    pub rates_nk: Grid,
    pub rates_k: Vec<f64>,
    /// Every minimum rate met within `RATE_TOL`.
    pub feasible: bool,
    /// `sum beta p`
    pub used_power: f64,
}

impl PowerSolution {
    /// Derives rates, power use and the feasibility verdict from powers.
    pub fn from_powers(gains: &EffectiveGains, p: Grid, theta: f64, delta: Vec<f64>, min_rates: &[f64]) -> Self {
        let (nsub, users) = (p.subchannels(), p.users());
        let mut rates_nk = Grid::zeros(nsub, users);
        let mut rates_k = vec![0.0; users];
        let mut used_power = 0.0;
        for n in 0..nsub {
            for &k in gains.assignment.set(n) {
                let pk = p[(n, k)];
                let r = rate(pk);
                rates_nk[(n, k)] = r;
                rates_k[k] += r;
                used_power += gains.beta[(n, k)] * pk;
            }
        }
        let feasible = meets_rates(&rates_k, min_rates);
        Self {
            p,
            theta,
            delta,
            rates_nk,
            rates_k,
            feasible,
            used_power,
        }
    }

    /// Weighted sum rate `sum_k c_k r_k`.
    pub fn objective(&self, weights: &[f64]) -> f64 {
        self.rates_k.iter().zip(weights).map(|(r, c)| r * c).sum()
    }

    /// Users whose rate is below their minimum (the users in need).
    pub fn users_in_need(&self, min_rates: &[f64]) -> Vec<usize> {
        users_in_need(&self.rates_k, min_rates)
    }
}

pub(crate) fn meets_rates(rates: &[f64], min_rates: &[f64]) -> bool {
    rates.iter().zip(min_rates).all(|(r, d)| *r >= d - RATE_TOL)
}

pub(crate) fn users_in_need(rates: &[f64], min_rates: &[f64]) -> Vec<usize> {
    rates
        .iter()
        .zip(min_rates)
        .enumerate()
        .filter(|(_, (r, d))| **r < **d - RATE_TOL)
        .map(|(k, _)| k)
        .collect()
}

/// Water-filling power `[(w / (theta beta ln2)) - 1]^+` for one entry.
#[inline]
pub fn waterfill_power(weight: f64, beta: f64, theta: f64) -> f64 {
    if beta > 0.0 {
        (weight / (theta * beta * LN_2) - 1.0).max(0.0)
    } else {
        0.0
    }
}

/// Active subchannels per user: `B_k = { n : k in S_n, beta < (c_k + delta_k) / (theta ln2) }`.
pub fn waterfill_sets(gains: &EffectiveGains, theta: f64, delta: &[f64], weights: &[f64]) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); gains.users()];
    for n in 0..gains.subchannels() {
        for &k in gains.assignment.set(n) {
            let b = gains.beta[(n, k)];
            if b > 0.0 && b < (weights[k] + delta[k]) / (theta * LN_2) {
                sets[k].push(n);
            }
        }
    }
    sets
}

/// Powers and rates at fixed duals `(theta, delta)`.
pub fn waterfill(gains: &EffectiveGains, theta: f64, delta: &[f64], cfg: &SystemConfig) -> Result<PowerSolution> {
    if !(theta > 0.0) {
        return Err(Error::InvalidTheta(theta));
    }
    let mut p = Grid::zeros(gains.subchannels(), gains.users());
    for n in 0..gains.subchannels() {
        for &k in gains.assignment.set(n) {
            ops::charge(1);
            p[(n, k)] = waterfill_power(cfg.weights[k] + delta[k], gains.beta[(n, k)], theta);
        }
    }
    Ok(PowerSolution::from_powers(gains, p, theta, delta.to_vec(), &cfg.min_rates))
}

struct Entry {
    n: usize,
    k: usize,
    beta: f64,
    weight: f64,
}

/// Solves the common water level of `entries` so that `sum beta p = budget`.
///
/// Returns the level `1 / (theta ln2)` and a mask of the active entries. Starts
/// with every entry active and drops those whose power would be non-positive
/// until the active set repeats; each pass strictly shrinks the set, so at most
/// `entries.len()` passes run.
fn water_level(entries: &[Entry], budget: f64) -> Result<(f64, Vec<bool>)> {
    let mut active: Vec<bool> = entries.iter().map(|e| e.beta > 0.0).collect();
    loop {
        let mut weight_sum = 0.0;
        let mut beta_sum = 0.0;
        for (e, &on) in entries.iter().zip(&active) {
            if on {
                weight_sum += e.weight;
                beta_sum += e.beta;
            }
        }
        ops::charge(entries.len() as u64);
        if !(weight_sum > 0.0) {
            return Err(Error::NoAllocatableSubchannels);
        }
        let level = (budget + beta_sum) / weight_sum;
        let mut changed = false;
        for (e, on) in entries.iter().zip(active.iter_mut()) {
            let next = e.beta > 0.0 && e.beta < e.weight * level;
            if next != *on {
                changed = true;
                *on = next;
            }
        }
        if !changed {
            return Ok((level, active));
        }
    }
}

fn entries_of(gains: &EffectiveGains, cfg: &SystemConfig, delta: &[f64], subchannel: Option<usize>) -> Vec<Entry> {
    let range = match subchannel {
        Some(n) => n..n + 1,
        None => 0..gains.subchannels(),
    };
    let mut out = Vec::new();
    for n in range {
        for &k in gains.assignment.set(n) {
            out.push(Entry {
                n,
                k,
                beta: gains.beta[(n, k)],
                weight: cfg.weights[k] + delta[k],
            });
        }
    }
    out
}

/// Maximum-throughput power allocation under the total power budget.
///
/// With `delta = 0` this ignores rate constraints; with positive `delta` the
/// user weights become `c_k + delta_k` and the same fixed point yields the
/// `theta` that meets the budget with equality.
pub fn max_throughput_pa(gains: &EffectiveGains, cfg: &SystemConfig, delta: &[f64]) -> Result<PowerSolution> {
    let entries = entries_of(gains, cfg, delta, None);
    let (level, active) = water_level(&entries, cfg.power)?;
    let mut p = Grid::zeros(gains.subchannels(), gains.users());
    for (e, on) in entries.iter().zip(active) {
        if on {
            p[(e.n, e.k)] = e.weight * level / e.beta - 1.0;
        }
    }
    let theta = 1.0 / (level * LN_2);
    Ok(PowerSolution::from_powers(gains, p, theta, delta.to_vec(), &cfg.min_rates))
}

/// Water-filling restricted to subchannel `n` with its own budget.
///
/// Writes the new powers into `p` (row `n` only) and returns the local dual.
/// A subchannel with no schedulable entry keeps zero power.
pub fn subchannel_pa(gains: &EffectiveGains, cfg: &SystemConfig, n: usize, budget: f64, p: &mut Grid) -> Option<f64> {
    let zero = vec![0.0; gains.users()];
    let entries = entries_of(gains, cfg, &zero, Some(n));
    p.row_mut(n).iter_mut().for_each(|x| *x = 0.0);
    let (level, active) = water_level(&entries, budget).ok()?;
    for (e, on) in entries.iter().zip(active) {
        if on {
            p[(n, e.k)] = e.weight * level / e.beta - 1.0;
        }
    }
    Some(1.0 / (level * LN_2))
}

/// Cap on the closed-form dual; absurd rate targets would overflow `2^d`.
const MAX_RATE_DUAL: f64 = 1e150;

/// Closed-form rate-constraint dual for user `k` at power dual `theta_bar`.
///
/// Chooses the smallest `delta_k` such that water-filling over the subchannel
/// set `A` gives exactly `min_rate`, then refreshes `A = B_k(theta_bar,
/// delta_k)` until it repeats (at most `N + 1` passes). Returns `None` when the
/// user has no subchannel to fill.
fn rate_dual(gains: &EffectiveGains, k: usize, weight: f64, min_rate: f64, theta_bar: f64) -> Option<f64> {
    let assigned: Vec<(usize, f64)> = (0..gains.subchannels())
        .filter(|&n| gains.beta[(n, k)] > 0.0)
        .map(|n| (n, gains.beta[(n, k)]))
        .collect();
    if assigned.is_empty() {
        return None;
    }
    let members = |delta: f64| -> Vec<usize> {
        assigned
            .iter()
            .filter(|(_, b)| *b < (weight + delta) / (theta_bar * LN_2))
            .map(|(n, _)| *n)
            .collect()
    };
    let mut set = members(0.0);
    if set.is_empty() {
        set = assigned.iter().map(|(n, _)| *n).collect();
    }
    let mut delta = 0.0;
    for _ in 0..=gains.subchannels() {
        ops::charge(assigned.len() as u64);
        let log_beta: f64 = set.iter().map(|&n| gains.beta[(n, k)].log2()).sum();
        let mean = (min_rate + log_beta) / set.len() as f64;
        delta = (theta_bar * LN_2 * mean.exp2() - weight).clamp(0.0, MAX_RATE_DUAL);
        let next = members(delta);
        if next == set || next.is_empty() {
            break;
        }
        set = next;
    }
    Some(delta)
}

/// Non-iterative rate-constrained power allocation.
///
/// `maxthr` must be the max-throughput solution on the same gains. Users
/// already meeting their minimum keep `delta = 0`; each unsatisfied user gets
/// the closed-form dual evaluated at its own upper bound
/// `theta_bar_k = theta * 2^((d_k - r_k) epsilon)`. One final max-throughput
/// pass restores the power budget. The returned `feasible` flag is honest;
/// the method can fall short of the minimum rates.
pub fn rate_constrained_pa(gains: &EffectiveGains, cfg: &SystemConfig, maxthr: &PowerSolution) -> Result<PowerSolution> {
    let needy = maxthr.users_in_need(&cfg.min_rates);
    if needy.is_empty() {
        return Ok(maxthr.clone());
    }
    let mut delta = vec![0.0; gains.users()];
    for &k in &needy {
        let shortfall = cfg.min_rates[k] - maxthr.rates_k[k];
        let theta_bar = maxthr.theta * (shortfall * cfg.epsilon).exp2();
        // Unservable users (nothing assigned) keep delta = 0 and stay infeasible.
        if let Some(d) = rate_dual(gains, k, cfg.weights[k], cfg.min_rates[k], theta_bar) {
            delta[k] = d;
        }
    }
    max_throughput_pa(gains, cfg, &delta)
}

/// Result of the subgradient reference solver.
#[derive(Debug, Clone)]
pub struct SubgradientOutcome {
    pub solution: PowerSolution,
    pub converged: bool,
    pub iterations: usize,
}

/// Violation tolerance of the subgradient solver's stopping rule.
pub const SUBGRADIENT_TOL: f64 = 1e-6;

/// Step scale `a` of the `a / sqrt(t)` schedule.
pub const SUBGRADIENT_STEP: f64 = 1.0;

/// Optimal power allocation with minimum rates by projected subgradient on the
/// rate duals.
///
/// At every iterate the power dual is solved exactly by
/// [`max_throughput_pa`], so the budget holds with equality throughout; only
/// `delta` moves, along the normalized direction `-(r - d) / |r - d|` with
/// step `a / sqrt(t)`, projected onto `delta >= 0`. Stops once every rate is within `SUBGRADIENT_TOL` of
/// feasibility and complementary slackness, or after `max_dual_iters`.
/// Without convergence the best iterate is rounded onto the rate targets;
/// if that fails too, the best near-feasible (or last) iterate comes back
/// flagged unconverged.
pub fn optimal_pa_subgradient(gains: &EffectiveGains, cfg: &SystemConfig) -> Result<SubgradientOutcome> {
    let rt = cfg.rt_users();
    let mut delta = vec![0.0; gains.users()];
    let mut sol = max_throughput_pa(gains, cfg, &delta)?;
    if rt.is_empty() || sol.feasible {
        return Ok(SubgradientOutcome {
            solution: sol,
            converged: true,
            iterations: 0,
        });
    }
    let mut best: Option<(f64, PowerSolution)> = None;
    for t in 1..=cfg.max_dual_iters {
        let step = SUBGRADIENT_STEP / (t as f64).sqrt();
        let grad: Vec<f64> = rt
            .iter()
            .map(|&k| {
                let g = sol.rates_k[k] - cfg.min_rates[k];
                if delta[k] <= 0.0 && g > 0.0 {
                    0.0
                } else {
                    g
                }
            })
            .collect();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        for (&k, g) in rt.iter().zip(&grad) {
            delta[k] = (delta[k] - step * g / norm).max(0.0);
        }
        sol = max_throughput_pa(gains, cfg, &delta)?;
        let near_feasible = rt
            .iter()
            .all(|&k| sol.rates_k[k] >= cfg.min_rates[k] - SUBGRADIENT_TOL);
        if near_feasible {
            let obj = sol.objective(&cfg.weights);
            if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                best = Some((obj, sol.clone()));
            }
            let slack_ok = rt
                .iter()
                .all(|&k| delta[k] == 0.0 || sol.rates_k[k] - cfg.min_rates[k] <= SUBGRADIENT_TOL);
            if slack_ok {
                return Ok(SubgradientOutcome {
                    solution: sol,
                    converged: true,
                    iterations: t,
                });
            }
        }
    }
    let iterations = cfg.max_dual_iters;
    let start = best.as_ref().map_or(&sol, |(_, b)| b).delta.clone();
    if let Some(solution) = round_to_rates(gains, cfg, &rt, start)? {
        return Ok(SubgradientOutcome {
            solution,
            converged: true,
            iterations,
        });
    }
    Ok(match best {
        Some((_, solution)) => SubgradientOutcome {
            solution,
            converged: false,
            iterations,
        },
        None => SubgradientOutcome {
            solution: sol,
            converged: false,
            iterations,
        },
    })
}

/// Moves each constrained `delta_k` onto `r_k = d_k` (or to zero when the
/// rate holds there) by coordinate bisection, a few cyclic passes. Some only
/// when the result meets every rate and complementary slackness.
fn round_to_rates(gains: &EffectiveGains, cfg: &SystemConfig, rt: &[usize], mut delta: Vec<f64>) -> Result<Option<PowerSolution>> {
    let rate_at = |delta: &[f64], k: usize| max_throughput_pa(gains, cfg, delta).map(|s| s.rates_k[k]);
    for _ in 0..ROUNDING_PASSES {
        for &k in rt {
            let d = cfg.min_rates[k];
            delta[k] = 0.0;
            if rate_at(&delta, k)? >= d {
                continue;
            }
            let mut hi = 1.0f64;
            loop {
                delta[k] = hi;
                if rate_at(&delta, k)? >= d {
                    break;
                }
                hi *= 2.0;
                if hi > 1e12 {
                    return Ok(None);
                }
            }
            let mut lo = 0.0;
            for _ in 0..ROUNDING_BISECTIONS {
                delta[k] = 0.5 * (lo + hi);
                if rate_at(&delta, k)? >= d {
                    hi = delta[k];
                } else {
                    lo = delta[k];
                }
            }
            delta[k] = hi;
        }
    }
    let sol = max_throughput_pa(gains, cfg, &delta)?;
    let ok = rt.iter().all(|&k| {
        let slack = sol.rates_k[k] - cfg.min_rates[k];
        slack >= -SUBGRADIENT_TOL && (delta[k] == 0.0 || slack <= SUBGRADIENT_TOL)
    });
    Ok(ok.then_some(sol))
}

const ROUNDING_PASSES: usize = 20;
const ROUNDING_BISECTIONS: usize = 80;
