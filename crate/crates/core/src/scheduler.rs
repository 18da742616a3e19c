//! Subchannel assignment and reassignment.
//!
//! [`allocate`] runs the full pipeline: SUS on every subchannel,
//! max-throughput power allocation, rate-constrained power allocation, and,
//! while minimum rates are still unmet, a single pass of subchannel
//! reassignment that hands subchannels to the users in need.
//!
//! Two reassignment variants exist. [`reassign_alg1`] re-solves the total
//! power allocation after every reassigned subchannel, costing `O(KN)` per
//! step. [`reassign_alg2`] gives each subchannel a fixed budget `P / N` and
//! only re-solves the subchannel that changed, costing `O(K)` per step; a
//! global allocation is solved once when the loop ends.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{ChannelRealization, SdmaAssignment, SystemConfig, RATE_TOL};
use crate::ops;
use crate::power::{
    max_throughput_pa, meets_rates, rate_constrained_pa, subchannel_pa, users_in_need, PowerSolution,
};
use crate::sus::{sus_init, sus_search, sus_seed, sus_select};
use crate::zf::{effective_gains, EffectiveGains};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Total-power reassignment.
    Alg1,
    /// Per-subchannel-power reassignment.
    Alg2,
    /// SUS assignment with max-throughput and rate-constrained power
    /// allocation, no reassignment.
    MaxThr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Alg1, Method::Alg2, Method::MaxThr];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Alg1 => "alg1",
            Method::Alg2 => "alg2",
            Method::MaxThr => "maxthr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" => Ok(Method::Alg1),
            "alg2" => Ok(Method::Alg2),
            "maxthr" => Ok(Method::MaxThr),
            other => Err(Error::config("method", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AllocationResult {
    /// Final assignment with its pseudo-inverses and `beta`.
    pub gains: EffectiveGains,
    pub power: PowerSolution,
    /// Weighted sum rate.
    pub objective: f64,
    pub feasible: bool,
    /// Subchannels visited by the reassignment loop.
    pub iterations: usize,
    /// Operation units (see [`crate::ops`]) charged inside the reassignment
    /// loop.
    pub reassign_ops: u64,
    pub method: Method,
}

impl AllocationResult {
    fn new(gains: EffectiveGains, power: PowerSolution, cfg: &SystemConfig, iterations: usize, method: Method) -> Self {
        let objective = power.objective(&cfg.weights);
        let feasible = power.feasible;
        Self {
            gains,
            power,
            objective,
            feasible,
            iterations,
            reassign_ops: 0,
            method,
        }
    }

    pub fn assignment(&self) -> &SdmaAssignment {
        &self.gains.assignment
    }
}

/// SUS over all users on every subchannel.
pub fn max_throughput_assignment(chan: &ChannelRealization, cfg: &SystemConfig) -> Result<SdmaAssignment> {
    let all: Vec<usize> = (0..cfg.users).collect();
    let sets = (0..cfg.subchannels)
        .map(|n| sus_select(chan, n, &all, cfg.sus_gamma).map(|s| s.selected))
        .collect::<Result<Vec<_>>>()?;
    Ok(SdmaAssignment::new(sets))
}

/// Runs the whole heuristic with the given reassignment variant.
pub fn allocate(chan: &ChannelRealization, cfg: &SystemConfig, method: Method) -> Result<AllocationResult> {
    let assignment = max_throughput_assignment(chan, cfg)?;
    let gains = effective_gains(chan, &assignment)?;
    let zero = vec![0.0; cfg.users];
    let maxthr = max_throughput_pa(&gains, cfg, &zero)?;
    if maxthr.feasible {
        return Ok(AllocationResult::new(gains, maxthr, cfg, 0, method));
    }
    let constrained = rate_constrained_pa(&gains, cfg, &maxthr)?;
    let current = AllocationResult::new(gains, constrained, cfg, 0, method);
    if current.feasible {
        return Ok(current);
    }
    match method {
        Method::MaxThr => Ok(current),
        Method::Alg1 => reassign_alg1(chan, cfg, current),
        Method::Alg2 => reassign_alg2(chan, cfg, current),
    }
}

/// Subchannels sorted by the strongest channel among `needy`, descending;
/// ties keep the lower subchannel first.
fn visit_order(chan: &ChannelRealization, needy: &[usize]) -> Vec<usize> {
    let nsub = chan.subchannels();
    ops::charge((nsub * needy.len().max(1)) as u64);
    let key: Vec<f64> = (0..nsub)
        .map(|n| needy.iter().map(|&k| chan.norm_sqr(n, k)).fold(0.0, f64::max))
        .collect();
    let mut order: Vec<usize> = (0..nsub).collect();
    order.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    order
}

/// Users on subchannel `n` whose rate without `n` would fall below their
/// minimum.
fn critical_users(set: &[usize], n: usize, rates_nk: &Grid, rates_k: &[f64], cfg: &SystemConfig) -> Vec<usize> {
    set.iter()
        .copied()
        .filter(|&k| rates_k[k] - rates_nk[(n, k)] < cfg.min_rates[k] - RATE_TOL)
        .collect()
}

/// New SDMA set for subchannel `n`.
///
/// All critical users are kept when there are any; otherwise SUS picks from
/// the users in need. The set is then filled from the users in need and
/// finally from everybody.
fn rebuild_set(
    chan: &ChannelRealization,
    cfg: &SystemConfig,
    n: usize,
    critical: &[usize],
    needy: &[usize],
) -> Result<Vec<usize>> {
    let mut state = if critical.is_empty() {
        let init = sus_init(chan, n, needy)?;
        sus_search(chan, n, needy, init, cfg.sus_gamma)
    } else {
        sus_seed(chan, n, critical)?
    };
    if !critical.is_empty() && state.len() < cfg.antennas {
        state = sus_search(chan, n, needy, state, cfg.sus_gamma);
    }
    if state.len() < cfg.antennas {
        let all: Vec<usize> = (0..cfg.users).collect();
        state = sus_search(chan, n, &all, state, cfg.sus_gamma);
    }
    Ok(state.selected)
}

/// Reassignment under the total power constraint.
///
/// Visits each subchannel once in [`visit_order`]; after rebuilding its SDMA
/// set the whole power allocation is re-solved (max-throughput first, then
/// rate-constrained) and the loop exits as soon as all minimum rates hold.
pub fn reassign_alg1(chan: &ChannelRealization, cfg: &SystemConfig, current: AllocationResult) -> Result<AllocationResult> {
    let AllocationResult { mut gains, power, .. } = current;
    let mut sol = power;
    let mut needy = sol.users_in_need(&cfg.min_rates);
    if needy.is_empty() {
        return Ok(AllocationResult::new(gains, sol, cfg, 0, Method::Alg1));
    }
    let zero = vec![0.0; cfg.users];
    let mut visited = 0;
    let ops_start = ops::read();
    for n in visit_order(chan, &needy) {
        visited += 1;
        let critical = critical_users(gains.assignment.set(n), n, &sol.rates_nk, &sol.rates_k, cfg);
        let set = rebuild_set(chan, cfg, n, &critical, &needy)?;
        gains.update(chan, n, set)?;

        let maxthr = max_throughput_pa(&gains, cfg, &zero)?;
        if maxthr.feasible {
            sol = maxthr;
            break;
        }
        sol = rate_constrained_pa(&gains, cfg, &maxthr)?;
        if sol.feasible {
            break;
        }
        needy = sol.users_in_need(&cfg.min_rates);
    }
    let mut out = AllocationResult::new(gains, sol, cfg, visited, Method::Alg1);
    out.reassign_ops = ops::read() - ops_start;
    Ok(out)
}

/// Reassignment with one power budget `P / N` per subchannel.
///
/// Inside the loop only the reassigned subchannel's powers and rates change,
/// and minimum rates are checked on the running totals without any
/// rate-constrained allocation. After the loop the final assignment gets one
/// total-power allocation (max-throughput, then rate-constrained); if neither
/// meets the minimum rates but the per-subchannel allocation did, the latter
/// is returned.
pub fn reassign_alg2(chan: &ChannelRealization, cfg: &SystemConfig, current: AllocationResult) -> Result<AllocationResult> {
    let AllocationResult { mut gains, .. } = current;
    let nsub = cfg.subchannels;
    let budget = cfg.power / nsub as f64;

    let mut p = Grid::zeros(nsub, cfg.users);
    let mut thetas = vec![0.0; nsub];
    for (n, theta) in thetas.iter_mut().enumerate() {
        *theta = subchannel_pa(&gains, cfg, n, budget, &mut p).unwrap_or(0.0);
    }
    let local = PowerSolution::from_powers(&gains, p, 1.0, vec![0.0; cfg.users], &cfg.min_rates);
    let PowerSolution {
        mut p,
        mut rates_nk,
        mut rates_k,
        ..
    } = local;

    let mut needy = users_in_need(&rates_k, &cfg.min_rates);
    let mut visited = 0;
    let ops_start = ops::read();
    if !needy.is_empty() {
        for n in visit_order(chan, &needy) {
            visited += 1;
            let critical = critical_users(gains.assignment.set(n), n, &rates_nk, &rates_k, cfg);
            let set = rebuild_set(chan, cfg, n, &critical, &needy)?;
            gains.update(chan, n, set)?;
            thetas[n] = subchannel_pa(&gains, cfg, n, budget, &mut p).unwrap_or(0.0);

            ops::charge(cfg.users as u64);
            for k in 0..cfg.users {
                let r = crate::zf::rate(p[(n, k)]);
                rates_k[k] += r - rates_nk[(n, k)];
                rates_nk[(n, k)] = r;
            }
            needy = users_in_need(&rates_k, &cfg.min_rates);
            if needy.is_empty() {
                break;
            }
        }
    }
    let loop_ops = ops::read() - ops_start;
    let local_feasible = meets_rates(&rates_k, &cfg.min_rates);

    let zero = vec![0.0; cfg.users];
    let maxthr = max_throughput_pa(&gains, cfg, &zero)?;
    let finish = |gains, sol| {
        let mut out = AllocationResult::new(gains, sol, cfg, visited, Method::Alg2);
        out.reassign_ops = loop_ops;
        out
    };
    if maxthr.feasible {
        return Ok(finish(gains, maxthr));
    }
    let constrained = rate_constrained_pa(&gains, cfg, &maxthr)?;
    if constrained.feasible || !local_feasible {
        return Ok(finish(gains, constrained));
    }
    // Per-subchannel solution; report the mean of the local power duals.
    let active: Vec<f64> = thetas.iter().copied().filter(|t| *t > 0.0).collect();
    let theta = active.iter().sum::<f64>() / active.len().max(1) as f64;
    let sol = PowerSolution::from_powers(&gains, p, theta, zero, &cfg.min_rates);
    Ok(finish(gains, sol))
}
