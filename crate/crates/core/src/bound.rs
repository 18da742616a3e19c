//! Lagrangian dual upper bound by SDMA-set enumeration.
//!
//! With the power dual `theta` and rate duals `delta` fixed, the Lagrangian
//! separates across subchannels. On each subchannel the best SDMA set is found
//! by enumerating every user set of size `1..=M` (no semiorthogonality filter,
//! so every ZF-feasible assignment is dominated) and water-filling each member
//! with weight `c_k + delta_k`. The dual function
//!
//! ```text
//! q(theta, delta) = sum_n max_S sum_{k in S} [ (c_k + delta_k) r - theta beta p ]
//!                   + theta P - sum_k delta_k d_k
//! ```
//!
//! upper-bounds the optimum of the allocation problem at every
//! `theta >= 0, delta >= 0`. [`upper_bound`] minimizes it. `theta` is
//! eliminated exactly for each `delta` (the dual is convex in `theta`). Each
//! `delta_k` gets exact line searches in turn, and with several RT users a few
//! projected subgradient runs with restarts follow.
//!
//! The bound is reported as a minimum (we minimize the dual directly; a
//! plot of the negated maximum of `-q` shows the same curve).

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ChannelRealization, SystemConfig};
use crate::zf::set_gains;

/// Largest number of (subchannel, SDMA set) pairs enumerated per channel.
pub const MAX_ENUMERATED_SETS: usize = 100_000;

/// Subgradient restarts of the multi-user rate-dual search.
pub const RESTARTS: usize = 3;

const THETA_STEPS: usize = 80;
const THETA_RTOL: f64 = 1e-12;
const VALUE_RTOL: f64 = 1e-10;
const DELTA_STEPS: usize = 60;
const DELTA_RTOL: f64 = 1e-7;
const COORDINATE_SWEEPS: usize = 8;
const STALL_ITERS: usize = 50;
const STALL_RTOL: f64 = 1e-9;

/// Inner maximization at a fixed `theta`.
struct LagrangianEval {
    value: f64,
    used: f64,
    rates: Vec<f64>,
    /// `sum w` and `sum beta` over members with positive power.
    active_weight: f64,
    active_beta: f64,
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of (subchannel, set) pairs the enumeration would visit.
pub fn enumeration_size(users: usize, antennas: usize, subchannels: usize) -> usize {
    let per: usize = (1..=antennas.min(users)).map(|s| binomial(users, s)).sum();
    per.saturating_mul(subchannels)
}

/// Flattened SDMA sets of one subchannel.
#[derive(Debug, Clone, Default)]
struct SetTable {
    starts: Vec<usize>,
    users: Vec<usize>,
    beta: Vec<f64>,
    log2_beta: Vec<f64>,
}

impl SetTable {
    fn push(&mut self, users: &[usize], beta: &[f64]) {
        if self.starts.is_empty() {
            self.starts.push(0);
        }
        self.users.extend_from_slice(users);
        self.beta.extend_from_slice(beta);
        self.log2_beta.extend(beta.iter().map(|b| b.log2()));
        self.starts.push(self.users.len());
    }

    fn len(&self) -> usize {
        self.starts.len().saturating_sub(1)
    }
}

fn for_each_subset(users: usize, max_size: usize, mut f: impl FnMut(&[usize])) {
    fn rec(start: usize, users: usize, max_size: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        for k in start..users {
            cur.push(k);
            f(cur);
            if cur.len() < max_size {
                rec(k + 1, users, max_size, cur, f);
            }
            cur.pop();
        }
    }
    rec(0, users, max_size, &mut Vec::new(), &mut f);
}

/// Dual evaluation at one `(theta, delta)`.
#[derive(Debug, Clone)]
pub struct DualIterate {
    pub theta: f64,
    pub delta: Vec<f64>,
    /// Upper bound on the primal optimum.
    pub dual_value: f64,
    /// Maximizing SDMA set per subchannel (possibly empty).
    pub best_sets: Vec<Vec<usize>>,
    /// `sum beta p` of the maximizers.
    pub used_power: f64,
    /// Per-user rate of the maximizers.
    pub rates: Vec<f64>,
}

/// Pseudo-inverse costs of every SDMA set of a channel, computed once and
/// reused across dual evaluations.
#[derive(Debug, Clone)]
pub struct DualProblem {
    tables: Vec<SetTable>,
    /// Per user, the largest `1 / beta` over all sets containing it.
    inv_beta_max: Vec<f64>,
    users: usize,
    power: f64,
}

impl DualProblem {
    /// Enumerates all SDMA sets of size `1..=M`.
    ///
    /// Sets whose stacked channel trips the singular-value guard are skipped;
    /// their power cost is unbounded, so water-filling would give them zero
    /// power anyway.
    pub fn new(chan: &ChannelRealization, cfg: &SystemConfig) -> Result<Self> {
        let size = enumeration_size(cfg.users, cfg.antennas, cfg.subchannels);
        if size > MAX_ENUMERATED_SETS {
            return Err(Error::EnumerationTooLarge(format!(
                "{size} SDMA sets for K={}, M={}, N={} exceeds {MAX_ENUMERATED_SETS}",
                cfg.users, cfg.antennas, cfg.subchannels
            )));
        }
        let mut inv_beta_max = vec![0.0f64; cfg.users];
        let mut tables = Vec::with_capacity(cfg.subchannels);
        for n in 0..cfg.subchannels {
            let mut table = SetTable::default();
            let mut failure = None;
            for_each_subset(cfg.users, cfg.antennas, |set| match set_gains(chan, n, set) {
                Ok(g) => {
                    for (&k, &b) in set.iter().zip(&g.beta) {
                        inv_beta_max[k] = inv_beta_max[k].max(1.0 / b);
                    }
                    table.push(set, &g.beta);
                }
                Err(Error::DegenerateSet { .. }) => {}
                Err(e) => failure = Some(e),
            });
            if let Some(e) = failure {
                return Err(e);
            }
            tables.push(table);
        }
        Ok(Self {
            tables,
            inv_beta_max,
            users: cfg.users,
            power: cfg.power,
        })
    }

    /// Number of enumerated sets over all subchannels.
    pub fn set_count(&self) -> usize {
        self.tables.iter().map(SetTable::len).sum()
    }

    /// `sum_n max_S` part of the dual at `theta` with per-user `weights`.
    fn lagrangian(&self, theta: f64, weights: &[f64], mut choices: Option<&mut Vec<Vec<usize>>>) -> LagrangianEval {
        let log_w: Vec<f64> = weights
            .iter()
            .map(|&w| if w > 0.0 { w.log2() } else { f64::NEG_INFINITY })
            .collect();
        let log_t = (theta * LN_2).log2();
        let inv_ln2 = 1.0 / LN_2;
        let mut out = LagrangianEval {
            value: 0.0,
            used: 0.0,
            rates: vec![0.0; self.users],
            active_weight: 0.0,
            active_beta: 0.0,
        };
        if let Some(c) = choices.as_deref_mut() {
            c.clear();
        }
        for table in &self.tables {
            let mut best = (0.0, 0.0, usize::MAX);
            for s in 0..table.len() {
                let (a, b) = (table.starts[s], table.starts[s + 1]);
                let mut value = 0.0;
                let mut power = 0.0;
                for i in a..b {
                    let k = table.users[i];
                    let x = log_w[k] - log_t - table.log2_beta[i];
                    if x > 0.0 {
                        let w = weights[k];
                        value += w * x - w * inv_ln2 + theta * table.beta[i];
                        power += w * inv_ln2 / theta - table.beta[i];
                    }
                }
                if value > best.0 {
                    best = (value, power, s);
                }
            }
            out.value += best.0;
            out.used += best.1;
            if best.2 != usize::MAX {
                let (a, b) = (table.starts[best.2], table.starts[best.2 + 1]);
                for i in a..b {
                    let k = table.users[i];
                    let x = log_w[k] - log_t - table.log2_beta[i];
                    if x > 0.0 {
                        out.rates[k] += x;
                        out.active_weight += weights[k];
                        out.active_beta += table.beta[i];
                    }
                }
                if let Some(c) = choices.as_deref_mut() {
                    c.push(table.users[a..b].to_vec());
                }
            } else if let Some(c) = choices.as_deref_mut() {
                c.push(Vec::new());
            }
        }
        out
    }

    /// Dual value at `(theta, delta)` for minimum rates `min_rates` and
    /// objective weights `weights` (zero weights give the feasibility dual).
    pub fn evaluate(&self, theta: f64, delta: &[f64], weights: &[f64], min_rates: &[f64]) -> DualIterate {
        let w: Vec<f64> = weights.iter().zip(delta).map(|(c, d)| c + d).collect();
        let mut sets = Vec::new();
        let lag = self.lagrangian(theta, &w, Some(&mut sets));
        let penalty: f64 = delta.iter().zip(min_rates).map(|(d, r)| d * r).sum();
        DualIterate {
            theta,
            delta: delta.to_vec(),
            dual_value: lag.value + theta * self.power - penalty,
            best_sets: sets,
            used_power: lag.used,
            rates: lag.rates,
        }
    }

    /// `min_theta q(theta, delta)`.
    ///
    /// The dual is convex in `theta` with subgradient `P - used`. A bracket
    /// on the sign of that subgradient is kept and shrunk with, in order of
    /// preference, the water level of the current maximizing sets (exact once
    /// the sets stop changing), the intersection of the two bracket tangents
    /// (exact at a kink between two pieces), and a geometric midpoint. The
    /// tangents also give a lower model, which ends the search once it
    /// certifies the gap.
    fn minimize_theta(&self, w: &[f64], constant: f64) -> ThetaMin {
        let ceiling = w
            .iter()
            .zip(&self.inv_beta_max)
            .map(|(w, ib)| w * ib / LN_2)
            .fold(0.0, f64::max);
        if !(ceiling > 0.0) {
            return ThetaMin {
                value: constant,
                theta: 0.0,
                rates: vec![0.0; self.users],
            };
        }
        let eval = |theta: f64| {
            let mut l = self.lagrangian(theta, w, None);
            l.value += theta * self.power + constant;
            l
        };
        let slope = |l: &LagrangianEval| self.power - l.used;

        let mut hi = ceiling * (1.0 + 1e-9);
        let at_hi = eval(hi);
        let (mut v_hi, mut s_hi) = (at_hi.value, slope(&at_hi));
        let mut best = ThetaMin {
            value: at_hi.value,
            theta: hi,
            rates: at_hi.rates,
        };
        let mut lo = hi * 1e-3;
        let mut cur = eval(lo);
        for _ in 0..200 {
            if cur.used > self.power {
                break;
            }
            (hi, v_hi, s_hi) = (lo, cur.value, slope(&cur));
            if cur.value <= best.value {
                best = ThetaMin {
                    value: cur.value,
                    theta: lo,
                    rates: cur.rates.clone(),
                };
            }
            lo *= 1e-3;
            cur = eval(lo);
        }
        let (mut v_lo, mut s_lo) = (f64::NAN, f64::NAN);
        let mut theta = lo;
        for _ in 0..THETA_STEPS {
            if cur.value <= best.value {
                best = ThetaMin {
                    value: cur.value,
                    theta,
                    rates: cur.rates.clone(),
                };
            }
            let s = slope(&cur);
            if s < 0.0 {
                (lo, v_lo, s_lo) = (theta, cur.value, s);
            } else {
                (hi, v_hi, s_hi) = (theta, cur.value, s);
            }
            if s == 0.0 || hi / lo < 1.0 + THETA_RTOL {
                break;
            }
            // Tangent intersection and the lower model value there.
            let cut = (v_hi - v_lo + s_lo * lo - s_hi * hi) / (s_lo - s_hi);
            if cut.is_finite() {
                let floor = v_lo + s_lo * (cut - lo);
                if best.value - floor <= VALUE_RTOL * best.value.abs().max(1.0) {
                    break;
                }
            }
            let water = if cur.active_weight > 0.0 {
                cur.active_weight / (LN_2 * (self.power + cur.active_beta))
            } else {
                f64::NAN
            };
            let inside = |x: f64| x > lo && x < hi && (x - theta).abs() > THETA_RTOL * theta;
            theta = if inside(water) {
                water
            } else if inside(cut) {
                cut
            } else {
                (lo * hi).sqrt()
            };
            cur = eval(theta);
        }
        best
    }

    /// `h(delta) = min_theta q(theta, delta)`.
    fn partial(&self, cfg: &SystemConfig, delta: &[f64], objective: bool) -> ThetaMin {
        let w: Vec<f64> = (0..self.users)
            .map(|k| if objective { cfg.weights[k] } else { 0.0 } + delta[k])
            .collect();
        let penalty: f64 = delta.iter().zip(&cfg.min_rates).map(|(d, r)| d * r).sum();
        self.minimize_theta(&w, -penalty)
    }
}

#[derive(Debug, Clone)]
struct ThetaMin {
    value: f64,
    theta: f64,
    rates: Vec<f64>,
}

/// Evaluates the dual function at one point.
pub fn dual_function(chan: &ChannelRealization, cfg: &SystemConfig, theta: f64, delta: &[f64]) -> Result<DualIterate> {
    let problem = DualProblem::new(chan, cfg)?;
    Ok(problem.evaluate(theta, delta, &cfg.weights, &cfg.min_rates))
}

#[derive(Debug, Clone)]
pub struct BoundOutcome {
    /// Smallest dual value found; `-inf` when the instance is infeasible.
    pub value: f64,
    /// The feasibility dual went negative: no assignment meets the minimum
    /// rates within the power budget.
    pub infeasible: bool,
    /// The rate-dual search met its stopping rule before the iteration cap.
    pub converged: bool,
    /// Outer (rate-dual) iterations performed.
    pub iterations: usize,
    /// Running minimum after each outer iteration.
    pub history: Vec<f64>,
    pub theta: f64,
    pub delta: Vec<f64>,
}

/// Projection onto the probability simplex over `idx`.
fn project_simplex(v: &mut [f64], idx: &[usize]) {
    let mut u: Vec<f64> = idx.iter().map(|&k| v[k]).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    for &k in idx {
        v[k] = (v[k] - tau).max(0.0);
    }
}

/// Searches for a certificate that the minimum rates cannot be met.
///
/// The feasibility dual (objective weights zeroed) is positively homogeneous
/// in `(theta, delta)`, so `delta` is restricted to the simplex over the RT
/// users. Any negative value proves infeasibility.
fn infeasibility_certificate(problem: &DualProblem, cfg: &SystemConfig, rt: &[usize]) -> bool {
    let threshold = -1e-9 * (1.0 + cfg.min_rates.iter().sum::<f64>());
    let mut delta = vec![0.0; cfg.users];
    for &k in rt {
        delta[k] = 1.0 / rt.len() as f64;
    }
    let iters = if rt.len() == 1 { 1 } else { cfg.max_dual_iters.min(200) };
    for t in 1..=iters {
        let h = problem.partial(cfg, &delta, false);
        if h.value < threshold {
            return true;
        }
        let step = 0.5 / (t as f64).sqrt();
        for &k in rt {
            delta[k] -= step * (h.rates[k] - cfg.min_rates[k]) / (1.0 + cfg.min_rates[k]);
        }
        project_simplex(&mut delta, rt);
    }
    false
}

/// Minimizes the dual function; the result is a valid upper bound on the
/// weighted sum rate of every feasible allocation.
pub fn upper_bound(chan: &ChannelRealization, cfg: &SystemConfig) -> Result<BoundOutcome> {
    let problem = DualProblem::new(chan, cfg)?;
    Ok(upper_bound_with(&problem, cfg, chan.seed))
}

/// [`upper_bound`] over a pre-enumerated problem; `seed` drives restarts.
pub fn upper_bound_with(problem: &DualProblem, cfg: &SystemConfig, seed: u64) -> BoundOutcome {
    let rt = cfg.rt_users();
    if !rt.is_empty() && infeasibility_certificate(problem, cfg, &rt) {
        return BoundOutcome {
            value: f64::NEG_INFINITY,
            infeasible: true,
            converged: true,
            iterations: 0,
            history: Vec::new(),
            theta: 0.0,
            delta: vec![0.0; cfg.users],
        };
    }
    let zero = vec![0.0; cfg.users];
    let start = problem.partial(cfg, &zero, true);
    let mut out = BoundOutcome {
        value: start.value,
        infeasible: false,
        converged: true,
        iterations: 0,
        history: vec![start.value],
        theta: start.theta,
        delta: zero.clone(),
    };
    let slack_ok = |h: &ThetaMin| rt.iter().all(|&k| h.rates[k] >= cfg.min_rates[k]);
    if rt.is_empty() || slack_ok(&start) {
        return out;
    }
    if let [k] = rt[..] {
        let mut delta = zero;
        out.converged = coordinate_min(problem, cfg, &mut delta, k, &mut out);
        return out;
    }

    // Several RT users: cyclic exact line searches, then short projected
    // subgradient runs from the best point and from perturbed copies of it.
    let mut delta = zero;
    let mut converged = true;
    for _ in 0..COORDINATE_SWEEPS {
        let before = out.value;
        for &k in &rt {
            converged &= coordinate_min(problem, cfg, &mut delta, k, &mut out);
        }
        if before - out.value <= STALL_RTOL * out.value.abs().max(1.0) {
            break;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB0B0_D0A1_5EED_0001);
    for restart in 0..RESTARTS {
        let mut delta = out.delta.clone();
        if restart > 0 {
            for &k in &rt {
                delta[k] *= rng.random_range(0.5..1.5);
            }
        }
        let scale = 0.25 * rt.iter().map(|&k| delta[k]).fold(0.1, f64::max);
        let mut last_gain = 0;
        for t in 1..=cfg.max_dual_iters {
            let h = problem.partial(cfg, &delta, true);
            if record(&mut out, &h, &delta) {
                last_gain = t;
            } else if t - last_gain > STALL_ITERS {
                break;
            }
            let mut grad: Vec<f64> = vec![0.0; cfg.users];
            let mut norm = 0.0;
            for &k in &rt {
                let g = h.rates[k] - cfg.min_rates[k];
                // Projected direction: no move when delta_k = 0 and g > 0.
                grad[k] = if delta[k] <= 0.0 && g > 0.0 { 0.0 } else { g };
                norm += grad[k] * grad[k];
            }
            let norm = norm.sqrt();
            if norm < 1e-6 {
                break;
            }
            let step = scale / (t as f64).sqrt();
            for &k in &rt {
                delta[k] = (delta[k] - step * grad[k] / norm).max(0.0);
            }
        }
    }
    out.converged = converged;
    out
}

/// Folds one evaluation into the running minimum; true when it improved.
fn record(out: &mut BoundOutcome, h: &ThetaMin, delta: &[f64]) -> bool {
    out.iterations += 1;
    let improved = h.value < out.value;
    if improved {
        out.value = h.value;
        out.theta = h.theta;
        out.delta = delta.to_vec();
    }
    out.history.push(out.value);
    improved
}

/// Exact minimization of `h` along `delta_k`, the other duals held fixed.
///
/// `h` is convex in `delta_k` with subgradient `r_k - d_k`, nondecreasing in
/// `delta_k`. The sign change is bracketed, then located by Illinois regula
/// falsi with a bisection safeguard. `delta[k]` is left at the best point
/// seen. Returns false when no bracket was found.
fn coordinate_min(problem: &DualProblem, cfg: &SystemConfig, delta: &mut [f64], k: usize, out: &mut BoundOutcome) -> bool {
    let d = cfg.min_rates[k];
    let eval = |x: f64, delta: &mut [f64], out: &mut BoundOutcome| {
        delta[k] = x;
        let h = problem.partial(cfg, delta, true);
        record(out, &h, delta);
        (h.value, h.rates[k] - d)
    };
    let x0 = delta[k];
    let (v0, g0) = eval(x0, delta, out);
    let mut best = (v0, x0);
    let (mut lo, mut g_lo, mut hi, mut g_hi);
    if g0 < 0.0 {
        (lo, g_lo) = (x0, g0);
        hi = (2.0 * x0).max(cfg.weights[k]).max(1.0);
        g_hi = f64::NAN;
        for _ in 0..60 {
            let (v, g) = eval(hi, delta, out);
            if v < best.0 {
                best = (v, hi);
            }
            g_hi = g;
            if g >= 0.0 {
                break;
            }
            (lo, g_lo) = (hi, g);
            hi *= 4.0;
        }
        if !(g_hi >= 0.0) {
            delta[k] = best.1;
            return false;
        }
    } else {
        if x0 <= 0.0 {
            return true;
        }
        (hi, g_hi) = (x0, g0);
        lo = 0.25 * x0;
        g_lo = f64::NAN;
        for _ in 0..60 {
            let x = if lo < 1e-12 * x0 { 0.0 } else { lo };
            let (v, g) = eval(x, delta, out);
            if v < best.0 {
                best = (v, x);
            }
            g_lo = g;
            lo = x;
            if g < 0.0 {
                break;
            }
            if x == 0.0 {
                delta[k] = 0.0;
                return true;
            }
            (hi, g_hi) = (x, g);
            lo *= 0.25;
        }
    }
    let mut side = 0i8;
    for _ in 0..DELTA_STEPS {
        if hi - lo <= DELTA_RTOL * hi || g_hi == 0.0 {
            break;
        }
        let mut mid = hi - g_hi * (hi - lo) / (g_hi - g_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let (v, g) = eval(mid, delta, out);
        if v < best.0 {
            best = (v, mid);
        }
        if g >= 0.0 {
            (hi, g_hi) = (mid, g);
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        } else {
            (lo, g_lo) = (mid, g);
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        }
    }
    delta[k] = best.1;
    true
}
