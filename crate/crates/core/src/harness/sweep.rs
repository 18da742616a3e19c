//! Ensemble runner.
//!
//! Trial `t` of a run seeded with `s` draws its channel from
//! `trial_seed(s, t) = splitmix64(s ^ t)`, so any subset of trials can be
//! rerun alone and reproduce the rows of a full run. Trials are mapped through
//! an [`Execution`] and merged in trial order, which makes the CSV independent
//! of the worker count.

use std::str::FromStr;
use std::time::Instant;

use crate::bound::{enumeration_size, upper_bound_with, DualProblem, MAX_ENUMERATED_SETS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::harness::record::{RunMethod, RunRecord};
use crate::model::{generate_channel, ChannelRealization, SystemConfig};
use crate::scheduler::{allocate, Method};

/// Default rate increment per sweep step, bits/s/Hz per RT user.
pub const DEFAULT_DELTA_R: f64 = 0.5;

/// Default minimum-rate multiplier of the RT-user-count sweep.
pub const DEFAULT_DMIN_FACTOR: f64 = 1.1;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Channel seed of trial `trial` in a run seeded with `base`.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    splitmix64(base ^ trial)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timing {
    /// Monotonic wall clock.
    #[default]
    Wall,
    /// `elapsed_us` written as 0, for byte-reproducible output.
    Off,
}

impl Timing {
    fn time<T>(self, f: impl FnOnce() -> T) -> (T, u64) {
        match self {
            Timing::Wall => {
                let start = Instant::now();
                let out = f();
                (out, start.elapsed().as_micros() as u64)
            }
            Timing::Off => (f(), 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Rate increment `Delta_r` over the max-throughput rates of the RT users.
    Dmin,
    /// Number of RT users, each asking for `factor * r0_k`.
    D,
    /// Number of users.
    K,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dmin" => Ok(SweepParam::Dmin),
            "D" => Ok(SweepParam::D),
            "K" => Ok(SweepParam::K),
            other => Err(Error::Sweep(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub methods: Vec<RunMethod>,
    pub trials: usize,
    pub seed: u64,
    /// Multiplier on `r0` for the `D` sweep.
    pub dmin_factor: f64,
    /// Rate increment used by the `K` sweep.
    pub delta_r: f64,
    pub timing: Timing,
}

impl SweepSpec {
    pub fn new(param: SweepParam, start: f64, stop: f64, step: f64, methods: Vec<RunMethod>) -> Self {
        Self {
            param,
            start,
            stop,
            step,
            methods,
            trials: 1,
            seed: 0,
            dmin_factor: DEFAULT_DMIN_FACTOR,
            delta_r: DEFAULT_DELTA_R,
            timing: Timing::Wall,
        }
    }

    /// Sweep values from `start` to `stop` inclusive.
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop >= self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::Sweep(format!(
                "need start <= stop and step > 0, got {}..{} by {}",
                self.start, self.stop, self.step
            )));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.start + i as f64 * self.step).collect())
    }
}

fn record(cfg: &SystemConfig, seed: u64, method: RunMethod, feasible: bool, objective: f64, elapsed_us: u64, iterations: usize) -> RunRecord {
    RunRecord {
        seed,
        users: cfg.users,
        antennas: cfg.antennas,
        subchannels: cfg.subchannels,
        rt_users: cfg.rt_users().len(),
        power: cfg.power,
        sum_dmin: cfg.min_rates.iter().sum(),
        method,
        feasible,
        objective,
        elapsed_us,
        iterations,
    }
}

/// Lazily enumerated dual problem for one channel.
struct BoundCache<'a> {
    chan: &'a ChannelRealization,
    problem: Option<DualProblem>,
}

impl<'a> BoundCache<'a> {
    fn new(chan: &'a ChannelRealization) -> Self {
        Self { chan, problem: None }
    }

    fn get(&mut self, cfg: &SystemConfig) -> Result<&DualProblem> {
        if self.problem.is_none() {
            self.problem = Some(DualProblem::new(self.chan, cfg)?);
        }
        Ok(self.problem.as_ref().expect("just filled"))
    }
}

fn run_one(
    chan: &ChannelRealization,
    cfg: &SystemConfig,
    method: RunMethod,
    timing: Timing,
    cache: &mut BoundCache<'_>,
) -> Result<RunRecord> {
    match method {
        RunMethod::Heuristic(m) => {
            let (res, us) = timing.time(|| allocate(chan, cfg, m));
            let res = res?;
            Ok(record(cfg, chan.seed, method, res.feasible, res.objective, us, res.iterations))
        }
        RunMethod::Bound => {
            let problem = cache.get(cfg)?;
            let (b, us) = timing.time(|| upper_bound_with(problem, cfg, chan.seed));
            let value = if b.infeasible { 0.0 } else { b.value.max(0.0) };
            Ok(record(cfg, chan.seed, method, !b.infeasible, value, us, b.iterations))
        }
    }
}

fn check_guard(cfg: &SystemConfig, methods: &[RunMethod]) -> Result<()> {
    if methods.contains(&RunMethod::Bound) {
        let size = enumeration_size(cfg.users, cfg.antennas, cfg.subchannels);
        if size > MAX_ENUMERATED_SETS {
            return Err(Error::EnumerationTooLarge(format!(
                "{size} SDMA sets for K={}, M={}, N={} exceeds {MAX_ENUMERATED_SETS}",
                cfg.users, cfg.antennas, cfg.subchannels
            )));
        }
    }
    Ok(())
}

/// `trials` independent draws of one method at the config's minimum rates.
pub fn run_trials(
    cfg: &SystemConfig,
    method: RunMethod,
    trials: usize,
    seed: u64,
    timing: Timing,
    exec: Execution,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    check_guard(cfg, &[method])?;
    exec.map(trials, |t| {
        let chan = generate_channel(cfg, trial_seed(seed, t as u64));
        run_one(&chan, cfg, method, timing, &mut BoundCache::new(&chan))
    })
    .into_iter()
    .collect()
}

/// Max-throughput rates `r0` (no minimum rates).
pub fn baseline_rates(chan: &ChannelRealization, cfg: &SystemConfig) -> Result<Vec<f64>> {
    let free = cfg.clone().with_min_rates(vec![0.0; cfg.users]);
    Ok(allocate(chan, &free, Method::MaxThr)?.power.rates_k)
}

/// RT users of `cfg`, or user 0 when the config names none.
fn designated_rt(cfg: &SystemConfig, users: usize) -> Vec<usize> {
    let rt: Vec<usize> = cfg.rt_users().into_iter().filter(|&k| k < users).collect();
    if rt.is_empty() {
        vec![0]
    } else {
        rt
    }
}

fn resized(cfg: &SystemConfig, users: usize) -> SystemConfig {
    let mut out = cfg.clone();
    out.users = users;
    out.weights = (0..users).map(|k| cfg.weights.get(k).copied().unwrap_or(1.0)).collect();
    out.min_rates = vec![0.0; users];
    out
}

/// Runs every method at every sweep point of every trial.
///
/// * `dmin`: RT users (from the config, user 0 if none) ask for
///   `r0_k + Delta_r` with `Delta_r` the sweep value.
/// * `D`: the first `D` users ask for `dmin_factor * r0_k`.
/// * `K`: the user count is the sweep value; RT users ask for
///   `r0_k + delta_r`.
///
/// Records are ordered by trial, then sweep point, then method.
pub fn run_sweep(cfg: &SystemConfig, spec: &SweepSpec, exec: Execution) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let points = spec.points()?;
    if spec.methods.is_empty() {
        return Err(Error::Sweep("no methods given".into()));
    }
    match spec.param {
        SweepParam::K => {
            for &k in &points {
                let users = k.round() as usize;
                if users == 0 {
                    return Err(Error::Sweep("K must be positive".into()));
                }
                check_guard(&resized(cfg, users), &spec.methods)?;
            }
        }
        SweepParam::D => {
            if points.iter().any(|&d| d.round() as usize > cfg.users) {
                return Err(Error::Sweep(format!("D exceeds K = {}", cfg.users)));
            }
            check_guard(cfg, &spec.methods)?;
        }
        SweepParam::Dmin => check_guard(cfg, &spec.methods)?,
    }

    let per_trial = exec.map(spec.trials, |t| -> Result<Vec<RunRecord>> {
        let seed = trial_seed(spec.seed, t as u64);
        let mut out = Vec::with_capacity(points.len() * spec.methods.len());
        match spec.param {
            SweepParam::Dmin | SweepParam::D => {
                let chan = generate_channel(cfg, seed);
                let r0 = baseline_rates(&chan, cfg)?;
                let mut cache = BoundCache::new(&chan);
                let rt = designated_rt(cfg, cfg.users);
                for &x in &points {
                    let mut point = cfg.clone();
                    point.min_rates = vec![0.0; cfg.users];
                    if spec.param == SweepParam::Dmin {
                        for &k in &rt {
                            point.min_rates[k] = r0[k] + x;
                        }
                    } else {
                        for k in 0..(x.round() as usize).min(cfg.users) {
                            point.min_rates[k] = spec.dmin_factor * r0[k];
                        }
                    }
                    for &m in &spec.methods {
                        let mut rec = run_one(&chan, &point, m, spec.timing, &mut cache)?;
                        // A zero target (r0 = 0 at Delta = 0) still counts as RT.
                        rec.rt_users = match spec.param {
                            SweepParam::D => x.round() as usize,
                            _ => rt.len(),
                        };
                        out.push(rec);
                    }
                }
            }
            SweepParam::K => {
                for &x in &points {
                    let users = x.round() as usize;
                    let base = resized(cfg, users);
                    let chan = generate_channel(&base, seed);
                    let r0 = baseline_rates(&chan, &base)?;
                    let mut point = base.clone();
                    let rt = designated_rt(cfg, users);
                    for &k in &rt {
                        point.min_rates[k] = r0[k] + spec.delta_r;
                    }
                    let mut cache = BoundCache::new(&chan);
                    for &m in &spec.methods {
                        let mut rec = run_one(&chan, &point, m, spec.timing, &mut cache)?;
                        rec.rt_users = rt.len();
                        out.push(rec);
                    }
                }
            }
        }
        Ok(out)
    });
    let mut records = Vec::new();
    for r in per_trial {
        records.extend(r?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points_inclusive() {
        let s = SweepSpec::new(SweepParam::Dmin, 0.0, 1.0, 0.25, vec![RunMethod::Bound]);
        assert_eq!(s.points().unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let s = SweepSpec::new(SweepParam::Dmin, 1.0, 0.0, 0.25, vec![RunMethod::Bound]);
        assert!(s.points().is_err());
        let s = SweepSpec::new(SweepParam::Dmin, 0.0, 1.0, 0.0, vec![RunMethod::Bound]);
        assert!(s.points().is_err());
    }

    #[test]
    fn trial_seeds_are_mixed() {
        assert_ne!(trial_seed(1, 0), trial_seed(1, 1));
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
        assert_eq!(trial_seed(5, 3), splitmix64(5 ^ 3));
        // Reference value of SplitMix64 seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn zero_increment_reproduces_max_throughput() {
        let cfg = SystemConfig::new(4, 2, 4, 10.0).with_min_rates(vec![1.0, 0.0, 0.0, 0.0]);
        let mut spec = SweepSpec::new(
            SweepParam::Dmin,
            0.0,
            0.0,
            0.5,
            vec![Method::Alg1.into(), Method::Alg2.into(), Method::MaxThr.into()],
        );
        spec.trials = 3;
        spec.seed = 9;
        let recs = run_sweep(&cfg, &spec, Execution::Sequential).unwrap();
        assert_eq!(recs.len(), 9);
        for t in 0..3 {
            let chan = generate_channel(&cfg, trial_seed(9, t));
            let free = cfg.clone().with_min_rates(vec![0.0; 4]);
            let base = allocate(&chan, &free, Method::MaxThr).unwrap();
            for r in &recs[t as usize * 3..(t as usize + 1) * 3] {
                assert!(r.feasible);
                assert!((r.objective - base.objective).abs() <= 1e-9 * base.objective);
                assert_eq!(r.iterations, 0);
            }
        }
    }

    #[test]
    fn dmin_sweep_keeps_one_group_per_draw() {
        // Many users on few slots, so user 0 is often unserved at r0.
        let cfg = SystemConfig::new(8, 1, 1, 5.0);
        let mut spec = SweepSpec::new(SweepParam::Dmin, 0.0, 1.0, 0.5, vec![Method::Alg1.into()]);
        spec.trials = 6;
        let recs = run_sweep(&cfg, &spec, Execution::Sequential).unwrap();
        assert!(recs.iter().all(|r| r.rt_users == 1));
        assert_eq!(crate::harness::compute_gaps(&recs).len(), 6);
    }

    #[test]
    fn guard_violation_is_reported() {
        let cfg = SystemConfig::new(64, 3, 16, 10.0);
        let err = run_trials(&cfg, RunMethod::Bound, 1, 0, Timing::Off, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge(_)));
    }
}
