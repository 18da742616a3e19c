//! Problem configuration, channel realizations and SDMA assignments.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.2;
pub const DEFAULT_SUS_GAMMA: f64 = 0.3;
pub const DEFAULT_MAX_DUAL_ITERS: usize = 2000;

/// Tolerance used for every minimum-rate feasibility verdict.
pub const RATE_TOL: f64 = 1e-9;

/// Dimensions, budget and per-user requirements of one allocation problem.
///
/// Noise has unit variance on every subchannel, so `power` alone sets the SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// K
    pub users: usize,
    /// M
    pub antennas: usize,
    /// N
    pub subchannels: usize,
    /// Total transmit power budget (linear).
    pub power: f64,
    /// Utility weight `c_k` per user.
    pub weights: Vec<f64>,
    /// Minimum rate per user in bits/s/Hz; zero marks a best-effort user.
    pub min_rates: Vec<f64>,
    /// Exponent scale of the rate-constrained power allocation's dual bound.
    pub epsilon: f64,
    /// SUS semiorthogonality threshold.
    pub sus_gamma: f64,
    /// Iteration cap for the subgradient solvers.
    pub max_dual_iters: usize,
    pub seed: u64,
}

impl SystemConfig {
    /// Config with unit weights, no rate constraints and default parameters.
    pub fn new(users: usize, antennas: usize, subchannels: usize, power: f64) -> Self {
        Self {
            users,
            antennas,
            subchannels,
            power,
            weights: vec![1.0; users],
            min_rates: vec![0.0; users],
            epsilon: DEFAULT_EPSILON,
            sus_gamma: DEFAULT_SUS_GAMMA,
            max_dual_iters: DEFAULT_MAX_DUAL_ITERS,
            seed: 0,
        }
    }

    pub fn with_min_rates(mut self, min_rates: Vec<f64>) -> Self {
        self.min_rates = min_rates;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    /// Users with a strictly positive minimum rate (the RT set).
    pub fn rt_users(&self) -> Vec<usize> {
        (0..self.users).filter(|&k| self.min_rates[k] > 0.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("K", self.users), ("M", self.antennas), ("N", self.subchannels)] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(Error::config("P", "must be positive and finite"));
        }
        if self.weights.len() != self.users {
            return Err(Error::config(
                "weights",
                format!("weights length {} ≠ K = {}", self.weights.len(), self.users),
            ));
        }
        if self.min_rates.len() != self.users {
            return Err(Error::config(
                "dmin",
                format!("dmin length {} ≠ K = {}", self.min_rates.len(), self.users),
            ));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("weights", "entries must be finite and non-negative"));
        }
        if self.min_rates.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::config("dmin", "entries must be finite and non-negative"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if !(self.sus_gamma > 0.0 && self.sus_gamma <= 1.0) {
            return Err(Error::config("sus_gamma", "must lie in (0, 1]"));
        }
        if self.max_dual_iters == 0 {
            return Err(Error::config("max_dual_iters", "must be positive"));
        }
        Ok(())
    }

    /// Renders the config in the `key = value` grammar accepted by [`parse_config`].
    pub fn to_config_string(&self) -> String {
        self.to_string()
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for SystemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "K = {}", self.users)?;
        writeln!(f, "M = {}", self.antennas)?;
        writeln!(f, "N = {}", self.subchannels)?;
        writeln!(f, "P = {}", self.power)?;
        writeln!(f, "weights = {}", join(&self.weights))?;
        writeln!(f, "dmin = {}", join(&self.min_rates))?;
        writeln!(f, "epsilon = {}", self.epsilon)?;
        writeln!(f, "sus_gamma = {}", self.sus_gamma)?;
        writeln!(f, "max_dual_iters = {}", self.max_dual_iters)?;
        writeln!(f, "seed = {}", self.seed)
    }
}

impl FromStr for SystemConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_config(s)
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_num::<f64>(key, v))
        .collect()
}

/// Parses the `key = value` configuration grammar.
///
/// Required keys are `K`, `M`, `N` and `P`. `weights` defaults to all ones,
/// `dmin` to all zeros, `epsilon` to 0.2, `sus_gamma` to 0.3.
pub fn parse_config(text: &str) -> Result<SystemConfig> {
    const KEYS: [&str; 10] = [
        "K",
        "M",
        "N",
        "P",
        "weights",
        "dmin",
        "epsilon",
        "sus_gamma",
        "max_dual_iters",
        "seed",
    ];
    let mut seen: Vec<(&str, &str)> = Vec::new();
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(line, "expected `key = value`"))?;
        let key = key.trim();
        let key = KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| Error::config(key, "unknown key"))?;
        if seen.iter().any(|(k, _)| *k == key) {
            return Err(Error::config(key, "duplicate key"));
        }
        seen.push((key, value.trim()));
    }
    let get = |key: &str| seen.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
    let required = |key: &str| get(key).ok_or_else(|| Error::config(key, "missing key"));

    let users: usize = parse_num("K", required("K")?)?;
    let antennas: usize = parse_num("M", required("M")?)?;
    let subchannels: usize = parse_num("N", required("N")?)?;
    let power: f64 = parse_num("P", required("P")?)?;
    let mut cfg = SystemConfig::new(users, antennas, subchannels, power);
    if let Some(v) = get("weights") {
        cfg.weights = parse_list("weights", v)?;
    }
    if let Some(v) = get("dmin") {
        cfg.min_rates = parse_list("dmin", v)?;
    }
    if let Some(v) = get("epsilon") {
        cfg.epsilon = parse_num("epsilon", v)?;
    }
    if let Some(v) = get("sus_gamma") {
        cfg.sus_gamma = parse_num("sus_gamma", v)?;
    }
    if let Some(v) = get("max_dual_iters") {
        cfg.max_dual_iters = parse_num("max_dual_iters", v)?;
    }
    if let Some(v) = get("seed") {
        cfg.seed = parse_num("seed", v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Complex channel row vectors `h[n][k]` for every (subchannel, user) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    subchannels: usize,
    users: usize,
    antennas: usize,
    h: Vec<Complex64>,
    pub seed: u64,
}

impl ChannelRealization {
    /// Builds a realization from `vectors[n][k]`, each of length `antennas`.
    pub fn from_vectors(antennas: usize, vectors: Vec<Vec<Vec<Complex64>>>) -> Result<Self> {
        let subchannels = vectors.len();
        let users = vectors.first().map_or(0, Vec::len);
        if subchannels == 0 || users == 0 || antennas == 0 {
            return Err(Error::config("channel", "empty channel realization"));
        }
        let mut h = Vec::with_capacity(subchannels * users * antennas);
        for row in &vectors {
            if row.len() != users {
                return Err(Error::config("channel", "ragged user dimension"));
            }
            for v in row {
                if v.len() != antennas || v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                    return Err(Error::config("channel", "bad channel vector"));
                }
                h.extend_from_slice(v);
            }
        }
        Ok(Self {
            subchannels,
            users,
            antennas,
            h,
            seed: 0,
        })
    }

    /// Real-valued convenience constructor, `rows[n][k][m]`.
    pub fn from_real(antennas: usize, rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        Self::from_vectors(
            antennas,
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|v| v.iter().map(|&x| Complex64::new(x, 0.0)).collect())
                        .collect()
                })
                .collect(),
        )
    }

    pub fn subchannels(&self) -> usize {
        self.subchannels
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Channel row vector of user `k` on subchannel `n`.
    #[inline]
    pub fn vector(&self, n: usize, k: usize) -> &[Complex64] {
        let start = (n * self.users + k) * self.antennas;
        &self.h[start..start + self.antennas]
    }

    pub fn norm_sqr(&self, n: usize, k: usize) -> f64 {
        self.vector(n, k).iter().map(Complex64::norm_sqr).sum()
    }

    pub fn norm(&self, n: usize, k: usize) -> f64 {
        self.norm_sqr(n, k).sqrt()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.h
    }
}

/// Draws an i.i.d. Rayleigh channel: every entry is `CN(0, 1)`.
///
/// The generator is ChaCha8 seeded through `seed_from_u64`; entries are drawn
/// in `(n, k, m)` order, real part first, so a seed pins the realization on
/// every platform.
pub fn generate_channel(cfg: &SystemConfig, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let len = cfg.subchannels * cfg.users * cfg.antennas;
    let h = (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    ChannelRealization {
        subchannels: cfg.subchannels,
        users: cfg.users,
        antennas: cfg.antennas,
        h,
        seed,
    }
}

/// Ordered SDMA user set per subchannel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdmaAssignment {
    pub sets: Vec<Vec<usize>>,
}

impl SdmaAssignment {
    pub fn empty(subchannels: usize) -> Self {
        Self {
            sets: vec![Vec::new(); subchannels],
        }
    }

    pub fn new(sets: Vec<Vec<usize>>) -> Self {
        Self { sets }
    }

    pub fn subchannels(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, n: usize) -> &[usize] {
        &self.sets[n]
    }

    /// `alpha[n][k]`
    pub fn contains(&self, n: usize, k: usize) -> bool {
        self.sets[n].contains(&k)
    }

    /// Subchannels on which user `k` is scheduled.
    pub fn subchannels_of(&self, k: usize) -> Vec<usize> {
        (0..self.sets.len()).filter(|&n| self.contains(n, k)).collect()
    }

    pub fn validate(&self, users: usize, antennas: usize) -> Result<()> {
        for (n, set) in self.sets.iter().enumerate() {
            if set.len() > antennas {
                return Err(Error::config(
                    "assignment",
                    format!("subchannel {n} holds {} users > M = {antennas}", set.len()),
                ));
            }
            let mut seen = HashSet::new();
            for &k in set {
                if k >= users {
                    return Err(Error::IndexOutOfRange {
                        what: "user",
                        index: k,
                        len: users,
                    });
                }
                if !seen.insert(k) {
                    return Err(Error::config(
                        "assignment",
                        format!("user {k} repeated on subchannel {n}"),
                    ));
                }
            }
        }
        Ok(())
    }
}
