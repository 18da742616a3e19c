//! Zero-forcing algebra for fixed SDMA sets.
//!
//! For the `g x M` matrix `H` stacking the selected users' channel rows, the
//! beamformers are `W = pinv(H) diag(sqrt(q))`. Transmit power then
//! decomposes into `sum_j beta_j q_j` with `beta_j = [pinv(H)^H pinv(H)]_jj`,
//! the squared norm of column `j` of `pinv(H)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{ChannelRealization, SdmaAssignment};
use crate::ops;
use crate::power::PowerSolution;

/// Smallest accepted ratio of extreme singular values of a stacked channel.
pub const SINGULAR_GUARD: f64 = 1e-9;

/// Achievable rate of one ZF stream with received power `p` (unit noise).
#[inline]
pub fn rate(p: f64) -> f64 {
    (1.0 + p).log2()
}

/// Pseudo-inverse and per-column power costs of one SDMA set.
#[derive(Debug, Clone)]
pub struct SetGains {
    /// `beta_j` in set order.
    pub beta: Vec<f64>,
    /// `M x g` pseudo-inverse of the stacked channel.
    pub pinv: DMatrix<Complex64>,
}

/// Stacks the rows of `set` on subchannel `n` into a `g x M` matrix.
pub fn stack_rows(chan: &ChannelRealization, n: usize, set: &[usize]) -> DMatrix<Complex64> {
    let m = chan.antennas();
    DMatrix::from_fn(set.len(), m, |j, a| chan.vector(n, set[j])[a])
}

/// Pseudo-inverse of the stacked channel of `set` via SVD.
///
/// Fails with [`Error::DegenerateSet`] when the smallest singular value is
/// below `SINGULAR_GUARD` times the largest.
pub fn set_gains(chan: &ChannelRealization, n: usize, set: &[usize]) -> Result<SetGains> {
    let m = chan.antennas();
    let g = set.len();
    if g == 0 {
        return Ok(SetGains {
            beta: Vec::new(),
            pinv: DMatrix::zeros(m, 0),
        });
    }
    ops::charge((m * m * m) as u64);
    if g == 1 {
        let h = chan.vector(n, set[0]);
        let norm_sqr: f64 = h.iter().map(Complex64::norm_sqr).sum();
        if !(norm_sqr > 0.0) {
            return Err(Error::DegenerateSet {
                subchannel: n,
                condition: 0.0,
            });
        }
        let pinv = DMatrix::from_fn(m, 1, |a, _| h[a].conj() / norm_sqr);
        return Ok(SetGains {
            beta: vec![1.0 / norm_sqr],
            pinv,
        });
    }
    let stacked = stack_rows(chan, n, set);
    let svd = stacked.svd(true, true);
    let sigma = &svd.singular_values;
    let s_max = sigma.iter().cloned().fold(0.0, f64::max);
    let s_min = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(s_max > 0.0) || s_min < SINGULAR_GUARD * s_max {
        return Err(Error::DegenerateSet {
            subchannel: n,
            condition: if s_max > 0.0 { s_min / s_max } else { 0.0 },
        });
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    // pinv = V diag(1/sigma) U^H
    let mut v = v_t.adjoint();
    for (j, s) in sigma.iter().enumerate() {
        v.column_mut(j).scale_mut(1.0 / s);
    }
    let pinv = v * u.adjoint();
    let beta = (0..g)
        .map(|j| pinv.column(j).iter().map(Complex64::norm_sqr).sum())
        .collect();
    Ok(SetGains { beta, pinv })
}

/// Power costs `beta[n][k]` for a whole assignment, zero off-set.
#[derive(Debug, Clone)]
pub struct EffectiveGains {
    pub beta: Grid,
    pub pinv: Vec<DMatrix<Complex64>>,
    pub assignment: SdmaAssignment,
}

impl EffectiveGains {
    pub fn subchannels(&self) -> usize {
        self.beta.subchannels()
    }

    pub fn users(&self) -> usize {
        self.beta.users()
    }

    /// Recomputes subchannel `n` for a new SDMA set.
    pub fn update(&mut self, chan: &ChannelRealization, n: usize, set: Vec<usize>) -> Result<()> {
        let gains = set_gains(chan, n, &set)?;
        let row = self.beta.row_mut(n);
        row.iter_mut().for_each(|b| *b = 0.0);
        for (j, &k) in set.iter().enumerate() {
            row[k] = gains.beta[j];
        }
        self.pinv[n] = gains.pinv;
        self.assignment.sets[n] = set;
        Ok(())
    }

    /// Builds gains directly from a `beta` table; no pseudo-inverses kept.
    ///
    /// Useful for exercising the power-allocation kernels in isolation.
    pub fn from_beta(beta: Grid) -> Self {
        let sets = (0..beta.subchannels())
            .map(|n| (0..beta.users()).filter(|&k| beta[(n, k)] > 0.0).collect())
            .collect();
        let pinv = vec![DMatrix::zeros(0, 0); beta.subchannels()];
        Self {
            beta,
            pinv,
            assignment: SdmaAssignment::new(sets),
        }
    }
}

/// Computes `beta` and the pseudo-inverses for every subchannel of `assign`.
pub fn effective_gains(chan: &ChannelRealization, assign: &SdmaAssignment) -> Result<EffectiveGains> {
    let (nsub, users) = (chan.subchannels(), chan.users());
    assign.validate(users, chan.antennas())?;
    let mut gains = EffectiveGains {
        beta: Grid::zeros(nsub, users),
        pinv: vec![DMatrix::zeros(chan.antennas(), 0); nsub],
        assignment: SdmaAssignment::empty(nsub),
    };
    for n in 0..nsub {
        gains.update(chan, n, assign.sets[n].clone())?;
    }
    Ok(gains)
}

/// ZF beamformers of subchannel `n`, one `M`-vector per member of `S_n` in
/// set order: `W_n = pinv(H_n) diag(sqrt(p))`.
pub fn beamformers(gains: &EffectiveGains, pwr: &PowerSolution, n: usize) -> Result<Vec<Vec<Complex64>>> {
    if n >= gains.subchannels() {
        return Err(Error::IndexOutOfRange {
            what: "subchannel",
            index: n,
            len: gains.subchannels(),
        });
    }
    let pinv = &gains.pinv[n];
    let set = gains.assignment.set(n);
    if pinv.ncols() != set.len() {
        return Err(Error::config("gains", "pseudo-inverse not retained for this subchannel"));
    }
    Ok(set
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let amp = pwr.p[(n, k)].max(0.0).sqrt();
            pinv.column(j).iter().map(|z| z * amp).collect()
        })
        .collect())
}

/// Bilinear product `h w` (no conjugation), the received amplitude.
pub fn apply(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a * b).sum()
}
