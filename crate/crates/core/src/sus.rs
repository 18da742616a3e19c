//! Semiorthogonal user selection, split into an initialization stage and a
//! search stage so that callers can control the order in which candidate
//! pools are scanned.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ChannelRealization;
use crate::ops;

/// Projections shorter than this fraction of the channel norm count as zero.
const PROJECTION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SusState {
    /// Selected users in selection order.
    pub selected: Vec<usize>,
    /// `M x (M - |selected|)` orthonormal basis `G` with `h_j G = 0` for
    /// every selected `j`.
    pub basis: DMatrix<Complex64>,
}

impl SusState {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

fn hermitian_dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    // <x, y> = sum conj(x) y
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

/// Orthonormal basis of `{ w : h_j w = 0 for all selected j }`.
///
/// Gram-Schmidt (two passes) over `conj(h_j)` followed by the canonical basis;
/// whatever survives after the selected directions is the null space.
fn null_space(chan: &ChannelRealization, n: usize, selected: &[usize]) -> DMatrix<Complex64> {
    let m = chan.antennas();
    ops::charge((m * m * (selected.len() + m)) as u64);
    let mut ortho: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    let push = |mut v: Vec<Complex64>, ortho: &mut Vec<Vec<Complex64>>| -> bool {
        let scale = norm(&v);
        if scale == 0.0 {
            return false;
        }
        for _ in 0..2 {
            for q in ortho.iter() {
                let c = hermitian_dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let len = norm(&v);
        if len <= 1e-8 * scale {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= len);
        ortho.push(v);
        true
    };
    for &j in selected {
        let v = chan.vector(n, j).iter().map(Complex64::conj).collect();
        push(v, &mut ortho);
    }
    let rank = ortho.len();
    for a in 0..m {
        if ortho.len() == m {
            break;
        }
        let mut e = vec![Complex64::new(0.0, 0.0); m];
        e[a] = Complex64::new(1.0, 0.0);
        push(e, &mut ortho);
    }
    DMatrix::from_fn(m, m - rank, |r, c| ortho[rank + c][r])
}

/// Norm of the component of `h` left after removing the selected users'
/// directions, `|h G|`.
pub fn projected_norm(h: &[Complex64], basis: &DMatrix<Complex64>) -> f64 {
    ops::charge((basis.nrows() * basis.ncols()) as u64);
    (0..basis.ncols())
        .map(|c| {
            h.iter()
                .enumerate()
                .map(|(r, x)| x * basis[(r, c)])
                .sum::<Complex64>()
                .norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Normalized correlation `|h_a h_b^H| / (|h_a| |h_b|)`.
pub fn correlation(a: &[Complex64], b: &[Complex64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return 1.0;
    }
    hermitian_dot(b, a).norm() / denom
}

/// Picks the strongest candidate (largest `|h|`, lowest index on ties).
pub fn sus_init(chan: &ChannelRealization, n: usize, candidates: &[usize]) -> Result<SusState> {
    let mut best: Option<(usize, f64)> = None;
    for &k in candidates {
        let v = chan.norm_sqr(n, k);
        best = match best {
            Some((bk, bv)) if bv > v || (bv == v && bk < k) => Some((bk, bv)),
            _ => Some((k, v)),
        };
    }
    let (first, _) = best.ok_or(Error::EmptyCandidates)?;
    ops::charge((candidates.len() * chan.antennas()) as u64);
    Ok(SusState {
        selected: vec![first],
        basis: null_space(chan, n, &[first]),
    })
}

/// State holding exactly `users`, strongest first.
///
/// Used to keep users that must stay on a subchannel regardless of their
/// mutual correlation. The caller guarantees the set is not degenerate.
pub fn sus_seed(chan: &ChannelRealization, n: usize, users: &[usize]) -> Result<SusState> {
    if users.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut selected = users.to_vec();
    selected.sort_by(|&a, &b| chan.norm_sqr(n, b).total_cmp(&chan.norm_sqr(n, a)).then(a.cmp(&b)));
    selected.dedup();
    let basis = null_space(chan, n, &selected);
    Ok(SusState { selected, basis })
}

/// Greedily extends `state` with candidates until `M` users are selected or
/// no candidate qualifies.
///
/// A candidate qualifies when its normalized correlation with every selected
/// user is at most `gamma` and its projection onto the current null space is
/// non-negligible; the one with the largest projection is added.
pub fn sus_search(
    chan: &ChannelRealization,
    n: usize,
    candidates: &[usize],
    mut state: SusState,
    gamma: f64,
) -> SusState {
    let m = chan.antennas();
    let mut pool: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|k| !state.selected.contains(k))
        .collect();
    pool.sort_unstable();
    pool.dedup();
    while state.selected.len() < m && !pool.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        pool.retain(|&k| {
            let h = chan.vector(n, k);
            ops::charge((state.selected.len() * m) as u64);
            let orthogonal_enough = state
                .selected
                .iter()
                .all(|&j| correlation(h, chan.vector(n, j)) <= gamma);
            if !orthogonal_enough {
                return false;
            }
            let proj = projected_norm(h, &state.basis);
            if proj <= PROJECTION_FLOOR * norm(h) {
                return false;
            }
            if best.is_none_or(|(_, b)| proj > b) {
                best = Some((k, proj));
            }
            true
        });
        let Some((k, _)) = best else { break };
        pool.retain(|&x| x != k);
        state.selected.push(k);
        state.basis = null_space(chan, n, &state.selected);
    }
    state
}

/// Plain SUS over `candidates`: initialization followed by search.
pub fn sus_select(chan: &ChannelRealization, n: usize, candidates: &[usize], gamma: f64) -> Result<SusState> {
    let init = sus_init(chan, n, candidates)?;
    Ok(sus_search(chan, n, candidates, init, gamma))
}
