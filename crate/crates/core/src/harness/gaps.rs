//! Range and optimality gaps of a minimum-rate sweep.
//!
//! Records are grouped per channel draw and configuration. Inside a group:
//!
//! * `r0` is the first sweep point, where the rate constraints turn active.
//! * `r_i` is the largest `sum_dmin` at which method `i` is still feasible
//!   (`r1` alg1, `r2` comparison method, `r3` alg2).
//! * `u` values are mean objectives over the points of `[r0, r2]` at which
//!   both the method and the bound are feasible.
//!
//! The comparison method ("method 2") is alg2, so `A == B` and `E == G`.

use std::collections::BTreeMap;
use std::fmt;

use crate::harness::record::{RunMethod, RunRecord};
use crate::scheduler::Method;

/// Method standing in for the comparison baseline.
pub const COMPARISON: Method = Method::Alg2;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GapMetrics {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub e: Option<f64>,
    pub f: Option<f64>,
    pub g: Option<f64>,
    pub r0: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub r3: Option<f64>,
    /// Mean bound over the window.
    pub u1: Option<f64>,
    /// Mean objective of the comparison method over the window.
    pub u2: Option<f64>,
    pub u_alg1: Option<f64>,
    pub u_alg2: Option<f64>,
}

/// `100 (hi - lo) / hi`.
pub fn gap_percent(hi: f64, lo: f64) -> Option<f64> {
    (hi != 0.0 && hi.is_finite() && lo.is_finite()).then(|| 100.0 * (hi - lo) / hi)
}

type GroupKey = (u64, usize, usize, usize, usize, u64);

fn key(r: &RunRecord) -> GroupKey {
    (r.seed, r.users, r.antennas, r.subchannels, r.rt_users, r.power.to_bits())
}

struct Group<'a> {
    /// sum_dmin -> records at that point.
    points: Vec<(f64, Vec<&'a RunRecord>)>,
}

impl<'a> Group<'a> {
    fn new(mut recs: Vec<&'a RunRecord>) -> Self {
        recs.sort_by(|a, b| a.sum_dmin.total_cmp(&b.sum_dmin));
        let mut points: Vec<(f64, Vec<&RunRecord>)> = Vec::new();
        for r in recs {
            match points.last_mut() {
                Some((x, v)) if *x == r.sum_dmin => v.push(r),
                _ => points.push((r.sum_dmin, vec![r])),
            }
        }
        Self { points }
    }

    fn find(recs: &[&'a RunRecord], m: RunMethod) -> Option<&'a RunRecord> {
        recs.iter().copied().find(|r| r.method == m)
    }

    fn reach(&self, m: RunMethod) -> Option<f64> {
        self.points
            .iter()
            .rev()
            .find(|(_, v)| Self::find(v, m).is_some_and(|r| r.feasible))
            .map(|(x, _)| *x)
    }

    fn has(&self, m: RunMethod) -> bool {
        self.points.iter().any(|(_, v)| Self::find(v, m).is_some())
    }

    /// (mean bound, mean method) over window points feasible for both.
    fn paired_means(&self, m: RunMethod, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let (mut sb, mut sm, mut count) = (0.0, 0.0, 0usize);
        for (x, v) in &self.points {
            if *x < lo || *x > hi {
                continue;
            }
            let (Some(b), Some(r)) = (Self::find(v, RunMethod::Bound), Self::find(v, m)) else {
                continue;
            };
            if b.feasible && r.feasible {
                sb += b.objective;
                sm += r.objective;
                count += 1;
            }
        }
        (count > 0).then(|| (sb / count as f64, sm / count as f64))
    }

    fn metrics(&self) -> GapMetrics {
        let alg1 = RunMethod::Heuristic(Method::Alg1);
        let alg2 = RunMethod::Heuristic(Method::Alg2);
        let cmp = RunMethod::Heuristic(COMPARISON);
        let mut g = GapMetrics {
            r0: self.points.first().map(|(x, _)| *x),
            r1: self.reach(alg1),
            r2: self.reach(cmp),
            r3: self.reach(alg2),
            ..GapMetrics::default()
        };
        if let (Some(r1), Some(r2)) = (g.r1, g.r2) {
            g.a = gap_percent(r1, r2);
        }
        if let (Some(r1), Some(r3)) = (g.r1, g.r3) {
            g.b = gap_percent(r1, r3);
        }
        if !self.has(RunMethod::Bound) {
            return g;
        }
        let (Some(r0), Some(r2)) = (g.r0, g.r2) else { return g };
        if let Some((ub, u)) = self.paired_means(cmp, r0, r2) {
            g.u1 = Some(ub);
            g.u2 = Some(u);
            g.e = gap_percent(ub, u);
        }
        if let Some((ub, u)) = self.paired_means(alg1, r0, r2) {
            g.u_alg1 = Some(u);
            g.f = gap_percent(ub, u);
        }
        if let Some((ub, u)) = self.paired_means(alg2, r0, r2) {
            g.u_alg2 = Some(u);
            g.g = gap_percent(ub, u);
        }
        g
    }
}

/// Metrics per channel draw, in (seed, K, M, N, D, P) order.
pub fn compute_gaps(records: &[RunRecord]) -> Vec<GapMetrics> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)).or_default().push(r);
    }
    groups.into_values().map(|v| Group::new(v).metrics()).collect()
}

/// Field-wise mean over the draws where the field is defined.
pub fn mean_gaps(all: &[GapMetrics]) -> GapMetrics {
    let mean = |f: fn(&GapMetrics) -> Option<f64>| {
        let v: Vec<f64> = all.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    GapMetrics {
        a: mean(|g| g.a),
        b: mean(|g| g.b),
        e: mean(|g| g.e),
        f: mean(|g| g.f),
        g: mean(|g| g.g),
        r0: mean(|g| g.r0),
        r1: mean(|g| g.r1),
        r2: mean(|g| g.r2),
        r3: mean(|g| g.r3),
        u1: mean(|g| g.u1),
        u2: mean(|g| g.u2),
        u_alg1: mean(|g| g.u_alg1),
        u_alg2: mean(|g| g.u_alg2),
    }
}

impl fmt::Display for GapMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("A", self.a, "%"),
            ("B", self.b, "%"),
            ("E", self.e, "%"),
            ("F", self.f, "%"),
            ("G", self.g, "%"),
            ("r0", self.r0, ""),
            ("r1", self.r1, ""),
            ("r2", self.r2, ""),
            ("r3", self.r3, ""),
            ("u1", self.u1, ""),
            ("u2", self.u2, ""),
            ("u_alg1", self.u_alg1, ""),
            ("u_alg2", self.u_alg2, ""),
        ];
        writeln!(f, "# method 2 = {} (substitute comparison baseline)", COMPARISON)?;
        for (name, v, unit) in rows {
            match v {
                Some(x) => writeln!(f, "{name} = {x:.4}{unit}")?,
                None => writeln!(f, "{name} = NA")?,
            }
        }
        Ok(())
    }
}
