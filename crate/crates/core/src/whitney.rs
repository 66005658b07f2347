//! Implicit Whitney decomposition of the complement of Γ by dyadic boxes.

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::{BoundarySet, MAX_DIM};

/// Dyadic box identified by its refinement level below the root and integer index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BoxKey {
    pub level: u32,
    pub idx: [i64; MAX_DIM],
}

/// Dyadic boxes below a root box of side 2^{−k0}.
#[derive(Clone, Debug, Serialize)]
pub struct WhitneyGrid {
    n: usize,
    origin: Vec<f64>,
    k0: i32,
    max_level: u32,
    /// Dilation parameter θ; see [`WhitneyGrid::star`].
    pub theta: f64,
    /// Every Whitney box of the root, when precomputed for one Γ.
    #[serde(skip)]
    cache: Option<Arc<HashSet<BoxKey>>>,
}

/// Explicit list of Whitney boxes inside a region.
#[derive(Clone, Debug, Serialize)]
pub struct WhitneyDecomposition {
    pub boxes: Vec<BoxKey>,
    /// Volume of the region left uncovered at the level cap.
    pub residual_volume: f64,
    pub region_volume: f64,
}

/// Results of checking the Whitney inequalities and the touching census.
#[derive(Clone, Debug, Default, Serialize)]
pub struct WhitneyCensus {
    pub boxes: usize,
    pub lower_failures: usize,
    pub upper_failures: usize,
    pub touching_pairs: usize,
    pub ratio_failures: usize,
    pub max_touching_ratio: f64,
    /// Dilated boxes meeting without the boxes touching, or touching without the dilations meeting.
    pub dilation_failures: usize,
    /// Pairs with ½J ∩ I* ≠ ∅.
    pub half_box_failures: usize,
    pub max_dist_ratio: f64,
    pub min_dist_ratio: f64,
}

impl WhitneyCensus {
    pub fn whitney_pass(&self) -> bool {
        self.lower_failures == 0 && self.upper_failures == 0 && self.ratio_failures == 0
    }

    pub fn dilation_pass(&self) -> bool {
        self.dilation_failures == 0 && self.half_box_failures == 0
    }
}

impl WhitneyGrid {
    /// Root box `[origin, origin + 2^{−k0}]^n`, refined at most `max_level` times.
    pub fn new(origin: &[f64], k0: i32, max_level: u32) -> Result<Self> {
        let n = origin.len();
        if n == 0 || n > MAX_DIM {
            return Err(LabError::Argument(format!("dimension {n} outside 1..={MAX_DIM}")));
        }
        if max_level > 40 {
            return Err(LabError::Argument("level cap too deep".into()));
        }
        Ok(WhitneyGrid { n, origin: origin.to_vec(), k0, max_level, theta: 1.0 / 16.0, cache: None })
    }

    /// Root box centred on `center` with half-side `2^{−k0−1}`.
    pub fn centered(center: &[f64], k0: i32, max_level: u32) -> Result<Self> {
        let half = 2f64.powi(-k0 - 1);
        let origin: Vec<f64> = center.iter().map(|c| c - half).collect();
        Self::new(&origin, k0, max_level)
    }

    /// Precomputes the full decomposition of the root so descents answer in O(1).
    /// The grid must afterwards only be used with the same Γ.
    pub fn with_cache(mut self, gamma: &BoundarySet) -> Self {
        self.cache = None;
        let (lo, hi) = self.root_bounds();
        let dec = self.decompose(gamma, &lo, &hi);
        self.cache = Some(Arc::new(dec.boxes.into_iter().collect()));
        self
    }

    /// Satisfying test for a box whose ancestors do not satisfy.
    fn stops_at(&self, gamma: &BoundarySet, b: &BoxKey) -> bool {
        match &self.cache {
            Some(set) => set.contains(b),
            None => self.satisfies(gamma, b),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn root(&self) -> BoxKey {
        BoxKey { level: 0, idx: [0; MAX_DIM] }
    }

    pub fn root_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.bounds(&self.root())
    }

    /// Dyadic generation k(I) with ℓ(I) = 2^{−k(I)}.
    pub fn generation(&self, b: &BoxKey) -> i32 {
        self.k0 + b.level as i32
    }

    pub fn side(&self, b: &BoxKey) -> f64 {
        2f64.powi(-self.generation(b))
    }

    pub fn diam(&self, b: &BoxKey) -> f64 {
        self.side(b) * (self.n as f64).sqrt()
    }

    pub fn bounds(&self, b: &BoxKey) -> (Vec<f64>, Vec<f64>) {
        let s = self.side(b);
        let lo: Vec<f64> = (0..self.n).map(|a| self.origin[a] + b.idx[a] as f64 * s).collect();
        let hi = lo.iter().map(|v| v + s).collect();
        (lo, hi)
    }

    pub fn center(&self, b: &BoxKey) -> Vec<f64> {
        let s = self.side(b);
        (0..self.n).map(|a| self.origin[a] + (b.idx[a] as f64 + 0.5) * s).collect()
    }

    /// Concentric dilation `factor·I`.
    pub fn dilated(&self, b: &BoxKey, factor: f64) -> (Vec<f64>, Vec<f64>) {
        let c = self.center(b);
        let h = 0.5 * factor * self.side(b);
        (c.iter().map(|v| v - h).collect(), c.iter().map(|v| v + h).collect())
    }

    /// Dilation factor for `m` stars: I* = (1+θ)I, I** = (1+2θ)I, I*** = (1+4θ)I, and (1+6θ)I for the
    /// outermost fattening.
    pub fn star(&self, m: u32) -> f64 {
        match m {
            0 => 1.0,
            1 => 1.0 + self.theta,
            2 => 1.0 + 2.0 * self.theta,
            3 => 1.0 + 4.0 * self.theta,
            _ => 1.0 + 6.0 * self.theta,
        }
    }

    pub fn parent(&self, b: &BoxKey) -> Option<BoxKey> {
        if b.level == 0 {
            return None;
        }
        let mut idx = [0; MAX_DIM];
        for a in 0..self.n {
            idx[a] = b.idx[a].div_euclid(2);
        }
        Some(BoxKey { level: b.level - 1, idx })
    }

    pub fn children(&self, b: &BoxKey) -> Vec<BoxKey> {
        (0..(1usize << self.n))
            .map(|corner| {
                let mut idx = [0; MAX_DIM];
                for a in 0..self.n {
                    idx[a] = 2 * b.idx[a] + (corner >> a & 1) as i64;
                }
                BoxKey { level: b.level + 1, idx }
            })
            .collect()
    }

    /// 4·diam I ≤ dist(4I, Γ).
    pub fn satisfies(&self, gamma: &BoundarySet, b: &BoxKey) -> bool {
        let (lo, hi) = self.dilated(b, 4.0);
        4.0 * self.diam(b) <= gamma.distance_to_box(&lo, &hi)
    }

    /// Maximal satisfying box: I satisfies and its parent does not.
    pub fn is_whitney(&self, gamma: &BoundarySet, b: &BoxKey) -> bool {
        if let Some(set) = &self.cache {
            return set.contains(b);
        }
        self.in_root(b)
            && self.satisfies(gamma, b)
            && self.parent(b).map_or(true, |p| !self.satisfies(gamma, &p))
    }

    fn in_root(&self, b: &BoxKey) -> bool {
        let m = 1i64 << b.level;
        (0..self.n).all(|a| b.idx[a] >= 0 && b.idx[a] < m)
    }

    /// Index of the level-`level` box containing `x` (upper faces go to the lower-index box at the root edge).
    pub fn key_at(&self, x: &[f64], level: u32) -> Option<BoxKey> {
        let s = 2f64.powi(-(self.k0 + level as i32));
        let m = 1i64 << level;
        let mut idx = [0; MAX_DIM];
        for a in 0..self.n {
            let t = ((x[a] - self.origin[a]) / s).floor() as i64;
            if t == m && x[a] <= self.origin[a] + m as f64 * s {
                idx[a] = m - 1;
            } else if t < 0 || t >= m {
                return None;
            } else {
                idx[a] = t;
            }
        }
        Some(BoxKey { level, idx })
    }

    /// The Whitney box containing `x`, or `None` outside the root or beyond the level cap.
    pub fn box_containing(&self, gamma: &BoundarySet, x: &[f64]) -> Option<BoxKey> {
        for level in 0..=self.max_level {
            let b = self.key_at(x, level)?;
            if self.stops_at(gamma, &b) {
                return Some(b);
            }
        }
        None
    }

    /// Whitney boxes whose closure meets the axis box `[lo, hi]`, with the uncovered volume at the cap.
    pub fn decompose(&self, gamma: &BoundarySet, lo: &[f64], hi: &[f64]) -> WhitneyDecomposition {
        let meets = |b: &[f64], t: &[f64]| (0..self.n).all(|a| b[a] <= hi[a] && t[a] >= lo[a]);
        let (boxes, residual) = self.collect(gamma, &self.root(), &meets, &|_| true, lo, hi);
        let mut boxes = boxes;
        boxes.sort_unstable();
        let region_volume = (0..self.n).map(|a| hi[a] - lo[a]).product();
        WhitneyDecomposition { boxes, residual_volume: residual, region_volume }
    }

    /// Whitney boxes selected by `keep`, pruning subtrees whose bounds fail `visit`.
    pub fn enumerate<V, K>(&self, gamma: &BoundarySet, visit: &V, keep: &K) -> Vec<BoxKey>
    where
        V: Fn(&[f64], &[f64]) -> bool + Sync,
        K: Fn(&BoxKey) -> bool + Sync,
    {
        let (lo, hi) = self.root_bounds();
        let mut out = self.collect(gamma, &self.root(), visit, keep, &lo, &hi).0;
        out.sort_unstable();
        out
    }

    fn collect<V, K>(&self, gamma: &BoundarySet, b: &BoxKey, visit: &V, keep: &K, rlo: &[f64], rhi: &[f64]) -> (Vec<BoxKey>, f64)
    where
        V: Fn(&[f64], &[f64]) -> bool + Sync,
        K: Fn(&BoxKey) -> bool + Sync,
    {
        let (lo, hi) = self.bounds(b);
        if !visit(&lo, &hi) {
            return (Vec::new(), 0.0);
        }
        if self.stops_at(gamma, b) {
            return (if keep(b) { vec![*b] } else { Vec::new() }, 0.0);
        }
        if b.level >= self.max_level {
            let vol: f64 = (0..self.n).map(|a| (hi[a].min(rhi[a]) - lo[a].max(rlo[a])).max(0.0)).product();
            return (Vec::new(), vol);
        }
        let kids = self.children(b);
        let parts: Vec<(Vec<BoxKey>, f64)> = if b.level < 3 {
            kids.par_iter().map(|c| self.collect(gamma, c, visit, keep, rlo, rhi)).collect()
        } else {
            kids.iter().map(|c| self.collect(gamma, c, visit, keep, rlo, rhi)).collect()
        };
        let mut out = Vec::new();
        let mut res = 0.0;
        for (v, r) in parts {
            out.extend(v);
            res += r;
        }
        (out, res)
    }

    /// Closed boxes share at least one boundary point.
    pub fn touching(&self, a: &BoxKey, b: &BoxKey) -> bool {
        let (alo, ahi) = self.bounds(a);
        let (blo, bhi) = self.bounds(b);
        let tol = 1e-12 * self.side(a).min(self.side(b));
        let meet = (0..self.n).all(|i| alo[i] <= bhi[i] + tol && blo[i] <= ahi[i] + tol);
        let overlap = (0..self.n).all(|i| alo[i] < bhi[i] - tol && blo[i] < ahi[i] - tol);
        meet && !overlap
    }

    /// Keys at `level` whose boxes lie within `ring` cells of box `b` (excluding boxes inside `b`).
    pub fn nearby_keys(&self, b: &BoxKey, level: u32, ring: i64) -> Vec<BoxKey> {
        let mut ranges = Vec::with_capacity(self.n);
        for a in 0..self.n {
            let (lo, hi) = if level >= b.level {
                let m = 1i64 << (level - b.level);
                (b.idx[a] * m - ring, (b.idx[a] + 1) * m - 1 + ring)
            } else {
                let m = 1i64 << (b.level - level);
                let c = b.idx[a].div_euclid(m);
                (c - ring, c + ring)
            };
            ranges.push((lo, hi));
        }
        let mut out = Vec::new();
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            let mut idx = [0; MAX_DIM];
            idx[..self.n].copy_from_slice(&cur);
            let inside = level > b.level && {
                let m = 1i64 << (level - b.level);
                (0..self.n).all(|a| cur[a] >= b.idx[a] * m && cur[a] < (b.idx[a] + 1) * m)
            };
            if !inside {
                out.push(BoxKey { level, idx });
            }
            let mut a = 0;
            loop {
                if a == self.n {
                    return out;
                }
                cur[a] += 1;
                if cur[a] > ranges[a].1 {
                    cur[a] = ranges[a].0;
                    a += 1;
                } else {
                    break;
                }
            }
        }
    }

    /// Checks the two-sided Whitney inequality, the touching-size ratio and the θ-dilation properties.
    pub fn census(&self, gamma: &BoundarySet, boxes: &[BoxKey]) -> WhitneyCensus {
        let set: HashSet<BoxKey> = boxes.iter().copied().collect();
        let rep = boxes
            .par_iter()
            .map(|b| self.census_one(gamma, b, &set))
            .reduce(|| WhitneyCensus { min_dist_ratio: f64::INFINITY, ..Default::default() }, merge_census);
        WhitneyCensus { boxes: boxes.len(), ..rep }
    }

    fn census_one(&self, gamma: &BoundarySet, b: &BoxKey, set: &HashSet<BoxKey>) -> WhitneyCensus {
        let mut r = WhitneyCensus { min_dist_ratio: f64::INFINITY, ..Default::default() };
        let diam = self.diam(b);
        let (lo, hi) = self.bounds(b);
        let (lo4, hi4) = self.dilated(b, 4.0);
        let d4 = gamma.distance_to_box(&lo4, &hi4);
        let d1 = gamma.distance_to_box(&lo, &hi);
        let tol = 1e-9 * diam;
        if 4.0 * diam > d4 + tol || d4 > d1 + tol {
            r.lower_failures += 1;
        }
        if d1 > 40.0 * diam + tol {
            r.upper_failures += 1;
        }
        r.max_dist_ratio = d1 / diam;
        r.min_dist_ratio = d1 / diam;
        let (slo, shi) = self.dilated(b, self.star(1));
        let (tlo, thi) = self.dilated(b, self.star(4));
        let lmin = b.level.saturating_sub(2);
        for level in lmin..=(b.level + 2).min(self.max_level) {
            for other in self.nearby_keys(b, level, 1) {
                if other == *b || !set.contains(&other) {
                    continue;
                }
                let touch = self.touching(b, &other);
                let (olo, ohi) = self.dilated(&other, self.star(4));
                let dil_meet = boxes_meet(&tlo, &thi, &olo, &ohi);
                if touch != dil_meet {
                    r.dilation_failures += 1;
                }
                let (hlo, hhi) = self.dilated(&other, 0.5);
                if boxes_meet(&slo, &shi, &hlo, &hhi) {
                    r.half_box_failures += 1;
                }
                if touch && other > *b {
                    r.touching_pairs += 1;
                    let ratio = self.side(b).max(self.side(&other)) / self.side(b).min(self.side(&other));
                    r.max_touching_ratio = r.max_touching_ratio.max(ratio);
                    if ratio > 4.0 {
                        r.ratio_failures += 1;
                    }
                }
            }
        }
        // Neighbours more than two levels away would be missed above; probe just outside each face and corner.
        let c = self.center(b);
        let s = self.side(b);
        let probes = 3usize.pow(self.n as u32);
        for p in 0..probes {
            let mut rem = p;
            let mut x = c.clone();
            let mut centre = true;
            for xa in x.iter_mut() {
                let dir = (rem % 3) as f64 - 1.0;
                rem /= 3;
                if dir != 0.0 {
                    centre = false;
                }
                *xa += dir * 0.5 * s * (1.0 + 1e-6);
            }
            if centre {
                continue;
            }
            if let Some(nb) = self.box_containing(gamma, &x) {
                if (nb.level as i64 - b.level as i64).abs() > 2 {
                    r.ratio_failures += 1;
                }
            }
        }
        r
    }

    /// Halves θ until the dilation properties hold on the census (at most `tries` halvings).
    pub fn tune_theta(&mut self, gamma: &BoundarySet, boxes: &[BoxKey], tries: u32) -> WhitneyCensus {
        let mut rep = self.census(gamma, boxes);
        let mut t = 0;
        while !rep.dilation_pass() && t < tries {
            self.theta *= 0.5;
            rep = self.census(gamma, boxes);
            t += 1;
        }
        rep
    }
}

fn boxes_meet(alo: &[f64], ahi: &[f64], blo: &[f64], bhi: &[f64]) -> bool {
    (0..alo.len()).all(|i| alo[i] < bhi[i] && blo[i] < ahi[i])
}

fn merge_census(a: WhitneyCensus, b: WhitneyCensus) -> WhitneyCensus {
    WhitneyCensus {
        boxes: 0,
        lower_failures: a.lower_failures + b.lower_failures,
        upper_failures: a.upper_failures + b.upper_failures,
        touching_pairs: a.touching_pairs + b.touching_pairs,
        ratio_failures: a.ratio_failures + b.ratio_failures,
        max_touching_ratio: a.max_touching_ratio.max(b.max_touching_ratio),
        dilation_failures: a.dilation_failures + b.dilation_failures,
        half_box_failures: a.half_box_failures + b.half_box_failures,
        max_dist_ratio: a.max_dist_ratio.max(b.max_dist_ratio),
        min_dist_ratio: a.min_dist_ratio.min(b.min_dist_ratio),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point() -> BoundarySet {
        BoundarySet::flat(2, 0, &[], 1.0, false).unwrap()
    }

    #[test]
    fn point_decomposition_is_whitney() {
        let g = point();
        let w = WhitneyGrid::centered(&[0.0, 0.0], -1, 9).unwrap();
        let dec = w.decompose(&g, &[-1.0, -1.0], &[1.0, 1.0]);
        assert!(!dec.boxes.is_empty());
        assert!(dec.residual_volume < 1e-2, "{}", dec.residual_volume);
        let rep = w.census(&g, &dec.boxes);
        assert!(rep.whitney_pass(), "{rep:?}");
        assert!(rep.dilation_pass(), "{rep:?}");
        assert!(rep.max_touching_ratio <= 4.0);
    }

    #[test]
    fn containing_box_matches_descent() {
        let g = point();
        let w = WhitneyGrid::centered(&[0.0, 0.0], -1, 12).unwrap();
        let x = [0.3, -0.2];
        let b = w.box_containing(&g, &x).unwrap();
        assert!(w.is_whitney(&g, &b));
        let (lo, hi) = w.bounds(&b);
        assert!((0..2).all(|a| lo[a] <= x[a] && x[a] <= hi[a]));
    }
}
