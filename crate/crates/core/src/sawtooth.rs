//! Cube-indexed Whitney regions, sawtooth domains, the sawtooth cutoff and dyadic cones.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{corkscrew_point, harnack_chain, CorkscrewSearch, HarnackChain};
use crate::dyadic::DyadicLattice;
use crate::error::{LabError, Result};
use crate::geometry::BoundarySet;
use crate::linalg::{dist, point_box_dist, smoothstep};
use crate::whitney::{BoxKey, WhitneyGrid};

/// Parameters of the Whitney regions W_Q.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegionParams {
    /// η: lower size bound η^{1/4}ℓ(Q).
    pub eta: f64,
    /// K: size and distance bound K^{1/2}ℓ(Q).
    pub k_big: f64,
    /// Harnack-chain clearance constant.
    pub chain_c: f64,
    /// Times η may be divided by 16 when the corkscrew misses W_Q⁰.
    pub eta_retries: u32,
    /// Times K may be multiplied by 4 when the corkscrew misses W_Q⁰.
    pub k_retries: u32,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams { eta: 2f64.powi(-8), k_big: 2f64.powi(12), chain_c: 0.25, eta_retries: 6, k_retries: 2 }
    }
}

/// W_Q⁰ and its chain augmentation W_Q for one cube.
#[derive(Clone, Debug, Serialize)]
pub struct WhitneyRegion {
    pub cube: usize,
    pub corkscrew: Vec<f64>,
    pub eta: f64,
    pub k_big: f64,
    pub base: Vec<BoxKey>,
    pub boxes: Vec<BoxKey>,
    /// Smallest chain clearance floor used.
    pub chain_floor: f64,
    pub chain_balls: usize,
}

/// Dilation level of a sawtooth or cone: 0 uses I, 1 uses I*, … (see [`WhitneyGrid::star`]).
pub type Dilation = u32;

/// Shared context for region, sawtooth and cone queries.
pub struct SawtoothContext<'a> {
    pub gamma: &'a BoundarySet,
    pub lattice: &'a DyadicLattice,
    pub grid: &'a WhitneyGrid,
    pub params: RegionParams,
    regions: BTreeMap<usize, WhitneyRegion>,
}

/// Ω_{F,Q}: union of dilated boxes of W_{F,Q}.
#[derive(Clone, Debug, Serialize)]
pub struct SawtoothDomain {
    pub base: usize,
    pub family: Vec<usize>,
    pub truncation: Option<u32>,
    /// 𝔻_{F,Q} (or 𝔻_{F^N,Q}).
    pub cubes: Vec<usize>,
    pub boxes: Vec<BoxKey>,
    /// For each box, the cubes Q' of `cubes` with the box in W_{Q'}.
    pub owners: BTreeMap<BoxKey, Vec<usize>>,
    #[serde(skip)]
    set: HashSet<BoxKey>,
}

/// ψ_N for a truncated sawtooth.
#[derive(Clone, Debug, Serialize)]
pub struct CutoffField {
    pub domain: SawtoothDomain,
    /// W_N^Σ: boxes of W_N touching a Whitney box outside W_N.
    pub boundary: Vec<BoxKey>,
    /// Q_I: smallest admissible cube, ties by id.
    pub association: BTreeMap<BoxKey, usize>,
    /// Largest admissible cube, for the association-stability check.
    pub alternative: BTreeMap<BoxKey, usize>,
}

/// Pointwise checks of the cutoff properties on a sample set.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CutoffReport {
    pub samples: usize,
    /// Samples of Ω*_{F^N,Q}.
    pub inner_samples: usize,
    pub min_psi_inner: f64,
    /// 1 / max over samples of the bump overlap Σ_W φ_J.
    pub c_theta: f64,
    pub lower_violations: usize,
    /// ψ_N > 0 outside Ω**_{F^N,Q}.
    pub upper_violations: usize,
    pub max_grad_delta: f64,
    /// Samples inside I*** for some I ∈ W_N ∖ W_N^Σ.
    pub flat_samples: usize,
    pub flat_not_one: usize,
    pub flat_max_fd_gradient: f64,
}

impl CutoffReport {
    pub fn pass(&self, grad_bound: f64) -> bool {
        self.lower_violations == 0
            && self.upper_violations == 0
            && self.flat_not_one == 0
            && self.flat_max_fd_gradient == 0.0
            && self.max_grad_delta <= grad_bound
    }
}

/// Membership counts for the cone sandwich on a set of test points.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SandwichReport {
    pub points: usize,
    pub inner_members: usize,
    pub inner_failures: usize,
    pub middle_failures: usize,
    pub outer_members: usize,
    pub outer_failures: usize,
}

/// Inclusion census between standard and dyadic cones at one vertex.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ConeReport {
    pub points: usize,
    pub standard_members: usize,
    /// Points of Γ^α(q) outside Γ_d(q).
    pub standard_outside_dyadic: usize,
    pub dyadic_members: usize,
    /// Smallest α₁ with Γ_d(q) ⊆ Γ^{α₁}(q) on the tested points.
    pub alpha1: f64,
    /// Smallest β with Γ̂_d(q) ⊆ Γ^β(q) on the tested points.
    pub beta: f64,
}

fn ramp(t: f64, inner: f64, outer: f64) -> (f64, f64) {
    if t <= inner {
        (1.0, 0.0)
    } else if t >= outer {
        (0.0, 0.0)
    } else {
        let w = outer - inner;
        let s = (t - inner) / w;
        let ds = 30.0 * s * s * (1.0 - s) * (1.0 - s) / w;
        (1.0 - smoothstep(s), -ds)
    }
}

impl<'a> SawtoothContext<'a> {
    pub fn new(gamma: &'a BoundarySet, lattice: &'a DyadicLattice, grid: &'a WhitneyGrid, params: RegionParams) -> Self {
        SawtoothContext { gamma, lattice, grid, params, regions: BTreeMap::new() }
    }

    /// Computes W_Q for every listed cube that has not been computed yet.
    pub fn prepare(&mut self, cubes: &[usize]) -> Result<()> {
        let todo: Vec<usize> = cubes.iter().copied().filter(|c| !self.regions.contains_key(c)).collect::<BTreeSet<_>>().into_iter().collect();
        let built: Vec<Result<WhitneyRegion>> = todo.par_iter().map(|&c| self.build_region(c)).collect();
        for r in built {
            let r = r?;
            self.regions.insert(r.cube, r);
        }
        Ok(())
    }

    pub fn region(&self, cube: usize) -> Option<&WhitneyRegion> {
        self.regions.get(&cube)
    }

    fn cube_box_distance(&self, cube: usize, lo: &[f64], hi: &[f64]) -> f64 {
        self.lattice.cube(cube).samples.iter().map(|&s| point_box_dist(lo, hi, self.gamma.sample(s))).fold(f64::INFINITY, f64::min)
    }

    /// W_Q⁰ for given (η, K).
    fn base_boxes(&self, cube: usize, eta: f64, k_big: f64) -> Vec<BoxKey> {
        let q = self.lattice.cube(cube);
        let len = q.length;
        let lo_side = eta.powf(0.25) * len * (1.0 - 1e-12);
        let hi_side = k_big.sqrt() * len * (1.0 + 1e-12);
        let reach = k_big.sqrt() * len * (1.0 + 1e-12);
        let center = q.center.clone();
        let outer = q.outer_radius;
        let visit = |lo: &[f64], hi: &[f64]| {
            let side = hi[0] - lo[0];
            side >= lo_side && point_box_dist(lo, hi, &center) <= reach + outer
        };
        let keep = |b: &BoxKey| {
            let side = self.grid.side(b);
            if side < lo_side || side > hi_side {
                return false;
            }
            let (lo, hi) = self.grid.bounds(b);
            self.cube_box_distance(cube, &lo, &hi) <= reach
        };
        self.grid.enumerate(self.gamma, &visit, &keep)
    }

    fn build_region(&self, cube: usize) -> Result<WhitneyRegion> {
        let q = self.lattice.cube(cube);
        let r_q = self.lattice.a0 * q.length;
        let corkscrew = corkscrew_point(self.gamma, &q.center, 0.5 * r_q, CorkscrewSearch::default())?;
        let home = self.grid.box_containing(self.gamma, &corkscrew).ok_or_else(|| {
            LabError::Resolution("corkscrew point lies outside the Whitney root box or beyond its level cap".into())
        })?;
        let mut eta = self.params.eta;
        let mut k_big = self.params.k_big;
        let mut base = self.base_boxes(cube, eta, k_big);
        let (mut et, mut kt) = (0, 0);
        while !base.contains(&home) {
            let side = self.grid.side(&home);
            if side < eta.powf(0.25) * q.length && et < self.params.eta_retries {
                eta /= 16.0;
                et += 1;
            } else if kt < self.params.k_retries {
                k_big *= 4.0;
                kt += 1;
            } else {
                return Err(LabError::Parameter(format!(
                    "corkscrew of cube {cube} is not in any W_Q⁰ box; use a smaller η or a larger K"
                )));
            }
            base = self.base_boxes(cube, eta, k_big);
        }
        let chains: Vec<Result<HarnackChain>> = base.par_iter().map(|b| self.chain_to(b, &corkscrew)).collect();
        let mut boxes: BTreeSet<BoxKey> = base.iter().copied().collect();
        let mut chain_floor = f64::INFINITY;
        let mut chain_balls = 0;
        for ch in chains {
            let ch = ch?;
            chain_floor = chain_floor.min(ch.tau_floor);
            chain_balls += ch.balls.len();
            boxes.extend(self.boxes_meeting_chain(&ch));
        }
        Ok(WhitneyRegion { cube, corkscrew, eta, k_big, base, boxes: boxes.into_iter().collect(), chain_floor, chain_balls })
    }

    fn chain_to(&self, b: &BoxKey, target: &[f64]) -> Result<HarnackChain> {
        let x = self.grid.center(b);
        let s = self.gamma.distance(&x).min(self.gamma.distance(target));
        let lambda = (dist(&x, target) / s).max(1.0);
        let mut c = self.params.chain_c;
        let mut last = None;
        for _ in 0..4 {
            match harnack_chain(self.gamma, &x, target, s, lambda, c) {
                Ok(ch) => return Ok(ch),
                Err(e) => last = Some(e),
            }
            c *= 0.5;
        }
        Err(last.expect("at least one attempt"))
    }

    fn boxes_meeting_chain(&self, ch: &HarnackChain) -> Vec<BoxKey> {
        let balls = &ch.balls;
        let ends: Vec<&crate::chain::ChainBall> = if balls.len() > 1 { vec![&balls[0], &balls[balls.len() - 1]] } else { vec![&balls[0]] };
        let inner = ch.interior();
        let seg: Vec<f64> = ch.y1.iter().zip(&ch.y2).map(|(a, b)| b - a).collect();
        let seg_len = seg.iter().map(|v| v * v).sum::<f64>().sqrt();
        let m = inner.len().saturating_sub(1).max(1) as f64;
        let r_in = inner.first().map_or(0.0, |b| b.radius);
        let hits = |lo: &[f64], hi: &[f64]| {
            if ends.iter().any(|b| point_box_dist(lo, hi, &b.center) < b.radius) {
                return true;
            }
            if inner.is_empty() {
                return false;
            }
            let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let reach = 0.5 * dist(lo, hi) + r_in;
            let (j0, j1) = if seg_len > 0.0 {
                let t = c.iter().zip(&ch.y1).zip(&seg).map(|((x, y), v)| (x - y) * v).sum::<f64>() / (seg_len * seg_len);
                let w = reach / seg_len;
                (((t - w) * m).floor().max(0.0) as usize, (((t + w) * m).ceil().max(0.0) as usize).min(inner.len() - 1))
            } else {
                (0, inner.len() - 1)
            };
            j0 <= j1 && inner[j0..=j1].iter().any(|b| point_box_dist(lo, hi, &b.center) < b.radius)
        };
        // A sub-box can only meet a ball its parent meets, so the ball test is also the prune.
        self.grid.enumerate(self.gamma, &hits, &|_| true)
    }

    /// 𝔻_{F,Q}, optionally truncated to ℓ(Q') > 2^{−N}ℓ(Q).
    pub fn discretized_sawtooth(&self, base: usize, family: &[usize], truncation: Option<u32>) -> Result<Vec<usize>> {
        for &f in family {
            if f == base || !self.lattice.contains(base, f) {
                return Err(LabError::Argument(format!("cube {f} is not a strict descendant of {base}")));
            }
        }
        for (i, &a) in family.iter().enumerate() {
            for &b in &family[i + 1..] {
                if self.lattice.contains(a, b) || self.lattice.contains(b, a) {
                    return Err(LabError::Argument("family cubes are not disjoint".into()));
                }
            }
        }
        let kq = self.lattice.cube(base).k;
        let mut out = vec![base];
        let mut stack = self.lattice.cube(base).children.clone();
        while let Some(c) = stack.pop() {
            if family.contains(&c) {
                continue;
            }
            if let Some(n) = truncation {
                if self.lattice.cube(c).k >= kq + n as i32 {
                    continue;
                }
            }
            out.push(c);
            stack.extend(self.lattice.cube(c).children.iter().copied());
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Builds Ω_{F,Q} (or Ω_{F^N,Q} when `truncation` is given).
    pub fn sawtooth(&mut self, base: usize, family: &[usize], truncation: Option<u32>) -> Result<SawtoothDomain> {
        let cubes = self.discretized_sawtooth(base, family, truncation)?;
        self.prepare(&cubes)?;
        let mut owners: BTreeMap<BoxKey, Vec<usize>> = BTreeMap::new();
        for &c in &cubes {
            for b in &self.regions[&c].boxes {
                owners.entry(*b).or_default().push(c);
            }
        }
        let boxes: Vec<BoxKey> = owners.keys().copied().collect();
        let set = boxes.iter().copied().collect();
        Ok(SawtoothDomain { base, family: family.to_vec(), truncation, cubes, boxes, owners, set })
    }

    /// Point membership in the open union of `m`-dilated boxes of `boxes`.
    fn in_union(&self, set: &HashSet<BoxKey>, list: &[BoxKey], x: &[f64], m: Dilation) -> bool {
        let f = self.grid.star(m);
        let inside = |b: &BoxKey| {
            let c = self.grid.center(b);
            let h = 0.5 * f * self.grid.side(b);
            c.iter().zip(x).all(|(ci, xi)| (xi - ci).abs() < h)
        };
        match self.grid.box_containing(self.gamma, x) {
            Some(j) => {
                if set.contains(&j) && inside(&j) {
                    return true;
                }
                self.neighbours(&j).iter().any(|b| set.contains(b) && inside(b))
            }
            None => list.iter().any(inside),
        }
    }

    /// Keys within one ring and two levels of `b` (candidates for touching Whitney boxes).
    fn neighbours(&self, b: &BoxKey) -> Vec<BoxKey> {
        let lo = b.level.saturating_sub(2);
        let hi = (b.level + 2).min(self.grid.max_level());
        let mut out = Vec::new();
        for level in lo..=hi {
            out.extend(self.grid.nearby_keys(b, level, 1).into_iter().filter(|k| k != b));
        }
        out
    }

    pub fn in_sawtooth(&self, dom: &SawtoothDomain, x: &[f64], m: Dilation) -> bool {
        self.in_union(&dom.set, &dom.boxes, x, m)
    }

    /// C_3 with Ω^{(m)}_{F,Q} ⊆ B(x_Q, C_3 ℓ(Q)).
    pub fn containment_constant(&self, dom: &SawtoothDomain, m: Dilation) -> f64 {
        let q = self.lattice.cube(dom.base);
        dom.boxes
            .iter()
            .map(|b| {
                let (lo, hi) = self.grid.dilated(b, self.grid.star(m));
                far_corner_distance(&lo, &hi, &q.center) / q.length
            })
            .fold(0.0, f64::max)
    }

    /// min over boxes of dist(I*, Γ) / (2^{−N}ℓ(Q)); meaningful for truncated domains.
    pub fn truncation_clearance(&self, dom: &SawtoothDomain) -> f64 {
        let q = self.lattice.cube(dom.base);
        let unit = 2f64.powi(-(dom.truncation.unwrap_or(0) as i32)) * q.length;
        dom.boxes
            .iter()
            .map(|b| {
                let (lo, hi) = self.grid.dilated(b, self.grid.star(1));
                self.gamma.distance_to_box(&lo, &hi) / unit
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Samples of Q not covered by the family (the F-set).
    pub fn free_samples(&self, dom: &SawtoothDomain) -> Vec<usize> {
        let covered: HashSet<usize> = dom.family.iter().flat_map(|&f| self.lattice.cube(f).samples.iter().copied()).collect();
        self.lattice.cube(dom.base).samples.iter().copied().filter(|s| !covered.contains(s)).collect()
    }

    /// Cubes Q' ⊆ Q meeting the F-set: the cubes whose regions build the local dyadic cones over F.
    fn cone_cubes(&self, dom: &SawtoothDomain) -> Vec<usize> {
        let free: HashSet<usize> = self.free_samples(dom).into_iter().collect();
        let kq = self.lattice.cube(dom.base).k;
        let mut out = vec![dom.base];
        out.extend(self.lattice.descendants(dom.base).into_iter().filter(|&c| {
            let cube = self.lattice.cube(c);
            dom.truncation.map_or(true, |n| cube.k < kq + n as i32) && cube.samples.iter().any(|s| free.contains(s))
        }));
        out
    }

    /// Cone sandwich ⋃Γ_d^Q ⊆ Ω ⊆ Ω*** ⊆ ⋃Γ̂_d^Q over the F-set, on the given points.
    pub fn sandwich_check(&mut self, dom: &SawtoothDomain, points: &[Vec<f64>]) -> Result<SandwichReport> {
        let cubes = self.cone_cubes(dom);
        self.prepare(&cubes)?;
        let mut cone_boxes: BTreeSet<BoxKey> = BTreeSet::new();
        for c in &cubes {
            cone_boxes.extend(self.regions[c].boxes.iter().copied());
        }
        let list: Vec<BoxKey> = cone_boxes.into_iter().collect();
        let set: HashSet<BoxKey> = list.iter().copied().collect();
        let this = &*self;
        let rows: Vec<[bool; 4]> = points
            .par_iter()
            .map(|x| {
                [
                    this.in_union(&set, &list, x, 1),
                    this.in_sawtooth(dom, x, 1),
                    this.in_sawtooth(dom, x, 4),
                    this.in_union(&set, &list, x, 4),
                ]
            })
            .collect();
        let mut rep = SandwichReport { points: points.len(), ..Default::default() };
        for [cone, omega, fat, wide] in rows {
            rep.inner_members += cone as usize;
            rep.outer_members += fat as usize;
            if cone && !omega {
                rep.inner_failures += 1;
            }
            if omega && !fat {
                rep.middle_failures += 1;
            }
            if fat && !wide {
                rep.outer_failures += 1;
            }
        }
        Ok(rep)
    }

    /// Γ_d(q) (m = 1) or Γ̂_d(q) (m = 4) for the boundary sample `q`, optionally local to cube `root`.
    pub fn in_dyadic_cone(&self, sample: usize, x: &[f64], m: Dilation, root: Option<usize>) -> bool {
        let kmin = root.map_or(self.lattice.k_min, |r| self.lattice.cube(r).k);
        (kmin..=self.lattice.k_max).any(|k| {
            let c = self.lattice.cube_of_sample(sample, k);
            match self.regions.get(&c) {
                Some(r) => {
                    let set: HashSet<BoxKey> = r.boxes.iter().copied().collect();
                    self.in_union(&set, &r.boxes, x, m)
                }
                None => false,
            }
        })
    }

    /// Cubes containing a sample across all generations.
    pub fn cubes_of_sample(&self, sample: usize) -> Vec<usize> {
        (self.lattice.k_min..=self.lattice.k_max).map(|k| self.lattice.cube_of_sample(sample, k)).collect()
    }

    /// Compares Γ^α(q) with Γ_d(q) and measures α₁, β on the given points.
    pub fn cone_census(&mut self, sample: usize, alpha: f64, points: &[Vec<f64>]) -> Result<ConeReport> {
        let cubes = self.cubes_of_sample(sample);
        self.prepare(&cubes)?;
        let mut narrow: BTreeSet<BoxKey> = BTreeSet::new();
        for c in &cubes {
            narrow.extend(self.regions[c].boxes.iter().copied());
        }
        let list: Vec<BoxKey> = narrow.into_iter().collect();
        let set: HashSet<BoxKey> = list.iter().copied().collect();
        let q = self.gamma.sample(sample).to_vec();
        let this = &*self;
        let rows: Vec<(bool, bool, bool, f64)> = points
            .par_iter()
            .map(|x| {
                let dd = this.gamma.distance(x);
                let ratio = if dd > 0.0 { dist(x, &q) / dd - 1.0 } else { f64::INFINITY };
                let std = ratio < alpha;
                (std, this.in_union(&set, &list, x, 1), this.in_union(&set, &list, x, 4), ratio)
            })
            .collect();
        let mut rep = ConeReport { points: points.len(), ..Default::default() };
        for (std, dy, wide, ratio) in rows {
            rep.standard_members += std as usize;
            rep.dyadic_members += dy as usize;
            if std && !dy {
                rep.standard_outside_dyadic += 1;
            }
            if dy {
                rep.alpha1 = rep.alpha1.max(ratio);
            }
            if wide {
                rep.beta = rep.beta.max(ratio);
            }
        }
        Ok(rep)
    }

    /// Builds ψ_N for Ω_{F^N,Q}.
    pub fn cutoff(&mut self, base: usize, family: &[usize], n: u32) -> Result<CutoffField> {
        let domain = self.sawtooth(base, family, Some(n))?;
        let mut boundary = Vec::new();
        for b in &domain.boxes {
            let outside = self
                .neighbours(b)
                .into_iter()
                .any(|j| !domain.set.contains(&j) && self.grid.is_whitney(self.gamma, &j) && self.grid.touching(b, &j));
            if outside {
                boundary.push(*b);
            }
        }
        let mut association = BTreeMap::new();
        let mut alternative = BTreeMap::new();
        for b in &domain.boxes {
            let owners = &domain.owners[b];
            let pick = |largest: bool| {
                *owners
                    .iter()
                    .min_by(|&&x, &&y| {
                        let (lx, ly) = (self.lattice.cube(x).length, self.lattice.cube(y).length);
                        let ord = if largest { ly.total_cmp(&lx) } else { lx.total_cmp(&ly) };
                        ord.then(x.cmp(&y))
                    })
                    .expect("every box has an owner")
            };
            association.insert(*b, pick(false));
            alternative.insert(*b, pick(true));
        }
        Ok(CutoffField { domain, boundary, association, alternative })
    }

    /// Whitney boxes J with φ_J possibly non-zero at x, sorted.
    fn bump_candidates(&self, x: &[f64]) -> Option<Vec<BoxKey>> {
        let j = self.grid.box_containing(self.gamma, x)?;
        let mut v: Vec<BoxKey> = self.neighbours(&j).into_iter().filter(|k| self.grid.is_whitney(self.gamma, k)).collect();
        v.push(j);
        v.sort_unstable();
        Some(v)
    }

    /// φ_I(x) and its gradient.
    pub fn bump(&self, b: &BoxKey, x: &[f64]) -> (f64, Vec<f64>) {
        let c = self.grid.center(b);
        let l = self.grid.side(b);
        let th = self.grid.theta;
        let inner = 0.5 * (1.0 + 2.0 * th);
        let outer = 0.5 * (1.0 + 3.0 * th);
        let parts: Vec<(f64, f64)> = c
            .iter()
            .zip(x)
            .map(|(ci, xi)| {
                let t = (xi - ci) / l;
                let (v, dv) = ramp(t.abs(), inner, outer);
                (v, dv * t.signum() / l)
            })
            .collect();
        let val: f64 = parts.iter().map(|p| p.0).product();
        let grad = (0..parts.len())
            .map(|a| parts.iter().enumerate().map(|(i, p)| if i == a { p.1 } else { p.0 }).product())
            .collect();
        (val, grad)
    }

    /// ψ_N(x), ∇ψ_N(x) and the overlap Σ_W φ_J(x).
    pub fn psi(&self, cut: &CutoffField, x: &[f64]) -> (f64, Vec<f64>, f64) {
        let n = x.len();
        let Some(cands) = self.bump_candidates(x) else {
            return (0.0, vec![0.0; n], 0.0);
        };
        let (mut num, mut den) = (0.0, 0.0);
        let mut gnum = vec![0.0; n];
        let mut gden = vec![0.0; n];
        for j in &cands {
            let (v, g) = self.bump(j, x);
            let inside = cut.domain.set.contains(j);
            den += v;
            num += if inside { v } else { 0.0 };
            for a in 0..n {
                gden[a] += g[a];
                gnum[a] += if inside { g[a] } else { 0.0 };
            }
        }
        if den == 0.0 {
            return (0.0, vec![0.0; n], 0.0);
        }
        let grad = (0..n).map(|a| (gnum[a] * den - num * gden[a]) / (den * den)).collect();
        (num / den, grad, den)
    }

    /// Checks (i)–(iii) of the cutoff on the given sample points.
    pub fn cutoff_check(&self, cut: &CutoffField, points: &[Vec<f64>]) -> CutoffReport {
        let interior: Vec<BoxKey> = cut.domain.boxes.iter().copied().filter(|b| !cut.boundary.contains(b)).collect();
        let interior_set: HashSet<BoxKey> = interior.iter().copied().collect();
        let rows: Vec<(bool, bool, f64, f64, f64, bool, f64)> = points
            .par_iter()
            .map(|x| {
                let (psi, grad, overlap) = self.psi(cut, x);
                let in_star = self.in_sawtooth(&cut.domain, x, 2);
                let in_dstar = self.in_sawtooth(&cut.domain, x, 3);
                let gd = grad.iter().map(|g| g * g).sum::<f64>().sqrt() * self.gamma.distance(x);
                let flat = self.in_union(&interior_set, &interior, x, 3);
                let fd = if flat {
                    let h = 1e-7 * self.gamma.distance(x);
                    (0..x.len())
                        .map(|a| {
                            let mut p = x.clone();
                            let mut m = x.clone();
                            p[a] += h;
                            m[a] -= h;
                            ((self.psi(cut, &p).0 - self.psi(cut, &m).0) / (2.0 * h)).abs()
                        })
                        .fold(0.0, f64::max)
                } else {
                    0.0
                };
                (in_star, in_dstar, psi, gd, overlap, flat, fd)
            })
            .collect();
        let mut rep = CutoffReport { samples: points.len(), min_psi_inner: f64::INFINITY, ..Default::default() };
        let max_overlap = rows.iter().map(|r| r.4).fold(0.0, f64::max);
        rep.c_theta = if max_overlap > 0.0 { 1.0 / max_overlap } else { 1.0 };
        for (in_star, in_dstar, psi, gd, _, flat, fd) in rows {
            if in_star {
                rep.inner_samples += 1;
                rep.min_psi_inner = rep.min_psi_inner.min(psi);
                if psi < rep.c_theta * (1.0 - 1e-12) {
                    rep.lower_violations += 1;
                }
            }
            if !in_dstar && psi > 0.0 {
                rep.upper_violations += 1;
            }
            if psi > 1.0 + 1e-15 || psi < 0.0 {
                rep.upper_violations += 1;
            }
            rep.max_grad_delta = rep.max_grad_delta.max(gd);
            if flat {
                rep.flat_samples += 1;
                if psi != 1.0 {
                    rep.flat_not_one += 1;
                }
                rep.flat_max_fd_gradient = rep.flat_max_fd_gradient.max(fd);
            }
        }
        rep
    }

    /// Σ_{I∈W_N^Σ} ω(Q_I) for harmonic measure with pole `pole`; `omega` maps a cube to its mass.
    pub fn sigma_boundary_mass<F: Fn(usize) -> f64>(
        &self,
        cut: &CutoffField,
        pole: &[f64],
        omega: F,
        alternative: bool,
    ) -> Result<f64> {
        let q = self.lattice.cube(cut.domain.base);
        let clearance = cut
            .domain
            .boxes
            .iter()
            .map(|b| {
                let (lo, hi) = self.grid.dilated(b, self.grid.star(4));
                point_box_dist(&lo, &hi, pole)
            })
            .fold(f64::INFINITY, f64::min);
        if clearance < 0.5 * q.length {
            return Err(LabError::Precondition(format!(
                "pole is {clearance:.3e} from the fattened sawtooth; need at least ℓ(Q)/2 = {:.3e}",
                0.5 * q.length
            )));
        }
        let assoc = if alternative { &cut.alternative } else { &cut.association };
        Ok(cut.boundary.iter().map(|b| omega(assoc[b])).sum())
    }
}

fn far_corner_distance(lo: &[f64], hi: &[f64], c: &[f64]) -> f64 {
    lo.iter()
        .zip(hi)
        .zip(c)
        .map(|((l, h), ci)| {
            let e = (ci - l).abs().max((h - ci).abs());
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_monotone_and_continuous() {
        let mut prev = 1.0;
        for i in 0..=100 {
            let t = 0.5 + i as f64 * 0.001;
            let (v, _) = ramp(t, 0.5625, 0.59375);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert_eq!(ramp(0.56, 0.5625, 0.59375).0, 1.0);
        assert_eq!(ramp(0.6, 0.5625, 0.59375).0, 0.0);
    }

}
