//! Dyadic cube hierarchies on Γ and stopping-time selections.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::BoundarySet;
use crate::linalg::{dist, dist2, loglog_slope};

/// One cube of the hierarchy.
#[derive(Clone, Debug, Serialize)]
pub struct DyadicCube {
    pub id: usize,
    pub k: i32,
    pub length: f64,
    pub center: Vec<f64>,
    /// Largest r with Δ(center, r) ⊆ Q at sample resolution.
    pub inner_radius: f64,
    /// Largest distance from the center to a member sample.
    pub outer_radius: f64,
    pub diameter: f64,
    pub samples: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub sigma_mass: f64,
    /// Near the footprint edge; excluded from acceptance statistics.
    pub edge: bool,
}

/// Which construction produced the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Construction {
    /// Dyadic cells in parameter space.
    Parametric,
    /// Greedy nets with nearest-centre assignment.
    Net,
}

/// Measured small-boundary profile at one ρ.
#[derive(Clone, Debug, Serialize)]
pub struct SmallBoundaryPoint {
    pub rho: f64,
    /// Worst σ-fraction of a cube within ρℓ of its complement.
    pub fraction: f64,
}

/// Christ–David style cube hierarchy.
#[derive(Clone, Debug, Serialize)]
pub struct DyadicLattice {
    pub cubes: Vec<DyadicCube>,
    pub k_min: i32,
    pub k_max: i32,
    generations: Vec<Vec<usize>>,
    sample_cube: Vec<Vec<usize>>,
    pub construction: Construction,
    /// Inner-ball constant: r_Q ≥ a0·ℓ(Q).
    pub a0: f64,
    /// Diameter constant: diam Q ≤ a1·ℓ(Q).
    pub a1: f64,
    pub small_boundary: Vec<SmallBoundaryPoint>,
    pub gamma: f64,
    pub small_boundary_constant: f64,
}

/// Report of the exhaustive checks of properties (i)–(v).
#[derive(Clone, Debug, Default, Serialize)]
pub struct LatticeCheck {
    pub cubes_checked: usize,
    pub cover_failures: usize,
    pub nesting_failures: usize,
    pub ancestor_failures: usize,
    pub diameter_failures: usize,
    pub inner_ball_failures: usize,
    pub outer_ball_failures: usize,
    pub c2: f64,
}

impl LatticeCheck {
    pub fn all_pass(&self) -> bool {
        self.cover_failures + self.nesting_failures + self.ancestor_failures + self.diameter_failures
            + self.inner_ball_failures
            + self.outer_ball_failures
            == 0
    }
}

/// Maximal cubes selected below a root.
#[derive(Clone, Debug, Serialize)]
pub struct CubeFamily {
    pub root: usize,
    pub members: Vec<usize>,
}

impl DyadicLattice {
    /// Builds generations `k_min..=k_max` on Γ.
    pub fn build(gamma: &BoundarySet, k_min: i32, k_max: i32) -> Result<Self> {
        if k_min >= k_max {
            return Err(LabError::Argument("k_min must be below k_max".into()));
        }
        let fine = 2f64.powi(-k_max);
        if gamma.boundary_dim() > 0 && gamma.spacing() > fine / 16.0 {
            return Err(LabError::Resolution(format!(
                "sample spacing {:.3e} does not resolve generation {k_max} (need ≤ ℓ/16 = {:.3e})",
                gamma.spacing(),
                fine / 16.0
            )));
        }
        let mut lat = if gamma.is_parametric() {
            Self::build_parametric(gamma, k_min, k_max)?
        } else {
            Self::build_net(gamma, k_min, k_max)?
        };
        lat.measure(gamma);
        Ok(lat)
    }

    fn empty(k_min: i32, k_max: i32, construction: Construction, ns: usize) -> Self {
        let g = (k_max - k_min + 1) as usize;
        DyadicLattice {
            cubes: Vec::new(),
            k_min,
            k_max,
            generations: vec![Vec::new(); g],
            sample_cube: vec![vec![usize::MAX; ns]; g],
            construction,
            a0: 0.0,
            a1: 0.0,
            small_boundary: Vec::new(),
            gamma: f64::NAN,
            small_boundary_constant: f64::NAN,
        }
    }

    fn build_parametric(gamma: &BoundarySet, k_min: i32, k_max: i32) -> Result<Self> {
        let mut lat = Self::empty(k_min, k_max, Construction::Parametric, gamma.len());
        let mut prev: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        for k in k_min..=k_max {
            let len = 2f64.powi(-k);
            let mut groups: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
            for (i, p) in gamma.params().iter().enumerate() {
                let key: Vec<i64> = p.iter().map(|v| (v / len).floor() as i64).collect();
                groups.entry(key).or_default().push(i);
            }
            let mut current = BTreeMap::new();
            for (key, samples) in groups {
                let id = lat.cubes.len();
                let pc: Vec<f64> = key.iter().map(|&j| (j as f64 + 0.5) * len).collect();
                let center = gamma.param_point(&pc).expect("parametric shape");
                let edge = gamma.param_edge_distance(&pc) < len;
                let parent = if k > k_min {
                    let pk: Vec<i64> = key.iter().map(|&j| j.div_euclid(2)).collect();
                    Some(*prev.get(&pk).expect("parent cell exists"))
                } else {
                    None
                };
                if let Some(p) = parent {
                    lat.cubes[p].children.push(id);
                }
                let g = (k - k_min) as usize;
                for &s in &samples {
                    lat.sample_cube[g][s] = id;
                }
                let sigma_mass = samples.iter().map(|&s| gamma.weights()[s]).sum();
                lat.generations[g].push(id);
                lat.cubes.push(DyadicCube {
                    id,
                    k,
                    length: len,
                    center,
                    inner_radius: 0.0,
                    outer_radius: 0.0,
                    diameter: 0.0,
                    samples,
                    parent,
                    children: Vec::new(),
                    sigma_mass,
                    edge,
                });
                current.insert(key, id);
            }
            prev = current;
        }
        Ok(lat)
    }

    fn build_net(gamma: &BoundarySet, k_min: i32, k_max: i32) -> Result<Self> {
        let mut lat = Self::empty(k_min, k_max, Construction::Net, gamma.len());
        let all: Vec<usize> = (0..gamma.len()).collect();
        let mut parents: Vec<(Option<usize>, Vec<usize>)> = vec![(None, all)];
        for k in k_min..=k_max {
            let len = 2f64.powi(-k);
            let g = (k - k_min) as usize;
            let mut next = Vec::new();
            for (parent, members) in parents {
                let centers = greedy_net(gamma, &members, len);
                let mut groups: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
                let assign: Vec<usize> = members
                    .par_iter()
                    .map(|&s| {
                        let mut best = (f64::INFINITY, 0);
                        for (ci, &c) in centers.iter().enumerate() {
                            let d2 = dist2(gamma.sample(s), gamma.sample(c));
                            if d2 < best.0 {
                                best = (d2, ci);
                            }
                        }
                        best.1
                    })
                    .collect();
                for (&s, &ci) in members.iter().zip(&assign) {
                    groups[ci].push(s);
                }
                for (ci, samples) in groups.into_iter().enumerate() {
                    let id = lat.cubes.len();
                    if let Some(p) = parent {
                        lat.cubes[p].children.push(id);
                    }
                    for &s in &samples {
                        lat.sample_cube[g][s] = id;
                    }
                    let sigma_mass = samples.iter().map(|&s| gamma.weights()[s]).sum();
                    lat.generations[g].push(id);
                    lat.cubes.push(DyadicCube {
                        id,
                        k,
                        length: len,
                        center: gamma.sample(centers[ci]).to_vec(),
                        inner_radius: 0.0,
                        outer_radius: 0.0,
                        diameter: 0.0,
                        samples: samples.clone(),
                        parent,
                        children: Vec::new(),
                        sigma_mass,
                        edge: false,
                    });
                    next.push((Some(id), samples));
                }
            }
            parents = next;
        }
        Ok(lat)
    }

    fn measure(&mut self, gamma: &BoundarySet) {
        let sample_cube = &self.sample_cube;
        let k_min = self.k_min;
        let measured: Vec<(f64, f64, f64)> = self
            .cubes
            .par_iter()
            .map(|c| {
                let g = (c.k - k_min) as usize;
                let outer = c.samples.iter().map(|&s| dist(gamma.sample(s), &c.center)).fold(0.0, f64::max);
                let inner = first_outsider_distance(gamma, &c.center, |s| sample_cube[g][s] == c.id, c.samples.len())
                    .unwrap_or(0.5 * c.length);
                (inner, outer, diameter(gamma, &c.samples))
            })
            .collect();
        for (c, (i, o, dm)) in self.cubes.iter_mut().zip(measured) {
            c.inner_radius = i;
            c.outer_radius = o;
            c.diameter = dm;
        }
        let stats = |f: &dyn Fn(&DyadicCube) -> f64, min: bool| {
            let it = self.cubes.iter().filter(|c| !c.edge).map(f);
            if min {
                it.fold(f64::INFINITY, f64::min)
            } else {
                it.fold(0.0, f64::max)
            }
        };
        let (a0, a1) = match self.construction {
            Construction::Parametric => {
                let nominal_a1 = (gamma.boundary_dim() as f64).sqrt() * gamma.parametric_lipschitz();
                if gamma.is_polyline() {
                    (stats(&|c| c.inner_radius / c.length, true).min(0.5), nominal_a1)
                } else {
                    (0.5, nominal_a1)
                }
            }
            Construction::Net => {
                let a0 = stats(&|c| c.inner_radius / c.length, true);
                (a0, stats(&|c| c.diameter / c.length, false).max(a0))
            }
        };
        self.a0 = a0;
        self.a1 = a1;
        self.fit_small_boundary(gamma);
    }

    fn fit_small_boundary(&mut self, gamma: &BoundarySet) {
        let rhos = [self.a0 / 2.0, self.a0 / 4.0, self.a0 / 8.0];
        let rmax = rhos[0];
        let sample_cube = &self.sample_cube;
        let k_min = self.k_min;
        let per_cube: Vec<[f64; 3]> = self
            .cubes
            .par_iter()
            .filter(|c| !c.edge && c.sigma_mass > 0.0)
            .map(|c| {
                let g = (c.k - k_min) as usize;
                let mut mass = [0.0; 3];
                for &s in &c.samples {
                    let q = gamma.sample(s);
                    let near = gamma.samples_in_ball(q, rmax * c.length * (1.0 + 1e-12));
                    let dmin = near
                        .iter()
                        .filter(|&&t| sample_cube[g][t] != c.id)
                        .map(|&t| dist(q, gamma.sample(t)))
                        .fold(f64::INFINITY, f64::min);
                    for (j, rho) in rhos.iter().enumerate() {
                        if dmin <= rho * c.length {
                            mass[j] += gamma.weights()[s];
                        }
                    }
                }
                [mass[0] / c.sigma_mass, mass[1] / c.sigma_mass, mass[2] / c.sigma_mass]
            })
            .collect();
        let mut worst = [0.0f64; 3];
        for f in &per_cube {
            for j in 0..3 {
                worst[j] = worst[j].max(f[j]);
            }
        }
        self.small_boundary = rhos
            .iter()
            .zip(worst)
            .map(|(&rho, fraction)| SmallBoundaryPoint { rho, fraction })
            .collect();
        self.gamma = if worst.iter().all(|&f| f == 0.0) { f64::INFINITY } else { loglog_slope(&rhos, &worst) };
        self.small_boundary_constant = rhos
            .iter()
            .zip(worst)
            .map(|(r, f)| if f == 0.0 { 0.0 } else { f / r.powf(self.gamma) })
            .fold(0.0, f64::max);
    }

    pub fn generation(&self, k: i32) -> &[usize] {
        &self.generations[(k - self.k_min) as usize]
    }

    pub fn cube(&self, id: usize) -> &DyadicCube {
        &self.cubes[id]
    }

    /// Generation-k cube holding a given sample.
    pub fn cube_of_sample(&self, sample: usize, k: i32) -> usize {
        self.sample_cube[(k - self.k_min) as usize][sample]
    }

    /// The unique generation-k cube containing q (at sample resolution).
    pub fn containing_cube(&self, gamma: &BoundarySet, q: &[f64], k: i32) -> Result<&DyadicCube> {
        if k < self.k_min || k > self.k_max {
            return Err(LabError::Domain(format!("generation {k} outside {}..={}", self.k_min, self.k_max)));
        }
        let (s, dd) = gamma.nearest_sample(q);
        let tol = if gamma.boundary_dim() == 0 { 1e-9 } else { gamma.spacing() * gamma.parametric_lipschitz() };
        if dd > tol {
            return Err(LabError::Domain("point lies outside the lattice footprint".into()));
        }
        Ok(&self.cubes[self.cube_of_sample(s, k)])
    }

    /// All descendants of `root` (excluding root), coarse to fine.
    pub fn descendants(&self, root: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut frontier = self.cubes[root].children.clone();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for c in frontier {
                out.push(c);
                next.extend(self.cubes[c].children.iter().copied());
            }
            frontier = next;
        }
        out
    }

    /// True when `a` contains `b` (a is b or an ancestor of b).
    pub fn contains(&self, a: usize, b: usize) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            if self.cubes[c].k <= self.cubes[a].k {
                return false;
            }
            cur = self.cubes[c].parent;
        }
        false
    }

    /// Maximal strict descendants of `root` on which `predicate` holds at every sample.
    pub fn stopping_time(&self, root: usize, predicate: &[bool]) -> CubeFamily {
        let mut members = Vec::new();
        let mut stack: Vec<usize> = self.cubes[root].children.iter().rev().copied().collect();
        while let Some(c) = stack.pop() {
            let cube = &self.cubes[c];
            if cube.samples.iter().all(|&s| predicate[s]) {
                members.push(c);
            } else {
                stack.extend(cube.children.iter().rev().copied());
            }
        }
        CubeFamily { root, members }
    }

    /// Exhaustive check of properties (i)–(v).
    pub fn check(&self, gamma: &BoundarySet) -> LatticeCheck {
        let mut rep = LatticeCheck { c2: self.a1 / self.a0, ..Default::default() };
        let ns = gamma.len();
        for k in self.k_min..=self.k_max {
            let mut count = vec![0usize; ns];
            for &c in self.generation(k) {
                for &s in &self.cubes[c].samples {
                    count[s] += 1;
                }
            }
            rep.cover_failures += count.iter().filter(|&&c| c != 1).count();
        }
        for c in &self.cubes {
            if !c.children.is_empty() || c.k < self.k_max {
                let mut union: Vec<usize> = c.children.iter().flat_map(|&ch| self.cubes[ch].samples.iter().copied()).collect();
                union.sort_unstable();
                let mut own = c.samples.clone();
                own.sort_unstable();
                if union != own {
                    rep.nesting_failures += 1;
                }
            }
            if let Some(p) = c.parent {
                if self.cubes[p].k != c.k - 1 || !self.cubes[p].children.contains(&c.id) {
                    rep.ancestor_failures += 1;
                }
            } else if c.k != self.k_min {
                rep.ancestor_failures += 1;
            }
            if c.edge {
                continue;
            }
            rep.cubes_checked += 1;
            let tol = 1e-12 * c.length;
            if c.diameter > self.a1 * c.length + tol {
                rep.diameter_failures += 1;
            }
            if c.inner_radius + tol < self.a0 * c.length {
                rep.inner_ball_failures += 1;
            }
            if c.outer_radius > rep.c2 * self.a0 * c.length + tol {
                rep.outer_ball_failures += 1;
            }
        }
        rep
    }
}

/// Distance from `center` to the nearest sample failing `member`; `None` when every sample is a member.
fn first_outsider_distance<F: Fn(usize) -> bool>(gamma: &BoundarySet, center: &[f64], member: F, hint: usize) -> Option<f64> {
    let total = gamma.len();
    let mut r = 0.0f64;
    let mut count = hint.max(8);
    loop {
        let k = count.min(total);
        let near = nearest_k(gamma, center, k);
        if let Some(&(d, _)) = near.iter().find(|(_, s)| !member(*s)) {
            return Some(d);
        }
        if k == total {
            return None;
        }
        r = r.max(near.last().map(|x| x.0).unwrap_or(0.0));
        count *= 2;
    }
}

fn nearest_k(gamma: &BoundarySet, center: &[f64], k: usize) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> = gamma.samples().iter().enumerate().map(|(i, p)| (dist(p, center), i)).collect();
    if k < v.len() {
        v.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v.truncate(k);
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v
}

fn diameter(gamma: &BoundarySet, samples: &[usize]) -> f64 {
    if samples.len() > 6000 {
        let mut best = 0.0f64;
        for &a in samples.iter().step_by(samples.len() / 3000 + 1) {
            for &b in samples {
                best = best.max(dist2(gamma.sample(a), gamma.sample(b)));
            }
        }
        return best.sqrt();
    }
    let mut best = 0.0f64;
    for (i, &a) in samples.iter().enumerate() {
        for &b in &samples[i + 1..] {
            best = best.max(dist2(gamma.sample(a), gamma.sample(b)));
        }
    }
    best.sqrt()
}

/// Greedy (farthest point) net of `members` with separation `sep`.
fn greedy_net(gamma: &BoundarySet, members: &[usize], sep: f64) -> Vec<usize> {
    let mut centers = vec![members[0]];
    let mut dmin: Vec<f64> = members.iter().map(|&s| dist(gamma.sample(s), gamma.sample(members[0]))).collect();
    loop {
        let (idx, far) = dmin
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        if far < sep {
            return centers;
        }
        let c = members[idx];
        centers.push(c);
        for (j, &s) in members.iter().enumerate() {
            dmin[j] = dmin[j].min(dist(gamma.sample(s), gamma.sample(c)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_segment_generation_three() {
        let g = BoundarySet::flat(3, 1, &[(0.0, 1.0)], 1.0 / 256.0, true).unwrap();
        let lat = DyadicLattice::build(&g, 0, 3).unwrap();
        let gen = lat.generation(3);
        assert_eq!(gen.len(), 8);
        for (j, &c) in gen.iter().enumerate() {
            let cube = lat.cube(c);
            assert!((cube.center[0] - (2.0 * j as f64 + 1.0) / 16.0).abs() < 1e-15);
            assert_eq!(cube.length, 0.125);
        }
    }

    #[test]
    fn stopping_time_extremes() {
        let g = BoundarySet::flat(3, 1, &[(0.0, 1.0)], 1.0 / 256.0, true).unwrap();
        let lat = DyadicLattice::build(&g, 0, 3).unwrap();
        let root = lat.generation(0)[0];
        let all = lat.stopping_time(root, &vec![true; g.len()]);
        assert_eq!(all.members, lat.cube(root).children);
        let none = lat.stopping_time(root, &vec![false; g.len()]);
        assert!(none.members.is_empty());
    }

    #[test]
    fn coarse_sampling_rejected() {
        let g = BoundarySet::flat(3, 1, &[(0.0, 1.0)], 1.0 / 16.0, true).unwrap();
        assert!(matches!(DyadicLattice::build(&g, 0, 3), Err(LabError::Resolution(_))));
    }

    #[test]
    fn point_cloud_net_nests() {
        let pts: Vec<Vec<f64>> = (0..800).map(|i| vec![i as f64 / 400.0, (i as f64 * 0.37).sin() * 1e-3, 0.0]).collect();
        let g = BoundarySet::point_cloud(3, 1, pts, None).unwrap();
        let lat = DyadicLattice::build(&g, 0, 3).unwrap();
        let chk = lat.check(&g);
        assert_eq!(chk.cover_failures, 0);
        assert_eq!(chk.nesting_failures, 0);
        assert_eq!(chk.ancestor_failures, 0);
    }
}
