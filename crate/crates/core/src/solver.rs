//! Finite-volume discretisation of −div(A∇u) = 0 off Γ, conjugate-gradient solves,
//! discrete harmonic measure and Green functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::BoundarySet;

/// Cell classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CellKind {
    Interior,
    /// δ(centre) ≤ r_abs: part of the discrete Γ.
    Absorbing,
}

/// Outer-wall treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Walls {
    /// Zero flux: the only exit is through absorbing cells.
    Reflecting,
    /// Prescribed values on the walls.
    Dirichlet,
}

/// Coefficient field presets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorPreset {
    /// A = δ^{d−n+1}·Id.
    PureWeight,
    /// A = D_α^{d−n+1}·Id with the regularised distance.
    Regularized { alpha: f64 },
    /// A = δ^{d−n+1}·diag(1, 2, 1/2, 1).
    Anisotropic,
    /// A = Id (weight off).
    Identity,
}

const ANISO: [f64; 4] = [1.0, 2.0, 0.5, 1.0];

impl OperatorPreset {
    /// Diagonal of A at a point with clamped distance.
    pub fn diagonal(&self, gamma: &BoundarySet, x: &[f64], clamp: f64) -> Result<Vec<f64>> {
        let n = gamma.ambient_dim();
        let p = gamma.boundary_dim() as f64 + 1.0 - n as f64;
        let delta = gamma.distance(x).max(clamp);
        Ok(match self {
            OperatorPreset::PureWeight => vec![delta.powf(p); n],
            OperatorPreset::Regularized { alpha } => {
                let dd = if gamma.distance(x) >= clamp {
                    gamma.regularized_distance(x, *alpha)?
                } else {
                    // Inside the clamp the regularised distance is evaluated at the clamp scale.
                    gamma.regularized_distance(x, *alpha)? * clamp / gamma.distance(x).max(f64::MIN_POSITIVE)
                };
                vec![dd.powf(p); n]
            }
            OperatorPreset::Anisotropic => (0..n).map(|a| ANISO[a] * delta.powf(p)).collect(),
            OperatorPreset::Identity => vec![1.0; n],
        })
    }

    /// Full matrix of A.
    pub fn matrix(&self, gamma: &BoundarySet, x: &[f64], clamp: f64) -> Result<Vec<Vec<f64>>> {
        let d = self.diagonal(gamma, x, clamp)?;
        let n = d.len();
        Ok((0..n).map(|i| (0..n).map(|j| if i == j { d[i] } else { 0.0 }).collect()).collect())
    }
}

/// Ellipticity constant C_1 of a symmetric matrix against the weight w: the smallest C with
/// C^{-1}|ξ|²w ≤ Aξ·ξ and |Aξ·ζ| ≤ C|ξ||ζ|w. Errors on asymmetric input.
pub fn ellipticity_constant(a: &[Vec<f64>], w: f64) -> Result<f64> {
    let n = a.len();
    for i in 0..n {
        for j in 0..n {
            let s = a[i][j].abs().max(a[j][i].abs()).max(1e-300);
            if (a[i][j] - a[j][i]).abs() > 1e-12 * s {
                return Err(LabError::Argument("coefficient matrix is not symmetric".into()));
            }
        }
    }
    let (lmin, lmax) = symmetric_eig_bounds(a);
    if lmin <= 0.0 {
        return Err(LabError::Argument("coefficient matrix is not positive definite".into()));
    }
    Ok((w / lmin).max(lmax / w))
}

/// Extreme eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
fn symmetric_eig_bounds(a: &[Vec<f64>]) -> (f64, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[i][j] * m[i][j];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    (d.iter().cloned().fold(f64::INFINITY, f64::min), d.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Uniform cell-centred grid over an axis box.
#[derive(Clone, Debug, Serialize)]
pub struct Grid {
    pub n: usize,
    pub lo: Vec<f64>,
    pub h: f64,
    pub dims: Vec<usize>,
    pub r_abs: f64,
    pub kind: Vec<CellKind>,
    /// δ at cell centres.
    pub delta: Vec<f64>,
    /// Cell → unknown index (`usize::MAX` for absorbing cells).
    pub unknown: Vec<usize>,
    /// Unknown → cell.
    pub interior: Vec<usize>,
    /// Absorbing cells.
    pub absorbing: Vec<usize>,
    /// Cell → position in `absorbing` (`usize::MAX` otherwise).
    pub abs_index: Vec<usize>,
    /// Absorbing cell → nearest boundary sample.
    pub abs_sample: Vec<usize>,
}

impl Grid {
    /// Grid over `[lo, hi]` with spacing `h`; cells with δ ≤ `r_abs_factor`·h are absorbing.
    pub fn new(gamma: &BoundarySet, lo: &[f64], hi: &[f64], h: f64, r_abs_factor: f64) -> Result<Self> {
        let n = gamma.ambient_dim();
        if lo.len() != n || hi.len() != n {
            return Err(LabError::Config("grid box dimension mismatch".into()));
        }
        if !(h > 0.0) || r_abs_factor <= 0.0 {
            return Err(LabError::Config("grid spacing and absorbing factor must be positive".into()));
        }
        let mut dims = Vec::with_capacity(n);
        for a in 0..n {
            let m = ((hi[a] - lo[a]) / h).round();
            if m < 2.0 || ((hi[a] - lo[a]) / h - m).abs() > 1e-6 {
                return Err(LabError::Config(format!("box side {} is not a multiple of h = {h}", hi[a] - lo[a])));
            }
            dims.push(m as usize);
        }
        let total: usize = dims.iter().product();
        if total > 40_000_000 {
            return Err(LabError::Config(format!("grid of {total} cells exceeds the size limit")));
        }
        let r_abs = r_abs_factor * h;
        let mut g = Grid {
            n,
            lo: lo.to_vec(),
            h,
            dims,
            r_abs,
            kind: Vec::new(),
            delta: Vec::new(),
            unknown: Vec::new(),
            interior: Vec::new(),
            absorbing: Vec::new(),
            abs_index: Vec::new(),
            abs_sample: Vec::new(),
        };
        g.delta = (0..total).into_par_iter().map(|c| gamma.distance(&g.center(c))).collect();
        g.kind = g.delta.iter().map(|&d| if d <= r_abs { CellKind::Absorbing } else { CellKind::Interior }).collect();
        g.unknown = vec![usize::MAX; total];
        g.abs_index = vec![usize::MAX; total];
        for c in 0..total {
            match g.kind[c] {
                CellKind::Interior => {
                    g.unknown[c] = g.interior.len();
                    g.interior.push(c);
                }
                CellKind::Absorbing => {
                    g.abs_index[c] = g.absorbing.len();
                    g.absorbing.push(c);
                }
            }
        }
        if g.absorbing.is_empty() {
            return Err(LabError::Resolution("no absorbing cells: Γ does not meet the grid".into()));
        }
        g.abs_sample = g.absorbing.iter().map(|&c| gamma.nearest_sample(&g.center(c)).0).collect();
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    pub fn coords(&self, cell: usize) -> Vec<usize> {
        let mut rem = cell;
        self.dims
            .iter()
            .map(|&m| {
                let i = rem % m;
                rem /= m;
                i
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        let mut c = 0;
        let mut stride = 1;
        for (a, &i) in coords.iter().enumerate() {
            c += i * stride;
            stride *= self.dims[a];
        }
        c
    }

    pub fn center(&self, cell: usize) -> Vec<f64> {
        self.coords(cell).iter().enumerate().map(|(a, &i)| self.lo[a] + (i as f64 + 0.5) * self.h).collect()
    }

    /// Neighbour across axis `a` in direction `dir` (±1), if inside the box.
    pub fn neighbor(&self, cell: usize, a: usize, dir: i32) -> Option<usize> {
        let stride: usize = self.dims[..a].iter().product();
        let i = (cell / stride) % self.dims[a];
        if dir < 0 {
            (i > 0).then(|| cell - stride)
        } else {
            (i + 1 < self.dims[a]).then(|| cell + stride)
        }
    }

    /// Cell containing `x` (upper faces belong to the lower cell at the box edge).
    pub fn cell_at(&self, x: &[f64]) -> Option<usize> {
        let mut coords = Vec::with_capacity(self.n);
        for a in 0..self.n {
            let t = ((x[a] - self.lo[a]) / self.h).floor();
            let m = self.dims[a] as f64;
            let t = if t == m && x[a] <= self.lo[a] + m * self.h { m - 1.0 } else { t };
            if t < 0.0 || t >= m {
                return None;
            }
            coords.push(t as usize);
        }
        Some(self.index(&coords))
    }

    pub fn hi(&self) -> Vec<f64> {
        (0..self.n).map(|a| self.lo[a] + self.dims[a] as f64 * self.h).collect()
    }

    /// Cell volume h^n.
    pub fn volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }
}

/// Where an interior row couples to known values.
#[derive(Clone, Copy, Debug)]
enum Known {
    Absorbing(usize),
    Wall(usize),
}

/// Compressed sparse rows of the interior system plus couplings to known values.
#[derive(Clone, Debug)]
pub struct System {
    pub grid: Grid,
    pub preset: OperatorPreset,
    pub walls: Walls,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
    known_ptr: Vec<usize>,
    known: Vec<(Known, f64)>,
    /// Wall face centres (Dirichlet walls only).
    pub wall_points: Vec<Vec<f64>>,
    /// Per-cell diagonal of A (clamped), used by the functionals.
    pub coeff: Vec<Vec<f64>>,
}

/// Outcome of one linear solve.
#[derive(Clone, Debug, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Cell values of a solved Dirichlet problem.
#[derive(Clone, Debug, Serialize)]
pub struct SolutionField {
    pub values: Vec<f64>,
    pub stats: SolveStats,
    pub data_min: f64,
    pub data_max: f64,
}

/// ω^X over absorbing cells.
#[derive(Clone, Debug, Serialize)]
pub struct HarmonicMeasureRow {
    pub pole: Vec<f64>,
    /// Probability per absorbing cell.
    pub mass: Vec<f64>,
    /// |Σ mass − 1| before normalisation.
    pub raw_defect: f64,
    /// Most negative raw entry (clamped to zero).
    pub raw_min: f64,
    pub stats: SolveStats,
}

/// G(·, Y) over all cells (zero on absorbing cells).
#[derive(Clone, Debug, Serialize)]
pub struct GreenField {
    pub pole: Vec<f64>,
    pub values: Vec<f64>,
    pub stats: SolveStats,
}

impl System {
    /// Assembles the finite-volume system: face conductance = harmonic mean of the adjacent
    /// cell coefficients (δ clamped at h/4) times h^{n−2}.
    pub fn assemble(gamma: &BoundarySet, grid: Grid, preset: OperatorPreset, walls: Walls) -> Result<Self> {
        let n = grid.n;
        let clamp = 0.25 * grid.h;
        let scale = grid.h.powi(n as i32 - 2);
        let coeff: Vec<Vec<f64>> = (0..grid.len())
            .into_par_iter()
            .map(|c| preset.diagonal(gamma, &grid.center(c), clamp))
            .collect::<Result<_>>()?;
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = Vec::with_capacity(grid.interior.len());
        let mut known_ptr = vec![0];
        let mut known = Vec::new();
        let mut wall_points = Vec::new();
        for &c in &grid.interior {
            let mut dsum = 0.0;
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(2 * n);
            for a in 0..n {
                for dir in [-1, 1] {
                    match grid.neighbor(c, a, dir) {
                        Some(nb) => {
                            let (ka, kb) = (coeff[c][a], coeff[nb][a]);
                            let cond = 2.0 * ka * kb / (ka + kb) * scale;
                            dsum += cond;
                            match grid.kind[nb] {
                                CellKind::Interior => entries.push((grid.unknown[nb], -cond)),
                                CellKind::Absorbing => known.push((Known::Absorbing(grid.abs_index[nb]), cond)),
                            }
                        }
                        None => {
                            if walls == Walls::Dirichlet {
                                let cond = 2.0 * coeff[c][a] * scale;
                                dsum += cond;
                                let mut p = grid.center(c);
                                p[a] += 0.5 * dir as f64 * grid.h;
                                known.push((Known::Wall(wall_points.len()), cond));
                                wall_points.push(p);
                            }
                        }
                    }
                }
            }
            entries.sort_unstable_by_key(|e| e.0);
            let r = grid.unknown[c];
            let mut inserted = false;
            for (col, v) in entries {
                if !inserted && col > r {
                    cols.push(r);
                    vals.push(dsum);
                    inserted = true;
                }
                cols.push(col);
                vals.push(v);
            }
            if !inserted {
                cols.push(r);
                vals.push(dsum);
            }
            diag.push(dsum);
            row_ptr.push(cols.len());
            known_ptr.push(known.len());
        }
        Ok(System { grid, preset, walls, row_ptr, cols, vals, diag, known_ptr, known, wall_points, coeff })
    }

    pub fn unknowns(&self) -> usize {
        self.diag.len()
    }

    /// Row `r` of the interior matrix as (column, value) pairs.
    pub fn row(&self, r: usize) -> Vec<(usize, f64)> {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| (self.cols[k], self.vals[k])).collect()
    }

    /// Couplings of row `r` to absorbing cells as (absorbing index, conductance).
    pub fn absorbing_couplings(&self, r: usize) -> Vec<(usize, f64)> {
        self.known[self.known_ptr[r]..self.known_ptr[r + 1]]
            .iter()
            .filter_map(|(k, c)| match k {
                Known::Absorbing(i) => Some((*i, *c)),
                Known::Wall(_) => None,
            })
            .collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().with_min_len(4096).for_each(|(r, out)| {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *out = s;
        });
    }

    /// Right-hand side from absorbing-cell data and wall data.
    fn rhs(&self, abs_data: &[f64], wall_data: &[f64]) -> Vec<f64> {
        (0..self.unknowns())
            .map(|r| {
                self.known[self.known_ptr[r]..self.known_ptr[r + 1]]
                    .iter()
                    .map(|(k, c)| match k {
                        Known::Absorbing(i) => c * abs_data[*i],
                        Known::Wall(i) => c * wall_data[*i],
                    })
                    .sum()
            })
            .collect()
    }

    /// Jacobi-preconditioned conjugate gradients to relative residual `tol`.
    pub fn cg(&self, b: &[f64], x: &mut [f64], tol: f64) -> Result<SolveStats> {
        let m = self.unknowns();
        let bnorm = norm(b);
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
        }
        let mut ax = vec![0.0; m];
        self.matvec(x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(ri, di)| ri / di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; m];
        let mut best = norm(&r) / bnorm;
        let mut since_best = 0;
        let max_iter = 50 * m.max(100);
        for it in 0..max_iter {
            let res = norm(&r) / bnorm;
            if res <= tol {
                return Ok(SolveStats { iterations: it, relative_residual: res });
            }
            if res < 0.99 * best {
                best = res;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= 500 {
                    return Err(LabError::Solver(format!(
                        "conjugate gradients stagnated at relative residual {res:.3e} after {it} iterations \
                         (diagonal range {:.3e}..{:.3e})",
                        self.diag.iter().cloned().fold(f64::INFINITY, f64::min),
                        self.diag.iter().cloned().fold(0.0, f64::max)
                    )));
                }
            }
            self.matvec(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.par_iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
            z.par_iter_mut().zip(r.par_iter().zip(&self.diag)).for_each(|(zi, (ri, di))| *zi = ri / di);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        }
        Err(LabError::Solver(format!("conjugate gradients hit the iteration cap {max_iter}")))
    }

    /// Solves the Dirichlet problem with data `abs_data` on absorbing cells and `wall_data` on walls.
    pub fn solve(&self, abs_data: &[f64], wall_data: &[f64]) -> Result<SolutionField> {
        if abs_data.len() != self.grid.absorbing.len() || wall_data.len() != self.wall_points.len() {
            return Err(LabError::Argument("boundary data length mismatch".into()));
        }
        let all = abs_data.iter().chain(wall_data);
        let data_min = all.clone().cloned().fold(f64::INFINITY, f64::min);
        let data_max = all.clone().cloned().fold(f64::NEG_INFINITY, f64::max);
        let count = (abs_data.len() + wall_data.len()) as f64;
        let mean = all.sum::<f64>() / count;
        let b = self.rhs(abs_data, wall_data);
        let mut x = vec![mean; self.unknowns()];
        let stats = self.cg(&b, &mut x, 1e-10)?;
        let mut values = vec![0.0; self.grid.len()];
        for (r, &c) in self.grid.interior.iter().enumerate() {
            values[c] = x[r].clamp(data_min, data_max);
        }
        for (i, &c) in self.grid.absorbing.iter().enumerate() {
            values[c] = abs_data[i];
        }
        Ok(SolutionField { values, stats, data_min, data_max })
    }

    /// Dirichlet problem with data given per boundary sample and a wall function.
    pub fn solve_with<F: Fn(&[f64]) -> f64>(&self, sample_data: &[f64], wall: F) -> Result<SolutionField> {
        let abs: Vec<f64> = self.grid.abs_sample.iter().map(|&s| sample_data[s]).collect();
        let wd: Vec<f64> = self.wall_points.iter().map(|p| wall(p)).collect();
        self.solve(&abs, &wd)
    }

    fn pole_row(&self, x: &[f64]) -> Result<usize> {
        let c = self.grid.cell_at(x).ok_or_else(|| LabError::Argument("pole outside the grid".into()))?;
        match self.grid.kind[c] {
            CellKind::Interior => Ok(self.grid.unknown[c]),
            CellKind::Absorbing => Err(LabError::Argument("pole lies in an absorbing cell".into())),
        }
    }

    /// Green function with unit discrete mass at the pole cell.
    pub fn green(&self, pole: &[f64]) -> Result<GreenField> {
        let r = self.pole_row(pole)?;
        let mut b = vec![0.0; self.unknowns()];
        b[r] = 1.0;
        let mut g = vec![0.0; self.unknowns()];
        let stats = self.cg(&b, &mut g, 1e-12)?;
        let mut values = vec![0.0; self.grid.len()];
        for (i, &c) in self.grid.interior.iter().enumerate() {
            values[c] = g[i].max(0.0);
        }
        Ok(GreenField { pole: pole.to_vec(), values, stats })
    }

    /// Full harmonic-measure row at `pole` via one adjoint solve.
    pub fn harmonic_measure(&self, pole: &[f64]) -> Result<HarmonicMeasureRow> {
        if self.walls != Walls::Reflecting {
            return Err(LabError::Argument("harmonic measure rows need reflecting walls".into()));
        }
        let green = self.green(pole)?;
        Ok(self.measure_from_green(&green))
    }

    /// ω(c) = Σ_i G_i·(conductance from i into c).
    pub fn measure_from_green(&self, green: &GreenField) -> HarmonicMeasureRow {
        let mut mass = vec![0.0; self.grid.absorbing.len()];
        for (r, &c) in self.grid.interior.iter().enumerate() {
            let g = green.values[c];
            if g == 0.0 {
                continue;
            }
            for (k, cond) in &self.known[self.known_ptr[r]..self.known_ptr[r + 1]] {
                if let Known::Absorbing(i) = k {
                    mass[*i] += g * cond;
                }
            }
        }
        let raw_min = mass.iter().cloned().fold(0.0, f64::min);
        mass.iter_mut().for_each(|m| *m = m.max(0.0));
        let total: f64 = mass.iter().sum();
        let raw_defect = (total - 1.0).abs();
        mass.iter_mut().for_each(|m| *m /= total);
        HarmonicMeasureRow { pole: green.pole.clone(), mass, raw_defect, raw_min, stats: green.stats.clone() }
    }
}

/// Partition of the boundary samples into grid-cell bins with piecewise-constant ω density.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryBins {
    /// Bin of every sample.
    pub sample_bin: Vec<usize>,
    /// σ-mass per bin.
    pub sigma: Vec<f64>,
    /// Bin receiving the mass of each absorbing cell.
    pub abs_bin: Vec<usize>,
}

impl BoundaryBins {
    pub fn new(gamma: &BoundarySet, grid: &Grid) -> Result<Self> {
        let mut key = std::collections::BTreeMap::new();
        let mut sample_bin = Vec::with_capacity(gamma.len());
        let mut sigma = Vec::new();
        for s in 0..gamma.len() {
            let cell = grid.cell_at(gamma.sample(s)).unwrap_or(usize::MAX);
            let next = key.len();
            let b = *key.entry(cell).or_insert(next);
            if b == sigma.len() {
                sigma.push(0.0);
            }
            sigma[b] += gamma.weights()[s];
            sample_bin.push(b);
        }
        let abs_bin = grid.abs_sample.iter().map(|&s| sample_bin[s]).collect();
        Ok(BoundaryBins { sample_bin, sigma, abs_bin })
    }

    /// ω per bin.
    pub fn bin_mass(&self, row: &HarmonicMeasureRow) -> Vec<f64> {
        let mut m = vec![0.0; self.sigma.len()];
        for (i, &b) in self.abs_bin.iter().enumerate() {
            m[b] += row.mass[i];
        }
        m
    }

    /// ω per sample: bin mass shared in proportion to σ.
    pub fn sample_mass(&self, gamma: &BoundarySet, row: &HarmonicMeasureRow) -> Vec<f64> {
        let bm = self.bin_mass(row);
        (0..gamma.len()).map(|s| {
            let b = self.sample_bin[s];
            if self.sigma[b] > 0.0 { bm[b] * gamma.weights()[s] / self.sigma[b] } else { 0.0 }
        }).collect()
    }

    /// Density k = dω/dσ per sample.
    pub fn density(&self, row: &HarmonicMeasureRow) -> Vec<f64> {
        let bm = self.bin_mass(row);
        self.sample_bin.iter().map(|&b| if self.sigma[b] > 0.0 { bm[b] / self.sigma[b] } else { 0.0 }).collect()
    }
}

/// Inner product with a fixed reduction order, independent of the worker count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> =
        a.par_chunks(4096).zip(b.par_chunks(4096)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    partial.iter().sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(h: f64) -> (BoundarySet, Grid) {
        let g = BoundarySet::flat(3, 1, &[(-0.5, 0.5)], h / 4.0, true).unwrap();
        let grid = Grid::new(&g, &[-0.5; 3], &[0.5; 3], h, 1.0).unwrap();
        (g, grid)
    }

    #[test]
    fn identity_stencil_is_standard_laplacian() {
        let (g, grid) = line(0.25);
        let sys = System::assemble(&g, grid, OperatorPreset::Identity, Walls::Reflecting).unwrap();
        for r in 0..sys.unknowns() {
            let row = sys.row(r);
            let diag = row.iter().find(|(c, _)| *c == r).unwrap().1;
            let mut nbrs = 0;
            for (c, v) in &row {
                if *c != r {
                    assert!((*v + 0.25).abs() < 1e-15);
                }
                nbrs += 1;
            }
            let abs: usize = sys.absorbing_couplings(r).len();
            assert!((diag - 0.25 * (nbrs - 1 + abs) as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn interior_rows_conserve() {
        let (g, grid) = line(0.125);
        let sys = System::assemble(&g, grid, OperatorPreset::PureWeight, Walls::Reflecting).unwrap();
        for r in 0..sys.unknowns() {
            let s: f64 = sys.row(r).iter().map(|e| e.1).sum::<f64>()
                - sys.absorbing_couplings(r).iter().map(|e| e.1).sum::<f64>();
            assert!(s.abs() < 1e-12 * sys.diag[r]);
        }
    }

    #[test]
    fn constants_are_solutions() {
        let (g, grid) = line(0.125);
        let sys = System::assemble(&g, grid, OperatorPreset::PureWeight, Walls::Reflecting).unwrap();
        let f = vec![1.0; sys.grid.absorbing.len()];
        let u = sys.solve(&f, &[]).unwrap();
        assert!(u.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn harmonic_measure_is_probability() {
        let (g, grid) = line(0.125);
        let sys = System::assemble(&g, grid, OperatorPreset::PureWeight, Walls::Reflecting).unwrap();
        let row = sys.harmonic_measure(&[0.0625, 0.3125, 0.0625]).unwrap();
        assert!(row.mass.iter().all(|&m| m >= 0.0));
        assert!((row.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.raw_defect < 1e-8);
    }

    #[test]
    fn ellipticity_rejects_asymmetric() {
        assert!(ellipticity_constant(&[vec![1.0, 0.5], vec![0.0, 1.0]], 1.0).is_err());
        let c = ellipticity_constant(&[vec![2.0, 0.0], vec![0.0, 0.5]], 1.0).unwrap();
        assert!((c - 2.0).abs() < 1e-12);
    }
}
