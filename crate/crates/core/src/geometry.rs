//! Low-dimensional boundary sets: sampling, surface measure, distance and weight fields.

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{dist, dist2, golden_min, point_box_dist};

/// Largest ambient dimension the lab supports.
pub const MAX_DIM: usize = 4;

/// Shape of the boundary set as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSpec {
    /// `R^d × {0}`; when `bounded` the set is exactly the footprint box.
    Flat {
        #[serde(default)]
        bounded: bool,
    },
    /// `t ↦ (t, (L/f)·sin(f t), 0, …)`, a curve with Lipschitz constant `L`.
    LipschitzGraph {
        #[serde(default = "default_lipschitz")]
        lipschitz: f64,
        #[serde(default = "default_frequency")]
        frequency: f64,
    },
    Polyline {
        vertices: Vec<Vec<f64>>,
    },
    PointCloud {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        total_measure: Option<f64>,
    },
}

fn default_lipschitz() -> f64 {
    0.1
}

fn default_frequency() -> f64 {
    1.0
}

#[derive(Clone, Debug)]
enum Shape {
    Flat { extent: Option<Vec<(f64, f64)>> },
    Graph { amplitude: f64, frequency: f64 },
    Polyline { vertices: Vec<Vec<f64>>, cumulative: Vec<f64> },
    Cloud,
}

/// Sampled boundary set Γ with its surface measure.
pub struct BoundarySet {
    n: usize,
    d: usize,
    shape: Shape,
    samples: Vec<Vec<f64>>,
    params: Vec<Vec<f64>>,
    weights: Vec<f64>,
    spacing: f64,
    footprint: Vec<(f64, f64)>,
    index: KdTree<f64, usize, Vec<f64>>,
    ahlfors_constant: f64,
}

impl std::fmt::Debug for BoundarySet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundarySet")
            .field("n", &self.n)
            .field("d", &self.d)
            .field("samples", &self.samples.len())
            .field("spacing", &self.spacing)
            .finish()
    }
}

fn check_dims(n: usize, d: usize) -> Result<()> {
    if n < 2 || n > MAX_DIM {
        return Err(LabError::Config(format!("ambient dimension {n} outside 2..={MAX_DIM}")));
    }
    if d + 1 >= n {
        return Err(LabError::Config("codimension ≥ 2 required".into()));
    }
    Ok(())
}

impl BoundarySet {
    /// Builds Γ from a spec. `footprint` lists the parameter ranges that get sampled
    /// (one pair per boundary dimension; ignored for point clouds and polylines).
    pub fn build(n: usize, d: usize, spec: &GammaSpec, footprint: &[(f64, f64)], spacing: f64) -> Result<Self> {
        check_dims(n, d)?;
        match spec {
            GammaSpec::Flat { bounded } => Self::flat(n, d, footprint, spacing, *bounded),
            GammaSpec::LipschitzGraph { lipschitz, frequency } => {
                if d != 1 {
                    return Err(LabError::Config("lipschitz_graph requires boundary_dim = 1".into()));
                }
                let fp = footprint.first().copied().ok_or_else(|| LabError::Config("graph footprint missing".into()))?;
                Self::sine_graph(n, *lipschitz, *frequency, fp, spacing)
            }
            GammaSpec::Polyline { vertices } => Self::polyline(n, vertices.clone(), spacing),
            GammaSpec::PointCloud { points, total_measure } => Self::point_cloud(n, d, points.clone(), *total_measure),
        }
    }

    /// Flat `R^d × {0}` (or the footprint box itself when `bounded`), sampled at cell midpoints.
    pub fn flat(n: usize, d: usize, footprint: &[(f64, f64)], spacing: f64, bounded: bool) -> Result<Self> {
        check_dims(n, d)?;
        if d == 0 {
            let origin = vec![0.0; n];
            return Self::assemble(n, d, Shape::Flat { extent: None }, vec![origin], vec![vec![]], vec![1.0], 1.0, vec![]);
        }
        if footprint.len() != d {
            return Err(LabError::Config(format!("flat footprint needs {d} ranges")));
        }
        check_spacing(spacing)?;
        let counts: Vec<usize> = footprint
            .iter()
            .map(|(lo, hi)| ((hi - lo) / spacing).round().max(1.0) as usize)
            .collect();
        let total: usize = counts.iter().product();
        let mut samples = Vec::with_capacity(total);
        let mut params = Vec::with_capacity(total);
        let w = spacing.powi(d as i32);
        for lin in 0..total {
            let mut rem = lin;
            let mut p = vec![0.0; d];
            for a in 0..d {
                let i = rem % counts[a];
                rem /= counts[a];
                p[a] = footprint[a].0 + (i as f64 + 0.5) * spacing;
            }
            let mut x = vec![0.0; n];
            x[..d].copy_from_slice(&p);
            samples.push(x);
            params.push(p);
        }
        let weights = vec![w; total];
        let extent = if bounded { Some(footprint.to_vec()) } else { None };
        Self::assemble(n, d, Shape::Flat { extent }, samples, params, weights, spacing, footprint.to_vec())
    }

    /// Sine graph `t ↦ (t, a sin(f t), 0, …)` with Lipschitz constant `lipschitz = a f`.
    pub fn sine_graph(n: usize, lipschitz: f64, frequency: f64, footprint: (f64, f64), spacing: f64) -> Result<Self> {
        check_dims(n, 1)?;
        check_spacing(spacing)?;
        if frequency <= 0.0 || lipschitz < 0.0 {
            return Err(LabError::Config("graph needs frequency > 0 and lipschitz ≥ 0".into()));
        }
        let amplitude = lipschitz / frequency;
        let m = ((footprint.1 - footprint.0) / spacing).round().max(1.0) as usize;
        let mut samples = Vec::with_capacity(m);
        let mut params = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for i in 0..m {
            let t = footprint.0 + (i as f64 + 0.5) * spacing;
            let mut x = vec![0.0; n];
            x[0] = t;
            x[1] = amplitude * (frequency * t).sin();
            let slope = lipschitz * (frequency * t).cos();
            samples.push(x);
            params.push(vec![t]);
            weights.push(spacing * (1.0 + slope * slope).sqrt());
        }
        Self::assemble(n, 1, Shape::Graph { amplitude, frequency }, samples, params, weights, spacing, vec![footprint])
    }

    /// Polyline through `vertices`, sampled uniformly in arc length.
    pub fn polyline(n: usize, vertices: Vec<Vec<f64>>, spacing: f64) -> Result<Self> {
        check_dims(n, 1)?;
        check_spacing(spacing)?;
        if vertices.len() < 2 || vertices.iter().any(|v| v.len() != n) {
            return Err(LabError::Config("polyline needs ≥ 2 vertices of ambient dimension".into()));
        }
        let mut cumulative = vec![0.0];
        for w in vertices.windows(2) {
            let l = dist(&w[0], &w[1]);
            if l == 0.0 {
                return Err(LabError::Config("polyline has repeated vertices".into()));
            }
            cumulative.push(cumulative.last().unwrap() + l);
        }
        let length = *cumulative.last().unwrap();
        let m = (length / spacing).round().max(1.0) as usize;
        let step = length / m as f64;
        let shape = Shape::Polyline { vertices, cumulative };
        let mut samples = Vec::with_capacity(m);
        let mut params = Vec::with_capacity(m);
        for i in 0..m {
            let s = (i as f64 + 0.5) * step;
            samples.push(polyline_point(&shape, s));
            params.push(vec![s]);
        }
        let weights = vec![step; m];
        Self::assemble(n, 1, shape, samples, params, weights, step, vec![(0.0, length)])
    }

    /// Point cloud with nearest-neighbour (Voronoi-style) shares of the total measure.
    pub fn point_cloud(n: usize, d: usize, points: Vec<Vec<f64>>, total_measure: Option<f64>) -> Result<Self> {
        check_dims(n, d)?;
        if points.is_empty() || points.iter().any(|p| p.len() != n) {
            return Err(LabError::Config("point cloud needs points of ambient dimension".into()));
        }
        let mut tree: KdTree<f64, usize, Vec<f64>> = KdTree::with_capacity(n, points.len());
        for (i, p) in points.iter().enumerate() {
            tree.add(p.clone(), i).map_err(|e| LabError::Config(format!("{e:?}")))?;
        }
        let mut nn = Vec::with_capacity(points.len());
        for p in &points {
            let r = tree.nearest(p, 2, &squared_euclidean).map_err(|e| LabError::Config(format!("{e:?}")))?;
            nn.push(r.get(1).map(|x| x.0.sqrt()).unwrap_or(1.0));
        }
        let raw: Vec<f64> = nn.iter().map(|r| r.powi(d as i32)).collect();
        let raw_total: f64 = raw.iter().sum();
        let total = total_measure.unwrap_or(raw_total);
        let weights: Vec<f64> = raw.iter().map(|w| w * total / raw_total).collect();
        let spacing = nn.iter().cloned().fold(0.0, f64::max);
        let params = vec![vec![]; points.len()];
        Self::assemble(n, d, Shape::Cloud, points, params, weights, spacing, vec![])
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        n: usize,
        d: usize,
        shape: Shape,
        samples: Vec<Vec<f64>>,
        params: Vec<Vec<f64>>,
        weights: Vec<f64>,
        spacing: f64,
        footprint: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let mut index = KdTree::with_capacity(n, samples.len().max(1));
        for (i, p) in samples.iter().enumerate() {
            index.add(p.clone(), i).map_err(|e| LabError::Config(format!("{e:?}")))?;
        }
        let mut set = BoundarySet { n, d, shape, samples, params, weights, spacing, footprint, index, ahlfors_constant: 1.0 };
        set.ahlfors_constant = set.estimate_ahlfors_constant();
        Ok(set)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn boundary_dim(&self) -> usize {
        self.d
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    /// Parameter coordinates of the samples (empty vectors for point clouds).
    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Parameter step between neighbouring samples.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn footprint(&self) -> &[(f64, f64)] {
        &self.footprint
    }

    pub fn ahlfors_constant(&self) -> f64 {
        self.ahlfors_constant
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// True when samples carry dyadic-compatible parameter coordinates.
    pub fn is_parametric(&self) -> bool {
        !matches!(self.shape, Shape::Cloud) && self.d > 0
    }

    pub fn is_polyline(&self) -> bool {
        matches!(self.shape, Shape::Polyline { .. })
    }

    /// True when Γ is a flat set with exact closed-form distances.
    pub fn is_flat(&self) -> bool {
        matches!(self.shape, Shape::Flat { .. })
    }

    /// Lipschitz factor bounding |γ(s) − γ(t)| / |s − t| for parametric shapes.
    pub fn parametric_lipschitz(&self) -> f64 {
        match &self.shape {
            Shape::Graph { amplitude, frequency } => (1.0 + (amplitude * frequency).powi(2)).sqrt(),
            _ => 1.0,
        }
    }

    /// Point of Γ at a parameter value.
    pub fn param_point(&self, p: &[f64]) -> Option<Vec<f64>> {
        match &self.shape {
            Shape::Flat { .. } => {
                let mut x = vec![0.0; self.n];
                x[..self.d].copy_from_slice(&p[..self.d]);
                Some(x)
            }
            Shape::Graph { amplitude, frequency } => {
                let mut x = vec![0.0; self.n];
                x[0] = p[0];
                x[1] = amplitude * (frequency * p[0]).sin();
                Some(x)
            }
            Shape::Polyline { .. } => Some(polyline_point(&self.shape, p[0])),
            Shape::Cloud => None,
        }
    }

    /// δ(X) = dist(X, Γ).
    pub fn distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Flat { extent } => flat_distance(self.d, extent.as_deref(), x),
            Shape::Graph { amplitude, frequency } => graph_nearest(*amplitude, *frequency, x).1,
            Shape::Polyline { vertices, .. } => {
                let mut best = f64::INFINITY;
                for w in vertices.windows(2) {
                    let (_, dd) = segment_nearest(&w[0], &w[1], x);
                    best = best.min(dd);
                }
                best
            }
            Shape::Cloud => self.nearest_sample(x).1,
        }
    }

    /// Closest point of Γ to `x`.
    pub fn nearest_point(&self, x: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Flat { extent } => {
                let mut y = vec![0.0; self.n];
                for i in 0..self.d {
                    y[i] = match extent {
                        Some(e) => x[i].clamp(e[i].0, e[i].1),
                        None => x[i],
                    };
                }
                y
            }
            Shape::Graph { amplitude, frequency } => {
                let t = graph_nearest(*amplitude, *frequency, x).0;
                self.param_point(&[t]).unwrap()
            }
            Shape::Polyline { vertices, .. } => {
                let mut best = (f64::INFINITY, vec![]);
                for w in vertices.windows(2) {
                    let (y, dd) = segment_nearest(&w[0], &w[1], x);
                    if dd < best.0 {
                        best = (dd, y);
                    }
                }
                best.1
            }
            Shape::Cloud => self.samples[self.nearest_sample(x).0].clone(),
        }
    }

    /// Index of and distance to the nearest boundary sample.
    pub fn nearest_sample(&self, x: &[f64]) -> (usize, f64) {
        if self.samples.len() <= 32 {
            let mut best = (0, f64::INFINITY);
            for (i, p) in self.samples.iter().enumerate() {
                let d2 = dist2(p, x);
                if d2 < best.1 {
                    best = (i, d2);
                }
            }
            return (best.0, best.1.sqrt());
        }
        let r = self.index.nearest(x, 1, &squared_euclidean).expect("finite query point");
        (*r[0].1, r[0].0.sqrt())
    }

    /// Sample indices inside the open ball B(q, r), sorted.
    pub fn samples_in_ball(&self, q: &[f64], r: f64) -> Vec<usize> {
        let r2 = r * r;
        let mut v: Vec<usize> = self
            .index
            .within(q, r2, &squared_euclidean)
            .expect("finite query point")
            .into_iter()
            .filter(|(d2, _)| *d2 < r2)
            .map(|(_, i)| *i)
            .collect();
        v.sort_unstable();
        v
    }

    /// σ(Δ(q, r)) from the sample weights.
    pub fn ball_mass(&self, q: &[f64], r: f64) -> f64 {
        self.samples_in_ball(q, r).iter().map(|&i| self.weights[i]).sum()
    }

    /// Distance from the closed axis box `[lo, hi]` to Γ.
    pub fn distance_to_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        match &self.shape {
            Shape::Flat { extent } => {
                let mut s = 0.0;
                for i in 0..self.n {
                    let e = if i < self.d {
                        match extent {
                            Some(ext) => (ext[i].0 - hi[i]).max(lo[i] - ext[i].1).max(0.0),
                            None => 0.0,
                        }
                    } else {
                        lo[i].max(-hi[i]).max(0.0)
                    };
                    s += e * e;
                }
                s.sqrt()
            }
            Shape::Graph { amplitude, frequency } => graph_box_distance(*amplitude, *frequency, lo, hi),
            Shape::Polyline { vertices, .. } => {
                let mut best = f64::INFINITY;
                for w in vertices.windows(2) {
                    let f = |s: f64| {
                        let p: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| a + s * (b - a)).collect();
                        point_box_dist(lo, hi, &p)
                    };
                    best = best.min(golden_min(f, 0.0, 1.0, 90).1);
                }
                best
            }
            Shape::Cloud => {
                let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                let half = 0.5 * dist(lo, hi);
                let rc = self.nearest_sample(&c).1;
                let reach = rc + half;
                self.index
                    .within(&c, reach * reach * (1.0 + 1e-12), &squared_euclidean)
                    .expect("finite query")
                    .into_iter()
                    .map(|(_, &i)| point_box_dist(lo, hi, &self.samples[i]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// w(X) = δ(X)^{d−n+1}; singular on Γ.
    pub fn weight(&self, x: &[f64]) -> Result<f64> {
        let dd = self.distance(x);
        if dd <= 0.0 {
            return Err(LabError::Singular);
        }
        Ok(self.weight_at_distance(dd))
    }

    /// The weight as a function of δ.
    pub fn weight_at_distance(&self, delta: f64) -> f64 {
        delta.powi(self.d as i32 + 1 - self.n as i32)
    }

    /// Weight with δ clamped below by `floor`.
    pub fn weight_clamped(&self, x: &[f64], floor: f64) -> f64 {
        self.weight_at_distance(self.distance(x).max(floor))
    }

    /// Regularised distance `(∫_Γ |X−y|^{−d−α} dσ)^{−1/α}`; closed form for unbounded flat Γ.
    pub fn regularized_distance(&self, x: &[f64], alpha: f64) -> Result<f64> {
        if alpha <= 0.0 {
            return Err(LabError::Argument("alpha must be positive".into()));
        }
        if let Shape::Flat { extent: None } = self.shape {
            let dd = self.distance(x);
            if dd <= 0.0 {
                return Err(LabError::Singular);
            }
            let d = self.d as f64;
            let c = std::f64::consts::PI.powf(d / 2.0) * statrs::function::gamma::gamma(alpha / 2.0)
                / statrs::function::gamma::gamma((d + alpha) / 2.0);
            return Ok(dd * c.powf(-1.0 / alpha));
        }
        self.regularized_distance_quadrature(x, alpha)
    }

    /// Regularised distance by quadrature over the sample weights (plus a far-field tail for graphs).
    pub fn regularized_distance_quadrature(&self, x: &[f64], alpha: f64) -> Result<f64> {
        let dd = self.distance(x);
        if dd <= 0.0 {
            return Err(LabError::Singular);
        }
        if self.d > 0 && dd < 2.0 * self.spacing {
            return Err(LabError::Resolution(format!(
                "point at distance {dd:.3e} is within two sample spacings ({:.3e}) of the boundary",
                self.spacing
            )));
        }
        let e = -(self.d as f64) - alpha;
        let mut s: f64 = self
            .samples
            .iter()
            .zip(&self.weights)
            .map(|(y, w)| w * dist2(x, y).powf(0.5 * e))
            .sum();
        if let Shape::Graph { amplitude, frequency } = self.shape {
            s += graph_tail(amplitude, frequency, self.footprint[0], x, e);
        }
        Ok(s.powf(-1.0 / alpha))
    }

    fn estimate_ahlfors_constant(&self) -> f64 {
        if self.d == 0 || self.samples.len() < 2 {
            return 1.0;
        }
        let size = if self.footprint.is_empty() {
            let (lo, hi) = self.footprint_box();
            lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max)
        } else {
            self.footprint.iter().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min)
        };
        let rmax = 0.25 * size;
        let rmin = 4.0 * self.spacing;
        if !(rmax > rmin) {
            return 1.0;
        }
        let stride = (self.samples.len() / 32).max(1);
        let mut c: f64 = 1.0;
        for (i, q) in self.samples.iter().enumerate().step_by(stride) {
            if self.is_parametric() && self.param_edge_distance(&self.params[i]) < rmax * self.parametric_lipschitz() {
                continue;
            }
            let mut r = rmax;
            while r >= rmin {
                let ratio = self.ball_mass(q, r) / r.powi(self.d as i32);
                c = c.max(ratio).max(1.0 / ratio);
                r *= 0.5;
            }
        }
        c
    }

    /// Axis bounding box of the samples.
    pub fn footprint_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.n];
        let mut hi = vec![f64::NEG_INFINITY; self.n];
        for p in &self.samples {
            for a in 0..self.n {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Distance from a parameter value to the edge of the sampled footprint (∞ when unparametrised).
    pub fn param_edge_distance(&self, p: &[f64]) -> f64 {
        if self.footprint.is_empty() {
            return f64::INFINITY;
        }
        self.footprint
            .iter()
            .zip(p)
            .map(|((lo, hi), v)| (v - lo).min(hi - v))
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_spacing(spacing: f64) -> Result<()> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(LabError::Config("sample spacing must be positive".into()));
    }
    Ok(())
}

fn flat_distance(d: usize, extent: Option<&[(f64, f64)]>, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, v) in x.iter().enumerate() {
        let e = if i < d {
            match extent {
                Some(ext) => (ext[i].0 - v).max(v - ext[i].1).max(0.0),
                None => 0.0,
            }
        } else {
            *v
        };
        s += e * e;
    }
    s.sqrt()
}

fn polyline_point(shape: &Shape, s: f64) -> Vec<f64> {
    let Shape::Polyline { vertices, cumulative } = shape else { unreachable!() };
    let total = *cumulative.last().unwrap();
    let s = s.clamp(0.0, total);
    let k = match cumulative.iter().position(|&c| c >= s) {
        Some(0) => 1,
        Some(k) => k,
        None => cumulative.len() - 1,
    };
    let t = (s - cumulative[k - 1]) / (cumulative[k] - cumulative[k - 1]);
    vertices[k - 1].iter().zip(&vertices[k]).map(|(a, b)| a + t * (b - a)).collect()
}

fn segment_nearest(a: &[f64], b: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
    let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = (x.iter().zip(a).zip(&ab).map(|((xi, ai), di)| (xi - ai) * di).sum::<f64>() / len2).clamp(0.0, 1.0);
    let y: Vec<f64> = a.iter().zip(&ab).map(|(p, v)| p + t * v).collect();
    let dd = dist(&y, x);
    (y, dd)
}

/// Nearest parameter and distance from `x` to the sine graph.
fn graph_nearest(amplitude: f64, frequency: f64, x: &[f64]) -> (f64, f64) {
    let rest2: f64 = x[2..].iter().map(|v| v * v).sum();
    let g = |t: f64| {
        let dx = t - x[0];
        let dy = amplitude * (frequency * t).sin() - x[1];
        dx * dx + dy * dy
    };
    let bound = g(x[0]).sqrt();
    if bound == 0.0 || amplitude == 0.0 {
        if amplitude == 0.0 {
            return (x[0], (x[1] * x[1] + rest2).sqrt());
        }
        return (x[0], rest2.sqrt());
    }
    let (t, g2) = scan_then_refine(&g, x[0] - bound, x[0] + bound, (bound / 16.0).min(0.05 / frequency));
    (t, (g2 + rest2).sqrt())
}

fn scan_then_refine<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, step: f64) -> (f64, f64) {
    let width = b - a;
    let m = ((width / step).ceil() as usize).clamp(8, 200_000);
    let h = width / m as f64;
    let mut vals: Vec<(f64, f64)> = (0..=m).map(|i| {
        let t = a + i as f64 * h;
        (g(t), t)
    }).collect();
    vals.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let mut best = (vals[0].1, vals[0].0);
    for &(_, t) in vals.iter().take(3) {
        let (tt, gg) = golden_min(g, t - h, t + h, 120);
        if gg < best.1 {
            best = (tt, gg);
        }
    }
    best
}

fn graph_box_distance(amplitude: f64, frequency: f64, lo: &[f64], hi: &[f64]) -> f64 {
    let f = |t: f64| {
        let mut p = vec![0.0; lo.len()];
        p[0] = t;
        p[1] = amplitude * (frequency * t).sin();
        point_box_dist(lo, hi, &p)
    };
    let c = 0.5 * (lo[0] + hi[0]);
    let bound = f(c);
    if bound == 0.0 {
        return 0.0;
    }
    let a = lo[0] - bound;
    let b = hi[0] + bound;
    let step = (bound / 16.0).min(0.05 / frequency).max((b - a) / 4096.0);
    scan_then_refine(&f, a, b, step).1
}

/// Far-field contribution of the graph outside the sampled parameter range.
fn graph_tail(amplitude: f64, frequency: f64, footprint: (f64, f64), x: &[f64], e: f64) -> f64 {
    let integrand = |t: f64| {
        let slope = amplitude * frequency * (frequency * t).cos();
        let dx = t - x[0];
        let dy = amplitude * (frequency * t).sin() - x[1];
        let rest: f64 = x[2..].iter().map(|v| v * v).sum();
        (1.0 + slope * slope).sqrt() * (dx * dx + dy * dy + rest).powf(0.5 * e)
    };
    let scale = 1.0 + (footprint.1 - footprint.0);
    let m = 4000;
    let mut s = 0.0;
    for i in 0..m {
        let v = (i as f64 + 0.5) / m as f64;
        let jac = scale / (v * v) / m as f64;
        let off = scale * (1.0 / v - 1.0);
        s += jac * (integrand(footprint.1 + off) + integrand(footprint.0 - off));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> BoundarySet {
        BoundarySet::flat(3, 1, &[(-8.0, 8.0)], 1.0 / 64.0, false).unwrap()
    }

    #[test]
    fn flat_distance_examples() {
        let g = line();
        assert_eq!(g.distance(&[5.0, 3.0, 4.0]), 5.0);
        assert_eq!(g.distance(&[0.3, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn weight_examples() {
        let g = line();
        assert_eq!(g.weight(&[0.0, 2.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(g.weight(&[1.0, 0.0, 0.0]), Err(LabError::Singular)));
        let p = BoundarySet::flat(2, 0, &[], 1.0, false).unwrap();
        assert_eq!(p.weight(&[0.0, 4.0]).unwrap(), 0.25);
    }

    #[test]
    fn codimension_one_rejected() {
        let e = BoundarySet::flat(3, 2, &[(0.0, 1.0), (0.0, 1.0)], 0.1, false).unwrap_err();
        assert!(e.to_string().contains("codimension ≥ 2 required"));
    }

    #[test]
    fn bounded_segment_distance() {
        let g = BoundarySet::flat(3, 1, &[(0.0, 1.0)], 1.0 / 16.0, true).unwrap();
        assert!((g.distance(&[2.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((g.distance_to_box(&[1.5, -1.0, -1.0], &[2.0, 1.0, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn polyline_distance_to_corner() {
        let g = BoundarySet::polyline(3, vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]], 1.0 / 32.0).unwrap();
        assert!((g.distance(&[2.0, -1.0, 0.0]) - 2f64.sqrt()).abs() < 1e-14);
        assert!((g.distance(&[0.5, 0.0, 3.0]) - 3.0).abs() < 1e-14);
        assert!((g.total_mass() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cloud_weights_sum_to_total() {
        let pts = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![3.0, 0.0, 0.0]];
        let g = BoundarySet::point_cloud(3, 1, pts, Some(4.0)).unwrap();
        assert!((g.total_mass() - 4.0).abs() < 1e-12);
        assert!((g.distance(&[3.0, 4.0, 0.0]) - 4.0).abs() < 1e-15);
    }
}
