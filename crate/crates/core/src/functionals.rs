//! Boundary functionals of solved fields: square function, non-tangential maximal function,
//! Carleson and BMO norms, Hardy–Littlewood maximal functions, log-maximal data and stripes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::BoundarySet;
use crate::linalg::{dist, smoothstep};
use crate::solver::{CellKind, System};

/// Non-tangential cone {X : |X−q| < (1+aperture)δ(X)}, optionally truncated at |X−q| < r.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub vertex: Vec<f64>,
    pub aperture: f64,
    pub truncation: Option<f64>,
}

impl Cone {
    pub fn new(vertex: &[f64], aperture: f64, truncation: Option<f64>) -> Self {
        Cone { vertex: vertex.to_vec(), aperture, truncation }
    }

    pub fn contains(&self, x: &[f64], delta: f64) -> bool {
        let r = dist(x, &self.vertex);
        r < (1.0 + self.aperture) * delta && self.truncation.is_none_or(|t| r < t)
    }
}

/// Per interior cell data needed by the functionals.
#[derive(Clone, Debug)]
struct CellTerm {
    center: Vec<f64>,
    delta: f64,
    value: f64,
    /// |∇u|².
    grad2: f64,
    /// w(X)·h^n.
    mass: f64,
}

/// Solved field prepared for cone and tent sums.
#[derive(Clone, Debug)]
pub struct FieldFunctionals {
    n: usize,
    d: usize,
    h: f64,
    cells: Vec<CellTerm>,
}

/// Central differences, one-sided toward the interior next to absorbing cells and walls.
pub fn gradient(sys: &System, u: &[f64], cell: usize) -> Vec<f64> {
    let g = &sys.grid;
    (0..g.n)
        .map(|a| {
            let usable = |nb: Option<usize>| nb.filter(|&c| g.kind[c] == CellKind::Interior);
            match (usable(g.neighbor(cell, a, -1)), usable(g.neighbor(cell, a, 1))) {
                (Some(m), Some(p)) => (u[p] - u[m]) / (2.0 * g.h),
                (None, Some(p)) => (u[p] - u[cell]) / g.h,
                (Some(m), None) => (u[cell] - u[m]) / g.h,
                (None, None) => 0.0,
            }
        })
        .collect()
}

impl FieldFunctionals {
    pub fn new(gamma: &BoundarySet, sys: &System, u: &[f64]) -> Self {
        let g = &sys.grid;
        let vol = g.volume();
        let cells = g
            .interior
            .par_iter()
            .map(|&c| {
                let delta = g.delta[c];
                let grad = gradient(sys, u, c);
                CellTerm {
                    center: g.center(c),
                    delta,
                    value: u[c],
                    grad2: grad.iter().map(|v| v * v).sum(),
                    mass: gamma.weight_at_distance(delta) * vol,
                }
            })
            .collect();
        FieldFunctionals { n: g.n, d: gamma.boundary_dim(), h: g.h, cells }
    }

    /// Cells entering gradient sums: δ ≥ h.
    fn resolved(&self) -> impl Iterator<Item = &CellTerm> {
        self.cells.iter().filter(move |c| c.delta >= self.h)
    }

    /// (Σ_{cone} |∇u|² δ^{1−d} w h^n)^{1/2}.
    pub fn square_function(&self, cone: &Cone) -> f64 {
        self.resolved()
            .filter(|c| cone.contains(&c.center, c.delta))
            .map(|c| c.grad2 * c.delta.powi(1 - self.d as i32) * c.mass)
            .sum::<f64>()
            .sqrt()
    }

    /// max |u| over cone cells; 0 for an empty cone.
    pub fn nontangential_max(&self, cone: &Cone) -> f64 {
        self.cells.iter().filter(|c| cone.contains(&c.center, c.delta)).map(|c| c.value.abs()).fold(0.0, f64::max)
    }

    /// ∫∫_{T(Δ(q,r))} |∇u|² δ^{d−n+2} dX over resolved cells of B(q,r).
    pub fn carleson_mass(&self, q: &[f64], r: f64) -> f64 {
        let vol = self.h.powi(self.n as i32);
        let p = self.d as i32 - self.n as i32 + 2;
        self.resolved().filter(|c| dist(&c.center, q) < r).map(|c| c.grad2 * c.delta.powi(p) * vol).sum()
    }

    /// Carleson mass, the order-of-integration form, and its two square-function bounds.
    pub fn carleson_bracket(&self, gamma: &BoundarySet, q0: &[f64], r: f64, alpha: f64) -> CarlesonBracket {
        let d = self.d as i32;
        let tent: Vec<&CellTerm> = self.resolved().filter(|c| dist(&c.center, q0) < r).collect();
        // Σ_X |∇u|²δ^{1−d}σ(Δ^X) w h^n with Δ^X = {q : X ∈ Γ^α(q)}.
        let pre: f64 = tent
            .par_iter()
            .map(|c| {
                let reach = (1.0 + alpha) * c.delta;
                let s: f64 = gamma
                    .samples_in_ball(&c.center, reach)
                    .into_iter()
                    .filter(|&i| dist(gamma.sample(i), &c.center) < reach)
                    .map(|i| gamma.weights()[i])
                    .sum();
                c.grad2 * c.delta.powi(1 - d) * s * c.mass
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        let side = |radius: f64, trunc: f64| -> f64 {
            gamma
                .samples_in_ball(q0, radius)
                .into_par_iter()
                .filter(|&i| dist(gamma.sample(i), q0) < radius)
                .map(|i| {
                    let s = self.square_function(&Cone::new(gamma.sample(i), alpha, Some(trunc)));
                    s * s * gamma.weights()[i]
                })
                .collect::<Vec<f64>>()
                .iter()
                .sum()
        };
        CarlesonBracket {
            radius: r,
            carleson: self.carleson_mass(q0, r),
            lower: side(0.5 * r, 0.5 * r),
            pre,
            upper: side((alpha + 2.0) * r, (alpha + 1.0) * r),
        }
    }

    /// (∫∫_{stripe j} u² dm, (2^{−j}r)² ∫∫_{stripes j−m1..j+m2, aperture ᾱ} |∇u|² dm).
    #[allow(clippy::too_many_arguments)]
    pub fn poincare_stripe(&self, q: &[f64], r: f64, j: i32, alpha: f64, m1: i32, m2: i32, alpha_bar: f64) -> Result<(f64, f64)> {
        let outer = r * 2f64.powi(-j);
        if outer * 0.5 < 4.0 * self.h {
            return Err(LabError::Resolution(format!("stripe {j} at radius {outer} is below the grid resolution")));
        }
        let inner = 0.5 * outer;
        let narrow = Cone::new(q, alpha, Some(outer));
        let lhs: f64 = self
            .cells
            .iter()
            .filter(|c| narrow.contains(&c.center, c.delta) && dist(&c.center, q) >= inner)
            .map(|c| c.value * c.value * c.mass)
            .sum();
        let wide_outer = r * 2f64.powi(m1 - j);
        let wide_inner = r * 2f64.powi(-j - m2 - 1);
        let wide = Cone::new(q, alpha_bar, Some(wide_outer));
        let grad: f64 = self
            .resolved()
            .filter(|c| wide.contains(&c.center, c.delta) && dist(&c.center, q) >= wide_inner)
            .map(|c| c.grad2 * c.mass)
            .sum();
        Ok((lhs, outer * outer * grad))
    }
}

/// Result of a Carleson bracket evaluation; `lower ≤ pre ≤ upper` holds exactly.
#[derive(Clone, Debug, Serialize)]
pub struct CarlesonBracket {
    pub radius: f64,
    pub carleson: f64,
    pub lower: f64,
    pub pre: f64,
    pub upper: f64,
}

/// Surface balls centred at boundary samples with dyadic radii.
#[derive(Clone, Debug, Serialize)]
pub struct Census {
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
}

impl Census {
    /// Radii 2^{−k} for k in `k_range`; centres restricted to `centers`.
    pub fn new(centers: Vec<usize>, k_min: i32, k_max: i32) -> Self {
        Census { centers, radii: (k_min..=k_max).map(|k| 2f64.powi(-k)).collect() }
    }

    /// All samples as centres.
    pub fn all(gamma: &BoundarySet, k_min: i32, k_max: i32) -> Self {
        Self::new((0..gamma.len()).collect(), k_min, k_max)
    }

    /// Centres whose largest ball stays inside the footprint shrunk by `margin`.
    pub fn interior(gamma: &BoundarySet, k_min: i32, k_max: i32, margin: f64) -> Self {
        let (lo, hi) = gamma.footprint_box();
        let reach = 2f64.powi(-k_min) + margin;
        let centers = (0..gamma.len())
            .filter(|&i| {
                let x = gamma.sample(i);
                (0..x.len()).all(|a| hi[a] - lo[a] < 1e-12 || (x[a] - lo[a] >= reach && hi[a] - x[a] >= reach))
            })
            .collect();
        Self::new(centers, k_min, k_max)
    }

    pub fn balls(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.centers.iter().flat_map(move |&c| self.radii.iter().map(move |&r| (c, r)))
    }
}

/// Samples of the closed surface ball Δ(x, r).
pub fn surface_ball(gamma: &BoundarySet, x: &[f64], r: f64) -> Vec<usize> {
    gamma.samples_in_ball(x, r).into_iter().filter(|&i| dist(gamma.sample(i), x) <= r).collect()
}

/// σ-weighted average of f over a sample set.
pub fn average(gamma: &BoundarySet, f: &[f64], set: &[usize]) -> f64 {
    let (mut s, mut m) = (0.0, 0.0);
    for &i in set {
        s += f[i] * gamma.weights()[i];
        m += gamma.weights()[i];
    }
    if m > 0.0 { s / m } else { 0.0 }
}

/// (avg_Δ |f − f_Δ|²)^{1/2}.
pub fn oscillation(gamma: &BoundarySet, f: &[f64], set: &[usize]) -> f64 {
    let mean = average(gamma, f, set);
    let sq: Vec<f64> = f.iter().map(|v| (v - mean) * (v - mean)).collect();
    average(gamma, &sq, set).sqrt()
}

/// sup over the census of the mean oscillation.
pub fn bmo_norm(gamma: &BoundarySet, f: &[f64], census: &Census) -> f64 {
    let balls: Vec<(usize, f64)> = census.balls().collect();
    balls
        .par_iter()
        .map(|&(c, r)| oscillation(gamma, f, &surface_ball(gamma, gamma.sample(c), r)))
        .reduce(|| 0.0, f64::max)
}

/// sup over census balls of σ(Δ)^{−1} × Carleson mass.
pub fn carleson_norm(gamma: &BoundarySet, field: &FieldFunctionals, census: &Census) -> (f64, Option<(usize, f64)>) {
    let balls: Vec<(usize, f64)> = census.balls().collect();
    balls
        .par_iter()
        .map(|&(c, r)| {
            let x = gamma.sample(c);
            let sigma = gamma.ball_mass(x, r);
            let v = if sigma > 0.0 { field.carleson_mass(x, r) / sigma } else { 0.0 };
            (v, Some((c, r)))
        })
        .reduce(|| (0.0, None), |a, b| if b.0 > a.0 { b } else { a })
}

/// Maximal function variants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Maximal {
    /// M_σ f = sup avg |f|.
    Sigma,
    /// M_p f = (M_σ |f|^p)^{1/p}.
    Power(f64),
}

/// Census-ball averages of |f|^p, reusable across many evaluation points.
#[derive(Clone, Debug)]
pub struct MaximalTable {
    radii: Vec<f64>,
    /// averages[k][i]: average over Δ(sample i, radii[k]).
    averages: Vec<Vec<f64>>,
    p: f64,
}

impl MaximalTable {
    pub fn new(gamma: &BoundarySet, f: &[f64], census: &Census, variant: Maximal) -> Self {
        let p = match variant {
            Maximal::Sigma => 1.0,
            Maximal::Power(p) => p,
        };
        let g: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
        let averages = census
            .radii
            .iter()
            .map(|&r| {
                let mut row = vec![f64::NAN; gamma.len()];
                let vals: Vec<(usize, f64)> = census
                    .centers
                    .par_iter()
                    .map(|&c| (c, average(gamma, &g, &surface_ball(gamma, gamma.sample(c), r))))
                    .collect();
                for (c, v) in vals {
                    row[c] = v;
                }
                row
            })
            .collect();
        MaximalTable { radii: census.radii.clone(), averages, p }
    }

    /// sup over census balls containing `q`.
    pub fn at(&self, gamma: &BoundarySet, q: &[f64]) -> f64 {
        let mut best: f64 = 0.0;
        for (k, &r) in self.radii.iter().enumerate() {
            for c in surface_ball(gamma, q, r) {
                let v = self.averages[k][c];
                if v.is_finite() {
                    best = best.max(v);
                }
            }
        }
        best.powf(1.0 / self.p)
    }
}

/// Single-point maximal function.
pub fn hardy_littlewood(gamma: &BoundarySet, f: &[f64], q: &[f64], census: &Census, variant: Maximal) -> f64 {
    MaximalTable::new(gamma, f, census, variant).at(gamma, q)
}

/// f = max{0, 1 + gl_delta·log M_σ χ_E} at every sample.
pub fn log_maximal_data(gamma: &BoundarySet, e: &[usize], gl_delta: f64, census: &Census) -> Result<Vec<f64>> {
    if !(gl_delta > 0.0 && gl_delta < 1.0) {
        return Err(LabError::Argument("gl_delta must lie in (0, 1)".into()));
    }
    let mut chi = vec![0.0; gamma.len()];
    for &i in e {
        chi[i] = 1.0;
    }
    if e.iter().map(|&i| gamma.weights()[i]).sum::<f64>() <= 0.0 {
        return Err(LabError::Argument("σ(E) = 0".into()));
    }
    let table = MaximalTable::new(gamma, &chi, census, Maximal::Sigma);
    Ok((0..gamma.len())
        .into_par_iter()
        .map(|i| {
            if chi[i] == 1.0 {
                return 1.0;
            }
            let m = table.at(gamma, gamma.sample(i));
            if m <= 0.0 { 0.0 } else { (1.0 + gl_delta * m.ln()).max(0.0) }
        })
        .collect())
}

/// Normalised average along Γ against a radial bump equal to 1 on |x−y| ≤ ε/2 and 0 beyond ε.
pub fn mollify(gamma: &BoundarySet, f: &[f64], eps: f64) -> Vec<f64> {
    (0..gamma.len())
        .into_par_iter()
        .map(|i| {
            let x = gamma.sample(i);
            let (mut s, mut m) = (0.0, 0.0);
            for j in gamma.samples_in_ball(x, eps) {
                let t = dist(gamma.sample(j), x) / eps;
                if t < 1.0 {
                    let k = (1.0 - smoothstep(2.0 * t - 1.0)) * gamma.weights()[j];
                    s += k * f[j];
                    m += k;
                }
            }
            if m > 0.0 { s / m } else { f[i] }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_membership() {
        let c = Cone::new(&[0.0, 0.0], 1.0, Some(1.0));
        assert!(c.contains(&[0.1, 0.5], 0.5));
        assert!(!c.contains(&[0.9, 0.1], 0.1));
        assert!(!c.contains(&[0.0, 1.5], 1.5));
    }

    #[test]
    fn half_line_indicator_bmo() {
        let g = BoundarySet::flat(3, 1, &[(-1.0, 1.0)], 1.0 / 512.0, true).unwrap();
        let f: Vec<f64> = g.samples().iter().map(|x| if x[0] > 0.0 { 1.0 } else { 0.0 }).collect();
        let b = bmo_norm(&g, &f, &Census::interior(&g, 2, 6, 0.0));
        assert!((b - 0.5).abs() < 0.01, "{b}");
    }

    #[test]
    fn mollified_constant_is_constant() {
        let g = BoundarySet::flat(3, 1, &[(-1.0, 1.0)], 1.0 / 64.0, true).unwrap();
        let f = vec![3.0; g.len()];
        assert!(mollify(&g, &f, 0.1).iter().all(|v| (v - 3.0).abs() < 1e-12));
    }
}
