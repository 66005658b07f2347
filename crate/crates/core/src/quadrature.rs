//! Weighted volume integrals ∫∫ δ^a w dX with near-boundary refinement.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::geometry::BoundarySet;
use crate::linalg::dist;

/// Region of integration.
#[derive(Clone, Debug)]
pub enum Region {
    AxisBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Open ball B(center, radius).
    Ball { center: Vec<f64>, radius: f64 },
    /// Tent T(Δ(q, r)) = B(q, r) ∖ Γ.
    Tent { q: Vec<f64>, r: f64 },
}

impl Region {
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::AxisBox { lo, hi } => (lo.clone(), hi.clone()),
            Region::Ball { center, radius } | Region::Tent { q: center, r: radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::AxisBox { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v >= a && v <= b),
            Region::Ball { center, radius } | Region::Tent { q: center, r: radius } => dist(x, center) < *radius,
        }
    }

    fn touches(&self, gamma: &BoundarySet) -> bool {
        match self {
            Region::AxisBox { lo, hi } => gamma.distance_to_box(lo, hi) == 0.0,
            Region::Ball { center, radius } => gamma.distance(center) < *radius,
            Region::Tent { .. } => true,
        }
    }
}

/// Quadrature settings.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureSettings {
    pub cells_per_axis: usize,
    pub refine_levels: u32,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { cells_per_axis: 24, refine_levels: 4 }
    }
}

/// ∫∫_region δ^a w dX by midpoint quadrature; cells with δ < diam are split dyadically.
pub fn measure_m(gamma: &BoundarySet, region: &Region, a: f64, settings: QuadratureSettings) -> Result<f64> {
    if a <= -1.0 && region.touches(gamma) {
        return Err(LabError::Divergent(a));
    }
    let (lo, hi) = region.bounds();
    let n = gamma.ambient_dim();
    let m = settings.cells_per_axis.max(1);
    let side: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / m as f64).collect();
    let total = m.pow(n as u32);
    let exponent = a + gamma.boundary_dim() as f64 + 1.0 - n as f64;
    let sum: f64 = (0..total)
        .into_par_iter()
        .map(|lin| {
            let mut rem = lin;
            let mut cl = vec![0.0; n];
            for ax in 0..n {
                cl[ax] = lo[ax] + (rem % m) as f64 * side[ax];
                rem /= m;
            }
            cell_integral(gamma, region, &cl, &side, exponent, settings.refine_levels)
        })
        .sum();
    Ok(sum)
}

fn cell_integral(gamma: &BoundarySet, region: &Region, lo: &[f64], side: &[f64], exponent: f64, levels: u32) -> f64 {
    let n = lo.len();
    let center: Vec<f64> = lo.iter().zip(side).map(|(l, s)| l + 0.5 * s).collect();
    let diam = side.iter().map(|s| s * s).sum::<f64>().sqrt();
    let delta = gamma.distance(&center);
    if delta < diam && levels > 0 {
        let half: Vec<f64> = side.iter().map(|s| 0.5 * s).collect();
        let mut s = 0.0;
        for corner in 0..(1usize << n) {
            let sub: Vec<f64> = (0..n)
                .map(|ax| lo[ax] + if corner >> ax & 1 == 1 { half[ax] } else { 0.0 })
                .collect();
            s += cell_integral(gamma, region, &sub, &half, exponent, levels - 1);
        }
        return s;
    }
    if !region.contains(&center) {
        return 0.0;
    }
    let vol: f64 = side.iter().product();
    let delta = delta.max(0.25 * side.iter().cloned().fold(f64::INFINITY, f64::min));
    delta.powf(exponent) * vol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergent_exponent_rejected() {
        let g = BoundarySet::flat(3, 1, &[(-2.0, 2.0)], 1.0 / 32.0, false).unwrap();
        let r = measure_m(&g, &Region::Tent { q: vec![0.0; 3], r: 0.5 }, -1.0, QuadratureSettings::default());
        assert!(matches!(r, Err(LabError::Divergent(_))));
    }

    #[test]
    fn far_ball_is_volume_times_weight() {
        let g = BoundarySet::flat(3, 1, &[(-2.0, 2.0)], 1.0 / 32.0, false).unwrap();
        let x = vec![0.0, 1.0, 0.0];
        let r = 0.25;
        let v = measure_m(&g, &Region::Ball { center: x.clone(), radius: r }, 0.0, QuadratureSettings::default()).unwrap();
        let expect = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3) * g.weight(&x).unwrap();
        assert!((v / expect - 1.0).abs() < 0.1, "{v} vs {expect}");
    }
}
