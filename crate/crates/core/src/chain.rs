//! Corkscrew points and Harnack chains.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::BoundarySet;
use crate::linalg::dist;

/// Search settings for corkscrew points.
#[derive(Clone, Copy, Debug)]
pub struct CorkscrewSearch {
    /// Candidates lie in B(q, reach·r).
    pub reach: f64,
    /// Lattice points per radius `reach·r` along each axis.
    pub per_axis: usize,
}

impl Default for CorkscrewSearch {
    fn default() -> Self {
        CorkscrewSearch { reach: 0.5, per_axis: 8 }
    }
}

/// Lattice maximiser of δ over B(q, reach·r); ties go to the lexicographically largest candidate.
pub fn corkscrew_point(gamma: &BoundarySet, q: &[f64], r: f64, search: CorkscrewSearch) -> Result<Vec<f64>> {
    if !(r > 0.0) {
        return Err(LabError::Argument("corkscrew radius must be positive".into()));
    }
    let tol = 1e-9_f64.max(1e-9 * r);
    if gamma.distance(q) > tol {
        return Err(LabError::Argument("corkscrew base point is not on the boundary set".into()));
    }
    let n = gamma.ambient_dim();
    let m = search.per_axis as i64;
    let step = search.reach * r / m as f64;
    let limit = search.reach * r * (1.0 + 1e-12);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![-m; n];
    loop {
        let off: Vec<f64> = idx.iter().map(|&i| i as f64 * step).collect();
        let norm = off.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= limit {
            let x: Vec<f64> = q.iter().zip(&off).map(|(a, b)| a + b).collect();
            let dd = gamma.distance(&x);
            let better = match &best {
                None => true,
                Some((bd, bx)) => dd > bd + 1e-12 * r || ((dd - bd).abs() <= 1e-12 * r && lex_greater(&x, bx)),
            };
            if better {
                best = Some((dd, x));
            }
        }
        let mut a = 0;
        loop {
            if a == n {
                let (dd, x) = best.expect("lattice contains the centre");
                if dd <= 0.0 {
                    return Err(LabError::Resolution("corkscrew lattice found no point off the boundary".into()));
                }
                return Ok(x);
            }
            idx[a] += 1;
            if idx[a] > m {
                idx[a] = -m;
                a += 1;
            } else {
                break;
            }
        }
    }
}

fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x > y;
        }
    }
    false
}

/// Ball in a Harnack chain.
#[derive(Clone, Debug, Serialize)]
pub struct ChainBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Chain of overlapping balls joining two interior points.
#[derive(Clone, Debug, Serialize)]
pub struct HarnackChain {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub s: f64,
    pub lambda: f64,
    /// Clearance actually used for spacing (never below `tau_floor`).
    pub tau: f64,
    /// c·Λ^{−d/(n−1−d)}·s.
    pub tau_floor: f64,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub balls: Vec<ChainBall>,
}

impl HarnackChain {
    /// Interior balls (all but the two end balls).
    pub fn interior(&self) -> &[ChainBall] {
        if self.balls.len() <= 2 {
            &[]
        } else {
            &self.balls[1..self.balls.len() - 1]
        }
    }

    /// Λ^{(n−1)/(n−1−d)}, the predicted growth of the ball count.
    pub fn count_scale(&self, n: usize, d: usize) -> f64 {
        self.lambda.powf((n as f64 - 1.0) / (n as f64 - 1.0 - d as f64))
    }
}

/// min δ over the segment [a, b], resolved to `step`. δ is 1-Lipschitz, so the walk may skip
/// ahead by δ(p) − (running minimum) without missing a smaller value.
fn segment_clearance(gamma: &BoundarySet, a: &[f64], b: &[f64], step: f64) -> f64 {
    let len = dist(a, b);
    let at = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    let mut best = gamma.distance(a);
    if len == 0.0 {
        return best;
    }
    let mut s = 0.0;
    loop {
        let dd = gamma.distance(&at(s / len));
        best = best.min(dd);
        if s >= len {
            return best;
        }
        s = (s + step.max(dd - best)).min(len);
    }
}

/// Builds a Harnack chain between `x1` and `x2` (clearance constant `c`).
pub fn harnack_chain(gamma: &BoundarySet, x1: &[f64], x2: &[f64], s: f64, lambda: f64, c: f64) -> Result<HarnackChain> {
    let n = gamma.ambient_dim();
    let d = gamma.boundary_dim();
    let slack = 1e-12 * s.max(1.0);
    if !(s > 0.0) || lambda < 1.0 {
        return Err(LabError::Argument("chain needs s > 0 and Λ ≥ 1".into()));
    }
    if gamma.distance(x1) + slack < s || gamma.distance(x2) + slack < s {
        return Err(LabError::Argument("chain endpoints must satisfy δ ≥ s".into()));
    }
    let len = dist(x1, x2);
    if len > lambda * s * (1.0 + 1e-12) {
        return Err(LabError::Argument("chain endpoints farther apart than Λ·s".into()));
    }
    let tau_floor = c * lambda.powf(-(d as f64) / (n as f64 - 1.0 - d as f64)) * s;
    if len == 0.0 {
        return Ok(HarnackChain {
            x1: x1.to_vec(),
            x2: x2.to_vec(),
            s,
            lambda,
            tau: s,
            tau_floor,
            y1: x1.to_vec(),
            y2: x2.to_vec(),
            balls: vec![ChainBall { center: x1.to_vec(), radius: 0.5 * s }],
        });
    }
    let probe = tau_floor / 8.0;
    let mut y = (x1.to_vec(), x2.to_vec());
    let mut clearance = segment_clearance(gamma, x1, x2, probe);
    if clearance < tau_floor {
        let offsets = lattice_offsets(n, 0.4 * s);
        let mut best = (clearance, y.clone());
        for o1 in &offsets {
            let a: Vec<f64> = x1.iter().zip(o1).map(|(p, q)| p + q).collect();
            for o2 in &offsets {
                let b: Vec<f64> = x2.iter().zip(o2).map(|(p, q)| p + q).collect();
                let cl = segment_clearance(gamma, &a, &b, probe);
                if cl > best.0 {
                    best = (cl, (a.clone(), b));
                }
            }
        }
        clearance = best.0;
        y = best.1;
    }
    if clearance < tau_floor {
        return Err(LabError::Resolution(format!(
            "no segment with clearance {tau_floor:.3e} found (best {clearance:.3e})"
        )));
    }
    let mut tau = clearance.min(s);
    let (y1, y2) = y;
    let seg = dist(&y1, &y2);
    let centers = loop {
        let m = ((seg / (tau / 3.0)).ceil() as usize).max(1);
        let pts: Vec<Vec<f64>> = (0..=m)
            .map(|i| {
                let t = i as f64 / m as f64;
                y1.iter().zip(&y2).map(|(a, b)| a + t * (b - a)).collect()
            })
            .collect();
        let worst = pts.iter().map(|p| gamma.distance(p)).fold(f64::INFINITY, f64::min);
        if worst >= tau || worst < tau_floor {
            if worst < tau_floor {
                return Err(LabError::Resolution("segment clearance below the chain floor".into()));
            }
            break pts;
        }
        tau = worst;
    };
    let mut balls = Vec::with_capacity(centers.len() + 2);
    balls.push(ChainBall { center: x1.to_vec(), radius: 0.5 * s });
    for z in centers {
        balls.push(ChainBall { center: z, radius: 0.25 * tau });
    }
    balls.push(ChainBall { center: x2.to_vec(), radius: 0.5 * s });
    Ok(HarnackChain { x1: x1.to_vec(), x2: x2.to_vec(), s, lambda, tau, tau_floor, y1, y2, balls })
}

fn lattice_offsets(n: usize, r: f64) -> Vec<Vec<f64>> {
    let vals = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut out = Vec::new();
    let total = vals.len().pow(n as u32);
    for lin in 0..total {
        let mut rem = lin;
        let mut v = vec![0.0; n];
        for a in v.iter_mut() {
            *a = vals[rem % vals.len()] * r;
            rem /= vals.len();
        }
        if v.iter().map(|x| x * x).sum::<f64>().sqrt() <= r * (1.0 + 1e-12) {
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> BoundarySet {
        BoundarySet::flat(3, 1, &[(-4.0, 4.0)], 1.0 / 32.0, false).unwrap()
    }

    #[test]
    fn flat_corkscrew_is_normal_offset() {
        let g = line();
        let a = corkscrew_point(&g, &[0.0, 0.0, 0.0], 1.0, CorkscrewSearch::default()).unwrap();
        assert_eq!(a, vec![0.0, 0.5, 0.0]);
    }

    #[test]
    fn corkscrew_rejects_off_boundary_base() {
        let g = line();
        assert!(corkscrew_point(&g, &[0.0, 1.0, 0.0], 1.0, CorkscrewSearch::default()).is_err());
        assert!(corkscrew_point(&g, &[0.0, 0.0, 0.0], 0.0, CorkscrewSearch::default()).is_err());
    }

    #[test]
    fn degenerate_chain_has_one_ball() {
        let g = line();
        let c = harnack_chain(&g, &[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0], 1.0, 1.0, 0.25).unwrap();
        assert_eq!(c.balls.len(), 1);
    }

    #[test]
    fn straight_flat_chain() {
        let g = line();
        let c = harnack_chain(&g, &[0.0, 1.0, 0.0], &[3.0, 1.0, 0.0], 1.0, 3.0, 0.25).unwrap();
        assert_eq!(c.y1, vec![0.0, 1.0, 0.0]);
        for w in c.balls.windows(2) {
            assert!(dist(&w[0].center, &w[1].center) < w[0].radius + w[1].radius);
        }
        for b in c.interior() {
            assert!(g.distance(&b.center) - b.radius >= 0.75 * c.tau_floor);
        }
        assert!(c.balls.len() as f64 <= 4.0 * c.count_scale(3, 1));
    }
}
