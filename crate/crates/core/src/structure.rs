//! Measured constants of the structural harmonic-measure and interior estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Scene;
use crate::error::Result;
use crate::functionals::{gradient, surface_ball};
use crate::linalg::{dist, linear_fit};
use crate::solver::CellKind;

/// ω as a measure on samples from one pole.
pub fn sample_measure(scene: &Scene, pole: &[f64]) -> Result<Vec<f64>> {
    let row = scene.system.harmonic_measure(pole)?;
    Ok(scene.bins.sample_mass(&scene.gamma, &row))
}

/// ω(Δ(q, r)) from a per-sample measure.
pub fn ball_measure(scene: &Scene, mass: &[f64], q: &[f64], r: f64) -> f64 {
    surface_ball(&scene.gamma, q, r).iter().map(|&i| mass[i]).sum()
}

/// Point at distance r from q along the last axis.
pub fn corkscrew(q: &[f64], r: f64) -> Vec<f64> {
    let mut a = q.to_vec();
    *a.last_mut().unwrap() += r;
    a
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleRow {
    pub r: f64,
    pub doubling: f64,
    pub cfms: f64,
    pub change_of_pole: f64,
    pub nondegeneracy: f64,
}

/// Harmonic-measure estimates at one boundary point over several scales.
#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    pub h: f64,
    pub q: Vec<f64>,
    pub far_pole: Vec<f64>,
    pub rows: Vec<ScaleRow>,
    /// max doubling ratio.
    pub doubling: f64,
    /// max/min of the CFMS ratio.
    pub cfms: f64,
    /// max of the change-of-pole double ratio and its reciprocal.
    pub change_of_pole: f64,
    /// min of ω^{A_r(q)}(Δ(q, r)).
    pub nondegeneracy: f64,
}

/// Doubling, CFMS, change of pole and non-degeneracy at `q` for radii `scales`.
pub fn harmonic_structure(scene: &Scene, q: &[f64], scales: &[f64], far_pole: &[f64]) -> Result<StructureReport> {
    let d = scene.gamma.boundary_dim() as i32;
    let green = scene.system.green(far_pole)?;
    let far = scene.bins.sample_mass(&scene.gamma, &scene.system.measure_from_green(&green));
    let mut rows = Vec::new();
    for &r in scales {
        let a = corkscrew(q, r);
        let cell = scene.system.grid.cell_at(&a).unwrap_or(0);
        let g_at = green.values[cell];
        let w_r = ball_measure(scene, &far, q, r);
        let near = sample_measure(scene, &a)?;
        // Δ' = Δ(q + (r/2)e₁, r/4) inside Δ(q, r).
        let mut q2 = q.to_vec();
        q2[0] += 0.5 * r;
        let sub_far = ball_measure(scene, &far, &q2, 0.25 * r);
        let sub_near = ball_measure(scene, &near, &q2, 0.25 * r);
        rows.push(ScaleRow {
            r,
            doubling: ball_measure(scene, &far, q, 2.0 * r) / w_r,
            cfms: r.powi(d - 1) * g_at / w_r,
            change_of_pole: (sub_far / w_r) / sub_near,
            nondegeneracy: ball_measure(scene, &near, q, r),
        });
    }
    let max = |f: &dyn Fn(&ScaleRow) -> f64| rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let min = |f: &dyn Fn(&ScaleRow) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
    Ok(StructureReport {
        h: scene.system.grid.h,
        q: q.to_vec(),
        far_pole: far_pole.to_vec(),
        doubling: max(&|r| r.doubling),
        cfms: max(&|r| r.cfms) / min(&|r| r.cfms),
        change_of_pole: max(&|r| r.change_of_pole).max(1.0 / min(&|r| r.change_of_pole)),
        nondegeneracy: min(&|r| r.nondegeneracy),
        rows,
    })
}

/// Interior and boundary regularity constants for one solved field.
#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    /// max sup_B u / inf_B u over balls with 3B away from Γ.
    pub harnack: f64,
    /// max r²∫_B|∇u|²dm / ∫_{2B}u²dm.
    pub caccioppoli: f64,
    /// max sup_{B(q,r)} u / (avg_{B(q,2r)} u²)^{1/2} for u vanishing near q.
    pub moser: f64,
    /// Fitted exponent of osc_{B(q,ρ)} u against ρ.
    pub holder_exponent: f64,
}

/// Measures the regularity constants of a nonnegative solution `u` vanishing on Δ(q, 2·r_max).
pub fn regularity(scene: &Scene, u: &[f64], q: &[f64], radii: &[f64], seed: u64) -> RegularityReport {
    let g = &scene.system.grid;
    let gamma = &scene.gamma;
    let cells: Vec<usize> = (0..g.len()).collect();
    let in_ball = |x: &[f64], r: f64| -> Vec<usize> {
        cells.iter().copied().filter(|&c| g.kind[c] == CellKind::Interior && dist(&g.center(c), x) < r).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (g.lo.clone(), g.hi());
    let mut harnack: f64 = 1.0;
    let mut caccioppoli: f64 = 0.0;
    let mut tried = 0;
    while tried < 20 {
        let x: Vec<f64> = (0..g.n).map(|a| rng.gen_range(lo[a] + 0.25..hi[a] - 0.25)).collect();
        let delta = gamma.distance(&x);
        let r = (delta / 3.0).min(0.2);
        if r < 3.0 * g.h {
            continue;
        }
        tried += 1;
        let b = in_ball(&x, r);
        let vals: Vec<f64> = b.iter().map(|&c| u[c]).collect();
        let (mx, mn) = (vals.iter().cloned().fold(0.0, f64::max), vals.iter().cloned().fold(f64::INFINITY, f64::min));
        if mn > 0.0 {
            harnack = harnack.max(mx / mn);
        }
        let grad: f64 = b
            .iter()
            .map(|&c| {
                let gr = gradient(&scene.system, u, c);
                gr.iter().map(|v| v * v).sum::<f64>() * gamma.weight_at_distance(g.delta[c])
            })
            .sum();
        let l2: f64 = in_ball(&x, 2.0 * r).iter().map(|&c| u[c] * u[c] * gamma.weight_at_distance(g.delta[c])).sum();
        if l2 > 0.0 {
            caccioppoli = caccioppoli.max(r * r * grad / l2);
        }
    }
    let mut moser: f64 = 0.0;
    let mut osc = Vec::new();
    for &r in radii {
        let b = in_ball(q, r);
        let sup = b.iter().map(|&c| u[c]).fold(0.0, f64::max);
        let inf = b.iter().map(|&c| u[c]).fold(f64::INFINITY, f64::min).min(0.0);
        let b2 = in_ball(q, 2.0 * r);
        let (mut s, mut m) = (0.0, 0.0);
        for &c in &b2 {
            let w = gamma.weight_at_distance(g.delta[c]);
            s += u[c] * u[c] * w;
            m += w;
        }
        if s > 0.0 {
            moser = moser.max(sup / (s / m).sqrt());
        }
        osc.push((r, sup - inf));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        osc.iter().filter(|(_, o)| *o > 0.0).map(|(r, o)| (r.ln(), o.ln())).unzip();
    let holder_exponent = if xs.len() >= 2 { linear_fit(&xs, &ys).0 } else { f64::NAN };
    RegularityReport { harnack, caccioppoli, moser, holder_exponent }
}

/// Surface-ball samples of Γ within `r` of `q`, exposed for data construction.
pub fn samples_near(scene: &Scene, q: &[f64], r: f64) -> Vec<usize> {
    surface_ball(&scene.gamma, q, r)
}
