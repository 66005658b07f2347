use std::sync::OnceLock;

use codimlab::chain::{corkscrew_point, harnack_chain, CorkscrewSearch};
use codimlab::config::{flat_line, preset, GridSpec, Scene};
use codimlab::dyadic::DyadicLattice;
use codimlab::functionals::{Census, Cone, FieldFunctionals};
use codimlab::geometry::BoundarySet;
use codimlab::io::FieldDump;
use codimlab::linalg::dist;
use codimlab::solver::{OperatorPreset, Walls};
use proptest::prelude::*;

fn scene() -> &'static Scene {
    static S: OnceLock<Scene> = OnceLock::new();
    S.get_or_init(|| {
        Scene::build(&flat_line(3, 1.0), &GridSpec::cube(3, 1.0, 0.125), OperatorPreset::PureWeight, Walls::Reflecting)
            .unwrap()
    })
}

fn line() -> &'static BoundarySet {
    static G: OnceLock<BoundarySet> = OnceLock::new();
    G.get_or_init(|| BoundarySet::flat(3, 1, &[(-1.0, 1.0)], 1.0 / 512.0, true).unwrap())
}

fn data(coeffs: &[f64]) -> Vec<f64> {
    let g = &scene().gamma;
    g.samples().iter().map(|x| coeffs.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * x[0]).sin()).sum()).collect()
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.9f64..0.9, 3)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn harmonic_measure_is_a_probability(p in point()) {
        prop_assume!(scene().gamma.distance(&p) > 0.2);
        let row = scene().system.harmonic_measure(&p).unwrap();
        prop_assert!(row.mass.iter().all(|&m| m >= 0.0));
        prop_assert!((row.mass.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn solutions_are_linear(a in prop::collection::vec(-1.0f64..1.0, 3), b in prop::collection::vec(-1.0f64..1.0, 3), s in -2.0f64..2.0) {
        let sys = &scene().system;
        let (fa, fb) = (data(&a), data(&b));
        let mix: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x + s * y).collect();
        let ua = sys.solve_with(&fa, |_| 0.0).unwrap().values;
        let ub = sys.solve_with(&fb, |_| 0.0).unwrap().values;
        let um = sys.solve_with(&mix, |_| 0.0).unwrap().values;
        let scale = 1.0 + s.abs();
        for i in 0..um.len() {
            prop_assert!((um[i] - ua[i] - s * ub[i]).abs() <= 1e-7 * scale);
        }
    }

    #[test]
    fn ordered_data_give_ordered_solutions(a in prop::collection::vec(-1.0f64..1.0, 3), bump in 0.0f64..1.0) {
        let sys = &scene().system;
        let f = data(&a);
        let g: Vec<f64> = f.iter().zip(&scene().gamma.samples().to_vec()).map(|(v, x)| v + bump * (1.0 - x[0].abs())).collect();
        let uf = sys.solve_with(&f, |_| 0.0).unwrap();
        let ug = sys.solve_with(&g, |_| 0.0).unwrap().values;
        for i in 0..ug.len() {
            prop_assert!(uf.values[i] <= ug[i] + 1e-8);
            prop_assert!(uf.values[i] >= uf.data_min - 1e-12 && uf.values[i] <= uf.data_max + 1e-12);
        }
    }

    #[test]
    fn weight_times_distance_power_is_one(x in point()) {
        let g = line();
        let delta = g.distance(&x);
        prop_assume!(delta > 1e-6);
        let w = g.weight(&x).unwrap();
        prop_assert!((w * delta.powi(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn surface_ball_mass_grows_with_radius(t in -0.8f64..0.8, r in 0.01f64..0.5, k in 1.0f64..3.0) {
        let g = line();
        let q = [t, 0.0, 0.0];
        prop_assert!(g.ball_mass(&q, r) <= g.ball_mass(&q, k * r) + 1e-15);
    }

    #[test]
    fn corkscrew_points_clear_the_boundary(t in -0.8f64..0.8, r in 0.01f64..0.3) {
        let g = line();
        let q = [t, 0.0, 0.0];
        let a = corkscrew_point(g, &q, r, CorkscrewSearch::default()).unwrap();
        prop_assert!(dist(&a, &q) < r);
        prop_assert!(g.distance(&a) >= r / 4.0);
    }

    #[test]
    fn harnack_chain_balls_link_up(x in point(), y in point(), lambda in 1.0f64..4.0) {
        let g = line();
        let s = g.distance(&x).min(g.distance(&y));
        prop_assume!(s > 0.05 && dist(&x, &y) <= lambda * s);
        let chain = harnack_chain(g, &x, &y, s, lambda, 0.25).unwrap();
        let balls = &chain.balls;
        prop_assert!(dist(&balls[0].center, &x) <= balls[0].radius);
        let last = &balls[balls.len() - 1];
        prop_assert!(dist(&last.center, &y) <= last.radius);
        for w in balls.windows(2) {
            prop_assert!(dist(&w[0].center, &w[1].center) < w[0].radius + w[1].radius);
        }
        for b in chain.interior() {
            prop_assert!(g.distance(&b.center) - b.radius >= 0.75 * chain.tau_floor);
        }
        prop_assert!(balls.len() as f64 <= 8.0 * chain.count_scale(3, 1) + 2.0);
    }

    #[test]
    fn stopping_time_family_is_disjoint_and_exact(cut in 0.0f64..1.0, wide in 0.0f64..0.3) {
        static L: OnceLock<(BoundarySet, DyadicLattice)> = OnceLock::new();
        let (g, lat) = L.get_or_init(|| {
            let g = BoundarySet::flat(3, 1, &[(0.0, 1.0)], 1.0 / 256.0, true).unwrap();
            let lat = DyadicLattice::build(&g, 0, 4).unwrap();
            (g, lat)
        });
        let pred: Vec<bool> = g.samples().iter().map(|x| (x[0] - cut).abs() < wide).collect();
        let root = lat.generation(0)[0];
        let fam = lat.stopping_time(root, &pred);
        let mut seen = vec![false; g.len()];
        for &c in &fam.members {
            for &s in &lat.cube(c).samples {
                prop_assert!(pred[s]);
                prop_assert!(!seen[s]);
                seen[s] = true;
            }
            let parent = lat.cube(c).parent.unwrap();
            prop_assert!(parent == root || !lat.cube(parent).samples.iter().all(|&s| pred[s]));
        }
    }

    #[test]
    fn field_dumps_round_trip(dims in prop::collection::vec(1usize..5, 1..4), h in 1e-3f64..1.0, seed in any::<u64>()) {
        let count: usize = dims.iter().product();
        let values: Vec<f64> = (0..count).map(|i| ((i as u64).wrapping_mul(seed | 1) as f64).sin() * 1e3).collect();
        let origin: Vec<f64> = dims.iter().map(|d| -(*d as f64) * h / 3.0).collect();
        let f = FieldDump::new(dims, h, origin, values).unwrap();
        prop_assert_eq!(FieldDump::from_raw(&f.to_raw()).unwrap(), f.clone());
        prop_assert_eq!(FieldDump::from_text(&f.to_text()).unwrap(), f);
    }

    #[test]
    fn configs_round_trip(seed in 0..=i64::MAX as u64, k in 3u32..6, r_abs in 0.5f64..2.0) {
        let mut cfg = preset("flat-line").unwrap();
        cfg.seed = seed;
        cfg.grid.h = 0.5f64.powi(k as i32);
        cfg.grid.r_abs_factor = r_abs;
        let back = codimlab::config::RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn oversized_seeds_are_rejected(seed in (i64::MAX as u64 + 1)..=u64::MAX) {
        let mut cfg = preset("point").unwrap();
        cfg.seed = seed;
        prop_assert!(cfg.validate().unwrap_err().to_string().contains("seed"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn square_function_grows_with_aperture(a in prop::collection::vec(-1.0f64..1.0, 3), t in -0.3f64..0.3, alpha in 0.25f64..2.0) {
        let sc = scene();
        let u = sc.system.solve_with(&data(&a), |_| 0.0).unwrap().values;
        let f = FieldFunctionals::new(&sc.gamma, &sc.system, &u);
        let q = [t, 0.0, 0.0];
        let narrow = f.square_function(&Cone::new(&q, alpha, Some(0.5)));
        let wide = f.square_function(&Cone::new(&q, 2.0 * alpha, Some(0.5)));
        prop_assert!(narrow <= wide + 1e-15);
        prop_assert!(f.nontangential_max(&Cone::new(&q, alpha, None)) <= f.nontangential_max(&Cone::new(&q, 2.0 * alpha, None)));
    }

    #[test]
    fn carleson_bracket_is_ordered(a in prop::collection::vec(-1.0f64..1.0, 3), t in -0.3f64..0.3) {
        let sc = scene();
        let u = sc.system.solve_with(&data(&a), |_| 0.0).unwrap().values;
        let f = FieldFunctionals::new(&sc.gamma, &sc.system, &u);
        let b = f.carleson_bracket(&sc.gamma, &[t, 0.0, 0.0], 0.5, 1.0);
        prop_assert!(b.lower <= b.pre * (1.0 + 1e-12) + 1e-300);
        prop_assert!(b.pre <= b.upper * (1.0 + 1e-12) + 1e-300);
    }
}

#[test]
fn census_radii_decrease() {
    let c = Census::new(vec![0, 1], 1, 4);
    assert!(c.radii.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(c.balls().count(), 8);
}
