mod common;

use compconj::cones::Cone;
use compconj::composite::VecMap;
use compconj::conjugate::Method;
use compconj::harness::Scenario;
use compconj::kconv::{self, cone_estimates, is_k_convex, k_f_estimate, monotone_regularize};
use compconj::{sample, FunctionExpr, Grid, GridFn};
use proptest::prelude::*;
use rand::Rng;
use serde_json::json;

fn lattice_dir() -> impl Strategy<Value = Vec<f64>> {
    (-1i32..=1, -1i32..=1).prop_filter("nonzero", |(a, b)| *a != 0 || *b != 0).prop_map(|(a, b)| vec![a as f64, b as f64])
}

fn lattice_cone2() -> impl Strategy<Value = Cone> {
    prop::collection::vec(lattice_dir(), 1..=2).prop_map(|ds| Cone::new(2, ds).unwrap())
}

/// `F(x) = (a1 x1² + l1 x1, a2 x1² + l2 x1)` with quadratic weights in {−½, 0, ½}, so the
/// convex scalarizations form a cone bounded by sampled directions.
fn quad_map() -> impl Strategy<Value = VecMap> {
    (-1i32..=1, -1i32..=1, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(a1, a2, l1, l2)| {
        let c1 = format!("{}*pow(x1,2) + ({:.2})*x1", 0.5 * a1 as f64, l1);
        let c2 = format!("{}*pow(x1,2) + ({:.2})*x1", 0.5 * a2 as f64, l2);
        VecMap::parse(1, &[&c1, &c2], None).unwrap()
    })
}

fn x_grid() -> Grid {
    Grid::cube(1, -2.0, 2.0, 41).unwrap()
}

fn w_grid() -> Grid {
    Grid::cube(2, -2.0, 2.0, 21).unwrap()
}

/// A convex function of `(w1, w2)` from separable pieces plus an optional coupling term.
fn convex_outer() -> impl Strategy<Value = String> {
    let piece = |v: &'static str| {
        prop_oneof![
            (0.1f64..0.5, -0.5f64..0.5).prop_map(move |(a, c)| format!("{a:.2}*pow({v} - ({c:.2}),2)")),
            (0.2f64..1.0, -0.5f64..0.5).prop_map(move |(a, c)| format!("{a:.2}*abs({v} - ({c:.2}))")),
            (0.1f64..1.0).prop_map(move |a| format!("{a:.2}*max({v}, 0)")),
            (-1.0f64..1.0).prop_map(move |a| format!("({a:.2})*{v}")),
        ]
    };
    (piece("w1"), piece("w2"), 0.0f64..0.3).prop_map(|(a, b, c)| format!("{a} + {b} + {c:.2}*pow(w1 - w2,2)"))
}

fn sampled(expr: &str, grid: &Grid) -> GridFn {
    sample(&FunctionExpr::parse(expr).unwrap(), grid).unwrap()
}

/// Largest `g(w−s) − 2g(w) + g(w+s)` over finite triples, `s` one lattice step along `ray`.
fn max_second_difference(g: &GridFn, ray: &[f64]) -> f64 {
    let grid = &g.grid;
    let scale = (0..2).map(|k| ray[k].abs() / grid.axis(k).spacing()).fold(0.0, f64::max);
    let s: Vec<f64> = ray.iter().map(|a| a / scale).collect();
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let w = grid.node(i);
        let lo: Vec<f64> = w.iter().zip(&s).map(|(a, b)| a - b).collect();
        let hi: Vec<f64> = w.iter().zip(&s).map(|(a, b)| a + b).collect();
        let (Some(a), Some(b)) = (grid.locate(&lo), grid.locate(&hi)) else { continue };
        if let (Some(x), Some(y), Some(z)) = (g.values[a].value(), g.values[i].value(), g.values[b].value()) {
            worst = worst.max(x - 2.0 * y + z);
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn k_convexity_is_monotone_in_k(map in quad_map(), k1 in lattice_cone2(), extra in prop::collection::vec(lattice_dir(), 0..2)) {
        let mut rays = k1.rays().to_vec();
        rays.extend(extra);
        let k2 = Cone::new(2, rays).unwrap();
        let (big, _) = is_k_convex(&map, &k2, &x_grid()).unwrap();
        let (small, _) = is_k_convex(&map, &k1, &x_grid()).unwrap();
        prop_assert!(!small || big);
    }

    #[test]
    fn regularization_is_idempotent(g in convex_outer(), k in lattice_cone2()) {
        let gk = monotone_regularize(&sampled(&g, &w_grid()), &k).unwrap();
        prop_assume!(gk.minus_inf_nodes.is_empty());
        let gkk = monotone_regularize(&gk.fun, &k).unwrap();
        prop_assert!(gkk.minus_inf_nodes.is_empty());
        prop_assert_eq!(gkk.fun.values, gk.fun.values);
    }

    #[test]
    fn regularization_preserves_convexity(g in convex_outer(), k in lattice_cone2()) {
        let h = sampled(&g, &w_grid());
        prop_assert!(h.is_discretely_convex(1e-9));
        let gk = monotone_regularize(&h, &k).unwrap();
        prop_assume!(gk.minus_inf_nodes.is_empty());
        // Minimizing over lattice steps rounds the optimal step count, which costs at most
        // half a second difference of g along one step.
        let tol = 0.5 * k.rays().iter().map(|r| max_second_difference(&h, r)).fold(1e-9, f64::max);
        prop_assert!(gk.fun.is_discretely_convex(tol), "{:?}", gk.fun.midpoint_violation(tol));
        prop_assert!(kconv::is_k_increasing(&gk.fun, &k, None).unwrap());
    }

    #[test]
    fn regularized_conjugate_matches_masked_conjugate(g in convex_outer(), k in lattice_cone2()) {
        let h = sampled(&g, &w_grid());
        prop_assume!(monotone_regularize(&h, &k).unwrap().minus_inf_nodes.is_empty());
        let dual = Grid::cube(2, -4.0, 4.0, 41).unwrap();
        let r = kconv::regularized_conjugate_check(&h, &k, &dual, Method::FastLLT).unwrap();
        prop_assert!(r.n_compared > 0);
        prop_assert!(r.max_abs_dev <= 1e-6, "{r:?}");
        prop_assert_eq!(r.domain_mismatch, 0);
    }
}

#[test]
fn k_f_estimate_agrees_with_direct_test() {
    let mut r = common::rng(11);
    let cones = ["0", "R+x0", "0xR+", "R+xR+", "R+xR", "R-x0", "R-xR+", "full"];
    let mut agree = 0;
    for t in 0..20 {
        let a1 = r.random_range(-1..=1) as f64 * 0.5;
        let a2 = r.random_range(-1..=1) as f64 * 0.5;
        let map = VecMap::parse(1, &[&format!("{a1}*pow(x1,2) + 0.3*x1"), &format!("{a2}*pow(x1,2) - 0.2*x1")], None).unwrap();
        let k = Cone::from_shorthand(cones[t % cones.len()], 2).unwrap();
        let kf = k_f_estimate(&map, &x_grid(), kconv::default_ray_samples(2)).unwrap();
        let (direct, _) = is_k_convex(&map, &k, &x_grid()).unwrap();
        assert_eq!(direct, kf.is_subset_of(&k, 1e-6).unwrap(), "a = ({a1}, {a2}), K = {}", cones[t % cones.len()]);
        agree += 1;
    }
    assert_eq!(agree, 20);
}

/// When the estimates say `K_F ⊆ −hzn(g)`, the perturbation function is jointly convex.
#[test]
fn compatible_cones_give_joint_convexity() {
    let mut r = common::rng(5);
    let outers = ["0.4*max(w1,0) + 0.3*pow(w2,2)", "0 if w1 <= 1 else inf", "0.5*w1 + abs(w2)", "0.3*pow(w1,2) + abs(w2)"];
    let mut certified = 0;
    for t in 0..24 {
        let a = r.random_range(-1..=1) as f64 * 0.5;
        let b = (r.random_range(-1.0..1.0f64) * 100.0).round() / 100.0;
        let g = outers[t % outers.len()];
        let s = Scenario::from_json(
            &json!({
                "name": "kcompat",
                "g": g,
                "F": {"components": [format!("{a}*pow(x1,2)"), format!("({b})*x1")]},
                "grids": {"x": "-2:2:21", "v": "-2:2:21", "u": "-2:2:21,-2:2:21", "w": "-2:2:21,-2:2:21", "y": "-4:4:41,-4:4:41"},
            })
            .to_string(),
        )
        .unwrap();
        let p = s.problem().unwrap();
        let est = cone_estimates(&p.map, &p.grids.x, p.g_sampled(), kconv::default_ray_samples(2)).unwrap();
        if est.kf_kg_nonempty {
            certified += 1;
            let bad = p.perturbation().midpoint_violation(4000, t as u64, 1e-9);
            assert!(bad.is_none(), "g = {g}, a = {a}: {bad:?}");
        }
    }
    assert!(certified >= 6, "only {certified} compatible pairs");
}
