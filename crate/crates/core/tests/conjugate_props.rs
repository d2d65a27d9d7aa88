mod common;

use compconj::conjugate::{self, biconjugate, conjugate_flagged, fenchel_gap, inf_convolution, Method, TransformConfig};
use compconj::{ExtReal, Grid, GridFn};
use proptest::prelude::*;

fn grid(dim: usize, lo: f64, hi: f64, n: usize) -> Grid {
    Grid::cube(dim, lo, hi, n).unwrap()
}

/// Primal and dual grids for a random case: 1-D or 2-D.
fn grids(two_d: bool) -> (Grid, Grid) {
    if two_d {
        (grid(2, -2.0, 2.0, 17), grid(2, -3.0, 3.0, 19))
    } else {
        (grid(1, -2.0, 2.0, 41), grid(1, -4.0, 4.0, 61))
    }
}

fn case(seed: u64, two_d: bool) -> (GridFn, Grid) {
    let (g, d) = grids(two_d);
    (common::random_gridfn(&mut common::rng(seed), &g), d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fenchel_young_every_pair(seed in any::<u64>(), two_d in any::<bool>()) {
        let (h, d) = case(seed, two_d);
        for method in common::METHODS {
            let cfg = TransformConfig::for_fn(&h, method, d.clone());
            let hs = conjugate::conjugate(&h, &cfg).unwrap();
            for i in 0..h.len() {
                let x = h.grid.node(i);
                for j in 0..hs.len() {
                    let gap = fenchel_gap(&h, &hs, &x, &d.node(j)).unwrap();
                    prop_assert!(gap >= ExtReal::finite(-cfg.tol_fenchel), "gap {gap:?} at {i},{j}");
                }
            }
        }
    }

    #[test]
    fn order_reversal(seed in any::<u64>(), two_d in any::<bool>(), bump in 0.0f64..2.0) {
        let (h1, d) = case(seed, two_d);
        let h2 = GridFn::from_fn(h1.grid.clone(), |x| {
            let i = h1.grid.nearest(x);
            h1.values[i].add_real(bump * (1.0 + x[0].sin()))
        });
        let cfg = TransformConfig::for_fn(&h2, Method::FastLLT, d);
        let a = conjugate::conjugate(&h1, &cfg).unwrap();
        let b = conjugate::conjugate(&h2, &cfg).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(x.to_f64() >= y.to_f64() - 1e-9);
        }
    }

    #[test]
    fn conjugate_is_convex(seed in any::<u64>(), two_d in any::<bool>()) {
        let (h, d) = case(seed, two_d);
        let cfg = TransformConfig::for_fn(&h, Method::FastLLT, d);
        let hs = conjugate::conjugate(&h, &cfg).unwrap();
        prop_assert!(hs.is_discretely_convex(1e-9 * (1.0 + hs.gradient_estimate())));
    }

    #[test]
    fn biconjugate_below_and_idempotent(seed in any::<u64>(), two_d in any::<bool>()) {
        let (h, d) = case(seed, two_d);
        let cfg = TransformConfig::for_fn(&h, Method::FastLLT, d.clone());
        let hh = biconjugate(&h, &cfg).unwrap();
        for (a, b) in hh.values.iter().zip(&h.values) {
            prop_assert!(a.to_f64() <= b.to_f64() + cfg.tol_fenchel);
        }
        let cfg2 = TransformConfig::for_fn(&hh, Method::FastLLT, d);
        let hhhh = biconjugate(&hh, &cfg2).unwrap();
        for (a, b) in hhhh.values.iter().zip(&hh.values) {
            match (a.value(), b.value()) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= cfg.tol_fenchel),
                _ => prop_assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn brute_force_agrees_with_llt(seed in any::<u64>(), two_d in any::<bool>()) {
        let (h, d) = case(seed, two_d);
        let bf = TransformConfig::for_fn(&h, Method::BruteForce, d.clone());
        let llt = TransformConfig::for_fn(&h, Method::FastLLT, d);
        let a = conjugate_flagged(&h, &bf).unwrap();
        let b = conjugate_flagged(&h, &llt).unwrap();
        prop_assert_eq!(&a.truncation_suspect, &b.truncation_suspect);
        for (x, y) in a.fun.values.iter().zip(&b.fun.values) {
            match (x.value(), y.value()) {
                (Some(p), Some(q)) => prop_assert!((p - q).abs() <= bf.tol_fenchel, "{p} vs {q}"),
                _ => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn inf_convolution_conjugate_is_sum(seed in any::<u64>(), two_d in any::<bool>()) {
        let mut r = common::rng(seed);
        let dim = if two_d { 2 } else { 1 };
        let g1 = grid(dim, -2.0, 2.0, 21);
        let g2 = grid(dim, -1.0, 1.0, 11);
        let dual = grid(dim, -3.0, 3.0, 25);
        // Supports sized so that every sum of finite nodes stays inside g1.
        let a = common::random_gridfn(&mut r, &g1);
        let h1 = GridFn::from_fn(g1.clone(), |x| {
            if x.iter().all(|t| t.abs() <= 1.0 + 1e-9) { a.values[g1.nearest(x)] } else { ExtReal::PlusInf }
        });
        let b = common::random_gridfn(&mut r, &g2);
        let h2 = GridFn::from_fn(g2.clone(), |x| {
            if x.iter().all(|t| t.abs() <= 1.0 + 1e-9) && b.values[g2.nearest(x)].is_finite() {
                b.values[g2.nearest(x)]
            } else {
                ExtReal::PlusInf
            }
        });
        prop_assume!(!h1.domain().is_empty() && !h2.domain().is_empty());
        let conv = inf_convolution(&h1, &h2).unwrap();
        let c = |f: &GridFn| conjugate::conjugate(f, &TransformConfig::for_fn(f, Method::BruteForce, dual.clone())).unwrap();
        let (lhs, s1, s2) = (c(&conv), c(&h1), c(&h2));
        for j in 0..dual.len() {
            if let (Some(p), Some(q), Some(t)) = (lhs.values[j].value(), s1.values[j].value(), s2.values[j].value()) {
                prop_assert!((p - (q + t)).abs() <= 1e-9 * (1.0 + p.abs()), "{p} vs {}", q + t);
            }
        }
    }
}

#[test]
fn brute_force_agrees_with_llt_on_fifty_functions() {
    for seed in 0..50u64 {
        let (h, d) = case(seed, seed % 2 == 1);
        let bf = TransformConfig::for_fn(&h, Method::BruteForce, d.clone());
        let a = conjugate::conjugate(&h, &bf).unwrap();
        let b = conjugate::conjugate(&h, &TransformConfig::for_fn(&h, Method::FastLLT, d)).unwrap();
        let dev = a
            .values
            .iter()
            .zip(&b.values)
            .filter_map(|(x, y)| Some((x.value()? - y.value()?).abs()))
            .fold(0.0, f64::max);
        assert!(dev <= bf.tol_fenchel, "seed {seed}: {dev}");
    }
}

#[test]
fn truncation_flags_mark_linear_growth_beyond_the_box() {
    let g = grid(1, -2.0, 2.0, 41);
    let h = GridFn::from_fn(g.clone(), |x| ExtReal::finite(x[0].abs()));
    let fc = conjugate_flagged(&h, &TransformConfig::for_fn(&h, Method::FastLLT, grid(1, -3.0, 3.0, 61))).unwrap();
    for j in 0..fc.fun.len() {
        let v = fc.fun.grid.node(j)[0];
        if v.abs() > 1.2 {
            assert!(fc.effectively_infinite(j), "v = {v}");
        }
        if v.abs() < 0.8 {
            assert!(fc.reliable(j) && fc.fun.values[j].to_f64().abs() < 1e-12, "v = {v}");
        }
    }
}
