use compconj::cones::{Cone, Elem};
use compconj::conjugate::{self, Method, TransformConfig};
use compconj::Grid;
use proptest::prelude::*;

const TOL: f64 = 1e-7;

fn ray(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("nonzero", |r| r.iter().map(|a| a * a).sum::<f64>() > 1e-2)
}

fn cone_in(dim: usize) -> impl Strategy<Value = Cone> {
    prop::collection::vec(ray(dim), 0..4).prop_map(move |rays| Cone::new(dim, rays).unwrap())
}

fn any_cone() -> impl Strategy<Value = Cone> {
    prop_oneof![cone_in(2), cone_in(3)]
}

fn mutually_contained(a: &Cone, b: &Cone) -> bool {
    a.is_subset_of(b, TOL).unwrap() && b.is_subset_of(a, TOL).unwrap()
}

/// A nonnegative combination of the generators.
fn member(k: &Cone, w: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; k.dim()];
    for (r, c) in k.rays().iter().zip(w) {
        for (xi, ri) in x.iter_mut().zip(r) {
            *xi += c * ri;
        }
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn polar_involution(k in any_cone()) {
        let kpp = k.polar().unwrap().polar().unwrap();
        prop_assert!(mutually_contained(&k, &kpp), "{k:?} vs {kpp:?}");
    }

    #[test]
    fn polar_reverses_inclusion(k1 in cone_in(2), extra in prop::collection::vec(ray(2), 0..3)) {
        let mut rays = k1.rays().to_vec();
        rays.extend(extra);
        let k2 = Cone::new(2, rays).unwrap();
        prop_assert!(k1.is_subset_of(&k2, TOL).unwrap());
        prop_assert!(k2.polar().unwrap().is_subset_of(&k1.polar().unwrap(), TOL).unwrap());
    }

    #[test]
    fn k_order_is_reflexive_and_transitive(
        k in cone_in(3),
        x in prop::collection::vec(-2.0f64..2.0, 3),
        w1 in prop::collection::vec(0.0f64..2.0, 4),
        w2 in prop::collection::vec(0.0f64..2.0, 4),
        z in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        prop_assert!(k.k_leq(&x, &Elem::Point(x.clone()), TOL).unwrap());
        prop_assert!(k.k_leq(&x, &Elem::Inf, TOL).unwrap());
        let a = member(&k, &w1);
        let b = member(&k, &w2);
        let y: Vec<f64> = x.iter().zip(&a).map(|(p, q)| p + q).collect();
        let zz: Vec<f64> = y.iter().zip(&b).map(|(p, q)| p + q).collect();
        prop_assert!(k.k_leq(&x, &Elem::Point(y.clone()), TOL).unwrap());
        prop_assert!(k.k_leq(&y, &Elem::Point(zz.clone()), TOL).unwrap());
        prop_assert!(k.k_leq(&x, &Elem::Point(zz), TOL).unwrap());
        let xy = k.k_leq(&x, &Elem::Point(y.clone()), TOL).unwrap();
        let yz = k.k_leq(&y, &Elem::Point(z.clone()), TOL).unwrap();
        if xy && yz {
            prop_assert!(k.k_leq(&x, &Elem::Point(z), 1e-6).unwrap());
        }
    }

    #[test]
    fn support_function_of_indicator(k in cone_in(2)) {
        let g = Grid::cube(2, -2.0, 2.0, 21).unwrap();
        let dual = Grid::cube(2, -2.0, 2.0, 21).unwrap();
        let ind = k.indicator_grid(&g, false).unwrap();
        let s = conjugate::conjugate(&ind, &TransformConfig::for_fn(&ind, Method::FastLLT, dual.clone())).unwrap();
        let polar = k.polar().unwrap();
        for j in 0..dual.len() {
            let v = s.values[j].to_f64();
            prop_assert!(v >= -1e-12);
            if polar.contains(&dual.node(j), 1e-9).unwrap() {
                prop_assert!(v.abs() <= 1e-9, "sigma = {v} on the polar");
            }
        }
    }
}

#[test]
fn support_function_positive_off_polar_for_lattice_cones() {
    let g = Grid::cube(2, -2.0, 2.0, 21).unwrap();
    for name in ["R+x0", "0xR", "R+xR", "R-xR", "full"] {
        let k = Cone::from_shorthand(name, 2).unwrap();
        let ind = k.indicator_grid(&g, false).unwrap();
        let s = conjugate::conjugate(&ind, &TransformConfig::for_fn(&ind, Method::BruteForce, g.clone())).unwrap();
        let polar = k.polar().unwrap();
        for j in 0..g.len() {
            let v = g.node(j);
            if polar.distance(&v).unwrap() > 0.05 {
                assert!(s.values[j].to_f64() > 0.0, "{name} at {v:?}");
            }
        }
    }
}
