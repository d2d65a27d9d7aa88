mod common;

use compconj::qual::battery::{BURKE, GENERAL, PWLQ_MEMBERSHIP, ZERO_IN_RINT_U, ZERO_IN_U};
use compconj::qual::{qualification_battery, simplex, BatteryMode, Mode, VRepSet};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    (-4i32..=4).prop_map(|k| k as f64 * 0.5)
}

fn vrep2() -> impl Strategy<Value = VRepSet> {
    let pt = prop::collection::vec(coord(), 2);
    let ray = prop::collection::vec(-1i32..=1, 2)
        .prop_filter("nonzero", |r| r.iter().any(|&a| a != 0))
        .prop_map(|r| r.into_iter().map(f64::from).collect::<Vec<f64>>());
    (prop::collection::vec(pt, 1..4), prop::collection::vec(ray, 0..3)).prop_map(|(p, r)| VRepSet::new(p, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn relative_interior_is_inside(s in vrep2(), x in prop::collection::vec(coord(), 2)) {
        if s.contains_rint(&x, None).unwrap() {
            prop_assert!(s.contains_point(&x).unwrap());
        }
        for p in &s.points {
            prop_assert!(s.contains_point(p).unwrap());
        }
    }

    #[test]
    fn simplex_is_deterministic_and_feasible(
        a in prop::collection::vec(prop::collection::vec(-3i32..=3, 4), 1..4),
        x in prop::collection::vec(0u32..4, 4),
    ) {
        let a: Vec<Vec<f64>> = a.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
        let b: Vec<f64> = a.iter().map(|r| r.iter().zip(&x).map(|(c, v)| c * *v as f64).sum()).collect();
        let s1 = simplex::feasible(&a, &b, 1e-9).expect("a feasible point exists");
        let s2 = simplex::feasible(&a, &b, 1e-9).unwrap();
        prop_assert_eq!(s1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), s2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert!(s1.iter().all(|&v| v >= -1e-9));
        for (row, bi) in a.iter().zip(&b) {
            let lhs: f64 = row.iter().zip(&s1).map(|(c, v)| c * v).sum();
            prop_assert!((lhs - bi).abs() <= 1e-7);
        }
    }
}

#[test]
fn simplex_rejects_infeasible_systems() {
    assert!(simplex::feasible(&[vec![1.0, 1.0]], &[-1.0], 1e-9).is_none());
    assert!(simplex::feasible(&[vec![1.0, 0.0], vec![1.0, 0.0]], &[1.0, 2.0], 1e-9).is_none());
}

#[test]
fn exact_lemma_equivalences() {
    let (mut rint_true, mut rint_false) = (0, 0);
    for seed in 0..40 {
        let s = common::exact_vrep_scenario(seed);
        let p = s.problem().unwrap();
        let r = qualification_battery(&p, None, None, BatteryMode::Exact).unwrap();
        for name in [ZERO_IN_U, ZERO_IN_RINT_U, GENERAL, PWLQ_MEMBERSHIP, BURKE] {
            assert_eq!(r.get(name).unwrap().mode, Mode::Exact, "{name}");
        }
        let v = |n: &str| r.verdict(n).unwrap();
        assert_eq!(v(ZERO_IN_RINT_U), v(GENERAL), "seed {seed}: {}", s.g.source());
        assert_eq!(v(ZERO_IN_U), v(PWLQ_MEMBERSHIP), "seed {seed}: {}", s.g.source());
        assert!(!v(GENERAL) || v(PWLQ_MEMBERSHIP));
        assert!(!v(BURKE) || v(PWLQ_MEMBERSHIP));
        if v(ZERO_IN_RINT_U) {
            rint_true += 1;
        } else {
            rint_false += 1;
        }
    }
    assert!(rint_true > 0 && rint_false > 0, "{rint_true} / {rint_false}");
}

#[test]
fn battery_is_deterministic() {
    for seed in 0..5 {
        let p = common::exact_vrep_scenario(seed).problem().unwrap();
        let a = qualification_battery(&p, None, None, BatteryMode::Auto).unwrap();
        let b = qualification_battery(&p, None, None, BatteryMode::Auto).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn exact_mode_requires_declarations() {
    let p = common::random_scenario(1, common::Shape::Convex12).problem().unwrap();
    assert!(qualification_battery(&p, None, None, BatteryMode::Exact).is_err());
    let r = qualification_battery(&p, None, None, BatteryMode::Auto).unwrap();
    assert_eq!(r.get(ZERO_IN_U).unwrap().mode, Mode::Approximate);
    assert!(!r.equality_certificate);
}
