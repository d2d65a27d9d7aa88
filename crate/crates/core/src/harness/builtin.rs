//! Built-in worked examples.

use std::collections::BTreeMap;

use crate::composite::{Grids, VRepDecls};
use crate::cones::ConeDecl;
use crate::conjugate::Method;
use crate::error::{Error, Result};
use crate::expr::FunctionExpr;
use crate::grid::Grid;
use crate::harness::scenario::*;
use crate::qual::VRepSet;

pub const EXAMPLES: &[&str] =
    &["ex51", "ex51-repaired", "ex52", "ex52-repaired", "ex53", "nonattain-dual", "nonattain-primal"];

fn e(s: &str) -> FunctionExpr {
    FunctionExpr::parse(s).expect("built-in expression parses")
}

fn grid(dim: usize, lo: f64, hi: f64, n: usize) -> Grid {
    Grid::cube(dim, lo, hi, n).expect("built-in grid is valid")
}

/// x, u, w, v on `[−4,4]` with 81 nodes per axis; y on `[−8,8]` with 161.
fn default_grids(n: usize, m: usize) -> Grids {
    Grids {
        x: grid(n, -4.0, 4.0, 81),
        u: grid(m, -4.0, 4.0, 81),
        w: grid(m, -4.0, 4.0, 81),
        v: grid(n, -4.0, 4.0, 81),
        y: grid(m, -8.0, 8.0, 161),
    }
}

fn cone(s: &str) -> ConeDecl {
    ConeDecl::Named(s.into())
}

fn verdicts(items: &[(&str, bool)]) -> BTreeMap<String, bool> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn map(components: &[&str]) -> MapDecl {
    MapDecl { components: components.iter().map(|c| e(c)).collect(), guard: None }
}

fn scenario(name: &str, citation: &str, g: &str, components: &[&str], grids: Grids) -> Scenario {
    Scenario {
        name: name.into(),
        citation: citation.into(),
        f0: FunctionExpr::constant(0.0),
        g: e(g),
        map: map(components),
        grids,
        method: Method::FastLLT,
        cone: None,
        flags: ScenarioFlags::default(),
        vrep: VRepDecls::default(),
        pwlq: None,
        probes: Vec::new(),
        pipeline: Pipeline::default(),
        expected: Expected::default(),
        tolerances: Tolerances::default(),
    }
}

fn half_plane_r_plus() -> VRepSet {
    VRepSet::cone(2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]])
}

fn vertical_line() -> VRepSet {
    VRepSet::cone(2, vec![vec![0.0, 1.0], vec![0.0, -1.0]])
}

const ORIGIN_2D: &str = "0 if abs(v1) <= 1e-9 and abs(v2) <= 1e-9 else inf";
const HALF_SQUARE_ON_AXIS: &str = "0.5*pow(v1,2) if abs(v2) <= 1e-9 else inf";
const ON_AXIS: &str = "0 if abs(v2) <= 1e-9 else inf";

const CITE_51: &str = "Variant of Burke et al., Example 1: g(w) = w1^3/3 on w1 >= 0, F(x) = (0, x2)";
const CITE_52: &str = "Gissler's Example 58: g(w) = |w1|, F(x) = (x1^2/2, x2)";
const CITE_53: &str = "Square-root example: g(w) = -sqrt(w1 w2) on the nonnegative quadrant, rge F = R+ x {0}";
const CITE_A1: &str = "Non-attainment example with f(x,u) = x + indicator(x^2 + u <= 0)";
const CITE_A2: &str = "Non-attainment example with f(x,u) = exp(x) + u";

fn ex51() -> Scenario {
    let mut s = scenario("ex51", CITE_51, "pow(w1,3)/3 if w1 >= 0 else inf", &["0", "x2"], default_grids(2, 2));
    s.cone = Some(cone("0xR"));
    s.flags = ScenarioFlags { polyhedral_domg: true, polyhedral_f: true, f_gamma0: true, pwlq_f: Some(true) };
    s.vrep = VRepDecls { dom_g: Some(half_plane_r_plus()), image_f: Some(vertical_line()), ..Default::default() };
    s.expected = Expected {
        g_star: Some(e("2/3*pow(v1,1.5) if v1 >= 0 and abs(v2) <= 1e-9 else (0 if abs(v2) <= 1e-9 else inf)")),
        rho_domain: Some(e(ORIGIN_2D)),
        k_f: Some(cone("0")),
        hzn_g: Some(cone("0xR")),
        k_increasing: vec![
            KIncreasingExpect { cone: cone("R+x0"), on_range: false, expected: false },
            KIncreasingExpect { cone: cone("R+x0"), on_range: true, expected: true },
        ],
        verdicts: verdicts(&[
            ("zero_in_U", true),
            ("zero_in_rint_U", false),
            ("rint_domg_meets_rint_image_plus_K", false),
            ("K_in_KF_and_Kg", true),
            ("f_is_pwlq", false),
            ("equality_certificate", false),
        ]),
        chain_rule: vec![ChainRuleExpect { x: vec![0.0, 0.0], lhs: Some(vec![vec![0.0, 0.0]]), equality: None }],
        ..Default::default()
    };
    s
}

fn ex51_repaired() -> Scenario {
    let mut s = scenario("ex51-repaired", CITE_51, "pow(w1,3)/3 if w1 >= 0 else 0", &["0", "x2"], default_grids(2, 2));
    s.cone = Some(cone("R+x0"));
    s.flags = ScenarioFlags { polyhedral_domg: true, polyhedral_f: true, f_gamma0: true, pwlq_f: None };
    s.vrep = VRepDecls { dom_g: Some(VRepSet::full(2)), image_f: Some(vertical_line()), ..Default::default() };
    s.expected = Expected {
        g_star: Some(e("2/3*pow(v1,1.5) if v1 >= 0 and abs(v2) <= 1e-9 else inf")),
        rho_domain: Some(e(ORIGIN_2D)),
        eta_domain: Some(e(ORIGIN_2D)),
        g_k: Some(e("pow(w1,3)/3 if w1 >= 0 else 0")),
        g_k_improper: Some(false),
        verdicts: verdicts(&[
            ("zero_in_U", true),
            ("zero_in_rint_U", true),
            ("rint_domg_meets_rint_image_plus_K", true),
            ("K_in_KF_and_Kg", true),
            ("equality_certificate", true),
        ]),
        chain_rule: vec![ChainRuleExpect { x: vec![0.0, 0.0], lhs: Some(vec![vec![0.0, 0.0]]), equality: Some(true) }],
        ..Default::default()
    };
    s
}

fn ex52_common(name: &str, g: &str) -> Scenario {
    let mut s = scenario(name, CITE_52, g, &["0.5*pow(x1,2)", "x2"], default_grids(2, 2));
    s.cone = Some(cone("R+x0"));
    s.vrep = VRepDecls { dom_g: Some(VRepSet::full(2)), image_f: Some(half_plane_r_plus()), ..Default::default() };
    s.expected.composite_conjugate = Some(e(HALF_SQUARE_ON_AXIS));
    s.expected.rho = Some(e(HALF_SQUARE_ON_AXIS));
    s.expected.eta_domain = Some(e(ON_AXIS));
    s.expected.k_f = Some(cone("R+x0"));
    s.expected.optimality =
        vec![OptimalityExpect { v: vec![1.0, 0.0], x: vec![1.0, 0.0], y: vec![1.0, 0.0], eq15_holds: true, eq16_holds: true }];
    s
}

fn ex52() -> Scenario {
    let mut s = ex52_common("ex52", "abs(w1)");
    s.flags = ScenarioFlags { polyhedral_domg: true, polyhedral_f: true, f_gamma0: false, pwlq_f: None };
    let x = &mut s.expected;
    x.g_star_domain = Some(e("0 if abs(v1) <= 1 + 1e-9 and abs(v2) <= 1e-9 else inf"));
    x.hzn_g = Some(cone("0xR"));
    x.kf_kg_nonempty = Some(false);
    x.g_k = Some(e("max(w1,0)"));
    x.g_k_improper = Some(false);
    x.g_k_star_domain = Some(e("0 if v1 >= -1e-9 and v1 <= 1 + 1e-9 and abs(v2) <= 1e-9 else inf"));
    x.verdicts = verdicts(&[
        ("zero_in_U", true),
        ("zero_in_rint_U", true),
        ("K_in_KF_and_Kg", false),
        ("equality_certificate", false),
    ]);
    x.chain_rule = vec![ChainRuleExpect { x: vec![0.0, 0.0], lhs: Some(vec![vec![0.0, 0.0]]), equality: None }];
    s
}

fn ex52_repaired() -> Scenario {
    let mut s = ex52_common("ex52-repaired", "max(w1,0)");
    s.flags = ScenarioFlags { polyhedral_domg: true, polyhedral_f: true, f_gamma0: true, pwlq_f: Some(false) };
    let x = &mut s.expected;
    x.g_star_domain = Some(e("0 if v1 >= -1e-9 and v1 <= 1 + 1e-9 and abs(v2) <= 1e-9 else inf"));
    x.hzn_g = Some(cone("R-xR"));
    x.kf_kg_nonempty = Some(true);
    x.verdicts = verdicts(&[
        ("zero_in_U", true),
        ("zero_in_rint_U", true),
        ("rint_domg_meets_rint_image_plus_K", true),
        ("K_in_KF_and_Kg", true),
        ("equality_certificate", true),
    ]);
    x.chain_rule = [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]]
        .iter()
        .map(|p| ChainRuleExpect { x: p.to_vec(), lhs: Some(vec![p.to_vec()]), equality: Some(true) })
        .collect();
    s
}

fn ex53() -> Scenario {
    let grids = Grids {
        x: grid(1, -4.0, 4.0, 81),
        u: grid(2, -4.0, 4.0, 81),
        w: grid(2, -4.0, 4.0, 81),
        v: grid(1, -4.0, 4.0, 81),
        y: grid(2, -8.0, 8.0, 161),
    };
    let mut s =
        scenario("ex53", CITE_53, "-sqrt(w1*w2) if w1 >= 0 and w2 >= 0 else inf", &["pow(x1,2)", "0"], grids);
    s.cone = Some(cone("R+x0"));
    s.expected = Expected {
        g_k_improper: Some(true),
        g_range_k_domain: Some(e("0 if abs(w2) <= 1e-9 else inf")),
        k_f: Some(cone("R+x0")),
        ..Default::default()
    };
    s
}

fn one_d(x: (f64, f64, usize), y: (f64, f64, usize)) -> Grids {
    Grids {
        x: grid(1, x.0, x.1, x.2),
        u: grid(1, -4.0, 4.0, 81),
        w: grid(1, -4.0, 4.0, 81),
        v: grid(1, -4.0, 4.0, 81),
        y: grid(1, y.0, y.1, y.2),
    }
}

fn nonattain_dual() -> Scenario {
    let mut s = scenario(
        "nonattain-dual",
        CITE_A1,
        "0 if w1 <= 0 else inf",
        &["pow(x1,2)"],
        one_d((-4.0, 4.0, 401), (-4.0, 256.0, 261)),
    );
    s.f0 = e("x1");
    s.flags.f_gamma0 = true;
    // The primal slice is infinitely steep at u = 0; a fine u-grid resolves its conjugate.
    s.grids.u = grid(1, -4.0, 4.0, 801);
    s.expected = Expected {
        primal_slices: vec![SliceExpect { at: vec![0.0], expr: e("-sqrt(-u1) if u1 <= 0 else inf") }],
        dual_slices: vec![SliceExpect { at: vec![0.0], expr: e("0") }],
        probes: vec![ProbeExpect {
            v: vec![0.0],
            u: vec![0.0],
            p: Some(0.0),
            q: Some(0.0),
            p_set: Some(vec![vec![0.0]]),
            primal_attained: Some(true),
            dual_attained: Some(false),
            boundary_suspect: Some(true),
            ..Default::default()
        }],
        f_star: vec![
            FStarExpect { v: vec![0.0], y: vec![1.0], value: 0.25 },
            FStarExpect { v: vec![1.0], y: vec![0.0], value: 0.0 },
        ],
        primal_subdiff: vec![SubdiffExpect { v: vec![0.0], u: vec![0.0], points: vec![], boundary_suspect: Some(true) }],
        ..Default::default()
    };
    s
}

fn nonattain_primal() -> Scenario {
    let mut s = scenario("nonattain-primal", CITE_A2, "w1", &["0"], one_d((-8.0, 8.0, 161), (-4.0, 4.0, 81)));
    s.f0 = e("exp(x1)");
    s.flags.f_gamma0 = true;
    s.expected = Expected {
        primal_slices: vec![SliceExpect { at: vec![0.0], expr: e("u1") }],
        probes: vec![ProbeExpect {
            v: vec![0.0],
            u: vec![0.0],
            p: Some(0.0),
            q: Some(0.0),
            q_set: Some(vec![vec![1.0]]),
            primal_attained: Some(false),
            dual_attained: Some(true),
            boundary_suspect: Some(true),
            ..Default::default()
        }],
        f_star: vec![FStarExpect { v: vec![1.0], y: vec![1.0], value: -1.0 }],
        ..Default::default()
    };
    s
}

/// The built-in scenario called `name`.
pub fn example(name: &str) -> Result<Scenario> {
    Ok(match name {
        "ex51" => ex51(),
        "ex51-repaired" => ex51_repaired(),
        "ex52" => ex52(),
        "ex52-repaired" => ex52_repaired(),
        "ex53" => ex53(),
        "nonattain-dual" => nonattain_dual(),
        "nonattain-primal" => nonattain_primal(),
        other => return Err(Error::UnknownExample(other.into())),
    })
}
