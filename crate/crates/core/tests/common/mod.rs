#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use compconj::conjugate::Method;
use compconj::harness::Scenario;
use compconj::{Grid, GridFn};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two-decimal constant; keeps expressions readable and lattice-friendly.
fn c(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (r.random_range(lo..hi) * 100.0).round() / 100.0
}

fn lit(x: f64) -> String {
    let x = x + 0.0;
    if x < 0.0 {
        format!("({x})")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// n = m = 1, convex composite.
    Convex1,
    /// n = m = 1, no convexity imposed.
    Any1,
    /// n = 2, m = 1, convex composite.
    Convex2,
    /// n = 1, m = 2, convex composite with a monotone g.
    Convex12,
}

fn convex_f0(r: &mut ChaCha8Rng, n: usize) -> String {
    let x = |k: usize| format!("x{k}");
    match r.random_range(0..4) {
        0 => "0".into(),
        1 => (1..=n).map(|k| format!("{}*pow({},2)", lit(c(r, 0.1, 0.6)), x(k))).collect::<Vec<_>>().join(" + "),
        2 => format!("{}*abs(x1 - {})", lit(c(r, 0.2, 1.0)), lit(c(r, -0.5, 0.5))),
        _ => format!("{}*x1", lit(c(r, -0.8, 0.8))),
    }
}

/// Convex nondecreasing outer function of one variable named `var`.
fn increasing_g(r: &mut ChaCha8Rng, var: &str) -> String {
    match r.random_range(0..4) {
        0 => format!("{}*max({var} - {}, 0) + {}*{var}", lit(c(r, 0.2, 1.0)), lit(c(r, -0.5, 0.5)), lit(c(r, 0.0, 0.5))),
        1 => format!("{}*{var}", lit(c(r, 0.1, 1.0))),
        2 => format!("0 if {var} <= {} else inf", lit(c(r, 0.6, 1.5))),
        _ => format!("{}*pow(max({var},0),2) + {}*{var}", lit(c(r, 0.1, 0.4)), lit(c(r, 0.0, 0.4))),
    }
}

fn convex_g(r: &mut ChaCha8Rng, var: &str) -> String {
    match r.random_range(0..3) {
        0 => format!("{}*pow({var} - {},2)", lit(c(r, 0.1, 0.5)), lit(c(r, -0.5, 0.5))),
        1 => format!("{}*abs({var} - {})", lit(c(r, 0.2, 1.0)), lit(c(r, -0.5, 0.5))),
        _ => increasing_g(r, var),
    }
}

/// A random scenario on small grids; no expectations beyond the built-in chain checks.
pub fn random_scenario(seed: u64, shape: Shape) -> Scenario {
    let mut r = rng(seed);
    let r = &mut r;
    let (n, m, f0, g, comps): (usize, usize, String, String, Vec<String>) = match shape {
        Shape::Convex1 | Shape::Any1 => {
            let f0 = if shape == Shape::Any1 && r.random_bool(0.3) {
                format!("{}*pow(x1,2) - {}*pow(x1,4)/16", lit(c(r, 0.1, 0.5)), lit(c(r, 0.1, 0.5)))
            } else {
                convex_f0(r, 1)
            };
            if r.random_bool(0.5) {
                let comp = format!("{}*pow(x1,2) + {}*x1 + {}", lit(c(r, 0.1, 0.5)), lit(c(r, -0.5, 0.5)), lit(c(r, -0.5, 0.5)));
                let g = if shape == Shape::Any1 && r.random_bool(0.4) {
                    format!("{}*abs(w1)", lit(c(r, -0.6, -0.1)))
                } else {
                    increasing_g(r, "w1")
                };
                (1, 1, f0, g, vec![comp])
            } else {
                let comp = format!("{}*x1 + {}", lit(c(r, -1.0, 1.0)), lit(c(r, -0.5, 0.5)));
                (1, 1, f0, convex_g(r, "w1"), vec![comp])
            }
        }
        Shape::Convex2 => {
            let comp = format!(
                "{}*pow(x1,2) + {}*pow(x2,2) + {}*x2",
                lit(c(r, 0.1, 0.4)),
                lit(c(r, 0.0, 0.4)),
                lit(c(r, -0.5, 0.5))
            );
            (2, 1, convex_f0(r, 2), increasing_g(r, "w1"), vec![comp])
        }
        Shape::Convex12 => {
            let c1 = format!("{}*pow(x1,2)", lit(c(r, 0.1, 0.5)));
            let c2 = format!("{}*x1", lit(c(r, -1.0, 1.0)));
            let g = format!("({}) + ({})", increasing_g(r, "w1"), convex_g(r, "w2"));
            (1, 2, convex_f0(r, 1), g, vec![c1, c2])
        }
    };
    let (xn, yn) = if n == 1 && m == 1 { (41, 81) } else { (21, 41) };
    let axes = |d: usize, lo: f64, hi: f64, k: usize| vec![format!("{lo}:{hi}:{k}"); d].join(",");
    let v = json!({
        "name": format!("random-{shape:?}-{seed}"),
        "citation": "randomized",
        "f0": f0,
        "g": g,
        "F": {"components": comps},
        "grids": {
            "x": axes(n, -2.0, 2.0, xn),
            "v": axes(n, -2.0, 2.0, xn),
            "u": axes(m, -2.0, 2.0, xn),
            "w": axes(m, -2.0, 2.0, xn),
            "y": axes(m, -4.0, 4.0, yn),
        },
        "pipeline": {"kconv": false, "battery": false},
    });
    Scenario::from_json(&v.to_string()).expect("generated scenario parses")
}

/// A random piecewise-smooth function on `grid`, sometimes with a restricted domain.
pub fn random_gridfn(r: &mut ChaCha8Rng, grid: &Grid) -> GridFn {
    let d = grid.dim();
    let a: Vec<f64> = (0..d).map(|_| r.random_range(0.0..1.5)).collect();
    let b: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    let k: Vec<f64> = (0..d).map(|_| r.random_range(0.0..1.0)).collect();
    let ctr: Vec<f64> = (0..d).map(|_| r.random_range(-0.5..0.5)).collect();
    let wiggle = r.random_range(0.0..0.4);
    let cut = if r.random_bool(0.3) { Some(r.random_range(-0.5..1.5)) } else { None };
    GridFn::from_fn(grid.clone(), |x| {
        if let Some(t) = cut {
            if x[0] > t {
                return compconj::ExtReal::PlusInf;
            }
        }
        let mut s = 0.0;
        for i in 0..d {
            s += a[i] * x[i] * x[i] + b[i] * x[i] + k[i] * (x[i] - ctr[i]).abs();
        }
        s += wiggle * (3.0 * x[0]).sin();
        compconj::ExtReal::finite(s)
    })
}

pub const METHODS: [Method; 2] = [Method::BruteForce, Method::FastLLT];

/// Polyhedral `dom g` in ℝ²: expression for g and its V-representation.
fn polyhedral_outer(r: &mut ChaCha8Rng) -> (String, serde_json::Value) {
    let a = r.random_range(-1..=1) as f64;
    let b = r.random_range(-1..=1) as f64;
    let (la, lb) = (lit(a), lit(b));
    match r.random_range(0..5) {
        0 => (format!("0 if w1 <= {la} else inf"), json!({"points": [[a, 0.0]], "rays": [[-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]})),
        1 => (
            format!("0 if w1 >= {la} and w2 >= {lb} else inf"),
            json!({"points": [[a, b]], "rays": [[1.0, 0.0], [0.0, 1.0]]}),
        ),
        2 => (format!("0 if abs(w2 - {lb}) <= 1e-9 else inf"), json!({"points": [[0.0, b]], "rays": [[1.0, 0.0], [-1.0, 0.0]]})),
        3 => (
            format!("0 if abs(w1 - {la}) <= 1e-9 and abs(w2 - {lb}) <= 1e-9 else inf"),
            json!({"points": [[a, b]], "rays": []}),
        ),
        _ => ("abs(w1) + abs(w2)".into(), json!({"points": [[0.0, 0.0]], "rays": [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]})),
    }
}

/// f0 ≡ 0, affine `F: ℝ → ℝ²` and a polyhedral `dom g`, both declared exactly. Points of
/// `dom g ∘ F` lie in [−2, 2], so the x-grid reaches to ±3 to keep them off its boundary.
pub fn exact_vrep_scenario(seed: u64) -> Scenario {
    let mut r = rng(seed);
    let r = &mut r;
    let (g, dom_g) = polyhedral_outer(r);
    let d = [r.random_range(-1..=1) as f64, r.random_range(-1..=1) as f64];
    let c = [r.random_range(-1..=1) as f64, r.random_range(-1..=1) as f64];
    let comps: Vec<String> = (0..2).map(|k| format!("{}*x1 + {}", lit(d[k]), lit(c[k]))).collect();
    let image = if d == [0.0, 0.0] {
        json!({"points": [c], "rays": []})
    } else {
        json!({"points": [c], "rays": [d, [-d[0], -d[1]]]})
    };
    let v = json!({
        "name": format!("vrep-{seed}"),
        "citation": "randomized polyhedral",
        "g": g,
        "F": {"components": comps},
        "grids": {"x": "-3:3:31", "v": "-2:2:21", "u": "-2:2:21,-2:2:21", "w": "-2:2:21,-2:2:21", "y": "-4:4:41,-4:4:41"},
        "flags": {"polyhedral_domg": true, "polyhedral_F": true, "f_gamma0": true},
        "vrep": {"dom_g": dom_g, "image_F": image},
        "pipeline": {"kconv": false},
    });
    Scenario::from_json(&v.to_string()).expect("generated scenario parses")
}
