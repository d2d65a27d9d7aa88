//! Piecewise linear-quadratic functions and the PWLQ predicate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extreal::{ExtReal, PlusInf};
use crate::grid::Axis;

/// `⟨a, z⟩ ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

/// Quadratic `½⟨z,Az⟩ + ⟨q,z⟩ − u` on a polyhedron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    #[serde(default)]
    pub ineqs: Vec<Halfspace>,
    pub a: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlqFn {
    pub dim: usize,
    pub pieces: Vec<Piece>,
}

const MEMBER_TOL: f64 = 1e-9;

impl Piece {
    fn contains(&self, z: &[f64]) -> bool {
        self.ineqs.iter().all(|h| dot(&h.a, z) <= h.b + MEMBER_TOL * (1.0 + h.b.abs()))
    }

    fn value(&self, z: &[f64]) -> f64 {
        let mut quad = 0.0;
        for (i, row) in self.a.iter().enumerate() {
            quad += z[i] * dot(row, z);
        }
        0.5 * quad + dot(&self.q, z) - self.u
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PwlqFn {
    pub fn validate(&self) -> Result<()> {
        for (k, p) in self.pieces.iter().enumerate() {
            let bad = p.q.len() != self.dim
                || p.a.len() != self.dim
                || p.a.iter().any(|r| r.len() != self.dim)
                || p.ineqs.iter().any(|h| h.a.len() != self.dim);
            if bad {
                return Err(Error::PieceInconsistent(format!("piece {k} has wrong dimensions")));
            }
            for i in 0..self.dim {
                for j in 0..i {
                    if (p.a[i][j] - p.a[j][i]).abs() > 1e-12 * (1.0 + p.a[i][j].abs()) {
                        return Err(Error::PieceInconsistent(format!("piece {k} has a nonsymmetric matrix")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Minimum over pieces containing `z`; `PlusInf` when none does.
    pub fn eval(&self, z: &[f64]) -> ExtReal {
        self.pieces
            .iter()
            .filter(|p| p.contains(z))
            .map(|p| ExtReal::from_f64(p.value(z)))
            .min()
            .unwrap_or(PlusInf)
    }

    /// Checks that pieces agree where they overlap, sampling points on each facet hyperplane.
    pub fn check_consistency(&self, boxes: &[Axis], samples: usize, seed: u64, tol: f64) -> Result<()> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let z: Vec<f64> = boxes.iter().map(|a| rng.random_range(a.lo..=a.hi)).collect();
            let mut probes = vec![z.clone()];
            for p in &self.pieces {
                for h in &p.ineqs {
                    let nn = dot(&h.a, &h.a);
                    if nn > 0.0 {
                        let t = (dot(&h.a, &z) - h.b) / nn;
                        probes.push(z.iter().zip(&h.a).map(|(x, a)| x - t * a).collect());
                    }
                }
            }
            for pt in &probes {
                let vals: Vec<f64> = self.pieces.iter().filter(|p| p.contains(pt)).map(|p| p.value(pt)).collect();
                if let (Some(lo), Some(hi)) =
                    (vals.iter().copied().reduce(f64::min), vals.iter().copied().reduce(f64::max))
                {
                    if hi - lo > tol * (1.0 + lo.abs()) {
                        return Err(Error::PieceInconsistent(format!(
                            "pieces disagree at {pt:?}: values between {lo} and {hi}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Scenario declaration for the PWLQ property of the perturbation function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PwlqDecl {
    Explicit(PwlqFn),
    Flag(bool),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PwlqReport {
    pub verdict: bool,
    pub mode: String,
    pub max_sample_dev: Option<f64>,
    pub lines_tested: usize,
    pub lines_failed: usize,
}

/// Validates a PWLQ declaration for `f` over the product box `boxes` (grid axes of x then u).
pub fn is_pwlq(decl: &PwlqDecl, f: impl Fn(&[f64]) -> ExtReal, boxes: &[Axis], seed: u64) -> Result<PwlqReport> {
    match decl {
        PwlqDecl::Explicit(p) => {
            if p.dim != boxes.len() {
                return Err(Error::DimensionMismatch { expected: boxes.len(), got: p.dim });
            }
            p.check_consistency(boxes, 50, seed, 1e-8)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                let z: Vec<f64> = boxes.iter().map(|a| a.node(rng.random_range(0..a.count))).collect();
                let (a, b) = (p.eval(&z), f(&z));
                match (a.value(), b.value()) {
                    (Some(x), Some(y)) => {
                        let d = (x - y).abs();
                        if d > 1e-8 * (1.0 + y.abs()) {
                            return Err(Error::SampleMismatch(format!("at {z:?}: declared {x}, sampled {y}")));
                        }
                        worst = worst.max(d);
                    }
                    _ if a == b => {}
                    _ => return Err(Error::SampleMismatch(format!("at {z:?}: declared {a}, sampled {b}"))),
                }
            }
            let (lines_tested, lines_failed) = third_difference_scan(&f, boxes, seed);
            Ok(PwlqReport {
                verdict: true,
                mode: "explicit".into(),
                max_sample_dev: Some(worst),
                lines_tested,
                lines_failed,
            })
        }
        PwlqDecl::Flag(declared) => {
            let (lines_tested, lines_failed) = third_difference_scan(&f, boxes, seed);
            let spot_ok = lines_tested > 0 && lines_failed == 0;
            Ok(PwlqReport {
                verdict: *declared && spot_ok,
                mode: if *declared { "declared, spot-checked".into() } else { "declared false".into() },
                max_sample_dev: None,
                lines_tested,
                lines_failed,
            })
        }
    }
}

/// Counts random lines whose third differences exceed rounding more often than a few
/// piece changes can explain.
fn third_difference_scan(f: &impl Fn(&[f64]) -> ExtReal, boxes: &[Axis], seed: u64) -> (usize, usize) {
    const LINES: usize = 30;
    const HALF: i64 = 20;
    const MAX_BREAK_WINDOWS: usize = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed);
    let step = boxes.iter().map(Axis::spacing).fold(f64::INFINITY, f64::min);
    let (mut tested, mut failed) = (0, 0);
    for _ in 0..LINES {
        let z0: Vec<f64> = boxes.iter().map(|a| a.node(rng.random_range(0..a.count))).collect();
        let mut d: Vec<f64> = boxes.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = dot(&d, &d).sqrt();
        if n < 1e-3 {
            continue;
        }
        d.iter_mut().for_each(|x| *x /= n);
        let vals: Vec<Option<f64>> = (-HALF..=HALF)
            .map(|t| {
                let z: Vec<f64> = z0.iter().zip(&d).map(|(a, b)| a + t as f64 * step * b).collect();
                if z.iter().zip(boxes).any(|(x, a)| *x < a.lo || *x > a.hi) {
                    None
                } else {
                    f(&z).value()
                }
            })
            .collect();
        let (mut windows, mut bad) = (0, 0);
        for w in vals.windows(4) {
            if let [Some(a), Some(b), Some(c), Some(e)] = *w {
                windows += 1;
                let scale = a.abs().max(b.abs()).max(c.abs()).max(e.abs());
                if (e - 3.0 * c + 3.0 * b - a).abs() > 1e-7 * (1.0 + scale) {
                    bad += 1;
                }
            }
        }
        if windows >= 8 {
            tested += 1;
            if bad > MAX_BREAK_WINDOWS {
                failed += 1;
            }
        }
    }
    (tested, failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxes(n: usize) -> Vec<Axis> {
        vec![Axis::new(-4.0, 4.0, 81).unwrap(); n]
    }

    /// `max{x1 + u1, 0}` on ℝ² as two polyhedral pieces.
    fn hinge() -> PwlqFn {
        let zero = vec![vec![0.0; 2]; 2];
        PwlqFn {
            dim: 2,
            pieces: vec![
                Piece {
                    ineqs: vec![Halfspace { a: vec![-1.0, -1.0], b: 0.0 }],
                    a: zero.clone(),
                    q: vec![1.0, 1.0],
                    u: 0.0,
                },
                Piece { ineqs: vec![Halfspace { a: vec![1.0, 1.0], b: 0.0 }], a: zero, q: vec![0.0, 0.0], u: 0.0 },
            ],
        }
    }

    #[test]
    fn explicit_hinge_is_valid() {
        let f = |z: &[f64]| ExtReal::Finite((z[0] + z[1]).max(0.0));
        let r = is_pwlq(&PwlqDecl::Explicit(hinge()), f, &boxes(2), 7).unwrap();
        assert!(r.verdict);
        assert_eq!(r.lines_failed, 0);
    }

    #[test]
    fn explicit_mismatch_and_inconsistency() {
        let f = |z: &[f64]| ExtReal::Finite((z[0] + z[1]).max(0.0) + 0.5);
        assert!(matches!(is_pwlq(&PwlqDecl::Explicit(hinge()), f, &boxes(2), 7), Err(Error::SampleMismatch(_))));
        let mut bad = hinge();
        bad.pieces[1].u = -1.0;
        bad.pieces[1].ineqs[0].b = 1.0;
        assert!(matches!(bad.check_consistency(&boxes(2), 50, 1, 1e-8), Err(Error::PieceInconsistent(_))));
    }

    #[test]
    fn affine_single_piece() {
        let p = PwlqFn {
            dim: 1,
            pieces: vec![Piece { ineqs: vec![], a: vec![vec![0.0]], q: vec![2.0], u: -1.0 }],
        };
        let r = is_pwlq(&PwlqDecl::Explicit(p), |z| ExtReal::Finite(2.0 * z[0] + 1.0), &boxes(1), 3).unwrap();
        assert!(r.verdict);
    }

    #[test]
    fn cubic_fails_spot_check() {
        let f = |z: &[f64]| {
            let u = z[2];
            if u >= 0.0 {
                ExtReal::Finite(u * u * u / 3.0)
            } else {
                PlusInf
            }
        };
        let r = is_pwlq(&PwlqDecl::Flag(true), f, &boxes(4), 11).unwrap();
        assert!(!r.verdict);
        assert!(r.lines_failed > 0);
        let q = |z: &[f64]| ExtReal::Finite(0.5 * z[0] * z[0] + z[1].abs());
        assert!(is_pwlq(&PwlqDecl::Flag(true), q, &boxes(2), 11).unwrap().verdict);
    }
}
