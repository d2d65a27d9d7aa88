//! Polyhedra in V-representation: `conv(points) + cone(rays)`.

use serde::{Deserialize, Serialize};

use super::simplex::feasible;
use crate::cones::Cone;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VRepSet {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub rays: Vec<Vec<f64>>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl VRepSet {
    pub fn new(points: Vec<Vec<f64>>, rays: Vec<Vec<f64>>) -> Result<Self> {
        let s = VRepSet { points, rays };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(p0) = self.points.first() else { return Err(Error::DegenerateSet) };
        let d = p0.len();
        for v in self.points.iter().chain(&self.rays) {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
        }
        Ok(())
    }

    pub fn point(p: Vec<f64>) -> Self {
        VRepSet { points: vec![p], rays: Vec::new() }
    }

    /// The cone generated by `rays` (apex at the origin).
    pub fn cone(dim: usize, rays: Vec<Vec<f64>>) -> Self {
        VRepSet { points: vec![vec![0.0; dim]], rays }
    }

    pub fn from_cone(k: &Cone) -> Self {
        VRepSet::cone(k.dim(), k.rays().to_vec())
    }

    pub fn full(dim: usize) -> Self {
        let mut rays = Vec::new();
        for k in 0..dim {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[k] = s;
                rays.push(e);
            }
        }
        VRepSet::cone(dim, rays)
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        self.validate()?;
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    fn max_norm(&self) -> f64 {
        self.points.iter().chain(&self.rays).map(|v| norm(v)).fold(0.0, f64::max)
    }

    /// LP feasibility of `x = Σλᵢpᵢ + Σμⱼrⱼ` with `λ, μ ≥ 0` and `Σλ = 1`.
    pub fn contains_point(&self, x: &[f64]) -> Result<bool> {
        self.check(x)?;
        let d = self.dim();
        let cols: Vec<&Vec<f64>> = self.points.iter().chain(&self.rays).collect();
        let np = self.points.len();
        let mut a = vec![vec![0.0; cols.len()]; d + 1];
        for (j, c) in cols.iter().enumerate() {
            for k in 0..d {
                a[k][j] = c[k];
            }
            a[d][j] = if j < np { 1.0 } else { 0.0 };
        }
        let mut b = x.to_vec();
        b.push(1.0);
        let tol = 1e-9 * (1.0 + norm(x) + self.max_norm());
        Ok(feasible(&a, &b, tol).is_some())
    }

    /// Orthonormal basis of the linear space parallel to the affine hull.
    pub fn affine_basis(&self) -> Vec<Vec<f64>> {
        let Some(p0) = self.points.first() else { return Vec::new() };
        let scale = 1.0 + self.max_norm();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let dirs = self
            .points
            .iter()
            .skip(1)
            .map(|p| p.iter().zip(p0).map(|(a, b)| a - b).collect::<Vec<f64>>())
            .chain(self.rays.iter().cloned());
        for mut v in dirs {
            for b in &basis {
                let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
            let n = norm(&v);
            if n > 1e-9 * scale {
                basis.push(v.iter().map(|x| x / n).collect());
            }
        }
        basis
    }

    pub fn default_eps(&self) -> f64 {
        1e-6 * (1.0 + self.max_norm())
    }

    /// `x ∈ S` and `x ± eps·b ∈ S` for every affine-hull basis vector `b`.
    pub fn contains_rint(&self, x: &[f64], eps: Option<f64>) -> Result<bool> {
        if self.points.is_empty() {
            return Err(Error::DegenerateSet);
        }
        if !self.contains_point(x)? {
            return Ok(false);
        }
        let eps = eps.unwrap_or_else(|| self.default_eps());
        for b in self.affine_basis() {
            for s in [eps, -eps] {
                let y: Vec<f64> = x.iter().zip(&b).map(|(a, c)| a + s * c).collect();
                if !self.contains_point(&y)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Minkowski sum.
    pub fn plus(&self, other: &VRepSet) -> VRepSet {
        let mut points = Vec::with_capacity(self.points.len() * other.points.len());
        for p in &self.points {
            for q in &other.points {
                points.push(p.iter().zip(q).map(|(a, b)| a + b).collect());
            }
        }
        let rays = self.rays.iter().chain(&other.rays).cloned().collect();
        VRepSet { points, rays }
    }

    pub fn neg(&self) -> VRepSet {
        let f = |v: &Vec<f64>| v.iter().map(|a| -a).collect::<Vec<f64>>();
        VRepSet { points: self.points.iter().map(f).collect(), rays: self.rays.iter().map(f).collect() }
    }

    /// Minkowski difference `self − other`.
    pub fn minus(&self, other: &VRepSet) -> VRepSet {
        self.plus(&other.neg())
    }

    pub fn plus_cone(&self, k: &Cone) -> VRepSet {
        self.plus(&VRepSet::from_cone(k))
    }

    pub fn minus_cone(&self, k: &Cone) -> VRepSet {
        self.plus(&VRepSet::from_cone(&k.neg()))
    }

    /// `A ∩ B ≠ ∅`, decided as `0 ∈ A − B`.
    pub fn intersects(&self, other: &VRepSet) -> Result<bool> {
        self.minus(other).contains_point(&vec![0.0; self.dim()])
    }

    /// `rint A ∩ rint B ≠ ∅`, decided as `0 ∈ rint(A − B)`.
    pub fn rint_intersects(&self, other: &VRepSet) -> Result<bool> {
        self.minus(other).contains_rint(&vec![0.0; self.dim()], None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u51() -> VRepSet {
        VRepSet::cone(2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]])
    }

    #[test]
    fn membership_examples() {
        assert!(u51().contains_point(&[0.0, 0.0]).unwrap());
        assert!(!u51().contains_point(&[-1.0, 0.0]).unwrap());
        assert!(VRepSet::full(2).contains_point(&[3.0, -7.0]).unwrap());
        assert!(matches!(u51().contains_point(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rint_examples() {
        assert!(!u51().contains_rint(&[0.0, 0.0], None).unwrap());
        assert!(u51().contains_rint(&[1.0, 0.0], None).unwrap());
        assert!(VRepSet::full(2).contains_rint(&[0.0, 0.0], None).unwrap());
        let seg = VRepSet::new(vec![vec![-1.0, 0.0], vec![1.0, 0.0]], vec![]).unwrap();
        assert!(seg.contains_rint(&[0.0, 0.0], None).unwrap());
        assert!(!seg.contains_rint(&[1.0, 0.0], None).unwrap());
        let empty = VRepSet { points: vec![], rays: vec![] };
        assert!(matches!(empty.contains_rint(&[0.0], None), Err(Error::DegenerateSet)));
    }

    #[test]
    fn disjoint_boxes() {
        let sq = |c: f64| {
            VRepSet::new(vec![vec![c, 0.0], vec![c + 1.0, 0.0], vec![c, 1.0], vec![c + 1.0, 1.0]], vec![]).unwrap()
        };
        assert!(!sq(0.0).intersects(&sq(2.0)).unwrap());
        assert!(!sq(0.0).rint_intersects(&sq(2.0)).unwrap());
        assert!(sq(0.0).intersects(&sq(1.0)).unwrap());
        assert!(!sq(0.0).rint_intersects(&sq(1.0)).unwrap());
        assert!(sq(0.0).rint_intersects(&sq(0.5)).unwrap());
    }
}
