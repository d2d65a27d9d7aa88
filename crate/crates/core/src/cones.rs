//! Finitely generated closed convex cones in ℝᵐ, m ≤ 3.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::extreal::{ExtReal, PlusInf};
use crate::grid::{Grid, GridFn, MAX_DIM};

pub const MAX_RAYS: usize = 32;

/// Default relative membership tolerance.
pub const CONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    dim: usize,
    rays: Vec<Vec<f64>>,
}

/// A point of ℝᵐ or the infinite element `+∞•`.
#[derive(Debug, Clone, PartialEq)]
pub enum Elem {
    Point(Vec<f64>),
    Inf,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(x: &[f64]) -> Vec<f64> {
    let n = norm(x);
    x.iter().map(|a| a / n).collect()
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn basis(dim: usize, k: usize, sign: f64) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[k] = sign;
    e
}

impl Cone {
    pub fn new(dim: usize, rays: Vec<Vec<f64>>) -> Result<Self> {
        let c = Cone::unchecked(dim, rays)?;
        if c.rays.len() > MAX_RAYS {
            return Err(Error::InvalidCone(format!("{} generators exceed the limit of {MAX_RAYS}", c.rays.len())));
        }
        Ok(c)
    }

    /// Validates dimensions and normalizes, without the generator-count limit.
    fn unchecked(dim: usize, rays: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCone("dimension must be positive".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::DimensionTooLarge(dim));
        }
        let mut out = Vec::with_capacity(rays.len());
        for r in rays {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            let n = norm(&r);
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::InvalidCone(format!("generator {r:?} is zero or not finite")));
            }
            out.push(unit(&r));
        }
        Ok(Cone { dim, rays: out })
    }

    /// The trivial cone `{0}`.
    pub fn zero(dim: usize) -> Result<Self> {
        Cone::new(dim, Vec::new())
    }

    /// The whole space.
    pub fn full(dim: usize) -> Result<Self> {
        Cone::new(dim, (0..dim).flat_map(|k| [basis(dim, k, 1.0), basis(dim, k, -1.0)]).collect())
    }

    /// Parses `"0"`, `"full"`, or a product such as `"R+xR"`, `"R+x0"`, `"0xR"`, `"R-xR+"`.
    ///
    /// `"0"` and `"full"` take their dimension from `dim`; products fix it themselves.
    pub fn from_shorthand(s: &str, dim: usize) -> Result<Self> {
        match s.trim() {
            "0" => return Cone::zero(dim),
            "full" => return Cone::full(dim),
            _ => {}
        }
        let factors: Vec<&str> = s.trim().split('x').collect();
        let d = factors.len();
        if d != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: d });
        }
        let mut rays = Vec::new();
        for (k, f) in factors.iter().enumerate() {
            match f.trim() {
                "R" => {
                    rays.push(basis(d, k, 1.0));
                    rays.push(basis(d, k, -1.0));
                }
                "R+" => rays.push(basis(d, k, 1.0)),
                "R-" => rays.push(basis(d, k, -1.0)),
                "0" => {}
                other => return Err(Error::InvalidCone(format!("unknown factor '{other}' in '{s}'"))),
            }
        }
        Cone::new(d, rays)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rays(&self) -> &[Vec<f64>] {
        &self.rays
    }

    pub fn is_zero(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn neg(&self) -> Cone {
        Cone { dim: self.dim, rays: self.rays.iter().map(|r| r.iter().map(|a| -a).collect()).collect() }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Euclidean projection of `x` onto the cone.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(project(&self.rays, x, self.dim))
    }

    /// Distance from `x` to the cone.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        let p = self.project(x)?;
        Ok(x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }

    /// `dist(x, K) ≤ tol·(1 + |x|)`.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        Ok(self.distance(x)? <= tol * (1.0 + norm(x)))
    }

    /// `x1 ≤_K x2`, with every point below `+∞•`.
    pub fn k_leq(&self, x1: &[f64], x2: &Elem, tol: f64) -> Result<bool> {
        match x2 {
            Elem::Inf => Ok(true),
            Elem::Point(p) => {
                self.check_dim(x1)?;
                self.check_dim(p)?;
                let d: Vec<f64> = p.iter().zip(x1).map(|(a, b)| a - b).collect();
                self.contains(&d, tol)
            }
        }
    }

    /// Every generator of `self` lies in `other`.
    pub fn is_subset_of(&self, other: &Cone, tol: f64) -> Result<bool> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: other.dim, got: self.dim });
        }
        for r in &self.rays {
            if !other.contains(r, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Angle in degrees between `d` and its projection onto the cone (90 when that is zero).
    pub fn angle_to(&self, d: &[f64]) -> Result<f64> {
        let p = self.project(d)?;
        let (np, nd) = (norm(&p), norm(d));
        if np <= 1e-12 * nd.max(1.0) || nd == 0.0 {
            return Ok(90.0);
        }
        Ok((dot(d, &p) / (np * nd)).clamp(-1.0, 1.0).acos().to_degrees())
    }

    /// Largest angle from a generator of either cone to the other cone.
    pub fn angular_mismatch(&self, other: &Cone) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for r in &self.rays {
            worst = worst.max(other.angle_to(r)?);
        }
        for r in &other.rays {
            worst = worst.max(self.angle_to(r)?);
        }
        Ok(worst)
    }

    pub fn approx_eq(&self, other: &Cone, angle_deg: f64) -> Result<bool> {
        Ok(self.angular_mismatch(other)? <= angle_deg)
    }

    /// `K° = {v : ⟨r, v⟩ ≤ 0 for every generator r}`.
    pub fn polar(&self) -> Result<Cone> {
        let m = self.dim;
        let tol = 1e-9;
        let mut cands: Vec<Vec<f64>> = Vec::new();
        match m {
            1 => {
                let pos = self.rays.iter().any(|r| r[0] > 0.0);
                let neg = self.rays.iter().any(|r| r[0] < 0.0);
                if !pos {
                    cands.push(vec![1.0]);
                }
                if !neg {
                    cands.push(vec![-1.0]);
                }
                return Cone::new(1, cands);
            }
            2 => {
                for r in &self.rays {
                    let p = vec![-r[1], r[0]];
                    cands.push(p.clone());
                    cands.push(vec![-p[0], -p[1]]);
                    cands.push(vec![-r[0], -r[1]]);
                }
                for k in 0..2 {
                    cands.push(basis(2, k, 1.0));
                    cands.push(basis(2, k, -1.0));
                }
            }
            3 => {
                let rs = &self.rays;
                for i in 0..rs.len() {
                    cands.push(rs[i].iter().map(|a| -a).collect());
                    let (b1, b2) = orth_complement(&rs[i]);
                    for b in [b1, b2] {
                        cands.push(b.iter().map(|a| -a).collect());
                        cands.push(b);
                    }
                    for j in i + 1..rs.len() {
                        let n = cross(&rs[i], &rs[j]);
                        if norm(&n) <= 1e-12 {
                            continue;
                        }
                        let n = unit(&n);
                        for r in rs {
                            let t = cross(&n, r);
                            if norm(&t) > 1e-12 {
                                let t = unit(&t);
                                cands.push(t.iter().map(|a| -a).collect());
                                cands.push(t);
                            }
                        }
                        cands.push(n.iter().map(|a| -a).collect());
                        cands.push(n);
                    }
                }
                for k in 0..3 {
                    cands.push(basis(3, k, 1.0));
                    cands.push(basis(3, k, -1.0));
                }
            }
            _ => return Err(Error::DimensionTooLarge(m)),
        }
        let kept: Vec<Vec<f64>> =
            cands.into_iter().map(|c| unit(&c)).filter(|c| self.rays.iter().all(|r| dot(r, c) <= tol)).collect();
        Cone::unchecked(m, dedupe(kept)).and_then(|c| c.pruned())
    }

    /// Drops duplicate and redundant generators until at most [`MAX_RAYS`] remain.
    pub(crate) fn pruned(mut self) -> Result<Cone> {
        self.rays = dedupe(std::mem::take(&mut self.rays));
        if self.rays.len() <= MAX_RAYS {
            return Ok(self);
        }
        let mut i = 0;
        while i < self.rays.len() && self.rays.len() > MAX_RAYS {
            let others: Vec<Vec<f64>> =
                self.rays.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, r)| r.clone()).collect();
            let r = &self.rays[i];
            let p = project(&others, r, self.dim);
            if norm(&r.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>()) <= 1e-9 {
                self.rays.remove(i);
            } else {
                i += 1;
            }
        }
        Cone::new(self.dim, self.rays)
    }

    /// `δ_K`, or `δ_{−K}` when `negate`, sampled on `grid`.
    pub fn indicator_grid(&self, grid: &Grid, negate: bool) -> Result<GridFn> {
        if grid.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: grid.dim() });
        }
        let k = if negate { self.neg() } else { self.clone() };
        let mut buf = [0.0; MAX_DIM];
        let values = (0..grid.len())
            .map(|i| {
                grid.node_into(i, &mut buf);
                let x = &buf[..self.dim];
                if k.contains(x, CONE_TOL).unwrap_or(false) {
                    ExtReal::Finite(0.0)
                } else {
                    PlusInf
                }
            })
            .collect();
        GridFn::new(grid.clone(), values)
    }
}

impl fmt::Display for Cone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cone{:?}", self.rays)
    }
}

fn dedupe(rays: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for r in rays {
        if !out.iter().any(|q| dot(q, &r) > 1.0 - 1e-12) {
            out.push(r);
        }
    }
    out
}

/// Two orthonormal vectors spanning the complement of unit `r` in ℝ³.
fn orth_complement(r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = (0..3).min_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs())).unwrap_or(0);
    let e = basis(3, k, 1.0);
    let b1 = unit(&cross(r, &e));
    let b2 = unit(&cross(r, &b1));
    (b1, b2)
}

/// Projection onto `cone(rays)` by enumerating linearly independent subsets of size ≤ dim.
pub(crate) fn project(rays: &[Vec<f64>], x: &[f64], dim: usize) -> Vec<f64> {
    let mut best = vec![0.0; dim];
    let mut best_d = dot(x, x);
    let n = rays.len();
    let mut consider = |subset: &[usize]| {
        if let Some(p) = ls_nonneg(rays, subset, x, dim) {
            let d: f64 = x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = p;
            }
        }
    };
    for i in 0..n {
        consider(&[i]);
        if dim >= 2 {
            for j in i + 1..n {
                consider(&[i, j]);
                if dim >= 3 {
                    for k in j + 1..n {
                        consider(&[i, j, k]);
                    }
                }
            }
        }
    }
    best
}

/// Least-squares fit of `x` by the rays in `subset`; `None` when dependent or a coefficient is negative.
fn ls_nonneg(rays: &[Vec<f64>], subset: &[usize], x: &[f64], dim: usize) -> Option<Vec<f64>> {
    let k = subset.len();
    let mut a = [[0.0f64; 4]; 3];
    for (p, &i) in subset.iter().enumerate() {
        for (q, &j) in subset.iter().enumerate() {
            a[p][q] = dot(&rays[i], &rays[j]);
        }
        a[p][3] = dot(&rays[i], x);
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&r1, &r2| a[r1][c].abs().total_cmp(&a[r2][c].abs()))?;
        if a[piv][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for col in c..4 {
                    a[r][col] -= f * a[c][col];
                }
            }
        }
    }
    let mut p = vec![0.0; dim];
    for (c, &i) in subset.iter().enumerate() {
        let mu = a[c][3] / a[c][c];
        if mu < 0.0 {
            return None;
        }
        for t in 0..dim {
            p[t] += mu * rays[i][t];
        }
    }
    Some(p)
}

impl Serialize for Cone {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Cone", 2)?;
        st.serialize_field("dim", &self.dim)?;
        st.serialize_field("rays", &self.rays)?;
        st.end()
    }
}

/// Scenario-file form: `{"rays": [...]}` or a shorthand string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConeDecl {
    Named(String),
    Rays { rays: Vec<Vec<f64>> },
}

impl ConeDecl {
    pub fn resolve(&self, dim: usize) -> Result<Cone> {
        match self {
            ConeDecl::Named(s) => Cone::from_shorthand(s, dim),
            ConeDecl::Rays { rays } => Cone::new(dim, rays.clone()),
        }
    }
}

impl<'de> Deserialize<'de> for Cone {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dim: usize,
            rays: Vec<Vec<f64>>,
        }
        let r = Raw::deserialize(d)?;
        Cone::new(r.dim, r.rays).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_examples() {
        let k = Cone::from_shorthand("R+x0", 2).unwrap();
        let p = k.polar().unwrap();
        let expect = Cone::new(2, vec![vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        assert!(p.approx_eq(&expect, 1e-6).unwrap());
        assert!(p.neg().approx_eq(&Cone::from_shorthand("R+xR", 2).unwrap(), 1e-6).unwrap());
        let z = Cone::zero(3).unwrap().polar().unwrap();
        assert!(z.approx_eq(&Cone::full(3).unwrap(), 1e-6).unwrap());
        assert!(Cone::full(2).unwrap().polar().unwrap().is_zero());
    }

    #[test]
    fn polar_involution_3d() {
        let k = Cone::new(3, vec![vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 1.0]])
            .unwrap();
        let kk = k.polar().unwrap().polar().unwrap();
        assert!(k.is_subset_of(&kk, 1e-9).unwrap());
        assert!(kk.is_subset_of(&k, 1e-9).unwrap());
        let plane = Cone::new(3, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let pp = plane.polar().unwrap().polar().unwrap();
        assert!(pp.approx_eq(&plane, 1e-6).unwrap());
        let line = Cone::new(3, vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]]).unwrap();
        assert!(line.polar().unwrap().polar().unwrap().approx_eq(&line, 1e-6).unwrap());
    }

    #[test]
    fn membership() {
        let k = Cone::from_shorthand("R+x0", 2).unwrap();
        assert!(k.contains(&[2.0, 0.0], CONE_TOL).unwrap());
        assert!(!k.contains(&[2.0, 0.5], CONE_TOL).unwrap());
        let q = Cone::from_shorthand("R+xR+", 2).unwrap();
        assert!(q.contains(&[1.0, 1.0], CONE_TOL).unwrap());
        assert!(matches!(q.contains(&[1.0], CONE_TOL), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ordering() {
        let q = Cone::from_shorthand("R+xR+", 2).unwrap();
        assert!(q.k_leq(&[0.0, 0.0], &Elem::Point(vec![1.0, 2.0]), CONE_TOL).unwrap());
        assert!(q.k_leq(&[5.0, -3.0], &Elem::Inf, CONE_TOL).unwrap());
        let k = Cone::from_shorthand("R+x0", 2).unwrap();
        assert!(!k.k_leq(&[0.0, 0.0], &Elem::Point(vec![1.0, 1.0]), CONE_TOL).unwrap());
    }

    #[test]
    fn indicators() {
        let g = Grid::cube(2, -1.0, 1.0, 5).unwrap();
        let z = Cone::zero(2).unwrap().indicator_grid(&g, false).unwrap();
        assert_eq!(z.domain(), vec![g.require_node(&[0.0, 0.0]).unwrap()]);
        let k = Cone::from_shorthand("R+x0", 2).unwrap();
        let d = k.polar().unwrap().indicator_grid(&g, true).unwrap();
        for i in 0..g.len() {
            assert_eq!(d.values[i].is_finite(), g.node(i)[0] >= 0.0);
        }
        assert!(Cone::full(2).unwrap().indicator_grid(&g, false).unwrap().is_identically(ExtReal::Finite(0.0)));
    }

    #[test]
    fn shorthand_and_limits() {
        assert_eq!(Cone::from_shorthand("0xR", 2).unwrap().rays().len(), 2);
        assert!(Cone::from_shorthand("R+x0", 3).is_err());
        assert!(Cone::new(4, vec![]).is_err());
        assert!(Cone::new(2, vec![vec![0.0, 0.0]]).is_err());
        assert!(Cone::new(2, vec![vec![1.0, 0.0]; 33]).is_err());
        let decl: ConeDecl = serde_json::from_str(r#"{"rays": [[2,0],[0,1]]}"#).unwrap();
        assert_eq!(decl.resolve(2).unwrap().rays()[0], vec![1.0, 0.0]);
    }
}
