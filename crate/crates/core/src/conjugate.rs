//! Discrete Legendre–Fenchel transform and related operations.
//!
//! Raw arrays use `f64` with `+inf`/`-inf` standing for the infinite tags.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extreal::{add_f64, ExtReal, MinusInf, PlusInf};
use crate::grid::{Grid, GridFn, MAX_DIM};

/// Computed suprema above this magnitude are stored as `PlusInf`.
pub const INF_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Method {
    BruteForce,
    #[default]
    FastLLT,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformConfig {
    pub method: Method,
    pub dual_grid: Grid,
    pub tol_fenchel: f64,
}

impl TransformConfig {
    pub fn new(method: Method, dual_grid: Grid, tol_fenchel: f64) -> Result<Self> {
        if !(tol_fenchel > 0.0) {
            return Err(Error::InvalidProblem(format!("tol_fenchel must be positive, got {tol_fenchel}")));
        }
        Ok(TransformConfig { method, dual_grid, tol_fenchel })
    }

    /// Uses [`default_tol_fenchel`] for `h`.
    pub fn for_fn(h: &GridFn, method: Method, dual_grid: Grid) -> Self {
        let tol_fenchel = default_tol_fenchel(h, &dual_grid);
        TransformConfig { method, dual_grid, tol_fenchel }
    }

    fn check(&self, h: &GridFn) -> Result<()> {
        if self.dual_grid.dim() != h.grid.dim() {
            return Err(Error::GridMismatch(format!(
                "dual grid has dimension {}, primal grid {}",
                self.dual_grid.dim(),
                h.grid.dim()
            )));
        }
        Ok(())
    }
}

/// `1e-6 + 2·(max spacing)·(max finite slope of h)`.
pub fn default_tol_fenchel(h: &GridFn, dual: &Grid) -> f64 {
    1e-6 + 2.0 * h.grid.max_spacing().max(dual.max_spacing()) * h.gradient_estimate()
}

/// Conjugate values together with the truncation diagnostic.
///
/// A dual node is truncation-suspect when its supremum over the whole primal box exceeds the
/// supremum over the nodes off the primal boundary by more than [`truncation_slack`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedConjugate {
    pub fun: GridFn,
    pub truncation_suspect: Vec<bool>,
}

impl FlaggedConjugate {
    /// `PlusInf`, or finite only because the primal box is bounded.
    pub fn effectively_infinite(&self, i: usize) -> bool {
        self.fun.values[i].is_plus_inf() || self.truncation_suspect[i]
    }

    /// Finite and not truncation-suspect.
    pub fn reliable(&self, i: usize) -> bool {
        self.fun.values[i].is_finite() && !self.truncation_suspect[i]
    }
}

/// Replaces values above [`INF_CAP`] by `+inf`.
pub fn cap(raw: &mut [f64]) {
    for v in raw.iter_mut() {
        if *v > INF_CAP {
            *v = f64::INFINITY;
        }
    }
}

/// Half the smallest primal-by-dual cell area. A supremum that gains less than this on the
/// boundary layer corresponds to a residual slope below half a dual cell and counts as flat.
pub fn truncation_slack(grid: &Grid, dual: &Grid) -> f64 {
    (0..grid.dim().min(dual.dim()))
        .map(|k| grid.axis(k).spacing() * dual.axis(k).spacing())
        .fold(f64::INFINITY, f64::min)
        * 0.5
}

/// `true` when `full` exceeds `interior` by more than `slack` plus rounding.
#[inline]
pub fn suspect(full: f64, interior: f64, slack: f64) -> bool {
    full.is_finite() && full > interior + slack + 1e-9 * (1.0 + full.abs())
}

pub fn conjugate(h: &GridFn, cfg: &TransformConfig) -> Result<GridFn> {
    cfg.check(h)?;
    let mut out = transform_raw(&h.grid, &h.to_raw(), &cfg.dual_grid, cfg.method);
    cap(&mut out);
    Ok(GridFn::from_raw(cfg.dual_grid.clone(), &out))
}

pub fn conjugate_flagged(h: &GridFn, cfg: &TransformConfig) -> Result<FlaggedConjugate> {
    cfg.check(h)?;
    let (mut full, interior) = transform_pair_raw(&h.grid, &h.to_raw(), &cfg.dual_grid, cfg.method);
    let slack = truncation_slack(&h.grid, &cfg.dual_grid);
    let truncation_suspect = full.iter().zip(&interior).map(|(&f, &i)| suspect(f, i, slack)).collect();
    cap(&mut full);
    Ok(FlaggedConjugate { fun: GridFn::from_raw(cfg.dual_grid.clone(), &full), truncation_suspect })
}

/// Conjugate onto the dual grid, then back onto the primal grid.
pub fn biconjugate(h: &GridFn, cfg: &TransformConfig) -> Result<GridFn> {
    let hs = conjugate(h, cfg)?;
    let back = TransformConfig { method: cfg.method, dual_grid: h.grid.clone(), tol_fenchel: cfg.tol_fenchel };
    conjugate(&hs, &back)
}

/// `h(x) + h*(v) − ⟨v,x⟩` under inf-addition.
pub fn fenchel_gap(h: &GridFn, h_star: &GridFn, x: &[f64], v: &[f64]) -> Result<ExtReal> {
    let hx = h.at(x)?;
    let hv = h_star.at(v)?;
    let dot: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(crate::extreal::ext_add(hx, hv).add_real(-dot))
}

/// Subdifferential nodes with a flag for sets reaching the dual-grid boundary.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SubdiffSet {
    pub nodes: Vec<usize>,
    pub boundary_suspect: bool,
}

/// Dual nodes `v` with `fenchel_gap(h, h*, x̄, v) ≤ tol`; empty when `h(x̄)` is not finite.
pub fn subdifferential(h: &GridFn, h_star: &GridFn, xbar: &[f64], tol: f64) -> Result<Vec<usize>> {
    Ok(subdifferential_flagged(h, h_star, xbar, tol)?.nodes)
}

pub fn subdifferential_flagged(h: &GridFn, h_star: &GridFn, xbar: &[f64], tol: f64) -> Result<SubdiffSet> {
    let hx = h.at(xbar)?;
    let Some(hx) = hx.value() else { return Ok(SubdiffSet::default()) };
    let g = &h_star.grid;
    if g.dim() != xbar.len() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: xbar.len() });
    }
    let mut buf = [0.0; MAX_DIM];
    let mut out = SubdiffSet::default();
    for i in 0..g.len() {
        let Some(hv) = h_star.values[i].value() else { continue };
        g.node_into(i, &mut buf);
        let dot: f64 = xbar.iter().zip(&buf).map(|(a, b)| a * b).sum();
        if hx + hv - dot <= tol {
            out.boundary_suspect |= g.is_boundary(i);
            out.nodes.push(i);
        }
    }
    Ok(out)
}

/// `(h1 □ h2)(w) = min_z h1(z) + h2(w − z)` over nodes `z` of h1's grid, output on h1's grid.
pub fn inf_convolution(h1: &GridFn, h2: &GridFn) -> Result<GridFn> {
    if h1.grid.dim() != h2.grid.dim() {
        return Err(Error::GridMismatch("inf-convolution needs equal dimensions".into()));
    }
    let raw = inf_conv_raw(h1, h2, None);
    Ok(GridFn::from_raw(h1.grid.clone(), &raw))
}

/// Inf-convolution restricted to `z` with `z_mask[z]`.
pub(crate) fn inf_conv_raw(h1: &GridFn, h2: &GridFn, z_mask: Option<&[bool]>) -> Vec<f64> {
    let g1 = &h1.grid;
    let d = g1.dim();
    let v1 = h1.to_raw();
    let zs: Vec<usize> =
        (0..g1.len()).filter(|&z| v1[z] != f64::INFINITY && z_mask.map_or(true, |m| m[z])).collect();
    let mut out = vec![f64::INFINITY; g1.len()];
    if let Some(offset) = lattice_offset(g1, &h2.grid) {
        let v2 = h2.to_raw();
        for (w, o) in out.iter_mut().enumerate() {
            let iw = g1.unflatten(w);
            let mut best = f64::INFINITY;
            'z: for &z in &zs {
                let iz = g1.unflatten(z);
                let mut j = [0usize; MAX_DIM];
                for k in 0..d {
                    let t = iw[k] as i64 - iz[k] as i64 + offset[k];
                    if t < 0 || t >= h2.grid.axis(k).count as i64 {
                        continue 'z;
                    }
                    j[k] = t as usize;
                }
                let c = add_f64(v1[z], v2[h2.grid.flatten(&j)]);
                if c < best {
                    best = c;
                }
            }
            *o = best;
        }
    } else {
        let mut bw = [0.0; MAX_DIM];
        let mut bz = [0.0; MAX_DIM];
        let mut diff = [0.0; MAX_DIM];
        for (w, o) in out.iter_mut().enumerate() {
            g1.node_into(w, &mut bw);
            let mut best = f64::INFINITY;
            for &z in &zs {
                g1.node_into(z, &mut bz);
                for k in 0..d {
                    diff[k] = bw[k] - bz[k];
                }
                let c = add_f64(v1[z], h2.interpolate(&diff[..d]).to_f64());
                if c < best {
                    best = c;
                }
            }
            *o = best;
        }
    }
    out
}

/// Index in `g2` of the origin, per axis, when `g2` shares `g1`'s spacing and contains the
/// lattice of differences of `g1` nodes.
fn lattice_offset(g1: &Grid, g2: &Grid) -> Option<[i64; MAX_DIM]> {
    let mut off = [0i64; MAX_DIM];
    for k in 0..g1.dim() {
        let (a, b) = (g1.axis(k), g2.axis(k));
        if ((a.spacing() - b.spacing()) / a.spacing()).abs() > 1e-9 {
            return None;
        }
        let t = b.frac_index(0.0);
        if t.fract() != 0.0 {
            return None;
        }
        off[k] = t as i64;
    }
    Some(off)
}

/// Conjugate of raw values on `grid` evaluated on `dual`, without capping.
pub fn transform_raw(grid: &Grid, h: &[f64], dual: &Grid, method: Method) -> Vec<f64> {
    if h.iter().any(|&v| v == f64::NEG_INFINITY) {
        return vec![f64::INFINITY; dual.len()];
    }
    match method {
        Method::BruteForce => brute_force(grid, h, dual),
        Method::FastLLT => llt_nd(grid, h, dual),
    }
}

/// Full transform and the transform restricted to primal nodes off the grid boundary.
pub fn transform_pair_raw(grid: &Grid, h: &[f64], dual: &Grid, method: Method) -> (Vec<f64>, Vec<f64>) {
    let full = transform_raw(grid, h, dual, method);
    let inner: Vec<f64> =
        h.iter().enumerate().map(|(i, &v)| if grid.is_boundary(i) { f64::INFINITY } else { v }).collect();
    let interior = transform_raw(grid, &inner, dual, method);
    (full, interior)
}

fn brute_force(grid: &Grid, h: &[f64], dual: &Grid) -> Vec<f64> {
    let d = grid.dim();
    let pts: Vec<(Vec<f64>, f64)> =
        (0..grid.len()).filter(|&i| h[i] != f64::INFINITY).map(|i| (grid.node(i), h[i])).collect();
    let mut buf = [0.0; MAX_DIM];
    (0..dual.len())
        .map(|j| {
            dual.node_into(j, &mut buf);
            let mut best = f64::NEG_INFINITY;
            for (x, hx) in &pts {
                let mut dot = 0.0;
                for k in 0..d {
                    dot += buf[k] * x[k];
                }
                let c = dot - hx;
                if c > best {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Separable transform: one 1-D pass per axis.
fn llt_nd(grid: &Grid, h: &[f64], dual: &Grid) -> Vec<f64> {
    let mut plan = LltPlan::new(grid, dual);
    let mut out = vec![0.0; dual.len()];
    plan.run(h, &mut out);
    out
}

/// Reusable buffers for repeated fast transforms between the same pair of grids.
pub struct LltPlan {
    xs: Vec<Vec<f64>>,
    vs: Vec<Vec<f64>>,
    bufs: [Vec<f64>; 2],
    line: Vec<f64>,
    res: Vec<f64>,
    scratch: LltScratch,
}

impl LltPlan {
    pub fn new(grid: &Grid, dual: &Grid) -> Self {
        LltPlan {
            xs: grid.axes().iter().map(|a| a.nodes()).collect(),
            vs: dual.axes().iter().map(|a| a.nodes()).collect(),
            bufs: [Vec::new(), Vec::new()],
            line: Vec::new(),
            res: Vec::new(),
            scratch: LltScratch::default(),
        }
    }

    /// Writes the conjugate of `h` (no `-inf` entries) into `out`, uncapped.
    pub fn run(&mut self, h: &[f64], out: &mut [f64]) {
        if h.iter().any(|&v| v == f64::NEG_INFINITY) {
            out.fill(f64::INFINITY);
            return;
        }
        let d = self.xs.len();
        let mut shape: Vec<usize> = self.xs.iter().map(Vec::len).collect();
        let [ref mut a, ref mut b] = self.bufs;
        a.clear();
        a.extend_from_slice(h);
        for k in 0..d {
            let n = shape[k];
            let m = self.vs[k].len();
            let outer: usize = shape[..k].iter().product();
            let inner: usize = shape[k + 1..].iter().product();
            b.clear();
            b.resize(outer * m * inner, 0.0);
            self.line.resize(n, 0.0);
            self.res.resize(m, 0.0);
            for o in 0..outer {
                for i in 0..inner {
                    for (t, slot) in self.line.iter_mut().enumerate() {
                        let v = a[(o * n + t) * inner + i];
                        *slot = if k == 0 { v } else { -v };
                    }
                    llt_line(&self.xs[k], &self.line, &self.vs[k], &mut self.res, &mut self.scratch);
                    for (t, &r) in self.res.iter().enumerate() {
                        b[(o * m + t) * inner + i] = r;
                    }
                }
            }
            shape[k] = m;
            std::mem::swap(a, b);
        }
        out.copy_from_slice(a);
    }
}

#[derive(Default)]
struct LltScratch {
    hx: Vec<f64>,
    hh: Vec<f64>,
}

/// `out[j] = max_i vs[j]·xs[i] − h[i]` via the lower convex hull; `xs` and `vs` increasing.
fn llt_line(xs: &[f64], h: &[f64], vs: &[f64], out: &mut [f64], s: &mut LltScratch) {
    s.hx.clear();
    s.hh.clear();
    for (&x, &y) in xs.iter().zip(h) {
        if y == f64::INFINITY {
            continue;
        }
        while s.hx.len() >= 2 {
            let k = s.hx.len();
            let (x0, y0, x1, y1) = (s.hx[k - 2], s.hh[k - 2], s.hx[k - 1], s.hh[k - 1]);
            if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) <= 0.0 {
                s.hx.pop();
                s.hh.pop();
            } else {
                break;
            }
        }
        s.hx.push(x);
        s.hh.push(y);
    }
    if s.hx.is_empty() {
        out.fill(f64::NEG_INFINITY);
        return;
    }
    let mut k = 0;
    for (o, &v) in out.iter_mut().zip(vs) {
        while k + 1 < s.hx.len() && v * s.hx[k + 1] - s.hh[k + 1] >= v * s.hx[k] - s.hh[k] {
            k += 1;
        }
        *o = v * s.hx[k] - s.hh[k];
    }
}

/// Converts raw values to `ExtReal` after capping.
pub fn raw_to_ext(mut raw: Vec<f64>) -> Vec<ExtReal> {
    cap(&mut raw);
    raw.into_iter()
        .map(|v| if v == f64::INFINITY { PlusInf } else if v == f64::NEG_INFINITY { MinusInf } else { ExtReal::Finite(v) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::FunctionExpr;
    use crate::grid::sample;

    fn f(src: &str, g: &Grid) -> GridFn {
        sample(&FunctionExpr::parse(src).unwrap(), g).unwrap()
    }

    #[test]
    fn self_conjugate_quadratic() {
        let g = Grid::cube(1, -4.0, 4.0, 81).unwrap();
        let d = Grid::cube(1, -3.0, 3.0, 61).unwrap();
        let h = f("pow(x1,2)/2", &g);
        for m in [Method::BruteForce, Method::FastLLT] {
            let hs = conjugate(&h, &TransformConfig::for_fn(&h, m, d.clone())).unwrap();
            for (i, v) in hs.values.iter().enumerate() {
                let x = d.node(i)[0];
                assert!((v.to_f64() - 0.5 * x * x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn abs_first_coordinate_gives_indicator() {
        let g = Grid::cube(2, -4.0, 4.0, 41).unwrap();
        let d = Grid::cube(2, -2.0, 2.0, 21).unwrap();
        let h = f("abs(x1)", &g);
        let c = conjugate_flagged(&h, &TransformConfig::for_fn(&h, Method::FastLLT, d.clone())).unwrap();
        for i in 0..d.len() {
            let v = d.node(i);
            let inside = v[0].abs() <= 1.0 + 1e-12 && v[1] == 0.0;
            if inside {
                assert!(c.reliable(i), "{v:?}");
                assert!(c.fun.values[i].to_f64().abs() < 1e-12);
            } else {
                assert!(c.effectively_infinite(i), "{v:?}");
            }
        }
    }

    #[test]
    fn plus_inf_and_minus_inf_inputs() {
        let g = Grid::cube(1, -1.0, 1.0, 5).unwrap();
        let cfg = TransformConfig::new(Method::FastLLT, g.clone(), 1e-6).unwrap();
        let h = GridFn::constant(g.clone(), PlusInf);
        assert!(conjugate(&h, &cfg).unwrap().is_identically(MinusInf));
        assert!(biconjugate(&h, &cfg).unwrap().is_identically(PlusInf));
        let mut h = GridFn::constant(g.clone(), ExtReal::Finite(0.0));
        h.values[2] = MinusInf;
        assert!(conjugate(&h, &cfg).unwrap().is_identically(PlusInf));
        let bad = TransformConfig::new(Method::FastLLT, Grid::cube(2, -1.0, 1.0, 3).unwrap(), 1e-6).unwrap();
        assert!(matches!(conjugate(&h, &bad), Err(Error::GridMismatch(_))));
        assert!(TransformConfig::new(Method::FastLLT, g, 0.0).is_err());
    }

    #[test]
    fn brute_force_matches_llt_nonconvex_2d() {
        let g = Grid::new(vec![
            crate::grid::Axis::new(-2.0, 2.0, 17).unwrap(),
            crate::grid::Axis::new(-1.0, 3.0, 13).unwrap(),
        ])
        .unwrap();
        let d = Grid::cube(2, -5.0, 5.0, 23).unwrap();
        let h = f("min(pow(x1,2), pow(x1-1,2)+0.5) + abs(x2) * x1 if x1 + x2 <= 2.5 else +inf", &g);
        let a = transform_raw(&g, &h.to_raw(), &d, Method::BruteForce);
        let b = transform_raw(&g, &h.to_raw(), &d, Method::FastLLT);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn fenchel_gap_examples() {
        let g = Grid::cube(1, -4.0, 4.0, 81).unwrap();
        let h = f("pow(x1,2)/2", &g);
        let hs = conjugate(&h, &TransformConfig::for_fn(&h, Method::FastLLT, g.clone())).unwrap();
        assert!(fenchel_gap(&h, &hs, &[1.0], &[1.0]).unwrap().to_f64().abs() < 1e-12);
        assert!((fenchel_gap(&h, &hs, &[1.0], &[0.0]).unwrap().to_f64() - 0.5).abs() < 1e-12);
        let g2 = Grid::cube(2, -4.0, 4.0, 81).unwrap();
        let h = f("abs(x1)", &g2);
        let hs = conjugate(&h, &TransformConfig::for_fn(&h, Method::FastLLT, g2.clone())).unwrap();
        assert!(fenchel_gap(&h, &hs, &[0.0, 0.0], &[0.5, 0.0]).unwrap().to_f64().abs() < 1e-12);
        assert!(matches!(fenchel_gap(&h, &hs, &[0.05, 0.0], &[0.5, 0.0]), Err(Error::NodeOutOfGrid(_))));
    }

    #[test]
    fn subdifferential_of_abs() {
        let g = Grid::cube(1, -4.0, 4.0, 81).unwrap();
        let h = f("abs(x1)", &g);
        let hs = conjugate(&h, &TransformConfig::for_fn(&h, Method::FastLLT, g.clone())).unwrap();
        let s = subdifferential(&h, &hs, &[0.0], 1e-9).unwrap();
        let pts: Vec<f64> = s.iter().map(|&i| g.node(i)[0]).collect();
        assert_eq!(pts.len(), 21);
        assert!(pts.iter().all(|p| p.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn inf_convolution_identity_and_regularization() {
        let g = Grid::cube(1, -2.0, 2.0, 21).unwrap();
        let h1 = f("pow(x1,3) - x1", &g);
        let delta0 = f("0 if x1 == 0 else +inf", &g);
        let r = inf_convolution(&h1, &delta0).unwrap();
        for (a, b) in r.values.iter().zip(&h1.values) {
            assert!((a.to_f64() - b.to_f64()).abs() < 1e-12);
        }
        // off-lattice kernel uses interpolation
        let shifted = Grid::cube(1, -2.05, 2.05, 42).unwrap();
        let delta0 = f("0 if x1 >= -0.1 and x1 <= 0.1 else +inf", &shifted);
        let r = inf_convolution(&h1, &delta0).unwrap();
        assert!(r.values.iter().zip(&h1.values).all(|(a, b)| a <= b));
    }

    #[test]
    fn biconjugate_below() {
        let g = Grid::cube(1, -2.0, 4.0, 61).unwrap();
        let d = Grid::cube(1, -10.0, 10.0, 201).unwrap();
        let h = f("min(pow(x1,2), pow(x1-2,2)+1)", &g);
        let cfg = TransformConfig::for_fn(&h, Method::FastLLT, d);
        let hh = biconjugate(&h, &cfg).unwrap();
        for (a, b) in hh.values.iter().zip(&h.values) {
            assert!(a.to_f64() <= b.to_f64() + 1e-12);
        }
        let i1 = g.require_node(&[1.0]).unwrap();
        assert!(hh.values[i1] < h.values[i1]);
    }
}
