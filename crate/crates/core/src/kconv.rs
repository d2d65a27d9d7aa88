//! K-convexity and K-monotonicity tests, horizon cone and `K_F` estimates, and monotone
//! regularization `g_K = g □ δ_{−K}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::composite::VecMap;
use crate::cones::{Cone, CONE_TOL};
use crate::conjugate::{self, FlaggedConjugate, Method, TransformConfig, INF_CAP};
use crate::error::{Error, Result};
use crate::extreal::{ExtReal, MinusInf, PlusInf};
use crate::grid::{midpoint_violation_raw, Grid, GridFn, MAX_DIM};

/// Midpoint tolerance for scalarization tests.
pub const CONVEXITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DirectionVerdict {
    Convex,
    /// `(a, midpoint, b)` as points of the x-grid.
    NonconvexWitness([Vec<f64>; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityCertificate {
    pub tested_directions: Vec<Vec<f64>>,
    pub verdicts: Vec<DirectionVerdict>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⟨y,F⟩` on `grid`, raw; `+inf` off `dom F`.
fn scalarized_raw(map: &VecMap, y: &[f64], grid: &Grid) -> Vec<f64> {
    let mut buf = [0.0; MAX_DIM];
    let mut out = [0.0; MAX_DIM];
    (0..grid.len())
        .map(|i| {
            grid.node_into(i, &mut buf);
            if map.eval_into(&buf[..map.n], &mut out[..map.m]) {
                dot(y, &out[..map.m])
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

fn scalarization_verdict(map: &VecMap, y: &[f64], grid: &Grid) -> DirectionVerdict {
    let raw = scalarized_raw(map, y, grid);
    match midpoint_violation_raw(grid, &raw, CONVEXITY_TOL) {
        None => DirectionVerdict::Convex,
        Some((a, m, b)) => DirectionVerdict::NonconvexWitness([grid.node(a), grid.node(m), grid.node(b)]),
    }
}

/// Tests `⟨y,F⟩` for midpoint convexity at every generator `y` of `−K°`.
pub fn is_k_convex(map: &VecMap, k: &Cone, x_grid: &Grid) -> Result<(bool, ConvexityCertificate)> {
    if map.m > MAX_DIM {
        return Err(Error::DimensionTooLarge(map.m));
    }
    if k.dim() != map.m {
        return Err(Error::DimensionMismatch { expected: map.m, got: k.dim() });
    }
    if x_grid.dim() != map.n {
        return Err(Error::DimensionMismatch { expected: map.n, got: x_grid.dim() });
    }
    let dirs = k.polar()?.neg().rays().to_vec();
    let verdicts: Vec<DirectionVerdict> = dirs.par_iter().map(|y| scalarization_verdict(map, y, x_grid)).collect();
    let ok = verdicts.iter().all(|v| *v == DirectionVerdict::Convex);
    Ok((ok, ConvexityCertificate { tested_directions: dirs, verdicts }))
}

/// One lattice step along `r`: `r` scaled so its largest per-axis move is one spacing.
fn lattice_step(grid: &Grid, r: &[f64]) -> Vec<f64> {
    let s = (0..grid.dim()).map(|k| r[k].abs() / grid.axis(k).spacing()).fold(0.0, f64::max);
    r.iter().map(|a| a / s).collect()
}

/// Checks `g(w) ≤ g(w + t·k) + tol` along grid-aligned steps of each generator `k`.
pub fn is_k_increasing(g: &GridFn, k: &Cone, restriction: Option<&[usize]>) -> Result<bool> {
    let grid = &g.grid;
    if k.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: k.dim() });
    }
    let nodes: Vec<usize> = match restriction {
        Some(r) => r.to_vec(),
        None => (0..grid.len()).collect(),
    };
    let d = grid.dim();
    for ray in k.rays() {
        let step = lattice_step(grid, ray);
        let violated = nodes.par_iter().any(|&i| {
            let w = grid.node(i);
            let gw = g.values[i];
            let mut p = w.clone();
            loop {
                for c in 0..d {
                    p[c] += step[c];
                }
                if !grid.contains(&p) {
                    return false;
                }
                let Some(j) = grid.locate(&p) else { continue };
                let gj = g.values[j];
                let bad = match (gw, gj) {
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => a > b + 1e-9 * (1.0 + a.abs()),
                    _ => gw > gj,
                };
                if bad {
                    return true;
                }
            }
        });
        if violated {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Unit directions: 2 in ℝ¹, `samples` on the circle in ℝ², a Fibonacci sphere in ℝ³.
pub fn sample_directions(dim: usize, samples: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..samples)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / samples as f64;
                vec![clean(t.cos()), clean(t.sin())]
            })
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(samples + 6);
            for k in 0..3 {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; 3];
                    e[k] = s;
                    out.push(e);
                }
            }
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for i in 0..samples {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / samples as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * i as f64;
                out.push(vec![r * t.cos(), r * t.sin(), z]);
            }
            out
        }
    }
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

/// Conic hull of unit directions, as a [`Cone`] with at most 32 generators.
pub fn conic_hull(dim: usize, dirs: &[Vec<f64>]) -> Result<Cone> {
    if dirs.is_empty() {
        return Cone::zero(dim);
    }
    match dim {
        1 => Cone::new(1, dirs.to_vec()),
        2 => hull_2d(dirs),
        _ => Cone::new(dim, farthest_points(dirs, crate::cones::MAX_RAYS)),
    }
}

fn hull_2d(dirs: &[Vec<f64>]) -> Result<Cone> {
    use std::f64::consts::{PI, TAU};
    let mut ang: Vec<f64> = dirs.iter().map(|d| d[1].atan2(d[0]).rem_euclid(TAU)).collect();
    ang.sort_by(f64::total_cmp);
    ang.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let ray = |t: f64| vec![clean(t.cos()), clean(t.sin())];
    if ang.len() == 1 {
        return Cone::new(2, vec![ray(ang[0])]);
    }
    let n = ang.len();
    let (mut gap, mut at) = (0.0, 0);
    for i in 0..n {
        let next = if i + 1 < n { ang[i + 1] } else { ang[0] + TAU };
        if next - ang[i] > gap {
            gap = next - ang[i];
            at = i;
        }
    }
    let start = ang[(at + 1) % n];
    let end = ang[at];
    if gap > PI + 1e-9 {
        return Cone::new(2, vec![ray(start), ray(end)]);
    }
    if gap >= PI - 1e-9 {
        if n == 2 {
            return Cone::new(2, vec![ray(start), ray(end)]);
        }
        return Cone::new(2, vec![ray(start), ray(start + PI / 2.0), ray(end)]);
    }
    Cone::full(2)
}

/// Greedy farthest-point subset of at most `k` directions, starting from the first.
fn farthest_points(dirs: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    if dirs.len() <= k {
        return dirs.to_vec();
    }
    let mut chosen = vec![0usize];
    let mut near: Vec<f64> = dirs.iter().map(|d| dot(d, &dirs[0])).collect();
    while chosen.len() < k {
        let (i, _) = near.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
        chosen.push(i);
        for (j, d) in dirs.iter().enumerate() {
            near[j] = near[j].max(dot(d, &dirs[i]));
        }
    }
    chosen.into_iter().map(|i| dirs[i].clone()).collect()
}

/// Directions `d` along which `g` does not increase from any domain node, tested out to the
/// box edge with multilinear interpolation.
pub fn horizon_directions(g: &GridFn, ray_samples: usize) -> Vec<Vec<f64>> {
    let grid = &g.grid;
    let d = grid.dim();
    let dom = g.domain();
    let h = (0..d).map(|k| grid.axis(k).spacing()).fold(f64::INFINITY, f64::min);
    let tol_abs = 1e-7 + 0.25 * grid.max_spacing() * g.gradient_estimate().min(INF_CAP);
    sample_directions(d, ray_samples)
        .into_par_iter()
        .filter(|dir| {
            dom.iter().all(|&i| {
                let w = grid.node(i);
                let Some(gw) = g.values[i].value() else { return true };
                let mut t = h;
                loop {
                    let p: Vec<f64> = w.iter().zip(dir).map(|(a, b)| a + t * b).collect();
                    if !grid.contains(&p) {
                        return true;
                    }
                    match g.interpolate(&p) {
                        ExtReal::Finite(v) if v <= gw + tol_abs + 1e-9 * gw.abs() => {}
                        MinusInf => {}
                        _ => return false,
                    }
                    t += h;
                }
            })
        })
        .collect()
}

/// Estimate of `hzn(g)`.
pub fn horizon_cone(g: &GridFn, ray_samples: usize) -> Result<Cone> {
    conic_hull(g.grid.dim(), &horizon_directions(g, ray_samples))
}

/// Estimate of `K_F = −(cone Y)°` with `Y` the sampled `y` making `⟨y,F⟩` convex.
pub fn k_f_estimate(map: &VecMap, x_grid: &Grid, ray_samples: usize) -> Result<Cone> {
    if x_grid.dim() != map.n {
        return Err(Error::DimensionMismatch { expected: map.n, got: x_grid.dim() });
    }
    let dom: Vec<f64> = (0..x_grid.len())
        .map(|i| if map.in_domain(&x_grid.node(i)) { 0.0 } else { f64::INFINITY })
        .collect();
    if !contiguous_on_lines(x_grid, &dom) {
        return Err(Error::NonConvexDomain);
    }
    let ys: Vec<Vec<f64>> = sample_directions(map.m, ray_samples)
        .into_par_iter()
        .filter(|y| scalarization_verdict(map, y, x_grid) == DirectionVerdict::Convex)
        .collect();
    Ok(conic_hull(map.m, &ys)?.polar()?.neg())
}

/// Finite nodes form one contiguous run on every axis-parallel grid line.
fn contiguous_on_lines(grid: &Grid, v: &[f64]) -> bool {
    for k in 0..grid.dim() {
        for i in 0..grid.len() {
            let idx = grid.unflatten(i);
            if idx[k] != 0 {
                continue;
            }
            let (mut runs, mut prev) = (0, false);
            let mut j = idx;
            for t in 0..grid.axis(k).count {
                j[k] = t;
                let cur = v[grid.flatten(&j)].is_finite();
                if cur && !prev {
                    runs += 1;
                }
                prev = cur;
            }
            if runs > 1 {
                return false;
            }
        }
    }
    true
}

/// Result of [`monotone_regularize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Regularized {
    pub fun: GridFn,
    /// Nodes set to `MinusInf`.
    pub minus_inf_nodes: Vec<usize>,
    /// Some node is `MinusInf` while another is finite or `PlusInf`.
    pub improper: bool,
}

/// `g_K(w) = min { g(z) : z − w ∈ K }` over grid nodes `z`.
///
/// A node whose minimum is reached only at candidates on the far side of the box along `K`,
/// and is strictly below the best candidate away from that side, is reported as `MinusInf`.
/// Values below `−1e12` are also `MinusInf`.
pub fn monotone_regularize(g: &GridFn, k: &Cone) -> Result<Regularized> {
    let grid = &g.grid;
    let d = grid.dim();
    if k.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: k.dim() });
    }
    let counts: Vec<i64> = grid.axes().iter().map(|a| a.count as i64).collect();
    let mut offsets: Vec<[i64; MAX_DIM]> = Vec::new();
    let span = |k: usize| if k < d { -(counts[k] - 1)..=(counts[k] - 1) } else { 0..=0 };
    for a in span(0) {
        for b in span(1) {
            for c in span(2) {
                let o = [a, b, c];
                let p: Vec<f64> = (0..d).map(|j| o[j] as f64 * grid.axis(j).spacing()).collect();
                if k.contains(&p, CONE_TOL)? {
                    offsets.push(o);
                }
            }
        }
    }
    let steps: Vec<Vec<f64>> = k.rays().iter().map(|r| lattice_step(grid, r)).collect();
    let terminal: Vec<bool> = (0..grid.len())
        .map(|z| {
            let p = grid.node(z);
            steps.iter().any(|s| {
                let q: Vec<f64> = p.iter().zip(s).map(|(a, b)| a + b).collect();
                !grid.contains(&q)
            })
        })
        .collect();
    let raw = g.to_raw();
    let out: Vec<(f64, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|w| {
            let iw = grid.unflatten(w);
            let (mut full, mut inner) = (f64::INFINITY, f64::INFINITY);
            'o: for o in &offsets {
                let mut iz = [0usize; MAX_DIM];
                for j in 0..d {
                    let t = iw[j] as i64 + o[j];
                    if t < 0 || t >= counts[j] {
                        continue 'o;
                    }
                    iz[j] = t as usize;
                }
                let z = grid.flatten(&iz);
                let v = raw[z];
                full = full.min(v);
                if !terminal[z] {
                    inner = inner.min(v);
                }
            }
            let unbounded = full == f64::NEG_INFINITY
                || full < -INF_CAP
                || (inner.is_finite() && full < inner - 1e-9 * (1.0 + inner.abs()));
            (full, unbounded)
        })
        .collect();
    let mut minus = Vec::new();
    let values: Vec<ExtReal> = out
        .iter()
        .enumerate()
        .map(|(i, &(v, unb))| {
            if unb {
                minus.push(i);
                MinusInf
            } else {
                ExtReal::from_f64(v)
            }
        })
        .collect();
    let improper = !minus.is_empty() && values.iter().any(|v| !v.is_minus_inf());
    Ok(Regularized { fun: GridFn::new(grid.clone(), values)?, minus_inf_nodes: minus, improper })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizedConjugateReport {
    pub max_abs_dev: f64,
    pub n_compared: usize,
    /// Dual nodes finite on one side only, farther than one node from the other side's domain.
    pub domain_mismatch: usize,
}

/// Compares `(g_K)*` with `g* + δ_{−K°}` on `dual`.
pub fn regularized_conjugate_check(g: &GridFn, k: &Cone, dual: &Grid, method: Method) -> Result<RegularizedConjugateReport> {
    let gk = monotone_regularize(g, k)?;
    let cfg = TransformConfig::for_fn(g, method, dual.clone());
    let lhs = conjugate::conjugate_flagged(&gk.fun, &cfg)?;
    let gs = conjugate::conjugate_flagged(g, &cfg)?;
    let mask = k.polar()?.neg().indicator_grid(dual, false)?;
    let rhs = FlaggedConjugate { fun: gs.fun.add(&mask)?, truncation_suspect: gs.truncation_suspect };
    let finite = |c: &FlaggedConjugate| -> Vec<bool> { (0..dual.len()).map(|i| c.reliable(i)).collect() };
    let (fl, fr) = (finite(&lhs), finite(&rhs));
    let mut dev: f64 = 0.0;
    let mut n = 0;
    let mut mismatch = 0;
    for i in 0..dual.len() {
        match (fl[i], fr[i]) {
            (true, true) => {
                n += 1;
                dev = dev.max((lhs.fun.values[i].to_f64() - rhs.fun.values[i].to_f64()).abs());
            }
            (a, b) if a != b => {
                let other = if a { &fr } else { &fl };
                if !dual.neighborhood(i, 1).iter().any(|&j| other[j]) {
                    mismatch += 1;
                }
            }
            _ => {}
        }
    }
    Ok(RegularizedConjugateReport { max_abs_dev: dev, n_compared: n, domain_mismatch: mismatch })
}

/// `hzn` and `K_F` estimates with the 𝒦_F ∩ 𝒦_g nonemptiness test `K_F ⊆ −hzn(g)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeEstimates {
    pub k_f: Cone,
    pub hzn_g: Cone,
    pub kf_kg_nonempty: bool,
}

pub fn cone_estimates(map: &VecMap, x_grid: &Grid, g: &GridFn, ray_samples: usize) -> Result<ConeEstimates> {
    let k_f = k_f_estimate(map, x_grid, ray_samples)?;
    let hzn_g = horizon_cone(g, ray_samples)?;
    let kf_kg_nonempty = k_f.is_subset_of(&hzn_g.neg(), 1e-6)?;
    Ok(ConeEstimates { k_f, hzn_g, kf_kg_nonempty })
}

/// Default direction count: 64 in ℝ², 512 in ℝ³.
pub fn default_ray_samples(dim: usize) -> usize {
    if dim >= 3 {
        512
    } else {
        64
    }
}

/// `true` when `g` has a `MinusInf` node and is not identically `MinusInf`.
pub fn is_improper(g: &GridFn) -> bool {
    g.values.iter().any(|v| v.is_minus_inf()) && g.values.iter().any(|v| *v != MinusInf)
}

/// `g + δ_S` on `g`'s grid for a node predicate `S`.
pub fn restrict(g: &GridFn, keep: impl Fn(&[f64]) -> bool) -> GridFn {
    let values = (0..g.len()).map(|i| if keep(&g.grid.node(i)) { g.values[i] } else { PlusInf }).collect();
    GridFn::new(g.grid.clone(), values).expect("same grid")
}
