//! Perturbation duality on the grids: Lagrangian, value functions, optimal sets, weak duality,
//! optimality conditions and the subdifferential chain rule.

use rayon::prelude::*;
use serde::Serialize;

use crate::composite::CompositeProblem;
use crate::conjugate::{self, TransformConfig};
use crate::error::{Error, Result};
use crate::extreal::{ext_add, ExtReal, MinusInf, PlusInf};
use crate::grid::{Grid, GridFn, MAX_DIM};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn y_node(p: &CompositeProblem, y: &[f64]) -> Result<usize> {
    p.grids.y.require_node(y)
}

/// `l(x,y) = f0(x) + ⟨y,F(x)⟩ − g*(y)`.
pub fn lagrangian(p: &CompositeProblem, x: &[f64], y: &[f64]) -> Result<ExtReal> {
    p.grids.x.require_node(x)?;
    let j = y_node(p, y)?;
    let f0 = ExtReal::from_f64(p.f0.eval(x));
    let Some(fx) = p.map.eval(x) else { return Ok(PlusInf) };
    if f0.is_plus_inf() {
        return Ok(PlusInf);
    }
    let gs = p.g_star();
    let g_star = if gs.effectively_infinite(j) { PlusInf } else { gs.fun.values[j] };
    Ok(ext_add(f0.add_real(dot(y, &fx)), g_star.neg()))
}

/// `f*(v,y)` with the truncation flags of both terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FStar {
    /// Effective value: `PlusInf` when either term is truncation-suspect.
    pub value: ExtReal,
    /// Value before truncation screening.
    pub raw: ExtReal,
    pub suspect: bool,
}

/// `f*(v,y) = (f0 + ⟨y,F⟩)*(v) + g*(y)` for `y` on the y-grid and any `v`.
pub fn f_star(p: &CompositeProblem, v: &[f64], y: &[f64]) -> Result<FStar> {
    if v.len() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), got: v.len() });
    }
    let j = y_node(p, y)?;
    Ok(f_star_node(p, v, j))
}

fn f_star_node(p: &CompositeProblem, v: &[f64], j: usize) -> FStar {
    let y = p.grids.y.node(j);
    let gs = p.g_star();
    let (c, cs) = p.scalarized_conjugate_at(&y, v);
    let raw = ext_add(ExtReal::from_f64(c), gs.fun.values[j]);
    let suspect = cs || gs.truncation_suspect[j];
    FStar { value: if suspect { PlusInf } else { raw }, raw, suspect }
}

/// Value of a parametric problem with its optimal set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueReport {
    pub value: ExtReal,
    /// Optimal nodes; empty unless attained.
    pub argmin: Vec<Vec<f64>>,
    pub attained: bool,
    /// The grid minimum touches the grid boundary (flat tail or truncation).
    pub boundary_suspect: bool,
}

fn value_from(grid: &Grid, vals: &[f64]) -> ValueReport {
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let value = ExtReal::from_f64(min);
    if !min.is_finite() {
        return ValueReport { value, argmin: Vec::new(), attained: false, boundary_suspect: false };
    }
    let tol = 1e-9 * (1.0 + min.abs());
    let arg: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= min + tol).collect();
    let boundary = arg.iter().any(|&i| grid.is_boundary(i));
    if boundary {
        ValueReport { value, argmin: Vec::new(), attained: false, boundary_suspect: true }
    } else {
        ValueReport { value, argmin: arg.iter().map(|&i| grid.node(i)).collect(), attained: true, boundary_suspect: false }
    }
}

/// `p_v̄(ū) = inf_x f(x,ū) − ⟨v̄,x⟩` over the x-grid, `f` evaluated exactly.
pub fn primal_value(p: &CompositeProblem, v: &[f64], u: &[f64]) -> Result<ValueReport> {
    if v.len() != p.n() || u.len() != p.m() {
        return Err(Error::DimensionMismatch { expected: p.n() + p.m(), got: v.len() + u.len() });
    }
    let gx = &p.grids.x;
    let f = p.perturbation();
    let vals: Vec<f64> = (0..gx.len())
        .into_par_iter()
        .map(|i| {
            let x = gx.node(i);
            f.value(&x, u).add_real(-dot(v, &x)).to_f64()
        })
        .collect();
    Ok(value_from(gx, &vals))
}

/// `q_ū(v̄) = inf_y f*(v̄,y) − ⟨ū,y⟩` over the y-grid.
pub fn dual_value(p: &CompositeProblem, v: &[f64], u: &[f64]) -> Result<ValueReport> {
    if v.len() != p.n() || u.len() != p.m() {
        return Err(Error::DimensionMismatch { expected: p.n() + p.m(), got: v.len() + u.len() });
    }
    let gy = &p.grids.y;
    let _ = p.g_star();
    let vals: Vec<f64> = (0..gy.len())
        .into_par_iter()
        .map(|j| {
            let fs = f_star_node(p, v, j);
            fs.value.add_real(-dot(u, &gy.node(j))).to_f64()
        })
        .collect();
    Ok(value_from(gy, &vals))
}

/// Tolerance for weak duality and gap tests: `1e-6 + 2·h·G`.
pub fn duality_tol(p: &CompositeProblem) -> f64 {
    p.tolerance()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityFlags {
    pub weak_ok: bool,
    pub strong_eq: bool,
    pub primal_attained: bool,
    pub dual_attained: bool,
    pub boundary_suspect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub v_bar: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub p_val: ExtReal,
    pub q_val: ExtReal,
    /// `p − (−q)` under inf-addition.
    pub gap: ExtReal,
    pub p_set: Vec<Vec<f64>>,
    pub q_set: Vec<Vec<f64>>,
    pub tol: f64,
    pub flags: DualityFlags,
}

pub fn weak_duality_report(p: &CompositeProblem, v: &[f64], u: &[f64]) -> Result<DualityReport> {
    let pv = primal_value(p, v, u)?;
    let qv = dual_value(p, v, u)?;
    let tol = duality_tol(p);
    let gap = ext_add(pv.value, qv.value);
    let weak_ok = match gap {
        ExtReal::Finite(g) => g >= -tol,
        PlusInf => true,
        MinusInf => false,
    };
    let strong_eq = matches!(gap, ExtReal::Finite(g) if g.abs() <= tol);
    Ok(DualityReport {
        v_bar: v.to_vec(),
        u_bar: u.to_vec(),
        p_val: pv.value,
        q_val: qv.value,
        gap,
        p_set: pv.argmin,
        q_set: qv.argmin,
        tol,
        flags: DualityFlags {
            weak_ok,
            strong_eq,
            primal_attained: pv.attained,
            dual_attained: qv.attained,
            boundary_suspect: pv.boundary_suspect || qv.boundary_suspect,
        },
    })
}

/// The slice `u ↦ p_v̄(u)` on the u-grid.
pub fn primal_slice(p: &CompositeProblem, v: &[f64]) -> GridFn {
    let gx = &p.grids.x;
    let gu = &p.grids.u;
    let f = p.perturbation();
    let xs: Vec<Vec<f64>> = (0..gx.len()).map(|i| gx.node(i)).collect();
    let vals: Vec<f64> = (0..gu.len())
        .into_par_iter()
        .map(|k| {
            let u = gu.node(k);
            xs.iter().map(|x| f.value(x, &u).add_real(-dot(v, x)).to_f64()).fold(f64::INFINITY, f64::min)
        })
        .collect();
    GridFn::from_raw(gu.clone(), &vals)
}

/// The slice `v ↦ q_ū(v)` on the v-grid.
pub fn dual_slice(p: &CompositeProblem, u: &[f64]) -> GridFn {
    let gv = &p.grids.v;
    let gy = &p.grids.y;
    let _ = p.g_star();
    let vals: Vec<f64> = (0..gv.len())
        .into_par_iter()
        .map(|i| {
            let v = gv.node(i);
            (0..gy.len())
                .map(|j| f_star_node(p, &v, j).value.add_real(-dot(u, &gy.node(j))).to_f64())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    GridFn::from_raw(gv.clone(), &vals)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceIdentityReport {
    pub max_abs_dev: f64,
    pub n_compared: usize,
}

/// Conjugates the u-slice `p_v̄` onto the y-grid and compares with `f*(v̄,·)` on nodes where
/// both are finite and free of truncation.
pub fn slice_conjugate_identity(p: &CompositeProblem, v: &[f64]) -> Result<SliceIdentityReport> {
    let slice = primal_slice(p, v);
    let cfg = TransformConfig::for_fn(&slice, p.method, p.grids.y.clone());
    let ps = conjugate::conjugate_flagged(&slice, &cfg)?;
    let gy = &p.grids.y;
    let (mut dev, mut n) = (0.0f64, 0);
    for j in 0..gy.len() {
        if !ps.reliable(j) {
            continue;
        }
        let fs = f_star_node(p, v, j);
        if let ExtReal::Finite(b) = fs.value {
            n += 1;
            dev = dev.max((ps.fun.values[j].to_f64() - b).abs());
        }
    }
    Ok(SliceIdentityReport { max_abs_dev: dev, n_compared: n })
}

/// Finite-domain nodes of `p_v̄` for each `v̄`, and of `q_ū` for each `ū`; stable means each
/// family has a single node set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainStability {
    pub primal_stable: bool,
    pub dual_stable: bool,
}

pub fn domain_stability(p: &CompositeProblem, vs: &[Vec<f64>], us: &[Vec<f64>]) -> DomainStability {
    let same = |sets: Vec<Vec<usize>>| sets.windows(2).all(|w| w[0] == w[1]);
    let primal = vs.iter().map(|v| primal_slice(p, v).domain()).collect();
    let dual = us.iter().map(|u| dual_slice(p, u).domain()).collect();
    DomainStability { primal_stable: same(primal), dual_stable: same(dual) }
}

/// The two condition pairs at `(v̄, x̄, ȳ)` evaluated as nonnegative gaps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityCheck {
    /// `C(x̄) + C*(v̄) − ⟨v̄,x̄⟩` with `C = f0 + g∘F`.
    pub gap_15a: ExtReal,
    /// `H*(v̄) + g*(ȳ) − C*(v̄)` with `H = f0 + ⟨ȳ,F⟩`.
    pub gap_15b: ExtReal,
    /// `g(F(x̄)) + g*(ȳ) − ⟨ȳ,F(x̄)⟩`.
    pub gap_16a: ExtReal,
    /// `H(x̄) + H*(v̄) − ⟨v̄,x̄⟩`.
    pub gap_16b: ExtReal,
    pub eq15_holds: bool,
    pub eq16_holds: bool,
    pub equivalent: bool,
    /// One pair holds within `tol` while the other fails by more than `2·tol`.
    pub beyond_tolerance: bool,
}

struct OptContext {
    /// `C` on the x-grid.
    comp: Vec<f64>,
    /// `C*` on the v-grid, uncapped.
    comp_star: Vec<f64>,
}

fn opt_context(p: &CompositeProblem) -> OptContext {
    let c = p.composite_fn();
    let comp = c.to_raw();
    let comp_star = conjugate::transform_raw(&p.grids.x, &comp, &p.grids.v, p.method);
    OptContext { comp, comp_star }
}

fn holds(g: ExtReal, tol: f64) -> bool {
    matches!(g, ExtReal::Finite(x) if x <= tol)
}

fn fails_beyond(g: ExtReal, tol: f64) -> bool {
    match g {
        ExtReal::Finite(x) => x > 2.0 * tol + 1e-12,
        _ => true,
    }
}

fn opt_check(p: &CompositeProblem, ctx: &OptContext, vi: usize, xi: usize, yj: usize, tol: f64) -> OptimalityCheck {
    let v = p.grids.v.node(vi);
    let x = p.grids.x.node(xi);
    let y = p.grids.y.node(yj);
    let e = ExtReal::from_f64;
    let vx = dot(&v, &x);
    let c_star = e(ctx.comp_star[vi]);
    let gs = p.g_star().fun.values[yj];
    let (h_star, _) = p.scalarized_conjugate_at(&y, &v);
    let h_star = e(h_star);
    let gap_15a = ext_add(e(ctx.comp[xi]), c_star).add_real(-vx);
    let gap_15b = if c_star.is_finite() { ext_add(h_star, gs).add_real(-c_star.to_f64()) } else { PlusInf };
    let (gap_16a, gap_16b) = match p.map.eval(&x) {
        Some(fx) if p.f0.eval(&x).is_finite() => {
            let h_x = p.f0.eval(&x) + dot(&y, &fx);
            (ext_add(p.g.eval(&fx), gs).add_real(-dot(&y, &fx)), ext_add(e(h_x), h_star).add_real(-vx))
        }
        _ => (PlusInf, PlusInf),
    };
    let eq15 = holds(gap_15a, tol) && holds(gap_15b, tol);
    let eq16 = holds(gap_16a, tol) && holds(gap_16b, tol);
    let beyond = (eq15 && (fails_beyond(gap_16a, tol) || fails_beyond(gap_16b, tol)))
        || (eq16 && (fails_beyond(gap_15a, tol) || fails_beyond(gap_15b, tol)));
    OptimalityCheck {
        gap_15a,
        gap_15b,
        gap_16a,
        gap_16b,
        eq15_holds: eq15,
        eq16_holds: eq16,
        equivalent: eq15 == eq16,
        beyond_tolerance: beyond,
    }
}

/// Evaluates both condition pairs at grid nodes `v̄`, `x̄`, `ȳ`.
pub fn optimality_equivalence_check(
    p: &CompositeProblem,
    v: &[f64],
    x: &[f64],
    y: &[f64],
    tol: f64,
) -> Result<OptimalityCheck> {
    let vi = p.grids.v.require_node(v)?;
    let xi = p.grids.x.require_node(x)?;
    let yj = y_node(p, y)?;
    Ok(opt_check(p, &opt_context(p), vi, xi, yj, tol))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityScan {
    pub triples: usize,
    /// Triples where exactly one pair holds at `tol`.
    pub mismatches: usize,
    pub beyond_tolerance: usize,
    pub both_hold: usize,
}

/// Every `(v̄, x̄, ȳ)` node triple.
pub fn optimality_scan(p: &CompositeProblem, tol: f64) -> OptimalityScan {
    let ctx = opt_context(p);
    let (nv, nx, ny) = (p.grids.v.len(), p.grids.x.len(), p.grids.y.len());
    let _ = p.g_star();
    let counts = (0..nv)
        .into_par_iter()
        .map(|vi| {
            let mut c = [0usize; 3];
            for xi in 0..nx {
                for yj in 0..ny {
                    let r = opt_check(p, &ctx, vi, xi, yj, tol);
                    c[0] += usize::from(!r.equivalent);
                    c[1] += usize::from(r.beyond_tolerance);
                    c[2] += usize::from(r.eq15_holds && r.eq16_holds);
                }
            }
            c
        })
        .reduce(|| [0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    OptimalityScan { triples: nv * nx * ny, mismatches: counts[0], beyond_tolerance: counts[1], both_hold: counts[2] }
}

/// Subdifferential tolerance at `x̄`: `1e-7·(1 + |h(x̄)| + max|v|·|x̄|)`.
fn subdiff_tol(hx: f64, x: &[f64], dual: &Grid) -> f64 {
    let vmax = dual.axes().iter().map(|a| a.lo.abs().max(a.hi.abs())).fold(0.0, f64::max);
    let xn = x.iter().map(|a| a.abs()).sum::<f64>();
    1e-7 * (1.0 + hx.abs() + vmax * xn)
}

/// Dual nodes attaining `max_v ⟨v,x̄⟩ − h*(v)` within tol, for raw `h` on `grid`; empty when
/// `h(x̄)` is not finite. When the slope interval at `x̄` contains dual nodes this is the
/// zero-gap set; otherwise it keeps the nodes nearest to it.
fn subdiff_raw(grid: &Grid, h: &[f64], xi: usize, dual: &Grid, method: conjugate::Method) -> Vec<usize> {
    let hx = h[xi];
    if !hx.is_finite() {
        return Vec::new();
    }
    let x = grid.node(xi);
    let hs = conjugate::transform_raw(grid, h, dual, method);
    argmax_nodes(dual, &x, &hs, None, subdiff_tol(hx, &x, dual))
}

/// Nodes `j` of `dual` with `⟨y_j,x⟩ − hs[j]` within `tol` of its maximum, skipping masked ones.
fn argmax_nodes(dual: &Grid, x: &[f64], hs: &[f64], skip: Option<&[bool]>, tol: f64) -> Vec<usize> {
    let mut buf = [0.0; MAX_DIM];
    let score: Vec<f64> = (0..dual.len())
        .map(|i| {
            if !hs[i].is_finite() || skip.is_some_and(|m| m[i]) {
                return f64::NEG_INFINITY;
            }
            dual.node_into(i, &mut buf);
            dot(x, &buf[..dual.dim()]) - hs[i]
        })
        .collect();
    let best = score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Vec::new();
    }
    (0..dual.len()).filter(|&i| score[i] >= best - tol).collect()
}

fn dilate(grid: &Grid, set: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; grid.len()];
    for &i in set {
        for j in grid.neighborhood(i, 1) {
            mask[j] = true;
        }
    }
    mask
}

fn subset_dilated(grid: &Grid, a: &[usize], b: &[usize]) -> bool {
    let mask = dilate(grid, b);
    a.iter().all(|&i| mask[i])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainRuleReport {
    pub x_bar: Vec<f64>,
    /// `∂(f0 + g∘F)(x̄)` as v-grid points.
    pub lhs: Vec<Vec<f64>>,
    /// `⋃_{ȳ ∈ ∂g(F(x̄))} ∂(f0 + ⟨ȳ,F⟩)(x̄)`.
    pub rhs: Vec<Vec<f64>>,
    /// `∂g(F(x̄))` as y-grid points.
    pub dg: Vec<Vec<f64>>,
    /// `∂f0(x̄) + ⋃ ∂⟨ȳ,F⟩(x̄)`, present when `f0` is not identically zero.
    pub rhs_additive: Option<Vec<Vec<f64>>>,
    pub inclusion_ok: bool,
    pub additive_inclusion_ok: Option<bool>,
    /// `lhs ⊆ rhs` after dilation, reported only when `certified`.
    pub equality_ok: Option<bool>,
    pub reverse_inclusion: bool,
    /// Some set reached a dual-grid boundary.
    pub boundary_suspect: bool,
}

/// Compares both sides of the chain rule at the x-grid node `x̄`.
pub fn chain_rule_sets(p: &CompositeProblem, x: &[f64], certified: bool) -> Result<ChainRuleReport> {
    let gx = &p.grids.x;
    let gv = &p.grids.v;
    let gy = &p.grids.y;
    let xi = gx.require_node(x)?;
    let comp = p.composite_fn();
    if let Some((a, _, b)) = comp.midpoint_violation(1e-9) {
        return Err(Error::NotConvex(format!(
            "composite fails the midpoint test between {:?} and {:?}",
            gx.node(a),
            gx.node(b)
        )));
    }
    let lhs = subdiff_raw(gx, &comp.to_raw(), xi, gv, p.method);

    let mut dg = Vec::new();
    if let (Some(fx), true) = (p.map.eval(x), p.f0.eval(x).is_finite()) {
        if let Some(gw) = p.g.eval(&fx).value() {
            let gs = p.g_star();
            dg = argmax_nodes(gy, &fx, &gs.fun.to_raw(), Some(&gs.truncation_suspect), subdiff_tol(gw, &fx, gy));
        }
    }

    let union_over = |raw_of: &(dyn Fn(&[f64], &mut [f64]) + Sync)| -> Vec<usize> {
        let mut mask = vec![false; gv.len()];
        let parts: Vec<Vec<usize>> = dg
            .par_iter()
            .map(|&j| {
                let y = gy.node(j);
                let mut h = vec![0.0; gx.len()];
                raw_of(&y, &mut h);
                subdiff_raw(gx, &h, xi, gv, p.method)
            })
            .collect();
        for s in parts {
            for i in s {
                mask[i] = true;
            }
        }
        (0..gv.len()).filter(|&i| mask[i]).collect()
    };
    let rhs = union_over(&|y, out| {
        let h = p.h_y(y).expect("dimension matches");
        out.copy_from_slice(&h.to_raw());
    });

    let (rhs_additive, additive_inclusion_ok) = if p.f0.is_zero() {
        (None, None)
    } else {
        let f0 = p.f0_sampled().to_raw();
        let d0 = subdiff_raw(gx, &f0, xi, gv, p.method);
        let scal = union_over(&|y, out| {
            let h = p.scalarize(y).expect("dimension matches");
            out.copy_from_slice(&h.to_raw());
        });
        let mut sum = vec![false; gv.len()];
        for &a in &d0 {
            let va = gv.node(a);
            for &b in &scal {
                let vb = gv.node(b);
                let s: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x + y).collect();
                if let Some(k) = gv.locate(&s) {
                    sum[k] = true;
                }
            }
        }
        let sum: Vec<usize> = (0..gv.len()).filter(|&i| sum[i]).collect();
        let ok = subset_dilated(gv, &sum, &lhs);
        (Some(sum), Some(ok))
    };

    let inclusion_ok = subset_dilated(gv, &rhs, &lhs);
    let reverse_inclusion = subset_dilated(gv, &lhs, &rhs);
    let boundary_suspect = lhs.iter().chain(&rhs).any(|&i| gv.is_boundary(i)) || dg.iter().any(|&j| gy.is_boundary(j));
    let pts = |g: &Grid, s: &[usize]| s.iter().map(|&i| g.node(i)).collect::<Vec<_>>();
    Ok(ChainRuleReport {
        x_bar: x.to_vec(),
        lhs: pts(gv, &lhs),
        rhs: pts(gv, &rhs),
        dg: pts(gy, &dg),
        rhs_additive: rhs_additive.map(|s| pts(gv, &s)),
        inclusion_ok,
        additive_inclusion_ok,
        equality_ok: certified.then_some(inclusion_ok && reverse_inclusion),
        reverse_inclusion,
        boundary_suspect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgminSubdiffReport {
    pub p_set: Vec<Vec<f64>>,
    /// `∂q_ū(v̄)` as x-grid points.
    pub dq: Vec<Vec<f64>>,
    pub dq_boundary_suspect: bool,
    pub equal: bool,
}

/// Compares the primal optimal set with `∂q_ū(v̄)` (one-node dilation both ways).
pub fn argmin_subdifferential_identity(p: &CompositeProblem, v: &[f64], u: &[f64]) -> Result<ArgminSubdiffReport> {
    let gv = &p.grids.v;
    let gx = &p.grids.x;
    let vi = gv.require_node(v)?;
    let pv = primal_value(p, v, u)?;
    let q = dual_slice(p, u);
    let mut dq = subdiff_raw(gv, &q.to_raw(), vi, gx, p.method);
    let dq_boundary_suspect = dq.iter().any(|&i| gx.is_boundary(i));
    if dq_boundary_suspect {
        dq.clear();
    }
    let pset: Vec<usize> = pv.argmin.iter().filter_map(|x| gx.locate(x)).collect();
    let equal = subset_dilated(gx, &pset, &dq) && subset_dilated(gx, &dq, &pset);
    Ok(ArgminSubdiffReport {
        p_set: pv.argmin,
        dq: dq.iter().map(|&i| gx.node(i)).collect(),
        dq_boundary_suspect,
        equal,
    })
}

/// `∂h(x̄)` for `h` on its grid, with sets reaching the dual boundary reported empty.
pub fn subdifferential_or_empty(h: &GridFn, xbar: &[f64], dual: &Grid, method: conjugate::Method) -> Result<(Vec<Vec<f64>>, bool)> {
    let xi = h.grid.require_node(xbar)?;
    let s = subdiff_raw(&h.grid, &h.to_raw(), xi, dual, method);
    if s.iter().any(|&i| dual.is_boundary(i)) {
        return Ok((Vec::new(), true));
    }
    Ok((s.iter().map(|&i| dual.node(i)).collect(), false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::{Grids, Outer, VecMap};
    use crate::expr::FunctionExpr;

    fn e(s: &str) -> FunctionExpr {
        FunctionExpr::parse(s).unwrap()
    }

    fn g1(lo: f64, hi: f64, n: usize) -> Grid {
        Grid::cube(1, lo, hi, n).unwrap()
    }

    /// `f(x,u) = x + δ_{ℝ₋}(x² + u)`.
    fn nonattain_dual() -> CompositeProblem {
        let grids = Grids {
            x: g1(-4.0, 4.0, 401),
            u: g1(-4.0, 4.0, 81),
            w: g1(-4.0, 4.0, 81),
            v: g1(-4.0, 4.0, 81),
            y: g1(-4.0, 256.0, 261),
        };
        let map = VecMap::parse(1, &["pow(x1,2)"], None).unwrap();
        CompositeProblem::new(e("x1"), Outer::Expr(e("0 if w1 <= 0 else inf")), map, grids).unwrap()
    }

    /// `f(x,u) = exp(x) + u`.
    fn nonattain_primal() -> CompositeProblem {
        let grids = Grids {
            x: g1(-8.0, 8.0, 161),
            u: g1(-4.0, 4.0, 81),
            w: g1(-4.0, 4.0, 81),
            v: g1(-4.0, 4.0, 81),
            y: g1(-4.0, 4.0, 81),
        };
        let map = VecMap::parse(1, &["0"], None).unwrap();
        CompositeProblem::new(e("exp(x1)"), Outer::Expr(e("w1")), map, grids).unwrap()
    }

    #[test]
    fn f_star_appendix_values() {
        let p = nonattain_dual();
        assert!((f_star(&p, &[0.0], &[1.0]).unwrap().value.to_f64() - 0.25).abs() < 1e-9);
        assert!(f_star(&p, &[1.0], &[0.0]).unwrap().value.to_f64().abs() < 1e-9);
        let q = nonattain_primal();
        assert!((f_star(&q, &[1.0], &[1.0]).unwrap().value.to_f64() + 1.0).abs() < 1e-9);
        assert!(matches!(f_star(&q, &[1.0], &[0.05]), Err(Error::NodeOutOfGrid(_))));
    }

    #[test]
    fn lagrangian_cases() {
        let map = VecMap::parse(2, &["0", "x2"], None).unwrap();
        let sq = Grid::cube(2, -4.0, 4.0, 41).unwrap();
        let grids = Grids { x: sq.clone(), u: sq.clone(), w: sq.clone(), v: sq.clone(), y: sq };
        let p = CompositeProblem::new(
            FunctionExpr::constant(0.0),
            Outer::Expr(e("pow(w1,3)/3 if w1 >= 0 else inf")),
            map,
            grids,
        )
        .unwrap();
        let l = lagrangian(&p, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((l.to_f64() + 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(lagrangian(&p, &[0.0, 0.0], &[1.0, 1.0]).unwrap(), MinusInf);
        let guarded = VecMap::parse(1, &["x1"], Some("x1 >= 0")).unwrap();
        let g = g1(-1.0, 1.0, 5);
        let q = CompositeProblem::new(
            FunctionExpr::constant(0.0),
            Outer::Expr(e("abs(w1)")),
            guarded,
            Grids { x: g.clone(), u: g.clone(), w: g.clone(), v: g.clone(), y: g },
        )
        .unwrap();
        assert_eq!(lagrangian(&q, &[-0.5], &[0.0]).unwrap(), PlusInf);
    }

    #[test]
    fn dual_not_attained() {
        let p = nonattain_dual();
        let r = weak_duality_report(&p, &[0.0], &[0.0]).unwrap();
        assert!(r.p_val.to_f64().abs() < 1e-9);
        assert!(r.q_val.to_f64().abs() < 5e-2);
        assert!(r.flags.weak_ok && r.flags.primal_attained && !r.flags.dual_attained);
        assert!(r.flags.boundary_suspect);
        assert_eq!(r.p_set, vec![vec![0.0]]);
    }

    #[test]
    fn primal_not_attained() {
        let p = nonattain_primal();
        let r = weak_duality_report(&p, &[0.0], &[0.0]).unwrap();
        assert!(r.p_val.to_f64().abs() < 1e-3);
        assert!(r.q_val.to_f64().abs() < 1e-3);
        assert!(!r.flags.primal_attained && r.flags.dual_attained);
        assert_eq!(r.q_set, vec![vec![1.0]]);
        for u in [-2.0, 0.5, 3.0] {
            let pv = primal_value(&p, &[0.0], &[u]).unwrap();
            assert!((pv.value.to_f64() - u).abs() < 1e-3);
        }
    }

    #[test]
    fn chain_rule_identity_abs() {
        let g = g1(-2.0, 2.0, 41);
        let p = CompositeProblem::new(
            FunctionExpr::constant(0.0),
            Outer::Expr(e("abs(w1)")),
            VecMap::identity(1).unwrap(),
            Grids { x: g.clone(), u: g.clone(), w: g.clone(), v: g.clone(), y: g },
        )
        .unwrap();
        let r = chain_rule_sets(&p, &[0.0], true).unwrap();
        assert_eq!(r.lhs.len(), 21);
        assert_eq!(r.lhs, r.rhs);
        assert_eq!(r.equality_ok, Some(true));
    }
}
