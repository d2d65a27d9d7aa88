//! Composite functions `f0 + g∘F`, the perturbation function and the conjugate formulas ρ, ρ̃, η.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{Cone, CONE_TOL};
use crate::conjugate::{self, cap, suspect, truncation_slack, FlaggedConjugate, LltPlan, Method, TransformConfig, INF_CAP};
use crate::error::{Error, Result};
use crate::expr::FunctionExpr;
use crate::extreal::{add_f64, ExtReal, PlusInf};
use crate::grid::{sample, Grid, GridFn, MAX_DIM};
use crate::qual::VRepSet;

/// `F: ℝⁿ → ℝᵐ ∪ {+∞•}`; nodes failing the guard map to `+∞•`.
#[derive(Debug, Clone, PartialEq)]
pub struct VecMap {
    pub n: usize,
    pub m: usize,
    pub components: Vec<FunctionExpr>,
    guard: Option<(String, FunctionExpr)>,
}

impl VecMap {
    pub fn new(n: usize, components: Vec<FunctionExpr>, guard: Option<&str>) -> Result<Self> {
        let m = components.len();
        if m == 0 || m > MAX_DIM {
            return Err(Error::InvalidProblem(format!("F must have 1 to 3 components, got {m}")));
        }
        if n == 0 || n > MAX_DIM {
            return Err(Error::DimensionTooLarge(n));
        }
        for c in &components {
            if c.arity() > n {
                return Err(Error::ArityMismatch { expr: c.arity(), grid: n });
            }
        }
        let guard = match guard.map(str::trim).filter(|g| !g.is_empty()) {
            Some(g) => {
                let e = FunctionExpr::parse(&format!("0 if {g} else inf"))?;
                if e.arity() > n {
                    return Err(Error::ArityMismatch { expr: e.arity(), grid: n });
                }
                Some((g.to_string(), e))
            }
            None => None,
        };
        Ok(VecMap { n, m, components, guard })
    }

    /// Parses component strings.
    pub fn parse(n: usize, components: &[&str], guard: Option<&str>) -> Result<Self> {
        let c = components.iter().map(|s| FunctionExpr::parse(s)).collect::<Result<Vec<_>>>()?;
        VecMap::new(n, c, guard)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let c: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
        VecMap::parse(n, &c.iter().map(String::as_str).collect::<Vec<_>>(), None)
    }

    pub fn guard(&self) -> Option<&str> {
        self.guard.as_ref().map(|(s, _)| s.as_str())
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.guard.as_ref().map_or(true, |(_, e)| e.eval(x) == 0.0)
    }

    /// Writes `F(x)` into `out`; `false` when `x ∉ dom F` or a component is not finite.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        if !self.in_domain(x) {
            return false;
        }
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
            if !o.is_finite() {
                return false;
            }
        }
        true
    }

    pub fn eval(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.m];
        self.eval_into(x, &mut out).then_some(out)
    }
}

/// The outer function: an expression, or values sampled on the w-grid (interpolated off-grid).
#[derive(Debug, Clone, PartialEq)]
pub enum Outer {
    Expr(FunctionExpr),
    Sampled(GridFn),
}

impl Outer {
    pub fn eval(&self, w: &[f64]) -> ExtReal {
        match self {
            Outer::Expr(e) => ExtReal::from_f64(e.eval(w)),
            Outer::Sampled(h) => match h.grid.locate(w) {
                Some(i) => h.values[i],
                None => h.interpolate(w),
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Outer::Expr(e) => e.source().to_string(),
            Outer::Sampled(h) => format!("sampled on {}", String::from(h.grid.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub x: Grid,
    pub u: Grid,
    pub w: Grid,
    pub v: Grid,
    pub y: Grid,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemFlags {
    #[serde(default)]
    pub polyhedral_domg: bool,
    #[serde(default, rename = "polyhedral_F")]
    pub polyhedral_f: bool,
    /// Scenario asserts `f ∈ Γ₀`; cross-checked numerically, never derived.
    #[serde(default)]
    pub f_gamma0: bool,
}

/// Polyhedral descriptions supplied by a scenario for exact qualification tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VRepDecls {
    #[serde(default)]
    pub dom_g: Option<VRepSet>,
    /// `F(dom f0 ∩ dom F)`.
    #[serde(default, rename = "image_F")]
    pub image_f: Option<VRepSet>,
    #[serde(default)]
    pub dom_f0: Option<VRepSet>,
    #[serde(default, rename = "dom_F")]
    pub dom_map: Option<VRepSet>,
    /// `F(rint dom F)`, when it differs from the image.
    #[serde(default, rename = "image_rint_F")]
    pub image_rint_f: Option<VRepSet>,
}

struct Cache {
    /// `f0 + δ_{dom F}` on the x-grid, raw.
    base: Vec<f64>,
    /// `F` at x-nodes in `dom f0 ∩ dom F`, `m` entries per node.
    fx: Vec<Option<[f64; MAX_DIM]>>,
    g_w: GridFn,
    g_star: FlaggedConjugate,
}

pub struct CompositeProblem {
    pub f0: FunctionExpr,
    pub g: Outer,
    pub map: VecMap,
    pub grids: Grids,
    pub method: Method,
    pub flags: ProblemFlags,
    pub vrep: VRepDecls,
    cache: OnceLock<Cache>,
    memo: Option<RhoMemo>,
}

impl Clone for CompositeProblem {
    fn clone(&self) -> Self {
        CompositeProblem {
            f0: self.f0.clone(),
            g: self.g.clone(),
            map: self.map.clone(),
            grids: self.grids.clone(),
            method: self.method,
            flags: self.flags.clone(),
            vrep: self.vrep.clone(),
            cache: OnceLock::new(),
            memo: self.memo.as_ref().map(|_| RhoMemo::default()),
        }
    }
}

impl std::fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("f0", &self.f0)
            .field("g", &self.g.describe())
            .field("map", &self.map)
            .field("grids", &self.grids)
            .finish()
    }
}

/// Per-y cache of `(f0 + ⟨y,F⟩)*` values keyed by `(y node, v bits)`.
#[derive(Default)]
pub struct RhoMemo {
    inner: Mutex<HashMap<(usize, Vec<u64>), (f64, bool)>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn tie_tol(v: f64) -> f64 {
    1e-9 * (1.0 + v.abs())
}

impl CompositeProblem {
    pub fn new(f0: FunctionExpr, g: Outer, map: VecMap, grids: Grids) -> Result<Self> {
        let (n, m) = (map.n, map.m);
        for (name, gr, d) in
            [("x", &grids.x, n), ("v", &grids.v, n), ("u", &grids.u, m), ("w", &grids.w, m), ("y", &grids.y, m)]
        {
            if gr.dim() != d {
                return Err(Error::GridMismatch(format!("{name}-grid has dimension {}, expected {d}", gr.dim())));
            }
        }
        if f0.arity() > n {
            return Err(Error::ArityMismatch { expr: f0.arity(), grid: n });
        }
        match &g {
            Outer::Expr(e) if e.arity() > m => return Err(Error::ArityMismatch { expr: e.arity(), grid: m }),
            Outer::Sampled(h) if h.grid.dim() != m => {
                return Err(Error::GridMismatch("sampled g has the wrong dimension".into()))
            }
            _ => {}
        }
        let p = CompositeProblem {
            f0,
            g,
            map,
            grids,
            method: Method::FastLLT,
            flags: ProblemFlags::default(),
            vrep: VRepDecls::default(),
            cache: OnceLock::new(),
            memo: None,
        };
        if p.cache().fx.iter().all(Option::is_none) {
            return Err(Error::InvalidProblem("dom(f0) ∩ dom(F) has no x-grid node".into()));
        }
        Ok(p)
    }

    pub fn with_flags(mut self, flags: ProblemFlags) -> Self {
        self.flags = flags;
        self
    }

    pub fn with_vrep(mut self, vrep: VRepDecls) -> Self {
        self.vrep = vrep;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self.cache = OnceLock::new();
        self
    }

    pub fn with_memo(mut self) -> Self {
        self.memo = Some(RhoMemo::default());
        self
    }

    /// Same problem with `g` replaced.
    pub fn with_outer(&self, g: Outer) -> Result<Self> {
        let mut p = CompositeProblem::new(self.f0.clone(), g, self.map.clone(), self.grids.clone())?;
        p.method = self.method;
        p.flags = self.flags.clone();
        p.vrep = self.vrep.clone();
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.map.n
    }

    pub fn m(&self) -> usize {
        self.map.m
    }

    fn cache(&self) -> &Cache {
        self.cache.get_or_init(|| {
            let gx = &self.grids.x;
            let (n, m) = (self.n(), self.m());
            let mut buf = [0.0; MAX_DIM];
            let mut base = vec![f64::INFINITY; gx.len()];
            let mut fx = vec![None; gx.len()];
            for i in 0..gx.len() {
                gx.node_into(i, &mut buf);
                let x = &buf[..n];
                let f0 = ExtReal::from_f64(self.f0.eval(x)).to_f64();
                let mut out = [0.0; MAX_DIM];
                if f0 < f64::INFINITY && self.map.eval_into(x, &mut out[..m]) {
                    base[i] = f0;
                    fx[i] = Some(out);
                }
            }
            let g_w = match &self.g {
                Outer::Expr(e) => sample(e, &self.grids.w).expect("arity checked in constructor"),
                Outer::Sampled(h) => h.clone(),
            };
            let cfg = TransformConfig::for_fn(&g_w, self.method, self.grids.y.clone());
            let g_star = conjugate::conjugate_flagged(&g_w, &cfg).expect("dimensions checked in constructor");
            Cache { base, fx, g_w, g_star }
        })
    }

    /// `g` sampled on the w-grid.
    pub fn g_sampled(&self) -> &GridFn {
        &self.cache().g_w
    }

    /// `g*` on the y-grid with truncation flags.
    pub fn g_star(&self) -> &FlaggedConjugate {
        &self.cache().g_star
    }

    /// `g*(y)` as used in the formulas: `+inf` when truncation-suspect.
    fn g_star_node(&self, j: usize) -> f64 {
        let gs = self.g_star();
        if gs.truncation_suspect[j] {
            f64::INFINITY
        } else {
            gs.fun.values[j].to_f64()
        }
    }

    /// `g*(y)` at an arbitrary point by brute force over the w-grid, with the truncation flag.
    pub fn g_star_at(&self, y: &[f64]) -> (f64, bool) {
        if let Some(j) = self.grids.y.locate(y) {
            let gs = self.g_star();
            return (gs.fun.values[j].to_f64(), gs.truncation_suspect[j]);
        }
        let g = &self.cache().g_w;
        let gw = &g.grid;
        let mut buf = [0.0; MAX_DIM];
        let (mut full, mut inner) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in 0..gw.len() {
            let gv = g.values[i].to_f64();
            if gv == f64::NEG_INFINITY {
                return (f64::INFINITY, false);
            }
            if gv == f64::INFINITY {
                continue;
            }
            gw.node_into(i, &mut buf);
            let c = dot(&buf[..self.m()], y) - gv;
            full = full.max(c);
            if !gw.is_boundary(i) {
                inner = inner.max(c);
            }
        }
        let s = suspect(full, inner, truncation_slack(gw, &self.grids.y) / 3.0);
        (if full > INF_CAP { f64::INFINITY } else { full }, s)
    }

    /// `⟨y,F⟩` on the x-grid; `PlusInf` off `dom F`.
    pub fn scalarize(&self, y: &[f64]) -> Result<GridFn> {
        if y.len() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), got: y.len() });
        }
        let gx = &self.grids.x;
        let mut buf = [0.0; MAX_DIM];
        let mut out = [0.0; MAX_DIM];
        let values = (0..gx.len())
            .map(|i| {
                gx.node_into(i, &mut buf);
                if self.map.eval_into(&buf[..self.n()], &mut out[..self.m()]) {
                    ExtReal::Finite(dot(y, &out[..self.m()]))
                } else {
                    PlusInf
                }
            })
            .collect();
        GridFn::new(gx.clone(), values)
    }

    /// `f0 + ⟨y,F⟩` on the x-grid, raw.
    fn h_y_raw(&self, y: &[f64], out: &mut [f64]) {
        let c = self.cache();
        for (i, o) in out.iter_mut().enumerate() {
            *o = match &c.fx[i] {
                Some(fx) => c.base[i] + dot(y, &fx[..self.m()]),
                None => f64::INFINITY,
            };
        }
    }

    pub fn h_y(&self, y: &[f64]) -> Result<GridFn> {
        if y.len() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), got: y.len() });
        }
        let mut raw = vec![0.0; self.grids.x.len()];
        self.h_y_raw(y, &mut raw);
        Ok(GridFn::from_raw(self.grids.x.clone(), &raw))
    }

    /// `f0` on the x-grid.
    pub fn f0_sampled(&self) -> GridFn {
        sample(&self.f0, &self.grids.x).expect("arity checked in constructor")
    }

    /// `f0(x) + g(F(x))` on the x-grid.
    pub fn composite_fn(&self) -> GridFn {
        let c = self.cache();
        let gx = &self.grids.x;
        let values = (0..gx.len())
            .map(|i| match &c.fx[i] {
                Some(fx) => crate::extreal::ext_add(ExtReal::Finite(c.base[i]), self.g.eval(&fx[..self.m()])),
                None => PlusInf,
            })
            .collect();
        GridFn::new(gx.clone(), values).expect("length matches")
    }

    /// `(f0 + g∘F)*` on the v-grid with truncation flags.
    pub fn composite_conjugate(&self) -> FlaggedConjugate {
        let h = self.composite_fn();
        let cfg = TransformConfig::for_fn(&h, self.method, self.grids.v.clone());
        conjugate::conjugate_flagged(&h, &cfg).expect("dimensions checked in constructor")
    }

    /// `1e-6 + 2·h·G` with `G` bounding the slopes met by the formulas.
    pub fn tolerance(&self) -> f64 {
        let h = self.grids.x.max_spacing().max(self.grids.v.max_spacing()).max(self.grids.y.max_spacing());
        let reach = |g: &Grid| g.axes().iter().map(|a| a.lo.abs().max(a.hi.abs())).fold(0.0, f64::max);
        let slope = self.composite_fn().gradient_estimate().max(reach(&self.grids.v)).max(reach(&self.grids.x));
        1e-6 + 2.0 * h * slope
    }

    pub fn perturbation(&self) -> Perturbation<'_> {
        Perturbation { p: self }
    }

    /// `(f0 + ⟨y,F⟩)*(v)` by brute force over the x-grid, with the truncation flag.
    pub fn scalarized_conjugate_at(&self, y: &[f64], v: &[f64]) -> (f64, bool) {
        let c = self.cache();
        let gx = &self.grids.x;
        let (n, m) = (self.n(), self.m());
        let mut buf = [0.0; MAX_DIM];
        let (mut full, mut inner) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in 0..gx.len() {
            let Some(fx) = &c.fx[i] else { continue };
            let h = c.base[i] + dot(y, &fx[..m]);
            gx.node_into(i, &mut buf);
            let val = dot(v, &buf[..n]) - h;
            full = full.max(val);
            if !gx.is_boundary(i) {
                inner = inner.max(val);
            }
        }
        let s = suspect(full, inner, truncation_slack(gx, &self.grids.v));
        (if full > INF_CAP { f64::INFINITY } else { full }, s)
    }

    fn scalarized_conjugate_node(&self, j: usize, v: &[f64]) -> (f64, bool) {
        let y = self.grids.y.node(j);
        match &self.memo {
            Some(memo) => {
                let key = (j, v.iter().map(|a| a.to_bits()).collect::<Vec<_>>());
                if let Some(&r) = memo.inner.lock().expect("memo lock").get(&key) {
                    return r;
                }
                let r = self.scalarized_conjugate_at(&y, v);
                memo.inner.lock().expect("memo lock").insert(key, r);
                r
            }
            None => self.scalarized_conjugate_at(&y, v),
        }
    }

    /// `true` at y-nodes in `−K°`.
    pub fn neg_polar_mask(&self, k: &Cone) -> Result<Vec<bool>> {
        if k.dim() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), got: k.dim() });
        }
        let np = k.polar()?.neg();
        let gy = &self.grids.y;
        (0..gy.len()).map(|j| np.contains(&gy.node(j), CONE_TOL)).collect()
    }

    /// ρ(v̄) with one refinement pass around the incumbent minimizer.
    pub fn rho_at(&self, v: &[f64]) -> Result<RhoPoint> {
        self.rho_masked(v, None, None)
    }

    /// η(v̄): the infimum in ρ restricted to `y ∈ −K°`.
    pub fn eta_at(&self, k: &Cone, v: &[f64]) -> Result<RhoPoint> {
        let mask = self.neg_polar_mask(k)?;
        let np = k.polar()?.neg();
        self.rho_masked(v, Some(&mask), Some(&np))
    }

    fn rho_masked(&self, v: &[f64], mask: Option<&[bool]>, restrict: Option<&Cone>) -> Result<RhoPoint> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: v.len() });
        }
        let gy = &self.grids.y;
        let _ = self.cache();
        let terms: Vec<(f64, bool)> = (0..gy.len())
            .into_par_iter()
            .map(|j| {
                if mask.is_some_and(|mk| !mk[j]) {
                    return (f64::INFINITY, false);
                }
                let gs = self.g_star_node(j);
                if gs == f64::INFINITY {
                    return (f64::INFINITY, false);
                }
                let (c, s) = self.scalarized_conjugate_node(j, v);
                (if s { f64::INFINITY } else { add_f64(c, gs) }, s)
            })
            .collect();
        let best = terms.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        let mut pt = RhoPoint {
            value: ExtReal::from_f64(best),
            minimizers: Vec::new(),
            attainment_undetermined: false,
            all_plus_inf: best == f64::INFINITY,
            excluded_suspect: terms.iter().filter(|t| t.1).count(),
            refined_improvement: 0.0,
        };
        if !best.is_finite() {
            return Ok(pt);
        }
        let tol = tie_tol(best);
        let arg: Vec<usize> = (0..gy.len()).filter(|&j| terms[j].0 <= best + tol).collect();
        pt.attainment_undetermined = arg.iter().all(|&j| gy.is_boundary(j));
        pt.minimizers = arg.iter().map(|&j| gy.node(j)).collect();
        self.refine(v, &mut pt, arg[0], restrict);
        Ok(pt)
    }

    /// Evaluates `7^m` points at one third of the y-spacing around node `j0`.
    fn refine(&self, v: &[f64], pt: &mut RhoPoint, j0: usize, restrict: Option<&Cone>) {
        let gy = &self.grids.y;
        let m = self.m();
        let center = gy.node(j0);
        let steps: Vec<f64> = gy.axes().iter().map(|a| a.spacing() / 3.0).collect();
        let total = 7usize.pow(m as u32);
        let cur = pt.value.to_f64();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for t in 0..total {
            let mut y = center.clone();
            let mut r = t;
            let mut on_node = true;
            for k in 0..m {
                let o = (r % 7) as i64 - 3;
                r /= 7;
                y[k] += o as f64 * steps[k];
                on_node &= o % 3 == 0;
            }
            if on_node || !gy.contains(&y) {
                continue;
            }
            if restrict.is_some_and(|c| !c.contains(&y, CONE_TOL).unwrap_or(false)) {
                continue;
            }
            let (gs, gsus) = self.g_star_at(&y);
            if gsus || gs == f64::INFINITY {
                continue;
            }
            let (c, s) = self.scalarized_conjugate_at(&y, v);
            if s {
                continue;
            }
            let val = add_f64(c, gs);
            if val < cur - tie_tol(cur) && best.as_ref().map_or(true, |b| val < b.0) {
                best = Some((val, y));
            }
        }
        if let Some((val, y)) = best {
            pt.refined_improvement = cur - val;
            pt.value = ExtReal::from_f64(val);
            pt.attainment_undetermined = false;
            pt.minimizers = vec![y];
        }
    }

    /// ρ at every v-node (no refinement), optionally restricted to y-nodes in `mask`.
    pub fn rho_grid_masked(&self, mask: Option<&[bool]>) -> RhoGrid {
        let gy = &self.grids.y;
        let gv = &self.grids.v;
        let gx = &self.grids.x;
        let nv = gv.len();
        let _ = self.cache();
        let inner_mask = gx.interior_mask();
        let slack = truncation_slack(gx, gv);
        let ys: Vec<usize> = (0..gy.len())
            .filter(|&j| mask.map_or(true, |mk| mk[j]) && self.g_star_node(j) < f64::INFINITY)
            .collect();
        struct Acc {
            best: Vec<f64>,
            best_interior: Vec<f64>,
            suspect: Vec<bool>,
        }
        let empty = || Acc {
            best: vec![f64::INFINITY; nv],
            best_interior: vec![f64::INFINITY; nv],
            suspect: vec![false; nv],
        };
        let acc = ys
            .par_chunks(64)
            .map(|chunk| {
                let mut acc = empty();
                let mut plan = LltPlan::new(gx, gv);
                let mut h = vec![0.0; gx.len()];
                let mut hi = vec![0.0; gx.len()];
                let mut full = vec![0.0; nv];
                let mut inner = vec![0.0; nv];
                for &j in chunk {
                    let y = gy.node(j);
                    self.h_y_raw(&y, &mut h);
                    for (i, o) in hi.iter_mut().enumerate() {
                        *o = if inner_mask[i] { h[i] } else { f64::INFINITY };
                    }
                    plan.run(&h, &mut full);
                    plan.run(&hi, &mut inner);
                    let gs = self.g_star_node(j);
                    let yb = gy.is_boundary(j);
                    for k in 0..nv {
                        if suspect(full[k], inner[k], slack) {
                            acc.suspect[k] = true;
                            continue;
                        }
                        let c = if full[k] > INF_CAP { f64::INFINITY } else { full[k] };
                        let val = add_f64(c, gs);
                        if val < acc.best[k] {
                            acc.best[k] = val;
                        }
                        if !yb && val < acc.best_interior[k] {
                            acc.best_interior[k] = val;
                        }
                    }
                }
                acc
            })
            .reduce(empty, |mut a, b| {
                for k in 0..nv {
                    a.best[k] = a.best[k].min(b.best[k]);
                    a.best_interior[k] = a.best_interior[k].min(b.best_interior[k]);
                    a.suspect[k] |= b.suspect[k];
                }
                a
            });
        let attainment_undetermined = (0..nv)
            .map(|k| acc.best[k].is_finite() && acc.best_interior[k] > acc.best[k] + tie_tol(acc.best[k]))
            .collect();
        let mut best = acc.best;
        cap(&mut best);
        RhoGrid { fun: GridFn::from_raw(gv.clone(), &best), attainment_undetermined, had_suspect: acc.suspect }
    }

    pub fn rho_grid(&self) -> RhoGrid {
        self.rho_grid_masked(None)
    }

    pub fn eta_grid(&self, k: &Cone) -> Result<RhoGrid> {
        let mask = self.neg_polar_mask(k)?;
        Ok(self.rho_grid_masked(Some(&mask)))
    }

    /// `f0*` on the v-grid with truncation flags.
    pub fn f0_star(&self) -> FlaggedConjugate {
        let f0 = self.f0_sampled();
        let cfg = TransformConfig::for_fn(&f0, self.method, self.grids.v.clone());
        conjugate::conjugate_flagged(&f0, &cfg).expect("dimensions checked in constructor")
    }

    /// ρ̃(v̄) over y-nodes and v-nodes `w` with `v̄ − w` a v-node.
    pub fn rho_tilde_at(&self, v: &[f64]) -> Result<RhoTildePoint> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: v.len() });
        }
        let gv = &self.grids.v;
        let gx = &self.grids.x;
        let gy = &self.grids.y;
        let f0s = self.f0_star();
        let f0_eff: Vec<f64> = (0..gv.len())
            .map(|i| if f0s.truncation_suspect[i] { f64::INFINITY } else { f0s.fun.values[i].to_f64() })
            .collect();
        let pairs: Vec<(usize, usize)> = (0..gv.len())
            .filter(|&i| f0_eff[i] < f64::INFINITY)
            .filter_map(|i| {
                let w = gv.node(i);
                let d: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
                gv.locate(&d).map(|r| (i, r))
            })
            .collect();
        let inner_mask = gx.interior_mask();
        let slack = truncation_slack(gx, gv);
        let ys: Vec<usize> = (0..gy.len()).filter(|&j| self.g_star_node(j) < f64::INFINITY).collect();
        let results: Vec<(f64, usize, usize)> = ys
            .par_chunks(32)
            .flat_map_iter(|chunk| {
                let mut plan = LltPlan::new(gx, gv);
                let mut h = vec![0.0; gx.len()];
                let mut hi = vec![0.0; gx.len()];
                let mut full = vec![0.0; gv.len()];
                let mut inner = vec![0.0; gv.len()];
                let mut out = Vec::with_capacity(chunk.len());
                for &j in chunk {
                    let y = gy.node(j);
                    let gs = self.g_star_node(j);
                    for (i, o) in self.scalar_only(&y, &mut h).iter().zip(hi.iter_mut()).enumerate() {
                        *o.1 = if inner_mask[i] { *o.0 } else { f64::INFINITY };
                    }
                    plan.run(&h, &mut full);
                    plan.run(&hi, &mut inner);
                    let mut best = (f64::INFINITY, j, usize::MAX);
                    for &(w, r) in &pairs {
                        if suspect(full[r], inner[r], slack) {
                            continue;
                        }
                        let c = if full[r] > INF_CAP { f64::INFINITY } else { full[r] };
                        let val = add_f64(add_f64(f0_eff[w], c), gs);
                        if val < best.0 {
                            best = (val, j, w);
                        }
                    }
                    out.push(best);
                }
                out.into_iter()
            })
            .collect();
        let best = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let minimizers = if best.is_finite() {
            results
                .iter()
                .filter(|r| r.0 <= best + tie_tol(best))
                .map(|r| (gy.node(r.1), gv.node(r.2)))
                .collect()
        } else {
            Vec::new()
        };
        Ok(RhoTildePoint { value: ExtReal::from_f64(best), minimizers })
    }

    /// `(x node, F(x))` for x-nodes in `dom f0 ∩ dom F`.
    pub fn images(&self) -> Vec<(usize, Vec<f64>)> {
        let m = self.m();
        self.cache().fx.iter().enumerate().filter_map(|(i, f)| f.map(|f| (i, f[..m].to_vec()))).collect()
    }

    /// `⟨y,F⟩` on the x-grid (restricted to `dom f0 ∩ dom F`), raw, returned as a slice of `out`.
    fn scalar_only<'a>(&self, y: &[f64], out: &'a mut [f64]) -> &'a [f64] {
        let c = self.cache();
        for (i, o) in out.iter_mut().enumerate() {
            *o = match &c.fx[i] {
                Some(fx) => dot(y, &fx[..self.m()]),
                None => f64::INFINITY,
            };
        }
        out
    }

    /// `U = dom(g) − F(dom f0 ∩ dom F)`: sampled cloud, plus an exact form when declared.
    pub fn u_set(&self) -> SampledSet {
        let c = self.cache();
        let gw = &c.g_w;
        let m = self.m();
        let dom_g: Vec<Vec<f64>> = gw.domain().into_iter().map(|i| gw.grid.node(i)).collect();
        let images: Vec<[f64; MAX_DIM]> = c.fx.iter().flatten().copied().collect();
        let stride = |len: usize| (len / 45).max(1);
        let mut points = Vec::new();
        for w in dom_g.iter().step_by(stride(dom_g.len())) {
            for f in images.iter().step_by(stride(images.len())) {
                points.push((0..m).map(|k| w[k] - f[k]).collect::<Vec<f64>>());
            }
        }
        let vrep = match (&self.vrep.dom_g, &self.vrep.image_f) {
            (Some(d), Some(i)) if self.flags.polyhedral_domg && self.flags.polyhedral_f => Some(d.minus(i)),
            _ => None,
        };
        SampledSet {
            exactness: if vrep.is_some() { Exactness::ExactVRep } else { Exactness::PointCloud },
            points,
            vrep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoPoint {
    pub value: ExtReal,
    pub minimizers: Vec<Vec<f64>>,
    /// Every minimizing node lies on the y-grid boundary.
    pub attainment_undetermined: bool,
    /// No candidate was finite.
    pub all_plus_inf: bool,
    /// y-nodes skipped because `(f0 + ⟨y,F⟩)*(v̄)` was truncation-suspect.
    pub excluded_suspect: usize,
    pub refined_improvement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoGrid {
    pub fun: GridFn,
    pub attainment_undetermined: Vec<bool>,
    /// Some y was skipped at this v-node for truncation.
    pub had_suspect: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoTildePoint {
    pub value: ExtReal,
    /// `(y, w)` pairs attaining the infimum.
    pub minimizers: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Exactness {
    ExactVRep,
    PointCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledSet {
    pub exactness: Exactness,
    pub points: Vec<Vec<f64>>,
    pub vrep: Option<VRepSet>,
}

impl SampledSet {
    /// Some sampled point lies within `tol` of `x`.
    pub fn near(&self, x: &[f64], tol: f64) -> bool {
        self.points.iter().any(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
    }
}

/// `f(x,u) = f0(x) + g(F(x)+u)` evaluated on demand.
pub struct Perturbation<'a> {
    p: &'a CompositeProblem,
}

impl Perturbation<'_> {
    pub fn value(&self, x: &[f64], u: &[f64]) -> ExtReal {
        let p = self.p;
        let f0 = ExtReal::from_f64(p.f0.eval(x));
        if f0.is_plus_inf() {
            return PlusInf;
        }
        let Some(fx) = p.map.eval(x) else { return PlusInf };
        let w: Vec<f64> = fx.iter().zip(u).map(|(a, b)| a + b).collect();
        crate::extreal::ext_add(f0, p.g.eval(&w))
    }

    /// `f` as a function of `(x, u)`, for `z = (x, u)` concatenated.
    pub fn joint(&self, z: &[f64]) -> ExtReal {
        let n = self.p.n();
        self.value(&z[..n], &z[n..])
    }

    /// Axes of the joint `(x, u)` box.
    pub fn joint_axes(&self) -> Vec<crate::grid::Axis> {
        self.p.grids.x.axes().iter().chain(self.p.grids.u.axes()).copied().collect()
    }

    /// `f` on the x-grid × u-grid when `n + m ≤ 3`.
    pub fn materialize(&self) -> Result<GridFn> {
        let axes = self.joint_axes();
        if axes.len() > MAX_DIM {
            return Err(Error::DimensionTooLarge(axes.len()));
        }
        let g = Grid::new(axes)?;
        Ok(GridFn::from_fn(g, |z| self.joint(z)))
    }

    /// The slice `u ↦ f(x̄, u)` on the u-grid.
    pub fn u_slice(&self, x: &[f64]) -> GridFn {
        GridFn::from_fn(self.p.grids.u.clone(), |u| self.value(x, u))
    }

    /// Random midpoint-convexity probe of `f` on the joint node lattice. Returns a violating
    /// `(a, b)` pair when found.
    pub fn midpoint_violation(&self, samples: usize, seed: u64, tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        use rand::{Rng, SeedableRng};
        let axes = self.joint_axes();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let mut a = Vec::with_capacity(axes.len());
            let mut b = Vec::with_capacity(axes.len());
            let mut mid = Vec::with_capacity(axes.len());
            for ax in &axes {
                let i = rng.random_range(0..ax.count);
                let par = i % 2;
                let j = par + 2 * rng.random_range(0..(ax.count - par).div_ceil(2));
                a.push(ax.node(i));
                b.push(ax.node(j));
                mid.push(ax.node((i + j) / 2));
            }
            let (fa, fb) = (self.joint(&a), self.joint(&b));
            let (Some(x), Some(y)) = (fa.value(), fb.value()) else { continue };
            let avg = 0.5 * (x + y);
            match self.joint(&mid) {
                ExtReal::Finite(fm) if fm <= avg + tol * (1.0 + avg.abs()) => {}
                ExtReal::MinusInf => {}
                _ => return Some((a, b)),
            }
        }
        None
    }
}
