//! Uniform rectangular grids and sampled extended-real functions.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::FunctionExpr;
use crate::extreal::{ExtReal, MinusInf, PlusInf};

pub const MAX_DIM: usize = 3;

/// Snap distance (in units of grid spacing) used when locating off-grid points.
pub const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidGrid(format!("axis needs finite lo < hi, got [{lo}, {hi}]")));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!("axis needs at least 2 nodes, got {count}")));
        }
        Ok(Axis { lo, hi, count })
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.hi
        } else {
            self.lo + i as f64 * (self.hi - self.lo) / (self.count - 1) as f64
        }
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.node(i)).collect()
    }

    /// Fractional index of `x`, snapped to an integer when within [`SNAP`].
    pub fn frac_index(&self, x: f64) -> f64 {
        let t = (x - self.lo) / self.spacing();
        let r = t.round();
        if (t - r).abs() <= SNAP {
            r
        } else {
            t
        }
    }

    /// Index of the node equal to `x` up to [`SNAP`] spacings.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let t = self.frac_index(x);
        if t.fract() == 0.0 && t >= 0.0 && t <= (self.count - 1) as f64 {
            Some(t as usize)
        } else {
            None
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    /// Parses `lo:hi:count`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidGrid(format!("expected lo:hi:count, got '{s}'")));
        }
        let num = |p: &str| {
            p.trim().parse::<f64>().map_err(|_| Error::InvalidGrid(format!("bad number '{p}' in '{s}'")))
        };
        let count = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidGrid(format!("bad count in '{s}'")))?;
        Axis::new(num(parts[0])?, num(parts[1])?, count)
    }
}

/// Multi-index into a grid; unused trailing entries are zero.
pub type Idx = [usize; MAX_DIM];

/// Serialized as comma-separated `lo:hi:count` axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Grid {
    axes: Vec<Axis>,
}

impl TryFrom<String> for Grid {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Grid> for String {
    fn from(g: Grid) -> Self {
        g.axes.iter().map(|a| format!("{}:{}:{}", a.lo, a.hi, a.count)).collect::<Vec<_>>().join(",")
    }
}

impl FromStr for Grid {
    type Err = Error;

    /// Parses comma-separated `lo:hi:count` axes.
    fn from_str(s: &str) -> Result<Self> {
        let axes = s.split(',').map(Axis::from_str).collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one axis".into()));
        }
        if axes.len() > MAX_DIM {
            return Err(Error::DimensionTooLarge(axes.len()));
        }
        for a in &axes {
            Axis::new(a.lo, a.hi, a.count)?;
        }
        Ok(Grid { axes })
    }

    /// Same `[lo, hi]` with `count` nodes on each of `dim` axes.
    pub fn cube(dim: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        Grid::new(vec![Axis::new(lo, hi, count)?; dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(0.0, f64::max)
    }

    #[inline]
    pub fn unflatten(&self, mut flat: usize) -> Idx {
        let mut idx = [0; MAX_DIM];
        for k in (0..self.dim()).rev() {
            let c = self.axes[k].count;
            idx[k] = flat % c;
            flat /= c;
        }
        idx
    }

    #[inline]
    pub fn flatten(&self, idx: &Idx) -> usize {
        let mut flat = 0;
        for k in 0..self.dim() {
            flat = flat * self.axes[k].count + idx[k];
        }
        flat
    }

    /// Flat index of a multi-index given as a slice, checking bounds.
    pub fn flatten_checked(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: idx.len() });
        }
        let mut full = [0; MAX_DIM];
        for (k, &i) in idx.iter().enumerate() {
            if i >= self.axes[k].count {
                return Err(Error::NodeOutOfGrid(format!("index {i} on axis {k}")));
            }
            full[k] = i;
        }
        Ok(self.flatten(&full))
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let idx = self.unflatten(flat);
        (0..self.dim()).map(|k| self.axes[k].node(idx[k])).collect()
    }

    /// Writes the coordinates of node `flat` into `out[..dim]`.
    #[inline]
    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let idx = self.unflatten(flat);
        for k in 0..self.dim() {
            out[k] = self.axes[k].node(idx[k]);
        }
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        let idx = self.unflatten(flat);
        (0..self.dim()).any(|k| idx[k] == 0 || idx[k] + 1 == self.axes[k].count)
    }

    /// Node equal to `x` up to snapping, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut idx = [0; MAX_DIM];
        for k in 0..self.dim() {
            idx[k] = self.axes[k].locate(x[k])?;
        }
        Some(self.flatten(&idx))
    }

    /// Node equal to `x`, or `NodeOutOfGrid`.
    pub fn require_node(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        self.locate(x).ok_or_else(|| Error::NodeOutOfGrid(format!("{x:?} is not a grid node")))
    }

    /// Nearest node by rounding each coordinate into range.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut idx = [0; MAX_DIM];
        for k in 0..self.dim() {
            let a = &self.axes[k];
            let t = a.frac_index(x[k]).round().clamp(0.0, (a.count - 1) as f64);
            idx[k] = t as usize;
        }
        self.flatten(&idx)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && self.axes.iter().zip(x).all(|(a, &v)| {
                let tol = SNAP * a.spacing();
                v >= a.lo - tol && v <= a.hi + tol
            })
    }

    /// Nodes whose multi-index differs from `flat` by at most `r` on every axis (includes `flat`).
    pub fn neighborhood(&self, flat: usize, r: usize) -> Vec<usize> {
        let c = self.unflatten(flat);
        let mut out = Vec::new();
        let span = |k: usize| -> (usize, usize) {
            if k < self.dim() {
                (c[k].saturating_sub(r), (c[k] + r).min(self.axes[k].count - 1))
            } else {
                (0, 0)
            }
        };
        let (a0, b0) = span(0);
        let (a1, b1) = span(1);
        let (a2, b2) = span(2);
        for i in a0..=b0 {
            for j in a1..=b1 {
                for k in a2..=b2 {
                    out.push(self.flatten(&[i, j, k]));
                }
            }
        }
        out
    }

    /// `true` at nodes off the grid boundary.
    pub fn interior_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| !self.is_boundary(i)).collect()
    }
}

/// A function sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    pub grid: Grid,
    pub values: Vec<ExtReal>,
}

impl GridFn {
    pub fn new(grid: Grid, values: Vec<ExtReal>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridFn { grid, values })
    }

    pub fn constant(grid: Grid, c: ExtReal) -> Self {
        let n = grid.len();
        GridFn { grid, values: vec![c; n] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> ExtReal) -> Self {
        let mut buf = [0.0; MAX_DIM];
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                grid.node_into(i, &mut buf);
                f(&buf[..d])
            })
            .collect();
        GridFn { grid, values }
    }

    /// Raw floats with `±inf` for the infinite tags.
    pub fn from_raw(grid: Grid, raw: &[f64]) -> Self {
        GridFn { values: raw.iter().map(|&x| ExtReal::from_f64(x)).collect(), grid }
    }

    pub fn to_raw(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.to_f64()).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, x: &[f64]) -> Result<ExtReal> {
        Ok(self.values[self.grid.require_node(x)?])
    }

    /// Nodes where the value is not `PlusInf`.
    pub fn domain(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.values[i].is_plus_inf()).collect()
    }

    pub fn is_identically(&self, v: ExtReal) -> bool {
        self.values.iter().all(|&x| x == v)
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(ExtReal) -> ExtReal) -> GridFn {
        GridFn { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise inf-addition of two functions on the same grid.
    pub fn add(&self, other: &GridFn) -> Result<GridFn> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("pointwise sum needs identical grids".into()));
        }
        Ok(GridFn {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| crate::extreal::ext_add(a, b))
                .collect(),
        })
    }

    /// Multilinear interpolation. Outside the box, or when a corner with positive weight is
    /// `PlusInf`, the result is `PlusInf`.
    pub fn interpolate(&self, x: &[f64]) -> ExtReal {
        let g = &self.grid;
        let d = g.dim();
        if x.len() != d {
            return PlusInf;
        }
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for k in 0..d {
            let a = g.axis(k);
            let t = a.frac_index(x[k]);
            let last = (a.count - 1) as f64;
            if !(t >= 0.0 && t <= last) {
                return PlusInf;
            }
            let fl = t.floor().min(last);
            base[k] = fl as usize;
            frac[k] = t - fl;
        }
        let mut acc = 0.0;
        let mut minus = false;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    idx[k] += 1;
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w <= 0.0 {
                continue;
            }
            match self.values[g.flatten(&idx)] {
                PlusInf => return PlusInf,
                MinusInf => minus = true,
                ExtReal::Finite(v) => acc += w * v,
            }
        }
        if minus {
            MinusInf
        } else {
            ExtReal::Finite(acc)
        }
    }

    /// First violation of midpoint convexity along grid lines, as `(a, mid, b)` flat indices.
    ///
    /// A triple violates when both ends are finite and the middle exceeds their average by
    /// more than `tol`. `MinusInf` anywhere makes the test vacuous for that triple.
    pub fn midpoint_violation(&self, tol: f64) -> Option<(usize, usize, usize)> {
        midpoint_violation_raw(&self.grid, &self.to_raw(), tol)
    }

    pub fn is_discretely_convex(&self, tol: f64) -> bool {
        self.midpoint_violation(tol).is_none()
    }

    /// Largest absolute finite difference between adjacent finite nodes, divided by spacing.
    pub fn gradient_estimate(&self) -> f64 {
        let g = &self.grid;
        let mut best: f64 = 0.0;
        for i in 0..g.len() {
            let Some(a) = self.values[i].value() else { continue };
            let idx = g.unflatten(i);
            for k in 0..g.dim() {
                if idx[k] + 1 < g.axis(k).count {
                    let mut j = idx;
                    j[k] += 1;
                    if let Some(b) = self.values[g.flatten(&j)].value() {
                        best = best.max(((b - a) / g.axis(k).spacing()).abs());
                    }
                }
            }
        }
        best
    }

    /// CSV dump: one `axis_i_lo,axis_i_hi,axis_i_count` header plus data line per axis,
    /// then `value` and one row-major value per line.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, a) in self.grid.axes().iter().enumerate() {
            let _ = writeln!(s, "axis_{k}_lo,axis_{k}_hi,axis_{k}_count");
            let _ = writeln!(s, "{},{},{}", a.lo, a.hi, a.count);
        }
        s.push_str("value\n");
        for v in &self.values {
            let _ = writeln!(s, "{v}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidGrid(format!("csv: {m}"));
        let mut lines = text.lines();
        let mut axes = Vec::new();
        loop {
            let header = lines.next().ok_or_else(|| bad("missing value header"))?;
            if header.trim() == "value" {
                break;
            }
            if !header.starts_with("axis_") {
                return Err(bad(&format!("unexpected line '{header}'")));
            }
            let data = lines.next().ok_or_else(|| bad("missing axis data"))?;
            let f: Vec<&str> = data.split(',').collect();
            if f.len() != 3 {
                return Err(bad(&format!("bad axis line '{data}'")));
            }
            let p = |t: &str| t.trim().parse::<f64>().map_err(|_| bad(&format!("bad number '{t}'")));
            let count = f[2].trim().parse::<usize>().map_err(|_| bad("bad count"))?;
            axes.push(Axis::new(p(f[0])?, p(f[1])?, count)?);
        }
        let grid = Grid::new(axes)?;
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map(ExtReal::from_f64).map_err(|_| bad(&format!("bad value '{l}'"))))
            .collect::<Result<Vec<_>>>()?;
        GridFn::new(grid, values)
    }
}

/// Midpoint test on raw floats (`+inf`/`-inf` tags).
pub fn midpoint_violation_raw(g: &Grid, v: &[f64], tol: f64) -> Option<(usize, usize, usize)> {
    for i in 0..g.len() {
        let idx = g.unflatten(i);
        for k in 0..g.dim() {
            if idx[k] == 0 || idx[k] + 1 >= g.axis(k).count {
                continue;
            }
            let mut lo = idx;
            lo[k] -= 1;
            let mut hi = idx;
            hi[k] += 1;
            let (a, b) = (g.flatten(&lo), g.flatten(&hi));
            let (fa, fm, fb) = (v[a], v[i], v[b]);
            if !fa.is_finite() || !fb.is_finite() || fm == f64::NEG_INFINITY {
                continue;
            }
            let avg = 0.5 * (fa + fb);
            if fm > avg + tol * (1.0 + avg.abs()) {
                return Some((a, i, b));
            }
        }
    }
    None
}

/// Sample an expression at every node. NaN results become `PlusInf` with one warning per call.
pub fn sample(expr: &FunctionExpr, grid: &Grid) -> Result<GridFn> {
    if expr.arity() > grid.dim() {
        return Err(Error::ArityMismatch { expr: expr.arity(), grid: grid.dim() });
    }
    let mut nan_count = 0usize;
    let mut buf = [0.0; MAX_DIM];
    let d = grid.dim();
    let values = (0..grid.len())
        .map(|i| {
            grid.node_into(i, &mut buf);
            let r = expr.eval(&buf[..d]);
            if r.is_nan() {
                nan_count += 1;
            }
            ExtReal::from_f64(r)
        })
        .collect();
    if nan_count > 0 {
        log::warn!("{nan_count} node(s) evaluated to NaN for '{}'; treated as +inf", expr.source());
    }
    Ok(GridFn { grid: grid.clone(), values })
}

/// Minimum over all nodes and the nodes attaining it within `1e-9·(1+|min|)`.
pub fn grid_inf(h: &GridFn) -> (ExtReal, Vec<usize>) {
    let min = h.values.iter().copied().min().unwrap_or(PlusInf);
    let Some(m) = min.value() else { return (min, Vec::new()) };
    let tol = 1e-9 * (1.0 + m.abs());
    let arg = (0..h.len()).filter(|&i| matches!(h.values[i].value(), Some(x) if x <= m + tol)).collect();
    (min, arg)
}
