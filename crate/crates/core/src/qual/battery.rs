//! The qualification-condition battery for a composite problem.

use serde::Serialize;

use crate::composite::CompositeProblem;
use crate::cones::Cone;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFn};
use crate::kconv;
use crate::qual::{PwlqReport, VRepSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Approximate,
}

/// How the battery picks between V-representations and sampled sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatteryMode {
    /// Exact where the scenario declares the sets, sampled elsewhere.
    #[default]
    Auto,
    /// Every set test must be exact; missing declarations are an error.
    Exact,
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub name: String,
    pub paper_eq: String,
    pub verdict: bool,
    pub mode: Mode,
    pub witness: Option<Vec<f64>>,
}

/// A conclusion the theory draws when `premise` holds; the duality checks verify it on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conclusion {
    pub name: String,
    pub claim: String,
    pub premise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub entries: Vec<Condition>,
    pub conclusions: Vec<Conclusion>,
    /// `f ∈ Γ₀` and either `0 ∈ rint U` or `0 ∈ U` with `f` PWLQ, all decided exactly.
    pub equality_certificate: bool,
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<&Condition> {
        self.entries.iter().find(|c| c.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<bool> {
        self.get(name).map(|c| c.verdict)
    }
}

pub const ZERO_IN_U: &str = "zero_in_U";
pub const ZERO_IN_RINT_U: &str = "zero_in_rint_U";
pub const GENERAL: &str = "rint_domg_meets_rint_image_plus_K";
pub const PWLQ_MEMBERSHIP: &str = "domg_minus_K_meets_image";
pub const BURKE: &str = "rint_domg_minus_K_meets_image_of_rint";
pub const ADDITIVE_GENERAL: &str = "additive_rint_domg_meets_rint_image_plus_K";
pub const ADDITIVE_PWLQ: &str = "additive_domg_minus_K_meets_image";
pub const INF_CONV: &str = "rint_domf0_meets_rint_domF";
pub const K_ADMISSIBLE: &str = "K_in_KF_and_Kg";
pub const PWLQ: &str = "f_is_pwlq";

fn cond(name: &str, eq: &str, verdict: bool, mode: Mode, witness: Option<Vec<f64>>) -> Condition {
    Condition { name: name.into(), paper_eq: eq.into(), verdict, mode, witness }
}

/// Sampled `dom(g) − K` on the w-grid, with membership dilated by one cell.
struct SampledDom {
    grid: Grid,
    mask: Vec<bool>,
}

impl SampledDom {
    fn new(g: &GridFn, k: &Cone) -> Result<Self> {
        let mask = if k.is_zero() {
            g.values.iter().map(|v| !v.is_plus_inf()).collect()
        } else {
            kconv::monotone_regularize(g, k)?.fun.values.iter().map(|v| !v.is_plus_inf()).collect()
        };
        Ok(SampledDom { grid: g.grid.clone(), mask })
    }

    fn contains(&self, w: &[f64]) -> bool {
        if !self.grid.contains(w) {
            return false;
        }
        let d = self.grid.dim();
        let frac: Vec<f64> = (0..d).map(|k| self.grid.axis(k).frac_index(w[k])).collect();
        (0..1usize << d).any(|corner| {
            let idx: Vec<usize> = (0..d)
                .map(|k| {
                    let f = frac[k];
                    let i = if corner >> k & 1 == 1 { f.ceil() } else { f.floor() };
                    (i.max(0.0) as usize).min(self.grid.axis(k).count - 1)
                })
                .collect();
            self.grid.flatten_checked(&idx).map(|i| self.mask[i]).unwrap_or(false)
        })
    }

    /// Nodes of the mask whose whole one-node neighbourhood is in the mask.
    fn interior(&self, i: usize) -> bool {
        self.mask[i] && !self.grid.is_boundary(i) && self.grid.neighborhood(i, 1).into_iter().all(|j| self.mask[j])
    }

    fn nodes(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Sampled `U_K = (dom g − K) − images`.
struct SampledU<'a> {
    dom: &'a SampledDom,
    images: &'a [(usize, Vec<f64>)],
}

impl SampledU<'_> {
    /// An x-node `x` with `F(x) + u ∈ dom g − K`.
    fn witness(&self, u: &[f64]) -> Option<usize> {
        self.images.iter().find(|(_, f)| self.dom.contains(&add(f, u))).map(|(i, _)| *i)
    }

    fn basis(&self) -> Vec<Vec<f64>> {
        let ws = self.dom.nodes();
        let stride = |n: usize| (n / 45).max(1);
        let mut pts = Vec::new();
        for &w in ws.iter().step_by(stride(ws.len())) {
            let w = self.dom.grid.node(w);
            for (_, f) in self.images.iter().step_by(stride(self.images.len())) {
                pts.push(w.iter().zip(f).map(|(a, b)| a - b).collect());
            }
        }
        if pts.is_empty() {
            return Vec::new();
        }
        VRepSet { points: pts, rays: Vec::new() }.affine_basis()
    }

    /// `0 ∈ rint U_K`: `0` and `±r·b` for every sampled affine-hull direction `b`.
    fn zero_in_rint(&self) -> (bool, Option<usize>) {
        let m = self.dom.grid.dim();
        let Some(x0) = self.witness(&vec![0.0; m]) else { return (false, None) };
        let r = 2.0 * self.dom.grid.max_spacing();
        for b in self.basis() {
            for s in [r, -r] {
                let u: Vec<f64> = b.iter().map(|c| s * c).collect();
                if self.witness(&u).is_none() {
                    return (false, Some(x0));
                }
            }
        }
        (true, Some(x0))
    }
}

struct Exact<'a> {
    dom_g: &'a VRepSet,
    image: &'a VRepSet,
}

fn exact_sets(p: &CompositeProblem) -> Option<Exact<'_>> {
    if !(p.flags.polyhedral_domg && p.flags.polyhedral_f) {
        return None;
    }
    match (&p.vrep.dom_g, &p.vrep.image_f) {
        (Some(dom_g), Some(image)) => Some(Exact { dom_g, image }),
        _ => None,
    }
}

/// Runs every condition test on `p` with the cone `k` (`{0}` when absent).
pub fn qualification_battery(
    p: &CompositeProblem,
    k: Option<&Cone>,
    pwlq: Option<&PwlqReport>,
    mode: BatteryMode,
) -> Result<ConditionReport> {
    let m = p.m();
    let zero_cone = Cone::zero(m)?;
    let k = k.unwrap_or(&zero_cone);
    if k.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: k.dim() });
    }
    let exact = match mode {
        BatteryMode::Approximate => None,
        BatteryMode::Auto => exact_sets(p),
        BatteryMode::Exact => Some(exact_sets(p).ok_or_else(|| {
            Error::MissingVRep("dom(g) and F(dom F) must be declared polyhedral with V-representations".into())
        })?),
    };
    let additive = !p.f0.is_zero();
    let origin = vec![0.0; m];
    let mut entries = Vec::new();

    let images = p.images();
    let sampled = if exact.is_none() {
        let g = p.g_sampled();
        Some((SampledDom::new(g, &zero_cone)?, if k.is_zero() { None } else { Some(SampledDom::new(g, k)?) }))
    } else {
        None
    };

    let u_text = "0 ∈ U = dom(g) − F(dom(f0) ∩ dom(F))";
    let rint_text = "0 ∈ rint(U)";
    let (in_u, in_rint_u) = match (&exact, &sampled) {
        (Some(e), _) => {
            let u = e.dom_g.minus(e.image);
            let a = u.contains_point(&origin)?;
            let b = u.contains_rint(&origin, None)?;
            (cond(ZERO_IN_U, u_text, a, Mode::Exact, None), cond(ZERO_IN_RINT_U, rint_text, b, Mode::Exact, None))
        }
        (None, Some((dom, _))) => {
            let su = SampledU { dom, images: &images };
            let w = su.witness(&origin).map(|i| p.grids.x.node(i));
            let (r, wr) = su.zero_in_rint();
            (
                cond(ZERO_IN_U, u_text, w.is_some(), Mode::Approximate, w),
                cond(ZERO_IN_RINT_U, rint_text, r, Mode::Approximate, wr.map(|i| p.grids.x.node(i))),
            )
        }
        _ => unreachable!(),
    };
    let zero_in_u = in_u.verdict;
    let zero_in_rint_u = in_rint_u.verdict;
    let u_exact = in_u.mode == Mode::Exact;
    entries.push(in_u);
    entries.push(in_rint_u);

    let (kf_ok, kg_ok) = k_admissible(p, k);
    entries.push(cond(
        K_ADMISSIBLE,
        "K ∈ 𝒦_F ∩ 𝒦_g (F K-convex, g K-increasing)",
        kf_ok && kg_ok,
        Mode::Approximate,
        None,
    ));

    let general = |name: &str, text: &str| -> Result<Condition> {
        Ok(match (&exact, &sampled) {
            (Some(e), _) => cond(name, text, e.dom_g.rint_intersects(&e.image.plus_cone(k))?, Mode::Exact, None),
            (None, Some((dom, dom_k))) => {
                let su = SampledU { dom: dom_k.as_ref().unwrap_or(dom), images: &images };
                let (v, w) = su.zero_in_rint();
                cond(name, text, v, Mode::Approximate, w.map(|i| p.grids.x.node(i)))
            }
            _ => unreachable!(),
        })
    };
    let membership = |name: &str, text: &str| -> Result<Condition> {
        Ok(match (&exact, &sampled) {
            (Some(e), _) => cond(name, text, e.dom_g.minus_cone(k).intersects(e.image)?, Mode::Exact, None),
            (None, Some((dom, dom_k))) => {
                let su = SampledU { dom: dom_k.as_ref().unwrap_or(dom), images: &images };
                let w = su.witness(&origin).map(|i| p.grids.x.node(i));
                cond(name, text, w.is_some(), Mode::Approximate, w)
            }
            _ => unreachable!(),
        })
    };

    if additive {
        entries.push(general(ADDITIVE_GENERAL, "rint(dom g) ∩ rint(F(dom f0 ∩ dom F) + K) ≠ ∅")?);
        entries.push(membership(ADDITIVE_PWLQ, "(dom g − K) ∩ F(dom f0 ∩ dom F) ≠ ∅")?);
        entries.push(inf_conv_condition(p, mode)?);
    } else {
        entries.push(general(GENERAL, "rint(dom g) ∩ rint(F(dom F) + K) ≠ ∅")?);
        entries.push(membership(PWLQ_MEMBERSHIP, "(dom g − K) ∩ F(dom F) ≠ ∅")?);
        let text = "rint(dom g − K) ∩ F(rint dom F) ≠ ∅";
        entries.push(match (&exact, &sampled) {
            (Some(e), _) => {
                let img = p.vrep.image_rint_f.as_ref().unwrap_or(e.image);
                cond(BURKE, text, e.dom_g.minus_cone(k).rint_intersects(img)?, Mode::Exact, None)
            }
            (None, Some((dom, dom_k))) => {
                let dom = dom_k.as_ref().unwrap_or(dom);
                let gx = &p.grids.x;
                let in_dom: Vec<bool> = {
                    let mut v = vec![false; gx.len()];
                    for (i, _) in &images {
                        v[*i] = true;
                    }
                    v
                };
                let hit = images.iter().find(|(i, f)| {
                    !gx.is_boundary(*i)
                        && gx.neighborhood(*i, 1).into_iter().all(|j| in_dom[j])
                        && dom.interior(dom.grid.nearest(f))
                });
                cond(BURKE, text, hit.is_some(), Mode::Approximate, hit.map(|(i, _)| gx.node(*i)))
            }
            _ => unreachable!(),
        });
    }

    let pwlq_ok = pwlq.is_some_and(|r| r.verdict);
    entries.push(cond(
        PWLQ,
        "f is piecewise linear-quadratic",
        pwlq_ok,
        if pwlq.is_some_and(|r| r.mode == "explicit") { Mode::Exact } else { Mode::Approximate },
        None,
    ));

    let gamma0 = p.flags.f_gamma0;
    let equality_certificate = gamma0 && u_exact && (zero_in_rint_u || (zero_in_u && pwlq_ok));
    let mut conclusions = vec![
        Conclusion {
            name: "q0_proper".into(),
            claim: "q_0 is proper since 0 ∈ dom(p_0) = U".into(),
            premise: zero_in_u,
        },
        Conclusion {
            name: "strong_duality_dual_attained".into(),
            claim: "p_v(0) = −q_0(v) and the dual infimum is attained wherever p_v(0) > −∞".into(),
            premise: gamma0 && zero_in_rint_u,
        },
        Conclusion {
            name: "rho_equals_composite_conjugate".into(),
            claim: "(f0 + g∘F)* = ρ with the infimum over y attained".into(),
            premise: equality_certificate,
        },
    ];
    if additive {
        let v = |n: &str| entries.iter().find(|c| c.name == n).is_some_and(|c| c.verdict && c.mode == Mode::Exact);
        let premise = gamma0
            && kf_ok
            && kg_ok
            && v(INF_CONV)
            && (v(ADDITIVE_GENERAL) || (pwlq_ok && v(ADDITIVE_PWLQ)));
        conclusions.push(Conclusion {
            name: "rho_tilde_equals_composite_conjugate".into(),
            claim: "(f0 + g∘F)* = ρ̃ with the infimum over (y,w) attained".into(),
            premise,
        });
    }
    Ok(ConditionReport { entries, conclusions, equality_certificate })
}

/// `(F is K-convex, g is K-increasing)` on the grids.
fn k_admissible(p: &CompositeProblem, k: &Cone) -> (bool, bool) {
    let kf = kconv::is_k_convex(&p.map, k, &p.grids.x).map(|(ok, _)| ok).unwrap_or(false);
    let kg = kconv::is_k_increasing(p.g_sampled(), k, None).unwrap_or(false);
    (kf, kg)
}

fn inf_conv_condition(p: &CompositeProblem, mode: BatteryMode) -> Result<Condition> {
    let text = "rint(dom f0) ∩ rint(dom F) ≠ ∅";
    let decls = (&p.vrep.dom_f0, &p.vrep.dom_map);
    if mode != BatteryMode::Approximate {
        if let (Some(a), Some(b)) = decls {
            return Ok(cond(INF_CONV, text, a.rint_intersects(b)?, Mode::Exact, None));
        }
        if mode == BatteryMode::Exact {
            return Err(Error::MissingVRep("dom(f0) and dom(F) need V-representations".into()));
        }
    }
    let gx = &p.grids.x;
    let mut in_dom = vec![false; gx.len()];
    for (i, _) in p.images() {
        in_dom[i] = true;
    }
    let hit = (0..gx.len())
        .find(|&i| in_dom[i] && !gx.is_boundary(i) && gx.neighborhood(i, 1).into_iter().all(|j| in_dom[j]));
    Ok(cond(INF_CONV, text, hit.is_some(), Mode::Approximate, hit.map(|i| gx.node(i))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::{Grids, Outer, ProblemFlags, VecMap, VRepDecls};
    use crate::expr::FunctionExpr;

    fn grids() -> Grids {
        let g = Grid::cube(2, -2.0, 2.0, 21).unwrap();
        Grids { x: g.clone(), u: g.clone(), w: g.clone(), v: g.clone(), y: g }
    }

    fn ex51(g: &str, dom_g: VRepSet) -> CompositeProblem {
        let map = VecMap::parse(2, &["0", "x2"], None).unwrap();
        CompositeProblem::new(FunctionExpr::constant(0.0), Outer::Expr(FunctionExpr::parse(g).unwrap()), map, grids())
            .unwrap()
            .with_flags(ProblemFlags { polyhedral_domg: true, polyhedral_f: true, f_gamma0: true })
            .with_vrep(VRepDecls {
                dom_g: Some(dom_g),
                image_f: Some(VRepSet::cone(2, vec![vec![0.0, 1.0], vec![0.0, -1.0]])),
                ..Default::default()
            })
    }

    fn half_plane() -> VRepSet {
        VRepSet::cone(2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]])
    }

    #[test]
    fn example_51_exact() {
        let p = ex51("pow(w1,3)/3 if w1 >= 0 else inf", half_plane());
        let k1 = Cone::from_shorthand("0xR", 2).unwrap();
        let r = qualification_battery(&p, Some(&k1), None, BatteryMode::Exact).unwrap();
        assert_eq!(r.verdict(ZERO_IN_U), Some(true));
        assert_eq!(r.verdict(ZERO_IN_RINT_U), Some(false));
        assert_eq!(r.verdict(GENERAL), Some(false));
        assert_eq!(r.verdict(PWLQ_MEMBERSHIP), Some(true));
        assert_eq!(r.verdict(K_ADMISSIBLE), Some(true));
        assert!(!r.equality_certificate);

        let q = ex51("pow(w1,3)/3 if w1 >= 0 else 0", VRepSet::full(2));
        let k2 = Cone::from_shorthand("R+x0", 2).unwrap();
        let r = qualification_battery(&q, Some(&k2), None, BatteryMode::Exact).unwrap();
        assert_eq!(r.verdict(ZERO_IN_RINT_U), Some(true));
        assert_eq!(r.verdict(GENERAL), Some(true));
        assert!(r.equality_certificate);
    }

    #[test]
    fn example_51_sampled_agrees() {
        let mut p = ex51("pow(w1,3)/3 if w1 >= 0 else inf", half_plane());
        p.vrep = VRepDecls::default();
        assert!(matches!(qualification_battery(&p, None, None, BatteryMode::Exact), Err(Error::MissingVRep(_))));
        let r = qualification_battery(&p, None, None, BatteryMode::Auto).unwrap();
        assert_eq!(r.get(ZERO_IN_U).unwrap().mode, Mode::Approximate);
        assert_eq!(r.verdict(ZERO_IN_U), Some(true));
        assert_eq!(r.verdict(ZERO_IN_RINT_U), Some(false));
        let k2 = Cone::from_shorthand("R+x0", 2).unwrap();
        let r = qualification_battery(&p, Some(&k2), None, BatteryMode::Auto).unwrap();
        assert_eq!(r.verdict(GENERAL), Some(true));
    }

    #[test]
    fn disjoint_domain_fails_membership() {
        let p = ex51("0 if w1 >= 1 else inf", VRepSet::new(vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap());
        let r = qualification_battery(&p, None, None, BatteryMode::Exact).unwrap();
        assert_eq!(r.verdict(ZERO_IN_U), Some(false));
        assert_eq!(r.verdict(PWLQ_MEMBERSHIP), Some(false));
        assert_eq!(r.verdict(BURKE), Some(false));
        assert!(!r.conclusions[0].premise);
    }
}
