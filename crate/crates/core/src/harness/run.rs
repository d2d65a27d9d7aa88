//! The scenario pipeline.

use std::time::Instant;

use log::info;
use serde_json::{json, Value};

use crate::composite::CompositeProblem;
use crate::cones::Cone;
use crate::conjugate::{self, FlaggedConjugate, TransformConfig, INF_CAP};
use crate::duality;
use crate::error::Result;
use crate::expr::FunctionExpr;
use crate::extreal::ExtReal;
use crate::grid::{Grid, GridFn};
use crate::harness::report::{Check, RunReport};
use crate::harness::scenario::{Scenario, Tolerances};
use crate::kconv;
use crate::qual::{self, BatteryMode, ConditionReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { tol_scale: 1.0 }
    }
}

/// Node-wise comparison of a computed grid function with a closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct FnComparison {
    pub max_abs_dev: f64,
    pub n_compared: usize,
    /// Nodes finite on one side only, with no node of the other side's domain within one node.
    pub domain_mismatch: usize,
}

impl FnComparison {
    fn to_value(&self) -> Value {
        json!({"max_abs_dev": self.max_abs_dev, "n_compared": self.n_compared, "domain_mismatch": self.domain_mismatch})
    }
}

fn expected_finite(e: f64) -> bool {
    e.is_finite() && e.abs() <= INF_CAP
}

/// Compares `f` with `expr` at nodes accepted by `keep`; `reliable` marks nodes whose finite
/// value can be trusted (others count as `+∞`).
pub fn compare_fn(
    f: &GridFn,
    reliable: &dyn Fn(usize) -> bool,
    expr: &FunctionExpr,
    skip_boundary: bool,
) -> FnComparison {
    let g = &f.grid;
    let keep = |i: usize| !(skip_boundary && g.is_boundary(i));
    let exp: Vec<f64> = (0..g.len()).map(|i| expr.eval(&g.node(i))).collect();
    let comp_fin = |i: usize| f.values[i].is_finite() && reliable(i);
    let exp_fin = |i: usize| expected_finite(exp[i]);
    let (mut dev, mut n, mut mismatch) = (0.0f64, 0, 0);
    for i in (0..g.len()).filter(|&i| keep(i)) {
        match (comp_fin(i), exp_fin(i)) {
            (true, true) => {
                n += 1;
                dev = dev.max((f.values[i].to_f64() - exp[i]).abs());
            }
            (true, false) => {
                if !g.neighborhood(i, 1).into_iter().any(exp_fin) {
                    mismatch += 1;
                }
            }
            (false, true) => {
                if !g.neighborhood(i, 1).into_iter().any(comp_fin) {
                    mismatch += 1;
                }
            }
            (false, false) => {}
        }
    }
    FnComparison { max_abs_dev: dev, n_compared: n, domain_mismatch: mismatch }
}

fn value_check(id: &str, cmp: &FnComparison, expr: &FunctionExpr, tol: f64) -> Check {
    let pass = cmp.n_compared > 0 && cmp.max_abs_dev <= tol && cmp.domain_mismatch == 0;
    Check::custom(id, cmp.to_value(), json!(expr.source()), Some(cmp.max_abs_dev), Some(tol), pass)
}

fn domain_check(id: &str, cmp: &FnComparison, expr: &FunctionExpr) -> Check {
    Check::custom(id, cmp.to_value(), json!(expr.source()), None, None, cmp.domain_mismatch == 0 && cmp.n_compared > 0)
}

/// Every point of `a` has a point of `b` within one node (max-norm) and vice versa.
pub fn sets_match(a: &[Vec<f64>], b: &[Vec<f64>], grid: &Grid) -> bool {
    let h: Vec<f64> = grid.axes().iter().map(|ax| ax.spacing() * (1.0 + 1e-6)).collect();
    let near = |p: &Vec<f64>, q: &Vec<f64>| p.iter().zip(q).zip(&h).all(|((x, y), s)| (x - y).abs() <= *s);
    a.iter().all(|p| b.iter().any(|q| near(p, q))) && b.iter().all(|q| a.iter().any(|p| near(p, q)))
}

fn fmt_pt(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", s.join(","))
}

/// Upper-bound check `a ≤ b + tol` wherever `a` is reliable and `b` finite.
fn le_check(id: &str, a: &FlaggedConjugate, b: &GridFn, tol: f64) -> Check {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..b.len() {
        if a.reliable(i) {
            if let (Some(x), Some(y)) = (a.fun.values[i].value(), b.values[i].value()) {
                worst = worst.max(x - y);
            }
        }
    }
    let worst = if worst.is_finite() { worst } else { 0.0 };
    Check::custom(id, json!({"max_excess": worst}), json!("<= tol"), Some(worst.max(0.0)), Some(tol), worst <= tol)
}

fn plain(f: GridFn) -> FlaggedConjugate {
    let n = f.len();
    FlaggedConjugate { fun: f, truncation_suspect: vec![false; n] }
}

fn bool_fn(f: &FlaggedConjugate) -> impl Fn(usize) -> bool + '_ {
    move |i| !f.truncation_suspect[i]
}

pub fn run_scenario(s: &Scenario) -> Result<RunReport> {
    run_scenario_with(s, &RunOptions::default())
}

pub fn run_scenario_with(s: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    s.validate()?;
    let tol: Tolerances = s.tolerances.scaled(opts.tol_scale);
    let p = s.problem()?;
    let k = s.cone()?;
    let e = &s.expected;
    let mut checks = Vec::new();
    let mut grids = Vec::new();
    let ftol = p.tolerance() * opts.tol_scale;
    info!("scenario {}: n={}, m={}, tol={ftol:.3e}", s.name, p.n(), p.m());

    let g_star = p.g_star().clone();
    grids.push(("g_star".to_string(), g_star.fun.clone()));
    if let Some(x) = &e.g_star {
        let c = compare_fn(&g_star.fun, &bool_fn(&g_star), x, false);
        checks.push(value_check("g_star", &c, x, tol.value));
    }
    if let Some(x) = &e.g_star_domain {
        let c = compare_fn(&g_star.fun, &bool_fn(&g_star), x, false);
        checks.push(domain_check("g_star_domain", &c, x));
    }

    let comp_star = p.composite_conjugate();
    grids.push(("composite_conjugate".to_string(), comp_star.fun.clone()));
    if let Some(x) = &e.composite_conjugate {
        let c = compare_fn(&comp_star.fun, &bool_fn(&comp_star), x, true);
        checks.push(value_check("composite_conjugate", &c, x, tol.value));
    }

    let rho = p.rho_grid();
    grids.push(("rho".to_string(), rho.fun.clone()));
    checks.push(le_check("composite_conjugate_le_rho", &comp_star, &rho.fun, ftol));
    if let Some(x) = &e.rho {
        let c = compare_fn(&rho.fun, &|_| true, x, true);
        checks.push(value_check("rho", &c, x, tol.value));
    }
    if let Some(x) = &e.rho_domain {
        let c = compare_fn(&rho.fun, &|_| true, x, false);
        checks.push(domain_check("rho_domain", &c, x));
    }

    if s.pipeline.rho_tilde.unwrap_or(!p.f0.is_zero()) {
        let gv = &p.grids.v;
        let vals: Vec<ExtReal> =
            (0..gv.len()).map(|i| p.rho_tilde_at(&gv.node(i)).map(|r| r.value)).collect::<Result<_>>()?;
        let rt = GridFn::new(gv.clone(), vals)?;
        checks.push(le_check("rho_le_rho_tilde", &plain(rho.fun.clone()), &rt, 2.0 * ftol));
        grids.push(("rho_tilde".to_string(), rt));
    }

    if let (Some(k), true) = (&k, p.f0.is_zero()) {
        let eta = p.eta_grid(k)?;
        let neg = GridFn::new(eta.fun.grid.clone(), eta.fun.values.iter().map(|v| v.neg()).collect())?;
        let neg_rho = GridFn::new(rho.fun.grid.clone(), rho.fun.values.iter().map(|v| v.neg()).collect())?;
        checks.push(le_check("rho_le_eta", &plain(neg), &neg_rho, ftol));
        if let Some(x) = &e.eta_domain {
            let c = compare_fn(&eta.fun, &|_| true, x, false);
            checks.push(domain_check("eta_domain", &c, x));
        }
        grids.push(("eta".to_string(), eta.fun));
    }

    let cones = if s.pipeline.kconv.unwrap_or(true) {
        let est = kconv::cone_estimates(&p.map, &p.grids.x, p.g_sampled(), kconv::default_ray_samples(p.m()))?;
        if let Some(c) = &e.k_f {
            checks.push(cone_check("K_F", &est.k_f, &c.resolve(p.m())?, tol.angle_deg)?);
        }
        if let Some(c) = &e.hzn_g {
            checks.push(cone_check("hzn_g", &est.hzn_g, &c.resolve(p.m())?, tol.angle_deg)?);
        }
        if let Some(b) = e.kf_kg_nonempty {
            checks.push(Check::verdict("kf_kg_nonempty", est.kf_kg_nonempty, b));
        }
        Some(est)
    } else {
        None
    };
    for (i, ki) in e.k_increasing.iter().enumerate() {
        let cone = ki.cone.resolve(p.m())?;
        let restriction = ki.on_range.then(|| range_nodes(&p));
        let v = kconv::is_k_increasing(p.g_sampled(), &cone, restriction.as_deref())?;
        let id = format!("k_increasing[{i}]{}", if ki.on_range { " on rge F" } else { "" });
        checks.push(Check::verdict(id, v, ki.expected));
    }

    if let Some(k) = &k {
        regularization_checks(&p, k, s, &tol, &mut checks, &mut grids)?;
    }

    let conditions = if s.pipeline.battery.unwrap_or(true) {
        let pwlq = match s.pwlq_decl() {
            Some(d) => {
                let f = p.perturbation();
                match qual::is_pwlq(&d, |z| f.joint(z), &f.joint_axes(), 0) {
                    Ok(r) => Some(r),
                    Err(err) => {
                        checks.push(Check::custom("pwlq_declaration", json!(err.to_string()), json!("valid"), None, None, false));
                        None
                    }
                }
            }
            None => None,
        };
        let report = qual::qualification_battery(&p, k.as_ref(), pwlq.as_ref(), BatteryMode::Auto)?;
        for (name, want) in &e.verdicts {
            let got = if name == "equality_certificate" { Some(report.equality_certificate) } else { report.verdict(name) };
            match got {
                Some(v) => checks.push(Check::verdict(format!("verdict {name}"), v, *want)),
                None => checks.push(Check::custom(format!("verdict {name}"), Value::Null, json!(want), None, None, false)),
            }
        }
        if report.equality_certificate {
            checks.push(equality_check(&comp_star, &rho.fun, tol.eq));
        }
        Some(report)
    } else {
        None
    };
    let certified = conditions.as_ref().is_some_and(|c: &ConditionReport| c.equality_certificate);

    let mut duality_reports = Vec::new();
    let mut probes: Vec<(Vec<f64>, Vec<f64>)> = s.probes.iter().map(|q| (q.v.clone(), q.u.clone())).collect();
    for q in &e.probes {
        if !probes.iter().any(|(v, u)| *v == q.v && *u == q.u) {
            probes.push((q.v.clone(), q.u.clone()));
        }
    }
    for (v, u) in &probes {
        let r = duality::weak_duality_report(&p, v, u)?;
        let at = format!("{}{}", fmt_pt(v), fmt_pt(u));
        checks.push(Check::custom(
            format!("weak_duality {at}"),
            json!(r.gap),
            json!(">= -tol"),
            r.gap.value().map(|g| (-g).max(0.0)),
            Some(r.tol),
            r.flags.weak_ok,
        ));
        if let Some(want) = e.probes.iter().find(|q| q.v == *v && q.u == *u) {
            if let Some(x) = want.p {
                checks.push(Check::numeric(format!("p {at}"), r.p_val.to_f64(), x, tol.value));
            }
            if let Some(x) = want.q {
                checks.push(Check::numeric(format!("q {at}"), r.q_val.to_f64(), x, tol.value));
            }
            if let Some(set) = &want.p_set {
                let ok = sets_match(&r.p_set, set, &p.grids.x);
                checks.push(Check::custom(format!("P {at}"), json!(r.p_set), json!(set), None, None, ok));
            }
            if let Some(set) = &want.q_set {
                let ok = sets_match(&r.q_set, set, &p.grids.y);
                checks.push(Check::custom(format!("Q {at}"), json!(r.q_set), json!(set), None, None, ok));
            }
            for (name, got, want) in [
                ("primal_attained", r.flags.primal_attained, want.primal_attained),
                ("dual_attained", r.flags.dual_attained, want.dual_attained),
                ("boundary_suspect", r.flags.boundary_suspect, want.boundary_suspect),
                ("strong_eq", r.flags.strong_eq, want.strong_eq),
            ] {
                if let Some(w) = want {
                    checks.push(Check::verdict(format!("{name} {at}"), got, w));
                }
            }
        }
        if p.n() == 1 && p.m() == 1 {
            let id = duality::slice_conjugate_identity(&p, v)?;
            checks.push(Check::custom(
                format!("slice_conjugate_identity {}", fmt_pt(v)),
                json!({"max_abs_dev": id.max_abs_dev, "n_compared": id.n_compared}),
                json!("p_v* = f*(v,.)"),
                Some(id.max_abs_dev),
                Some(tol.value),
                id.max_abs_dev <= tol.value,
            ));
        }
        duality_reports.push(r);
    }

    for sl in &e.primal_slices {
        let f = duality::primal_slice(&p, &sl.at);
        let c = compare_fn(&f, &|_| true, &sl.expr, false);
        checks.push(value_check(&format!("primal_slice {}", fmt_pt(&sl.at)), &c, &sl.expr, tol.value));
        grids.push((format!("primal_slice_{}", sl.at.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("_")), f));
    }
    for sl in &e.dual_slices {
        let f = duality::dual_slice(&p, &sl.at);
        let c = compare_fn(&f, &|_| true, &sl.expr, false);
        checks.push(value_check(&format!("dual_slice {}", fmt_pt(&sl.at)), &c, &sl.expr, tol.value));
        grids.push((format!("dual_slice_{}", sl.at.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("_")), f));
    }
    for fs in &e.f_star {
        let got = duality::f_star(&p, &fs.v, &fs.y)?;
        checks.push(Check::numeric(format!("f_star {}{}", fmt_pt(&fs.v), fmt_pt(&fs.y)), got.value.to_f64(), fs.value, tol.point));
    }
    for sd in &e.primal_subdiff {
        let slice = duality::primal_slice(&p, &sd.v);
        let (pts, suspect) = duality::subdifferential_or_empty(&slice, &sd.u, &p.grids.y, p.method)?;
        let ok = sets_match(&pts, &sd.points, &p.grids.y) && sd.boundary_suspect.is_none_or(|b| b == suspect);
        checks.push(Check::custom(
            format!("primal_subdiff {}{}", fmt_pt(&sd.v), fmt_pt(&sd.u)),
            json!({"points": pts, "boundary_suspect": suspect}),
            json!({"points": sd.points, "boundary_suspect": sd.boundary_suspect}),
            None,
            None,
            ok,
        ));
    }
    for oc in &e.optimality {
        let r = duality::optimality_equivalence_check(&p, &oc.v, &oc.x, &oc.y, ftol)?;
        let ok = r.eq15_holds == oc.eq15_holds && r.eq16_holds == oc.eq16_holds && !r.beyond_tolerance;
        checks.push(Check::custom(
            format!("optimality {}{}{}", fmt_pt(&oc.v), fmt_pt(&oc.x), fmt_pt(&oc.y)),
            json!({"eq15_holds": r.eq15_holds, "eq16_holds": r.eq16_holds, "beyond_tolerance": r.beyond_tolerance}),
            json!({"eq15_holds": oc.eq15_holds, "eq16_holds": oc.eq16_holds}),
            None,
            None,
            ok,
        ));
    }
    for cr in &e.chain_rule {
        let r = duality::chain_rule_sets(&p, &cr.x, certified)?;
        let at = fmt_pt(&cr.x);
        checks.push(Check::verdict(format!("chain_rule_inclusion {at}"), r.inclusion_ok, true));
        if let Some(lhs) = &cr.lhs {
            let ok = sets_match(&r.lhs, lhs, &p.grids.v);
            checks.push(Check::custom(format!("chain_rule_lhs {at}"), json!(r.lhs), json!(lhs), None, None, ok));
        }
        if let Some(eq) = cr.equality {
            let got = r.equality_ok.unwrap_or(false);
            checks.push(Check::verdict(format!("chain_rule_equality {at}"), got, eq));
        }
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(RunReport {
        scenario: s.name.clone(),
        citation: s.citation.clone(),
        checks,
        duality: duality_reports,
        conditions,
        cones,
        pass,
        timing_ms: start.elapsed().as_millis(),
        grids,
    })
}

fn cone_check(id: &str, got: &Cone, want: &Cone, angle: f64) -> Result<Check> {
    let mismatch = got.angular_mismatch(want)?;
    let same_zero = got.is_zero() == want.is_zero();
    Ok(Check::custom(
        id,
        json!(got.rays()),
        json!(want.rays()),
        Some(mismatch),
        Some(angle),
        same_zero && got.approx_eq(want, angle)?,
    ))
}

/// w-nodes nearest to `F(x)` for x-nodes in `dom f0 ∩ dom F`.
pub fn range_nodes(p: &CompositeProblem) -> Vec<usize> {
    let gw = &p.grids.w;
    let mut nodes: Vec<usize> =
        p.images().into_iter().filter(|(_, f)| gw.contains(f)).map(|(_, f)| gw.nearest(&f)).collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

fn regularization_checks(
    p: &CompositeProblem,
    k: &Cone,
    s: &Scenario,
    tol: &Tolerances,
    checks: &mut Vec<Check>,
    grids: &mut Vec<(String, GridFn)>,
) -> Result<()> {
    let e = &s.expected;
    let wanted = e.g_k.is_some() || e.g_k_improper.is_some() || e.g_k_star_domain.is_some();
    if wanted {
        let reg = kconv::monotone_regularize(p.g_sampled(), k)?;
        if let Some(x) = &e.g_k {
            let c = compare_fn(&reg.fun, &|_| true, x, false);
            checks.push(value_check("g_K", &c, x, tol.value));
        }
        if let Some(b) = e.g_k_improper {
            checks.push(Check::custom(
                "g_K_improper",
                json!({"improper": reg.improper, "minus_inf_nodes": reg.minus_inf_nodes.len()}),
                json!(b),
                None,
                None,
                reg.improper == b,
            ));
        }
        if let Some(x) = &e.g_k_star_domain {
            let cfg = TransformConfig::for_fn(&reg.fun, p.method, p.grids.y.clone());
            let st = conjugate::conjugate_flagged(&reg.fun, &cfg)?;
            let c = compare_fn(&st.fun, &bool_fn(&st), x, false);
            checks.push(domain_check("g_K_star_domain", &c, x));
            grids.push(("g_K_star".to_string(), st.fun));
        }
        grids.push(("g_K".to_string(), reg.fun));
    }
    if let Some(x) = &e.g_range_k_domain {
        let keep = range_nodes(p);
        let mut mask = vec![false; p.grids.w.len()];
        for i in keep {
            mask[i] = true;
        }
        let g = p.g_sampled();
        let restricted = GridFn::new(
            g.grid.clone(),
            (0..g.len()).map(|i| if mask[i] { g.values[i] } else { ExtReal::PlusInf }).collect(),
        )?;
        let reg = kconv::monotone_regularize(&restricted, k)?;
        let c = compare_fn(&reg.fun, &|_| true, x, false);
        let mut chk = domain_check("g_range_K_domain", &c, x);
        chk.pass &= !reg.improper;
        checks.push(chk);
        grids.push(("g_range_K".to_string(), reg.fun));
    }
    Ok(())
}

/// Certified equality of ρ with the composite conjugate off the v-grid boundary.
fn equality_check(comp: &FlaggedConjugate, rho: &GridFn, tol: f64) -> Check {
    let g = &rho.grid;
    let (mut dev, mut n, mut mismatch) = (0.0f64, 0, 0);
    let a_fin = |i: usize| comp.reliable(i);
    let b_fin = |i: usize| rho.values[i].is_finite();
    for i in (0..g.len()).filter(|&i| !g.is_boundary(i)) {
        match (a_fin(i), b_fin(i)) {
            (true, true) => {
                n += 1;
                dev = dev.max((comp.fun.values[i].to_f64() - rho.values[i].to_f64()).abs());
            }
            (true, false) if !g.neighborhood(i, 1).into_iter().any(b_fin) => mismatch += 1,
            (false, true) if !g.neighborhood(i, 1).into_iter().any(a_fin) => mismatch += 1,
            _ => {}
        }
    }
    Check::custom(
        "rho_equals_composite_conjugate",
        json!({"max_abs_dev": dev, "n_compared": n, "domain_mismatch": mismatch}),
        json!("equal"),
        Some(dev),
        Some(tol),
        n > 0 && dev <= tol && mismatch == 0,
    )
}
