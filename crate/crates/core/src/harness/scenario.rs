//! Scenario files: problem declaration, expected values and tolerances.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::composite::{CompositeProblem, Grids, Outer, ProblemFlags, VecMap, VRepDecls};
use crate::cones::{Cone, ConeDecl};
use crate::conjugate::Method;
use crate::error::{Error, Result};
use crate::expr::FunctionExpr;
use crate::qual::PwlqDecl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDecl {
    pub components: Vec<FunctionExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFlags {
    #[serde(default)]
    pub polyhedral_domg: bool,
    #[serde(default, rename = "polyhedral_F")]
    pub polyhedral_f: bool,
    #[serde(default)]
    pub f_gamma0: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pwlq_f: Option<bool>,
}

/// Optional pipeline stages; `None` picks the default for the scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_tilde: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kconv: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery: Option<bool>,
}

/// `(v̄, ū)` at which a duality report is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

/// Expected values at a probe; absent fields are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeExpect {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_set: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_set: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primal_attained: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_attained: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_suspect: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong_eq: Option<bool>,
}

/// A closed form for a function slice: `p_v̄` on the u-grid or `q_ū` on the v-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceExpect {
    /// `v̄` for the primal slice, `ū` for the dual slice.
    pub at: Vec<f64>,
    pub expr: FunctionExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FStarExpect {
    pub v: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
}

/// Subdifferential of `p_v̄` at `ū`, compared as a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdiffExpect {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_suspect: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityExpect {
    pub v: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub eq15_holds: bool,
    pub eq16_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRuleExpect {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lhs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equality: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KIncreasingExpect {
    pub cone: ConeDecl,
    /// Restrict to w-nodes nearest to `F(x)` for x-grid nodes.
    #[serde(default)]
    pub on_range: bool,
    pub expected: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_star: Option<FunctionExpr>,
    /// Only the finite domain of `g*` is compared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_star_domain: Option<FunctionExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite_conjugate: Option<FunctionExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<FunctionExpr>,
    /// Only the finite domain of ρ is compared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_domain: Option<FunctionExpr>,
    /// Finite domain of η for the scenario cone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_domain: Option<FunctionExpr>,
    #[serde(default, rename = "K_F", skip_serializing_if = "Option::is_none")]
    pub k_f: Option<ConeDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hzn_g: Option<ConeDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kf_kg_nonempty: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_increasing: Vec<KIncreasingExpect>,
    /// `g_K` for the scenario cone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_k: Option<FunctionExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_k_improper: Option<bool>,
    /// `(g + δ_{rge F})_K` for the scenario cone, compared by finite domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_range_k_domain: Option<FunctionExpr>,
    /// Finite domain of `g_K*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_k_star_domain: Option<FunctionExpr>,
    /// Battery verdicts by condition name, plus `equality_certificate`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub verdicts: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeExpect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub primal_slices: Vec<SliceExpect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dual_slices: Vec<SliceExpect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f_star: Vec<FStarExpect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub primal_subdiff: Vec<SubdiffExpect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub optimality: Vec<OptimalityExpect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chain_rule: Vec<ChainRuleExpect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Per-node tolerance for closed-form comparisons.
    #[serde(default = "default_value_tol")]
    pub value: f64,
    /// Tolerance for `f*` point values.
    #[serde(default = "default_point_tol")]
    pub point: f64,
    /// Angular tolerance for cone estimates, degrees.
    #[serde(default = "default_angle")]
    pub angle_deg: f64,
    /// Maximum deviation between ρ and the composite conjugate on certified scenarios.
    #[serde(default = "default_value_tol")]
    pub eq: f64,
}

fn default_value_tol() -> f64 {
    5e-2
}

fn default_point_tol() -> f64 {
    1e-2
}

fn default_angle() -> f64 {
    2.0
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { value: default_value_tol(), point: default_point_tol(), angle_deg: default_angle(), eq: default_value_tol() }
    }
}

impl Tolerances {
    pub fn scaled(&self, k: f64) -> Tolerances {
        Tolerances { value: self.value * k, point: self.point * k, angle_deg: self.angle_deg * k, eq: self.eq * k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub citation: String,
    #[serde(default = "zero_expr")]
    pub f0: FunctionExpr,
    pub g: FunctionExpr,
    #[serde(rename = "F")]
    pub map: MapDecl,
    pub grids: Grids,
    #[serde(default)]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeDecl>,
    #[serde(default)]
    pub flags: ScenarioFlags,
    #[serde(default)]
    pub vrep: VRepDecls,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pwlq: Option<PwlqDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub expected: Expected,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn zero_expr() -> FunctionExpr {
    FunctionExpr::constant(0.0)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::Parse { line: e.line(), col: e.column(), msg: e.to_string() })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn n(&self) -> usize {
        self.grids.x.dim()
    }

    pub fn m(&self) -> usize {
        self.map.components.len()
    }

    /// Expected-value expressions must fit the grids they are compared on.
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        let e = &self.expected;
        let fits = |expr: &Option<FunctionExpr>, dim: usize, what: &str| -> Result<()> {
            match expr {
                Some(x) if x.arity() > dim => Err(Error::InvariantViolation(format!(
                    "expected {what} uses coordinate {} but its grid has dimension {dim}",
                    x.arity()
                ))),
                _ => Ok(()),
            }
        };
        fits(&e.g_star, m, "g_star")?;
        fits(&e.g_star_domain, m, "g_star_domain")?;
        fits(&e.composite_conjugate, n, "composite_conjugate")?;
        fits(&e.rho, n, "rho")?;
        fits(&e.rho_domain, n, "rho_domain")?;
        fits(&e.eta_domain, n, "eta_domain")?;
        fits(&e.g_k, m, "g_k")?;
        fits(&e.g_range_k_domain, m, "g_range_k_domain")?;
        fits(&e.g_k_star_domain, m, "g_k_star_domain")?;
        for s in &e.primal_slices {
            fits(&Some(s.expr.clone()), m, "primal slice")?;
        }
        for s in &e.dual_slices {
            fits(&Some(s.expr.clone()), n, "dual slice")?;
        }
        let needs_cone = e.g_k.is_some()
            || e.g_k_improper.is_some()
            || e.g_range_k_domain.is_some()
            || e.g_k_star_domain.is_some()
            || e.eta_domain.is_some();
        if needs_cone && self.cone.is_none() {
            return Err(Error::InvariantViolation("expected block refers to K but no cone is declared".into()));
        }
        if let Some(c) = &self.cone {
            c.resolve(m)?;
        }
        Ok(())
    }

    pub fn cone(&self) -> Result<Option<Cone>> {
        self.cone.as_ref().map(|c| c.resolve(self.m())).transpose()
    }

    pub fn problem(&self) -> Result<CompositeProblem> {
        let comps: Vec<FunctionExpr> = self.map.components.clone();
        let map = VecMap::new(self.n(), comps, self.map.guard.as_deref())?;
        let flags = ProblemFlags {
            polyhedral_domg: self.flags.polyhedral_domg,
            polyhedral_f: self.flags.polyhedral_f,
            f_gamma0: self.flags.f_gamma0,
        };
        Ok(CompositeProblem::new(self.f0.clone(), Outer::Expr(self.g.clone()), map, self.grids.clone())?
            .with_method(self.method)
            .with_flags(flags)
            .with_vrep(self.vrep.clone()))
    }

    /// PWLQ declaration: the explicit form when given, else the flag.
    pub fn pwlq_decl(&self) -> Option<PwlqDecl> {
        self.pwlq.clone().or(self.flags.pwlq_f.map(PwlqDecl::Flag))
    }
}
