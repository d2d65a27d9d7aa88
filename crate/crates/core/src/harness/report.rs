//! Run reports: per-check entries, JSON with rounded numbers, CSV grid dumps.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::duality::DualityReport;
use crate::error::Result;
use crate::grid::GridFn;
use crate::kconv::ConeEstimates;
use crate::qual::ConditionReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check_id: String,
    pub computed: Value,
    pub expected: Value,
    pub abs_dev: Option<f64>,
    pub tol: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn numeric(id: impl Into<String>, computed: f64, expected: f64, tol: f64) -> Check {
        let dev = (computed - expected).abs();
        Check {
            check_id: id.into(),
            computed: num(computed),
            expected: num(expected),
            abs_dev: Some(dev),
            tol: Some(tol),
            pass: dev <= tol,
        }
    }

    pub fn verdict(id: impl Into<String>, computed: bool, expected: bool) -> Check {
        Check {
            check_id: id.into(),
            computed: Value::Bool(computed),
            expected: Value::Bool(expected),
            abs_dev: None,
            tol: None,
            pass: computed == expected,
        }
    }

    /// A check with its own pass rule, e.g. a deviation report with a domain-mismatch count.
    pub fn custom(id: impl Into<String>, computed: Value, expected: Value, abs_dev: Option<f64>, tol: Option<f64>, pass: bool) -> Check {
        Check { check_id: id.into(), computed, expected, abs_dev, tol, pass }
    }
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| Value::String(format!("{x}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub citation: String,
    pub checks: Vec<Check>,
    pub duality: Vec<DualityReport>,
    pub conditions: Option<ConditionReport>,
    pub cones: Option<ConeEstimates>,
    pub pass: bool,
    pub timing_ms: u128,
    #[serde(skip)]
    pub grids: Vec<(String, GridFn)>,
}

impl RunReport {
    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// JSON with every number rounded to 12 significant digits.
    pub fn to_json_value(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        round_numbers(&mut v);
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("value serializes")
    }

    /// JSON without the timing field, for determinism comparisons.
    pub fn to_json_untimed(&self) -> String {
        let mut v = self.to_json_value();
        if let Value::Object(m) = &mut v {
            m.remove("timing_ms");
        }
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    /// Writes one `<name>.csv` per computed grid function.
    pub fn dump_grids(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, f) in &self.grids {
            std::fs::write(dir.join(format!("{name}.csv")), f.to_csv())?;
        }
        Ok(())
    }
}

pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let p = digits - 1 - mag;
    if p > 300 || p < -300 {
        return x;
    }
    let s = 10f64.powi(p);
    let r = (x * s).round() / s;
    if r.is_finite() {
        r
    } else {
        x
    }
}

fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(|x| round_sig(x, 12)).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_numbers),
        Value::Object(m) => m.values_mut().for_each(round_numbers),
        _ => {}
    }
}
