//! Solver-agnostic optimization model.

use crate::expr::Expr;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    AcBalance,
    DcBalance,
    AcFlow,
    DcFlow,
    ConverterLoss,
    ConverterCoupling,
    SwitchVoltage,
    SwitchFlowBound,
    Exclusivity,
    Thermal,
    AngleDiff,
    Reference,
    /// Structural constraints that only prune equivalent topologies.
    Symmetry,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::AcBalance => "ac-balance",
            Family::DcBalance => "dc-balance",
            Family::AcFlow => "ac-flow",
            Family::DcFlow => "dc-flow",
            Family::ConverterLoss => "converter-loss",
            Family::ConverterCoupling => "converter-coupling",
            Family::SwitchVoltage => "switch-voltage",
            Family::SwitchFlowBound => "switch-flow-bound",
            Family::Exclusivity => "exclusivity",
            Family::Thermal => "thermal",
            Family::AngleDiff => "angle-diff",
            Family::Reference => "reference",
            Family::Symmetry => "symmetry",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    #[serde(with = "lower")]
    pub lb: f64,
    #[serde(with = "upper")]
    pub ub: f64,
    /// Element the variable belongs to, e.g. `ac_branch:3`.
    pub tag: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(v: usize) -> Self {
        LinExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, v: usize, c: f64) -> Self {
        self.add_term(v, c);
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, v: usize, c: f64) {
        if c != 0.0 {
            self.terms.push((v, c));
        }
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.add_term(v, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    /// Merge duplicate variables and drop zeros.
    pub fn compact(&self) -> LinExpr {
        let mut t: Vec<(usize, f64)> = self.terms.clone();
        t.sort_by_key(|p| p.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(t.len());
        for (v, c) in t {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|p| p.1 != 0.0);
        LinExpr { terms: out, constant: self.constant }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Body {
    /// lo <= expr <= hi
    Linear {
        expr: LinExpr,
        #[serde(with = "lower")]
        lo: f64,
        #[serde(with = "upper")]
        hi: f64,
    },
    /// ||norm||_2 <= bound
    Cone { norm: Vec<LinExpr>, bound: LinExpr },
    /// lo <= expr <= hi with a smooth expression
    Nonlinear {
        expr: Expr,
        #[serde(with = "lower")]
        lo: f64,
        #[serde(with = "upper")]
        hi: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub family: Family,
    pub body: Body,
}

impl Constraint {
    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match &self.body {
            Body::Linear { expr, lo, hi } => range_violation(expr.eval(x), *lo, *hi),
            Body::Nonlinear { expr, lo, hi } => range_violation(expr.eval(x), *lo, *hi),
            Body::Cone { norm, bound } => {
                let n = norm.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                (n - bound.eval(x)).max(0.0)
            }
        }
    }
}

fn range_violation(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        lo - v
    } else if v > hi {
        v - hi
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MathModel {
    pub name: String,
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: LinExpr,
    /// Convex relaxation used for node bounds when this model is nonlinear.
    /// Its binaries appear in the same order as this model's binaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<Box<MathModel>>,
}

impl MathModel {
    pub fn new(name: impl Into<String>) -> Self {
        MathModel { name: name.into(), ..Default::default() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lb: f64, ub: f64, tag: impl Into<String>) -> usize {
        self.vars.push(Variable { name: name.into(), kind, lb, ub, tag: tag.into() });
        self.vars.len() - 1
    }

    pub fn continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64, tag: impl Into<String>) -> usize {
        self.add_var(name, VarKind::Continuous, lb, ub, tag)
    }

    pub fn binary(&mut self, name: impl Into<String>, tag: impl Into<String>) -> usize {
        self.add_var(name, VarKind::Binary, 0.0, 1.0, tag)
    }

    pub fn linear(&mut self, name: impl Into<String>, family: Family, expr: LinExpr, lo: f64, hi: f64) {
        self.constraints.push(Constraint { name: name.into(), family, body: Body::Linear { expr, lo, hi } });
    }

    pub fn cone(&mut self, name: impl Into<String>, family: Family, norm: Vec<LinExpr>, bound: LinExpr) {
        self.constraints.push(Constraint { name: name.into(), family, body: Body::Cone { norm, bound } });
    }

    pub fn nonlinear(&mut self, name: impl Into<String>, family: Family, expr: Expr, lo: f64, hi: f64) {
        self.constraints.push(Constraint { name: name.into(), family, body: Body::Nonlinear { expr, lo, hi } });
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.vars.len()).filter(|&i| self.vars[i].kind == VarKind::Binary).collect()
    }

    pub fn has_nonlinear(&self) -> bool {
        self.constraints.iter().any(|c| matches!(c.body, Body::Nonlinear { .. }))
    }

    pub fn has_cones(&self) -> bool {
        self.constraints.iter().any(|c| matches!(c.body, Body::Cone { .. }))
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn count_family(&self, family: Family) -> usize {
        self.constraints.iter().filter(|c| c.family == family).count()
    }

    /// Largest bound or constraint violation at `x`, with the offending constraint name.
    pub fn max_violation(&self, x: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::new());
        for (i, v) in self.vars.iter().enumerate() {
            let d = range_violation(x[i], v.lb, v.ub);
            if d > worst.0 {
                worst = (d, format!("bounds of {}", v.name));
            }
        }
        for c in &self.constraints {
            let d = c.violation(x);
            if d > worst.0 {
                worst = (d, c.name.clone());
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

// Infinite bounds are written as null.
mod lower {
    use super::*;
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

mod upper {
    use super::*;
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
