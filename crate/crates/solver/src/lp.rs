//! Thin wrapper over the `microlp` simplex with incremental row addition.

use crate::model::LinExpr;
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

impl LpRow {
    /// Row `lo <= expr <= hi`, moving the expression constant to the sides.
    pub fn from_expr(expr: &LinExpr, lo: f64, hi: f64) -> LpRow {
        let e = expr.compact();
        LpRow { coefs: e.terms, lo: lo - e.constant, hi: hi - e.constant }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(v, c)| c * x[v]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
    Failed(String),
}

#[derive(Clone)]
pub struct Lp {
    sol: microlp::Solution,
    vars: Vec<microlp::Variable>,
    obj_constant: f64,
    setup: Setup,
}

#[derive(Clone)]
struct Setup {
    obj: LinExpr,
    lb: Vec<f64>,
    ub: Vec<f64>,
    rows: Vec<LpRow>,
    deadline: Option<Instant>,
}

fn add_row(p: &mut Problem, vars: &[microlp::Variable], row: &LpRow) {
    let expr: Vec<(microlp::Variable, f64)> = row.coefs.iter().map(|&(v, c)| (vars[v], c)).collect();
    if row.lo == row.hi {
        p.add_constraint(expr.as_slice(), ComparisonOp::Eq, row.lo);
        return;
    }
    if row.lo.is_finite() {
        p.add_constraint(expr.as_slice(), ComparisonOp::Ge, row.lo);
    }
    if row.hi.is_finite() {
        p.add_constraint(expr.as_slice(), ComparisonOp::Le, row.hi);
    }
}

fn map_err(e: microlp::Error) -> LpStatus {
    match e {
        microlp::Error::Infeasible => LpStatus::Infeasible,
        microlp::Error::Unbounded => LpStatus::Unbounded,
        other => LpStatus::Failed(other.to_string()),
    }
}

impl Lp {
    /// Minimize `obj` subject to bounds and rows.
    pub fn solve(obj: &LinExpr, lb: &[f64], ub: &[f64], rows: &[LpRow], deadline: Option<Instant>) -> Result<Lp, LpStatus> {
        let setup = Setup { obj: obj.compact(), lb: lb.to_vec(), ub: ub.to_vec(), rows: rows.to_vec(), deadline };
        Self::solve_setup(setup)
    }

    fn solve_setup(setup: Setup) -> Result<Lp, LpStatus> {
        for (l, u) in setup.lb.iter().zip(&setup.ub) {
            if l > u {
                return Err(LpStatus::Infeasible);
            }
        }
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let mut cost = vec![0.0; setup.lb.len()];
        for &(v, c) in &setup.obj.terms {
            cost[v] += c;
        }
        let vars: Vec<microlp::Variable> =
            (0..setup.lb.len()).map(|i| p.add_var(cost[i], (setup.lb[i], setup.ub[i]))).collect();
        for row in &setup.rows {
            if row.coefs.is_empty() {
                if row.lo > 1e-9 || row.hi < -1e-9 {
                    return Err(LpStatus::Infeasible);
                }
                continue;
            }
            add_row(&mut p, &vars, row);
        }
        if let Some(d) = setup.deadline {
            let left = d.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(LpStatus::Limit);
            }
            p.set_time_limit(left);
        }
        let outcome = p.solve().map_err(map_err)?;
        let sol = outcome.into_solution().map_err(|_| LpStatus::Limit)?;
        Ok(Lp { sol, vars, obj_constant: setup.obj.constant, setup })
    }

    /// Append rows and re-optimize from the current basis. Falls back to a
    /// cold solve if the warm start reports an internal failure.
    pub fn add_rows(self, rows: &[LpRow]) -> Result<Lp, LpStatus> {
        let Lp { mut sol, vars, obj_constant, mut setup } = self;
        setup.rows.extend_from_slice(rows);
        for row in rows {
            let expr: Vec<(microlp::Variable, f64)> = row.coefs.iter().map(|&(v, c)| (vars[v], c)).collect();
            let mut parts = Vec::new();
            if row.lo == row.hi {
                parts.push((ComparisonOp::Eq, row.lo));
            } else {
                if row.lo.is_finite() {
                    parts.push((ComparisonOp::Ge, row.lo));
                }
                if row.hi.is_finite() {
                    parts.push((ComparisonOp::Le, row.hi));
                }
            }
            for (op, rhs) in parts {
                match sol.add_constraint(expr.as_slice(), op, rhs) {
                    Ok(out) => match out.into_solution() {
                        Ok(s) => sol = s,
                        Err(_) => return Err(LpStatus::Limit),
                    },
                    Err(microlp::Error::Infeasible) => return Err(LpStatus::Infeasible),
                    Err(microlp::Error::Unbounded) => return Err(LpStatus::Unbounded),
                    Err(_) => return Self::solve_setup(setup),
                }
            }
        }
        Ok(Lp { sol, vars, obj_constant, setup })
    }

    pub fn objective(&self) -> f64 {
        self.sol.objective() + self.obj_constant
    }

    pub fn x(&self) -> Vec<f64> {
        self.vars.iter().map(|&v| self.sol.var_value(v)).collect()
    }

    pub fn rows(&self) -> &[LpRow] {
        &self.setup.rows
    }
}
