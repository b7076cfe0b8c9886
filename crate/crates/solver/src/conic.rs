//! Continuous solves of linear and second-order-cone models: LP plus
//! iterated outer-approximation cuts.

use crate::lp::{Lp, LpRow, LpStatus};
use crate::model::{Body, LinExpr, MathModel};
use crate::options::SolverOptions;
use crate::result::Status;
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct ConeOutcome {
    pub status: Status,
    pub objective: f64,
    pub x: Vec<f64>,
    pub rounds: usize,
    pub message: String,
}

impl ConeOutcome {
    fn fail(status: Status, message: impl Into<String>) -> Self {
        ConeOutcome { status, objective: f64::NAN, x: Vec::new(), rounds: 0, message: message.into() }
    }
}

/// Supporting hyperplane of `||norm|| <= bound` at `x`, when `x` violates the
/// cone by more than `tol`. The cut holds at every point of the cone because
/// `u.v / |u| <= |v|`.
pub fn cone_cut(norm: &[LinExpr], bound: &LinExpr, x: &[f64], tol: f64) -> Option<LpRow> {
    let u: Vec<f64> = norm.iter().map(|e| e.eval(x)).collect();
    let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let t = bound.eval(x);
    if nu - t <= tol {
        return None;
    }
    let mut e = LinExpr::new();
    if nu > 1e-12 {
        for (k, ek) in norm.iter().enumerate() {
            e.add_expr(ek, u[k] / nu);
        }
    }
    e.add_expr(bound, -1.0);
    let row = LpRow::from_expr(&e, f64::NEG_INFINITY, 0.0);
    if row.coefs.iter().all(|c| c.1.abs() < 1e-14) {
        return None;
    }
    Some(row)
}

pub fn linear_rows(model: &MathModel) -> Vec<LpRow> {
    model
        .constraints
        .iter()
        .filter_map(|c| match &c.body {
            Body::Linear { expr, lo, hi } => Some(LpRow::from_expr(expr, *lo, *hi)),
            _ => None,
        })
        .collect()
}

/// Minimize the model objective over the given variable bounds. Cones are
/// enforced lazily; cuts found are appended to `pool` (they are valid for
/// every node of the same model).
pub fn solve_cone_lp(
    model: &MathModel,
    base_rows: &[LpRow],
    lb: &[f64],
    ub: &[f64],
    pool: &mut Vec<LpRow>,
    opts: &SolverOptions,
    deadline: Option<Instant>,
) -> ConeOutcome {
    if model.has_nonlinear() {
        return ConeOutcome::fail(Status::Limit, "nonlinear constraints need the NLP back-end");
    }
    let cones: Vec<(&Vec<LinExpr>, &LinExpr)> = model
        .constraints
        .iter()
        .filter_map(|c| match &c.body {
            Body::Cone { norm, bound } => Some((norm, bound)),
            _ => None,
        })
        .collect();
    let mut rows = base_rows.to_vec();
    rows.extend_from_slice(pool);
    let mut lp = match Lp::solve(&model.objective, lb, ub, &rows, deadline) {
        Ok(lp) => lp,
        Err(s) => return from_lp_status(s),
    };
    for round in 0..opts.max_cut_rounds {
        let x = lp.x();
        let cuts: Vec<LpRow> = cones.iter().filter_map(|(n, b)| cone_cut(n, b, &x, opts.cone_cut_tol)).collect();
        if cuts.is_empty() {
            return ConeOutcome { status: Status::Optimal, objective: lp.objective(), x, rounds: round, message: String::new() };
        }
        if let Some(d) = deadline {
            if Instant::now() >= d {
                return ConeOutcome::fail(Status::Limit, "time limit during cut rounds");
            }
        }
        pool.extend_from_slice(&cuts);
        lp = match lp.add_rows(&cuts) {
            Ok(lp) => lp,
            Err(s) => return from_lp_status(s),
        };
    }
    ConeOutcome::fail(Status::Limit, "cut round limit reached")
}

fn from_lp_status(s: LpStatus) -> ConeOutcome {
    match s {
        LpStatus::Infeasible => ConeOutcome::fail(Status::Infeasible, "LP infeasible"),
        LpStatus::Unbounded => ConeOutcome::fail(Status::Unbounded, "LP unbounded"),
        LpStatus::Limit => ConeOutcome::fail(Status::Limit, "LP time limit"),
        LpStatus::Optimal => unreachable!(),
        LpStatus::Failed(m) => ConeOutcome::fail(Status::Limit, format!("LP failure: {m}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;

    #[test]
    fn disc_minimum() {
        // min x + y  s.t. ||(x, y)|| <= 1  ->  -sqrt(2)
        let mut m = MathModel::new("disc");
        let x = m.continuous("x", -2.0, 2.0, "");
        let y = m.continuous("y", -2.0, 2.0, "");
        m.cone("c", Family::Thermal, vec![LinExpr::var(x), LinExpr::var(y)], LinExpr::constant(1.0));
        m.objective = LinExpr::new().term(x, 1.0).term(y, 1.0);
        let mut pool = Vec::new();
        let out = solve_cone_lp(&m, &linear_rows(&m), &[-2.0; 2], &[2.0; 2], &mut pool, &SolverOptions::default(), None);
        assert_eq!(out.status, Status::Optimal);
        assert!((out.objective + 2f64.sqrt()).abs() < 1e-6, "{}", out.objective);
    }
}
