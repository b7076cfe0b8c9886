//! Text exchange with third-party solvers: CPLEX-style LP files (cones as
//! quadratic rows) and plain `name value` solution files.

use crate::model::{Body, LinExpr, MathModel, VarKind};
use crate::SolverError;
use std::collections::HashMap;
use std::fmt::Write;

/// Exchange name of variable `i`. Model names may contain characters the LP
/// format rejects, so columns are numbered and the mapping goes in comments.
pub fn column(i: usize) -> String {
    format!("x{i}")
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn lin_terms(out: &mut String, e: &LinExpr) {
    let mut first = true;
    for &(i, c) in &e.compact().terms {
        if first {
            let _ = write!(out, "{} {}", num(c), column(i));
            first = false;
        } else if c < 0.0 {
            let _ = write!(out, " - {} {}", num(-c), column(i));
        } else {
            let _ = write!(out, " + {} {}", num(c), column(i));
        }
    }
    if first {
        out.push_str(&format!("0 {}", column(0)));
    }
}

/// Write the model in LP format. Nonlinear rows have no LP-format encoding
/// and are rejected.
pub fn write_lp(model: &MathModel) -> Result<String, SolverError> {
    if model.has_nonlinear() {
        return Err(SolverError::Exchange("nonlinear rows cannot be written in LP format".into()));
    }
    let mut s = String::new();
    let _ = writeln!(s, "\\ model {}", model.name);
    for (i, v) in model.vars.iter().enumerate() {
        let _ = writeln!(s, "\\ {} = {}", column(i), v.name);
    }
    if model.objective.constant != 0.0 {
        let _ = writeln!(s, "\\ objective constant {}", num(model.objective.constant));
    }
    s.push_str("Minimize\n obj: ");
    lin_terms(&mut s, &model.objective);
    s.push_str("\nSubject To\n");
    for (k, c) in model.constraints.iter().enumerate() {
        match &c.body {
            Body::Linear { expr, lo, hi } => {
                let e = expr.compact();
                if e.terms.is_empty() {
                    continue;
                }
                let (lo, hi) = (lo - e.constant, hi - e.constant);
                let mut row = |tag: &str, op: &str, rhs: f64| {
                    let _ = write!(s, " c{k}{tag}: ");
                    lin_terms(&mut s, &e);
                    let _ = writeln!(s, " {op} {}", num(rhs));
                };
                if lo == hi {
                    row("", "=", lo);
                } else {
                    if lo.is_finite() {
                        row("_lo", ">=", lo);
                    }
                    if hi.is_finite() {
                        row("_hi", "<=", hi);
                    }
                }
            }
            Body::Cone { norm, bound } => {
                // ||u|| <= t  as  sum u^2 - t^2 <= 0 with t >= 0. Each term is
                // materialized in an auxiliary column to keep rows quadratic in
                // single columns.
                let mut aux = Vec::new();
                for (j, e) in norm.iter().chain(std::iter::once(bound)).enumerate() {
                    let name = format!("c{k}_a{j}");
                    let col = format!("q{k}_{j}");
                    let e = e.compact();
                    let _ = write!(s, " {name}: ");
                    lin_terms(&mut s, &e);
                    let _ = writeln!(s, " - {col} = {}", num(-e.constant));
                    aux.push(col);
                }
                let t = aux.pop().unwrap();
                let _ = write!(s, " c{k}_cone: [ ");
                for (j, a) in aux.iter().enumerate() {
                    let _ = write!(s, "{}{a} ^ 2 ", if j == 0 { "" } else { "+ " });
                }
                let _ = writeln!(s, "- {t} ^ 2 ] <= 0");
                let _ = writeln!(s, " c{k}_pos: {t} >= 0");
            }
            Body::Nonlinear { .. } => unreachable!(),
        }
    }
    s.push_str("Bounds\n");
    for (i, v) in model.vars.iter().enumerate() {
        let c = column(i);
        match (v.lb.is_finite(), v.ub.is_finite()) {
            (true, true) if v.lb == v.ub => {
                let _ = writeln!(s, " {c} = {}", num(v.lb));
            }
            (true, true) => {
                let _ = writeln!(s, " {} <= {c} <= {}", num(v.lb), num(v.ub));
            }
            (true, false) => {
                let _ = writeln!(s, " {c} >= {}", num(v.lb));
            }
            (false, true) => {
                let _ = writeln!(s, " -inf <= {c} <= {}", num(v.ub));
            }
            (false, false) => {
                let _ = writeln!(s, " {c} free");
            }
        }
    }
    // Auxiliary cone columns are free.
    for (k, c) in model.constraints.iter().enumerate() {
        if let Body::Cone { norm, .. } = &c.body {
            for j in 0..=norm.len() {
                let _ = writeln!(s, " q{k}_{j} free");
            }
        }
    }
    let bins: Vec<String> = model.vars.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Binary).map(|(i, _)| column(i)).collect();
    if !bins.is_empty() {
        s.push_str("Binaries\n");
        for b in bins {
            let _ = writeln!(s, " {b}");
        }
    }
    s.push_str("End\n");
    Ok(s)
}

/// Read a solution file of whitespace-separated `name value` lines (extra
/// columns and unknown names are ignored). Names may be exchange columns or
/// model variable names. Every model variable must be present.
pub fn read_solution(model: &MathModel, text: &str) -> Result<Vec<f64>, SolverError> {
    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for (i, v) in model.vars.iter().enumerate() {
        by_name.insert(v.name.as_str(), i);
    }
    let mut x = vec![f64::NAN; model.vars.len()];
    for line in text.lines() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 2 {
            continue;
        }
        // Accept both "name value" and "index name value ..." layouts.
        let (name, value) = match (toks[1].parse::<f64>(), toks.get(2).map(|t| t.parse::<f64>())) {
            (Ok(v), _) => (toks[0], v),
            (Err(_), Some(Ok(v))) => (toks[1], v),
            _ => continue,
        };
        let idx = name
            .strip_prefix('x')
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&i| i < x.len() && column(i) == name)
            .or_else(|| by_name.get(name).copied());
        if let Some(i) = idx {
            x[i] = value;
        }
    }
    if let Some(i) = x.iter().position(|v| v.is_nan()) {
        return Err(SolverError::Exchange(format!("solution misses variable {}", model.vars[i].name)));
    }
    Ok(x)
}

/// Turn an external solution into a result after auditing it against the
/// model's own constraints.
pub fn ingest(model: &MathModel, text: &str, tol: f64) -> Result<crate::SolveResult, SolverError> {
    let x = read_solution(model, text)?;
    let (viol, name) = model.max_violation(&x);
    if viol > tol {
        return Err(SolverError::Exchange(format!("external solution violates {name} by {viol:e}")));
    }
    let obj = model.objective.eval(&x);
    let mut r = crate::SolveResult::failed(crate::Status::FeasibleGap, "external solution, bound unknown");
    r.objective = Some(obj);
    r.binaries = model.binaries().iter().map(|&i| (i, x[i] > 0.5)).collect();
    r.x = x;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;

    #[test]
    fn writes_sections_and_reads_back() {
        let mut m = MathModel::new("t");
        let a = m.continuous("p[1]", -1.0, 1.0, "");
        let z = m.binary("z", "");
        m.linear("r", Family::Thermal, LinExpr::new().term(a, 1.0).term(z, -1.0), f64::NEG_INFINITY, 0.0);
        m.cone("k", Family::Thermal, vec![LinExpr::var(a)], LinExpr::constant(1.0));
        m.objective = LinExpr::var(a);
        let lp = write_lp(&m).unwrap();
        for key in ["Minimize", "Subject To", "Bounds", "Binaries", "End", "^ 2"] {
            assert!(lp.contains(key), "{key} missing");
        }
        let r = ingest(&m, "x0 -1\nz 0\n", 1e-9).unwrap();
        assert_eq!(r.objective, Some(-1.0));
        assert!(ingest(&m, "x0 0.5\nx1 0\n", 1e-9).is_err());
    }
}
