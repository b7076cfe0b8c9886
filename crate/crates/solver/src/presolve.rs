//! Bound propagation from singleton rows, fixed-variable substitution and
//! merging of parallel linear rows. Used before every NLP solve so that
//! big-M pairs with a fixed binary collapse to equalities or vanish.

use crate::expr::Expr;
use crate::model::{Body, LinExpr, MathModel};
use std::collections::BTreeMap;

const FIX_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ReducedRow {
    /// Reduced variable indices.
    pub coefs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug)]
pub struct ReducedNl {
    /// Expression over original variable ids (fixed ones substituted).
    pub expr: Expr,
    /// Original ids appearing in `expr`, sorted.
    pub local: Vec<usize>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug)]
pub struct Reduced {
    pub free: Vec<usize>,
    pub pos: Vec<Option<usize>>,
    /// Full-length vector; fixed entries carry their value.
    pub base: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub rows: Vec<ReducedRow>,
    pub nl: Vec<ReducedNl>,
}

#[derive(Debug)]
pub struct Infeasible(pub String);

pub fn presolve(model: &MathModel, lb0: &[f64], ub0: &[f64], tol: f64) -> Result<Reduced, Infeasible> {
    let n = model.vars.len();
    let mut lb = lb0.to_vec();
    let mut ub = ub0.to_vec();
    let mut lin: Vec<(LinExpr, f64, f64, String)> = Vec::new();
    let mut nl: Vec<(Expr, f64, f64, String)> = Vec::new();
    for c in &model.constraints {
        match &c.body {
            Body::Linear { expr, lo, hi } => lin.push((expr.compact(), *lo, *hi, c.name.clone())),
            Body::Nonlinear { expr, lo, hi } => nl.push((expr.clone(), *lo, *hi, c.name.clone())),
            Body::Cone { norm, bound } => {
                let mut e = Expr::Sum(Vec::new());
                for t in norm {
                    e = e + lin_to_expr(t).powi(2);
                }
                e = e - lin_to_expr(bound).powi(2);
                nl.push((e, f64::NEG_INFINITY, 0.0, c.name.clone()));
                lin.push((bound.clone(), 0.0, f64::INFINITY, c.name.clone()));
            }
        }
    }
    for i in 0..n {
        if lb[i] > ub[i] + tol {
            return Err(Infeasible(format!("bounds of {}", model.vars[i].name)));
        }
    }
    let mut consumed = vec![false; lin.len()];
    loop {
        let mut changed = false;
        for (r, (e, lo, hi, name)) in lin.iter().enumerate() {
            if consumed[r] {
                continue;
            }
            let mut c = e.constant;
            let mut free = Vec::new();
            for &(v, a) in &e.terms {
                if ub[v] - lb[v] <= FIX_TOL {
                    c += a * lb[v];
                } else {
                    free.push((v, a));
                }
            }
            match free.len() {
                0 => {
                    if c < lo - tol || c > hi + tol {
                        return Err(Infeasible(name.clone()));
                    }
                    consumed[r] = true;
                }
                1 => {
                    let (v, a) = free[0];
                    let (mut l, mut u) = ((lo - c) / a, (hi - c) / a);
                    if a < 0.0 {
                        std::mem::swap(&mut l, &mut u);
                    }
                    if l > lb[v] {
                        lb[v] = l;
                        changed = true;
                    }
                    if u < ub[v] {
                        ub[v] = u;
                        changed = true;
                    }
                    if lb[v] > ub[v] + tol {
                        return Err(Infeasible(name.clone()));
                    }
                    if lb[v] > ub[v] {
                        let m = 0.5 * (lb[v] + ub[v]);
                        lb[v] = m;
                        ub[v] = m;
                    }
                    consumed[r] = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    let mut pos = vec![None; n];
    let mut free = Vec::new();
    for i in 0..n {
        if ub[i] - lb[i] > FIX_TOL {
            pos[i] = Some(free.len());
            free.push(i);
        } else {
            ub[i] = lb[i];
        }
    }
    let mut base = vec![0.0; n];
    for i in 0..n {
        base[i] = if pos[i].is_none() { lb[i] } else { 0.0 };
    }
    // Merge parallel rows: key is the coefficient pattern scaled so the
    // first coefficient is one.
    let mut merged: BTreeMap<Vec<(usize, u64)>, (Vec<(usize, f64)>, f64, f64)> = BTreeMap::new();
    for (r, (e, lo, hi, name)) in lin.iter().enumerate() {
        if consumed[r] {
            continue;
        }
        let mut c = e.constant;
        let mut terms = Vec::new();
        for &(v, a) in &e.terms {
            match pos[v] {
                Some(k) => terms.push((k, a)),
                None => c += a * lb[v],
            }
        }
        if terms.is_empty() {
            if c < lo - tol || c > hi + tol {
                return Err(Infeasible(name.clone()));
            }
            continue;
        }
        let s = terms[0].1;
        let (mut l, mut u) = ((lo - c) / s, (hi - c) / s);
        if s < 0.0 {
            std::mem::swap(&mut l, &mut u);
        }
        let scaled: Vec<(usize, f64)> = terms.iter().map(|&(k, a)| (k, a / s)).collect();
        let key: Vec<(usize, u64)> = scaled.iter().map(|&(k, a)| (k, a.to_bits())).collect();
        let entry = merged.entry(key).or_insert((scaled, f64::NEG_INFINITY, f64::INFINITY));
        entry.1 = entry.1.max(l);
        entry.2 = entry.2.min(u);
        if entry.1 > entry.2 + tol {
            return Err(Infeasible(name.clone()));
        }
    }
    let rows = merged
        .into_values()
        .map(|(coefs, lo, hi)| {
            let (lo, hi) = if lo > hi { (0.5 * (lo + hi), 0.5 * (lo + hi)) } else { (lo, hi) };
            ReducedRow { coefs, lo, hi }
        })
        .collect();
    let fixed = |i: usize| if pos[i].is_none() { Some(lb[i]) } else { None };
    let mut nl_out = Vec::new();
    for (e, lo, hi, name) in &nl {
        let s = e.substitute(&fixed);
        if let Expr::Const(c) = s {
            if c < lo - tol || c > hi + tol {
                return Err(Infeasible(name.clone()));
            }
            continue;
        }
        let local = s.vars();
        nl_out.push(ReducedNl { expr: s, local, lo: *lo, hi: *hi });
    }
    let rlb = free.iter().map(|&i| lb[i]).collect();
    let rub = free.iter().map(|&i| ub[i]).collect();
    Ok(Reduced { free, pos, base, lb: rlb, ub: rub, rows, nl: nl_out })
}

pub fn lin_to_expr(e: &LinExpr) -> Expr {
    let mut parts: Vec<Expr> = e.terms.iter().map(|&(v, c)| Expr::var(v).scale(c)).collect();
    if e.constant != 0.0 || parts.is_empty() {
        parts.push(Expr::Const(e.constant));
    }
    Expr::Sum(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;

    #[test]
    fn big_m_pair_collapses_to_equality() {
        let mut m = MathModel::new("t");
        let a = m.continuous("a", -1.0, 1.0, "");
        let b = m.continuous("b", -1.0, 1.0, "");
        let z = m.binary("z", "");
        let big = 6.0;
        // a - b + M z <= M and a - b - M z >= -M
        m.linear("u", Family::SwitchVoltage, LinExpr::new().term(a, 1.0).term(b, -1.0).term(z, big), f64::NEG_INFINITY, big);
        m.linear("l", Family::SwitchVoltage, LinExpr::new().term(a, 1.0).term(b, -1.0).term(z, -big), -big, f64::INFINITY);
        let r = presolve(&m, &[-1.0, -1.0, 1.0], &[1.0, 1.0, 1.0], 1e-9).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!((r.rows[0].lo, r.rows[0].hi), (0.0, 0.0));
    }
}
