//! Small expression trees for smooth constraints, with exact first and
//! second derivatives computed by forward propagation of local jets.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Var(usize),
    Sum(Vec<Expr>),
    Prod(Vec<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn powi(self, n: u32) -> Expr {
        Expr::Pow(Box::new(self), n)
    }

    pub fn sin(self) -> Expr {
        Expr::Sin(Box::new(self))
    }

    pub fn cos(self) -> Expr {
        Expr::Cos(Box::new(self))
    }

    pub fn scale(self, c: f64) -> Expr {
        Expr::Prod(vec![Expr::Const(c), self])
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => {
                out.insert(*i);
            }
            Expr::Sum(v) | Expr::Prod(v) => v.iter().for_each(|e| e.collect_vars(out)),
            Expr::Pow(e, _) | Expr::Sin(e) | Expr::Cos(e) => e.collect_vars(out),
        }
    }

    pub fn vars(&self) -> Vec<usize> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s.into_iter().collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Sum(v) => v.iter().map(|e| e.eval(x)).sum(),
            Expr::Prod(v) => v.iter().map(|e| e.eval(x)).product(),
            Expr::Pow(e, n) => e.eval(x).powi(*n as i32),
            Expr::Sin(e) => e.eval(x).sin(),
            Expr::Cos(e) => e.eval(x).cos(),
        }
    }

    /// Value, gradient and Hessian with respect to `local` (sorted variable ids).
    pub fn jet(&self, x: &[f64], local: &[usize]) -> Jet {
        let n = local.len();
        match self {
            Expr::Const(c) => Jet::constant(*c, n),
            Expr::Var(i) => match local.binary_search(i) {
                Ok(k) => Jet::variable(x[*i], k, n),
                Err(_) => Jet::constant(x[*i], n),
            },
            Expr::Sum(v) => {
                let mut acc = Jet::constant(0.0, n);
                for e in v {
                    acc.add_assign(&e.jet(x, local));
                }
                acc
            }
            Expr::Prod(v) => {
                let mut acc = Jet::constant(1.0, n);
                for e in v {
                    acc = acc.mul(&e.jet(x, local));
                }
                acc
            }
            Expr::Pow(e, p) => {
                let u = e.jet(x, local);
                let p = *p as i32;
                let f = u.v.powi(p);
                let d1 = if p == 0 { 0.0 } else { p as f64 * u.v.powi(p - 1) };
                let d2 = if p < 2 { 0.0 } else { (p * (p - 1)) as f64 * u.v.powi(p - 2) };
                u.chain(f, d1, d2)
            }
            Expr::Sin(e) => {
                let u = e.jet(x, local);
                let (s, c) = u.v.sin_cos();
                u.chain(s, c, -s)
            }
            Expr::Cos(e) => {
                let u = e.jet(x, local);
                let (s, c) = u.v.sin_cos();
                u.chain(c, -s, -c)
            }
        }
    }

    /// Replace variables that have a fixed value and fold constants.
    pub fn substitute(&self, fixed: &dyn Fn(usize) -> Option<f64>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => match fixed(*i) {
                Some(v) => Expr::Const(v),
                None => Expr::Var(*i),
            },
            Expr::Sum(v) => {
                let mut c = 0.0;
                let mut rest = Vec::new();
                for e in v {
                    match e.substitute(fixed) {
                        Expr::Const(k) => c += k,
                        Expr::Sum(inner) => rest.extend(inner),
                        other => rest.push(other),
                    }
                }
                if rest.is_empty() {
                    return Expr::Const(c);
                }
                if c != 0.0 {
                    rest.push(Expr::Const(c));
                }
                if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    Expr::Sum(rest)
                }
            }
            Expr::Prod(v) => {
                let mut c = 1.0;
                let mut rest = Vec::new();
                for e in v {
                    match e.substitute(fixed) {
                        Expr::Const(k) => c *= k,
                        other => rest.push(other),
                    }
                }
                if c == 0.0 || rest.is_empty() {
                    return Expr::Const(if rest.is_empty() { c } else { 0.0 });
                }
                if c != 1.0 {
                    rest.insert(0, Expr::Const(c));
                }
                if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    Expr::Prod(rest)
                }
            }
            Expr::Pow(e, p) => match e.substitute(fixed) {
                Expr::Const(k) => Expr::Const(k.powi(*p as i32)),
                other => Expr::Pow(Box::new(other), *p),
            },
            Expr::Sin(e) => match e.substitute(fixed) {
                Expr::Const(k) => Expr::Const(k.sin()),
                other => Expr::Sin(Box::new(other)),
            },
            Expr::Cos(e) => match e.substitute(fixed) {
                Expr::Const(k) => Expr::Const(k.cos()),
                other => Expr::Cos(Box::new(other)),
            },
        }
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match self {
            Expr::Sum(mut v) => {
                v.push(rhs);
                Expr::Sum(v)
            }
            lhs => Expr::Sum(vec![lhs, rhs]),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + (-rhs)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.scale(-1.0)
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match self {
            Expr::Prod(mut v) => {
                v.push(rhs);
                Expr::Prod(v)
            }
            lhs => Expr::Prod(vec![lhs, rhs]),
        }
    }
}

/// Second-order forward jet over `n` local variables. `h` is row-major n x n.
#[derive(Clone, Debug)]
pub struct Jet {
    pub v: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl Jet {
    fn constant(v: f64, n: usize) -> Jet {
        Jet { v, g: vec![0.0; n], h: vec![0.0; n * n] }
    }

    fn variable(v: f64, k: usize, n: usize) -> Jet {
        let mut j = Jet::constant(v, n);
        j.g[k] = 1.0;
        j
    }

    fn add_assign(&mut self, o: &Jet) {
        self.v += o.v;
        self.g.iter_mut().zip(&o.g).for_each(|(a, b)| *a += b);
        self.h.iter_mut().zip(&o.h).for_each(|(a, b)| *a += b);
    }

    fn mul(&self, o: &Jet) -> Jet {
        let n = self.g.len();
        let mut r = Jet::constant(self.v * o.v, n);
        for i in 0..n {
            r.g[i] = self.g[i] * o.v + o.g[i] * self.v;
        }
        for i in 0..n {
            for j in 0..n {
                r.h[i * n + j] = self.h[i * n + j] * o.v
                    + o.h[i * n + j] * self.v
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
            }
        }
        r
    }

    fn chain(&self, f: f64, d1: f64, d2: f64) -> Jet {
        let n = self.g.len();
        let mut r = Jet::constant(f, n);
        for i in 0..n {
            r.g[i] = d1 * self.g[i];
        }
        for i in 0..n {
            for j in 0..n {
                r.h[i * n + j] = d1 * self.h[i * n + j] + d2 * self.g[i] * self.g[j];
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_matches_finite_differences() {
        // x0 * x1^2 * cos(x0 - x2)
        let e = Expr::var(0) * Expr::var(1).powi(2) * (Expr::var(0) - Expr::var(2)).cos();
        let x = [0.7, 1.3, -0.4];
        let local = e.vars();
        let j = e.jet(&x, &local);
        assert!((j.v - e.eval(&x)).abs() < 1e-14);
        let h = 1e-6;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (e.eval(&xp) - e.eval(&xm)) / (2.0 * h);
            assert!((fd - j.g[k]).abs() < 1e-8, "grad {k}");
            let gp = e.jet(&xp, &local).g;
            let gm = e.jet(&xm, &local).g;
            for l in 0..3 {
                let fd2 = (gp[l] - gm[l]) / (2.0 * h);
                assert!((fd2 - j.h[k * 3 + l]).abs() < 1e-6, "hess {k} {l}");
            }
        }
    }

    #[test]
    fn substitution_folds_zero_products() {
        let e = Expr::var(0) - Expr::var(3) * Expr::var(1).sin();
        let s = e.substitute(&|i| if i == 3 { Some(0.0) } else { None });
        assert_eq!(s.vars(), vec![0]);
    }
}
