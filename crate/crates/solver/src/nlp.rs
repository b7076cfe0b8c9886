//! Primal-dual interior-point method for smooth models (dense KKT solves).
//!
//! min f(x)  s.t.  g(x) = 0,  h(x) <= 0, with slacks z: h(x) + z = 0, z >= 0.

use crate::model::MathModel;
use crate::options::SolverOptions;
use crate::presolve::{presolve, Reduced};
use crate::result::Status;
use nalgebra::{DMatrix, DVector};
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct NlpOutcome {
    pub status: Status,
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Largest equality or inequality violation at the returned point.
    pub max_violation: f64,
    pub message: String,
}

enum Kind {
    Lin(Vec<(usize, f64)>),
    Nl(usize),
}

struct Row {
    kind: Kind,
    sign: f64,
    rhs: f64,
}

struct Problem<'a> {
    red: &'a Reduced,
    /// Reduced positions of each nonlinear row's local variables (None if fixed).
    nl_pos: Vec<Vec<Option<usize>>>,
    eq: Vec<Row>,
    iq: Vec<Row>,
    cost: Vec<f64>,
    cost_scale: f64,
}

struct Eval {
    f: f64,
    g: DVector<f64>,
    jg: DMatrix<f64>,
    h: DVector<f64>,
    jh: DMatrix<f64>,
}

impl<'a> Problem<'a> {
    fn new(model: &MathModel, red: &'a Reduced) -> Self {
        let mut eq = Vec::new();
        let mut iq = Vec::new();
        for r in &red.rows {
            let lo = r.lo;
            let hi = r.hi;
            let coefs = r.coefs.clone();
            add_rows(&mut eq, &mut iq, lo, hi, || Kind::Lin(coefs.clone()));
        }
        for (k, r) in red.nl.iter().enumerate() {
            add_rows(&mut eq, &mut iq, r.lo, r.hi, || Kind::Nl(k));
        }
        for (k, (&l, &u)) in red.lb.iter().zip(&red.ub).enumerate() {
            if u.is_finite() {
                iq.push(Row { kind: Kind::Lin(vec![(k, 1.0)]), sign: 1.0, rhs: u });
            }
            if l.is_finite() {
                iq.push(Row { kind: Kind::Lin(vec![(k, 1.0)]), sign: -1.0, rhs: l });
            }
        }
        let n = red.free.len();
        let mut cost = vec![0.0; n];
        for &(v, c) in &model.objective.terms {
            if let Some(k) = red.pos[v] {
                cost[k] += c;
            }
        }
        let cmax = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let cost_scale = if cmax > 1.0 { 1.0 / cmax } else { 1.0 };
        let nl_pos = red.nl.iter().map(|r| r.local.iter().map(|&v| red.pos[v]).collect()).collect();
        Problem { red, nl_pos, eq, iq, cost, cost_scale }
    }

    fn full(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut full = self.red.base.clone();
        for (k, &i) in self.red.free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }

    fn eval(&self, x: &DVector<f64>) -> Eval {
        let n = x.len();
        let full = self.full(x);
        let jets: Vec<crate::expr::Jet> = self.red.nl.iter().map(|r| r.expr.jet(&full, &r.local)).collect();
        let f = self.cost_scale * self.cost.iter().zip(x.iter()).map(|(c, v)| c * v).sum::<f64>();
        let fill = |rows: &Vec<Row>| {
            let mut v = DVector::zeros(rows.len());
            let mut j = DMatrix::zeros(rows.len(), n);
            for (r, row) in rows.iter().enumerate() {
                match &row.kind {
                    Kind::Lin(coefs) => {
                        let a: f64 = coefs.iter().map(|&(k, c)| c * x[k]).sum();
                        v[r] = row.sign * (a - row.rhs);
                        for &(k, c) in coefs {
                            j[(r, k)] += row.sign * c;
                        }
                    }
                    Kind::Nl(q) => {
                        v[r] = row.sign * (jets[*q].v - row.rhs);
                        for (l, p) in self.nl_pos[*q].iter().enumerate() {
                            if let Some(k) = p {
                                j[(r, *k)] += row.sign * jets[*q].g[l];
                            }
                        }
                    }
                }
            }
            (v, j)
        };
        let (g, jg) = fill(&self.eq);
        let (h, jh) = fill(&self.iq);
        Eval { f, g, jg, h, jh }
    }

    /// Hessian of sum(lam_i g_i) + sum(mu_j h_j); the objective is linear.
    fn hess(&self, x: &DVector<f64>, lam: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let full = self.full(x);
        let mut weight = vec![0.0; self.red.nl.len()];
        for (rows, m) in [(&self.eq, lam), (&self.iq, mu)] {
            for (r, row) in rows.iter().enumerate() {
                if let Kind::Nl(q) = row.kind {
                    weight[q] += row.sign * m[r];
                }
            }
        }
        let mut hm = DMatrix::zeros(n, n);
        for (q, r) in self.red.nl.iter().enumerate() {
            if weight[q] == 0.0 {
                continue;
            }
            let jet = r.expr.jet(&full, &r.local);
            let m = r.local.len();
            for a in 0..m {
                let Some(ka) = self.nl_pos[q][a] else { continue };
                for b in 0..m {
                    let Some(kb) = self.nl_pos[q][b] else { continue };
                    hm[(ka, kb)] += weight[q] * jet.h[a * m + b];
                }
            }
        }
        hm
    }
}

fn add_rows(eq: &mut Vec<Row>, iq: &mut Vec<Row>, lo: f64, hi: f64, kind: impl Fn() -> Kind) {
    if (hi - lo).abs() <= 1e-12 {
        eq.push(Row { kind: kind(), sign: 1.0, rhs: 0.5 * (lo + hi) });
    } else {
        if hi.is_finite() {
            iq.push(Row { kind: kind(), sign: 1.0, rhs: hi });
        }
        if lo.is_finite() {
            iq.push(Row { kind: kind(), sign: -1.0, rhs: lo });
        }
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Solve the continuous model over the given bounds from `x0`.
pub fn solve_nlp(model: &MathModel, lb: &[f64], ub: &[f64], x0: &[f64], opts: &SolverOptions, deadline: Option<Instant>) -> NlpOutcome {
    let red = match presolve(model, lb, ub, opts.feasibility_tol) {
        Ok(r) => r,
        Err(e) => {
            return NlpOutcome {
                status: Status::Infeasible,
                objective: f64::NAN,
                x: Vec::new(),
                iterations: 0,
                max_violation: f64::INFINITY,
                message: format!("presolve: {} cannot hold", e.0),
            }
        }
    };
    let p = Problem::new(model, &red);
    let n = red.free.len();
    let obj_const = model.objective.constant
        + model.objective.terms.iter().filter(|t| red.pos[t.0].is_none()).map(|&(v, c)| c * red.base[v]).sum::<f64>();
    let finish = |x: &DVector<f64>, status: Status, it: usize, viol: f64, msg: String| {
        let full = p.full(x);
        let obj = obj_const + p.cost.iter().zip(x.iter()).map(|(c, v)| c * v).sum::<f64>();
        NlpOutcome { status, objective: obj, x: full, iterations: it, max_violation: viol, message: msg }
    };
    let mut x = DVector::from_iterator(
        n,
        red.free.iter().enumerate().map(|(k, &i)| {
            let (l, u) = (red.lb[k], red.ub[k]);
            let v = x0[i];
            if l.is_finite() && u.is_finite() {
                let m = 1e-3 * (u - l);
                v.clamp(l + m, u - m)
            } else {
                v.max(l).min(u)
            }
        }),
    );
    if n == 0 {
        let e = p.eval(&x);
        let viol = inf_norm(&e.g).max(e.h.iter().fold(0.0f64, |a, v| a.max(*v)));
        let status = if viol <= opts.feasibility_tol { Status::Optimal } else { Status::Infeasible };
        return finish(&x, status, 0, viol, String::new());
    }

    let feastol = 1e-9f64.min(opts.feasibility_tol);
    let gradtol = 1e-7;
    let comptol = 1e-8;
    let costtol = 1e-10;
    let xi = 0.99995;
    let sigma = 0.1;
    let z0 = 1.0;

    let mut e = p.eval(&x);
    let neq = e.g.len();
    let niq = e.h.len();
    let mut gamma = 1.0;
    let mut lam = DVector::zeros(neq);
    let mut z = DVector::from_element(niq, z0);
    let mut mu = DVector::from_element(niq, z0);
    for k in 0..niq {
        if e.h[k] < -z0 {
            z[k] = -e.h[k];
        }
        if gamma / z[k] > z0 {
            mu[k] = gamma / z[k];
        }
    }
    let mut cost = p.cost_scale * p.cost.iter().zip(x.iter()).map(|(c, v)| c * v).sum::<f64>();
    let cvec = DVector::from_iterator(n, p.cost.iter().map(|c| c * p.cost_scale));
    let mut last_viol = f64::INFINITY;
    let mut delta = 0.0;
    for it in 0..opts.nlp_max_iter {
        if let Some(d) = deadline {
            if Instant::now() >= d {
                return finish(&x, Status::Limit, it, last_viol, "time limit".into());
            }
        }
        let lxx = p.hess(&x, &lam, &mu);
        let lx = &cvec + e.jg.transpose() * &lam + e.jh.transpose() * &mu;
        // M = Lxx + Jh' diag(mu/z) Jh ; N = Lx + Jh' (mu .* h + gamma) ./ z
        let mut jh_scaled = e.jh.clone();
        let mut rhs_iq = DVector::zeros(niq);
        for k in 0..niq {
            let s = mu[k] / z[k];
            jh_scaled.row_mut(k).scale_mut(s);
            rhs_iq[k] = (mu[k] * e.h[k] + gamma) / z[k];
        }
        let mut m = &lxx + e.jh.transpose() * &jh_scaled;
        convexify(&mut m, &e.jg, &mut delta);
        let nvec = &lx + e.jh.transpose() * &rhs_iq;
        let dim = n + neq;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&m);
        kkt.view_mut((n, 0), (neq, n)).copy_from(&e.jg);
        kkt.view_mut((0, n), (n, neq)).copy_from(&e.jg.transpose());
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(-&nvec));
        rhs.rows_mut(n, neq).copy_from(&(-&e.g));
        let sol = match solve_kkt(kkt.clone(), &rhs) {
            Some(s) => s,
            None => {
                let mut reg = kkt;
                for i in 0..n {
                    reg[(i, i)] += 1e-8;
                }
                for i in n..dim {
                    reg[(i, i)] -= 1e-10;
                }
                match solve_kkt(reg, &rhs) {
                    Some(s) => s,
                    None => return finish(&x, Status::Limit, it, last_viol, "singular KKT system".into()),
                }
            }
        };
        let dx = sol.rows(0, n).into_owned();
        let dlam = sol.rows(n, neq).into_owned();
        let dz = -&e.h - &z - &e.jh * &dx;
        let mut dmu = DVector::zeros(niq);
        for k in 0..niq {
            dmu[k] = -mu[k] + (gamma - mu[k] * dz[k]) / z[k];
        }
        let mut alphap: f64 = 1.0;
        let mut alphad: f64 = 1.0;
        for k in 0..niq {
            if dz[k] < 0.0 {
                alphap = alphap.min(xi * z[k] / -dz[k]);
            }
            if dmu[k] < 0.0 {
                alphad = alphad.min(xi * mu[k] / -dmu[k]);
            }
        }
        x += alphap * &dx;
        z += alphap * &dz;
        lam += alphad * &dlam;
        mu += alphad * &dmu;
        if niq > 0 {
            gamma = sigma * z.dot(&mu) / niq as f64;
        }
        e = p.eval(&x);
        let f0 = cost;
        cost = e.f;
        if !x.iter().all(|v| v.is_finite()) || inf_norm(&x) > 1e10 {
            return finish(&x, Status::Limit, it + 1, f64::INFINITY, "NLP diverged".into());
        }
        let maxh = e.h.iter().fold(0.0f64, |a, v| a.max(*v));
        let viol = inf_norm(&e.g).max(maxh);
        last_viol = viol;
        let lx = &cvec + e.jg.transpose() * &lam + e.jh.transpose() * &mu;
        let xn = inf_norm(&x);
        let feascond = viol / (1.0 + xn);
        let gradcond = inf_norm(&lx) / (1.0 + inf_norm(&lam).max(inf_norm(&mu)));
        let compcond = z.dot(&mu) / (1.0 + xn);
        let costcond = (cost - f0).abs() / (1.0 + f0.abs());
        log::trace!("ipm it {it}: f={cost:.8} feas={feascond:.2e} grad={gradcond:.2e} comp={compcond:.2e}");
        if feascond < feastol && gradcond < gradtol && compcond < comptol && costcond < costtol {
            return finish(&x, Status::Optimal, it + 1, viol, String::new());
        }
    }
    // Accept a point that is feasible and nearly stationary.
    let status = if last_viol <= opts.feasibility_tol * 0.1 { Status::FeasibleGap } else { Status::Limit };
    finish(&x, status, opts.nlp_max_iter, last_viol, "iteration limit".into())
}

/// Inertia correction: shift the Hessian block until it is positive definite
/// on the null space of the equality Jacobian, tested by a Cholesky factor
/// of the augmented-Lagrangian matrix. Without it the iteration can settle
/// on maximizers.
fn convexify(m: &mut DMatrix<f64>, jg: &DMatrix<f64>, delta: &mut f64) {
    const RHO: f64 = 1e6;
    let n = m.nrows();
    let aug = &*m + jg.transpose() * jg * RHO;
    let pd = |d: f64| {
        let mut a = aug.clone();
        for i in 0..n {
            a[(i, i)] += d;
        }
        a.cholesky().is_some()
    };
    if pd(0.0) {
        *delta = 0.0;
        return;
    }
    let mut d = if *delta > 0.0 { (*delta / 3.0).max(1e-8) } else { 1e-4 };
    while !pd(d) && d < 1e10 {
        d *= 10.0;
    }
    *delta = d;
    for i in 0..n {
        m[(i, i)] += d;
    }
}

fn solve_kkt(m: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = m.lu();
    let s = lu.solve(rhs)?;
    if s.iter().all(|v| v.is_finite()) {
        Some(s)
    } else {
        None
    }
}
