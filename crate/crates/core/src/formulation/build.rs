use super::eval::FlowCoefs;
use super::{BinaryRef, ConverterVars, DcBranchVars, Flow, Formulation, FormulationError, OnOff, ProblemSpec, SwitchForm, SwitchVars, VarMap};
use crate::augment::{AugmentedNetwork, Exclusivity};
use crate::network::{flat_ac, BranchOrigin, FlatAc, Network, Side};
use gridtopo_solver::presolve::lin_to_expr;
use gridtopo_solver::{Expr, Family, LinExpr, MathModel};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

const INF: f64 = f64::INFINITY;

fn v(i: usize) -> Expr {
    Expr::var(i)
}

fn lin(terms: &[(usize, f64)]) -> LinExpr {
    let mut e = LinExpr::new();
    for &(i, c) in terms {
        e.add_term(i, c);
    }
    e
}

fn sum(a: &LinExpr, b: &LinExpr, sb: f64) -> LinExpr {
    let mut e = a.clone();
    e.add_expr(b, sb);
    e
}

fn combo(c: &[f64; 4], w: &[LinExpr; 4]) -> LinExpr {
    let mut e = LinExpr::new();
    for k in 0..4 {
        if c[k] != 0.0 {
            e.add_expr(&w[k], c[k]);
        }
    }
    e.compact()
}

fn times_z(z: OnOff, e: Expr) -> Expr {
    match z {
        OnOff::On => e,
        OnOff::Var(zi) => Expr::Prod(vec![v(zi), e]),
    }
}

struct Builder<'a> {
    net: &'a Network,
    spec: &'a ProblemSpec,
    form: Formulation,
    m: MathModel,
    flat: FlatAc,
    pbal: Vec<LinExpr>,
    qbal: Vec<LinExpr>,
    pnl: Vec<Vec<Expr>>,
    qnl: Vec<Vec<Expr>>,
    dbal: Vec<LinExpr>,
    dnl: Vec<Vec<Expr>>,
    bus_v: Vec<usize>,
    bus_va: Vec<Option<usize>>,
    dc_v: Vec<usize>,
    dc_index: BTreeMap<usize, usize>,
}

pub(super) fn build(aug: &AugmentedNetwork, spec: &ProblemSpec, form: Formulation) -> Result<(MathModel, VarMap), FormulationError> {
    let net = &aug.net;
    let flat = flat_ac(net);
    let nb = flat.buses.len();
    let nd = net.dc_buses.len();
    let mut b = Builder {
        net,
        spec,
        form,
        m: MathModel::new(format!("{}-{}-{}", net.name, spec.kind.name(), form.name())),
        flat,
        pbal: vec![LinExpr::new(); nb],
        qbal: vec![LinExpr::new(); nb],
        pnl: vec![Vec::new(); nb],
        qnl: vec![Vec::new(); nb],
        dbal: vec![LinExpr::new(); nd],
        dnl: vec![Vec::new(); nd],
        bus_v: Vec::new(),
        bus_va: Vec::new(),
        dc_v: Vec::new(),
        dc_index: net.dc_buses.iter().enumerate().map(|(k, d)| (d.id, k)).collect(),
    };

    // Binaries first, in a fixed element order shared by every formulation.
    let mut binaries = Vec::new();
    let ots = spec.kind.switches_elements();
    let mut line_z = BTreeMap::new();
    let mut dc_z = BTreeMap::new();
    let mut conv_z = BTreeMap::new();
    let mut sw_z = BTreeMap::new();
    for l in net.ac_branches.iter().filter(|l| l.in_service) {
        let z = if ots && l.switchable {
            let zi = b.m.binary(format!("z_line{}", l.id), format!("ac_branch:{}", l.id));
            binaries.push((BinaryRef::AcBranch(l.id), zi));
            OnOff::Var(zi)
        } else {
            OnOff::On
        };
        line_z.insert(l.id, z);
    }
    for d in net.dc_branches.iter().filter(|d| d.in_service) {
        let z = if ots && d.switchable {
            let zi = b.m.binary(format!("z_dcline{}", d.id), format!("dc_branch:{}", d.id));
            binaries.push((BinaryRef::DcBranch(d.id), zi));
            OnOff::Var(zi)
        } else {
            OnOff::On
        };
        dc_z.insert(d.id, z);
    }
    for c in net.converters.iter().filter(|c| c.in_service) {
        let z = if ots && c.switchable {
            let zi = b.m.binary(format!("z_conv{}", c.id), format!("converter:{}", c.id));
            binaries.push((BinaryRef::Converter(c.id), zi));
            OnOff::Var(zi)
        } else {
            OnOff::On
        };
        conv_z.insert(c.id, z);
    }
    for s in &net.switches {
        if spec.kind.splits() {
            let zi = b.m.binary(format!("z_sw{}", s.id), format!("switch:{}", s.id));
            binaries.push((BinaryRef::Switch(s.id), zi));
            sw_z.insert(s.id, OnOff::Var(zi));
        } else if s.closed {
            sw_z.insert(s.id, OnOff::On);
        }
    }

    b.buses();
    b.dc_buses();
    let (gen_p, gen_q) = b.generators()?;
    b.loads()?;
    let mut branch_z = Vec::new();
    let mut branch_flow = Vec::new();
    for k in 0..b.flat.branches.len() {
        let z = match b.flat.branches[k].origin {
            BranchOrigin::Line(id) => line_z[&id],
            _ => OnOff::On,
        };
        branch_flow.push(b.ac_branch(k, z));
        branch_z.push(z);
    }
    let mut dc_branch = Vec::new();
    for d in &net.dc_branches {
        dc_branch.push(dc_z.get(&d.id).map(|&z| b.dc_branch(d.id, z)));
    }
    let mut conv = Vec::new();
    for (k, c) in net.converters.iter().enumerate() {
        conv.push(conv_z.get(&c.id).map(|&z| b.converter(k, z)));
    }
    let mut switch = Vec::new();
    for (k, s) in net.switches.iter().enumerate() {
        switch.push(sw_z.get(&s.id).map(|&z| b.switch(k, z)));
    }
    if spec.kind.splits() {
        b.exclusivity(&sw_z);
        if spec.symmetry_cuts {
            b.symmetry(aug, &sw_z);
        }
    }
    b.balances();
    let mut obj = LinExpr::new();
    for (g, &p) in net.generators.iter().zip(&gen_p) {
        obj.add_term(p, g.c1);
        obj.constant += g.c0;
    }
    b.m.objective = obj;
    let map = VarMap {
        formulation: form,
        flat: b.flat,
        bus_v: b.bus_v,
        bus_va: b.bus_va,
        gen_p,
        gen_q,
        branch_z,
        branch_flow,
        dc_v: b.dc_v,
        dc_index: b.dc_index,
        dc_branch,
        conv,
        switch,
        binaries,
    };
    Ok((b.m, map))
}

impl Builder<'_> {
    /// Linear stand-in for vm^2 at a flat bus (SOC: w, LPAC: 1 + 2 phi).
    fn sq(&self, k: usize) -> LinExpr {
        match self.form {
            Formulation::Soc => LinExpr::var(self.bus_v[k]),
            _ => LinExpr::constant(1.0).term(self.bus_v[k], 2.0),
        }
    }

    fn dc_sq(&self, d: usize) -> LinExpr {
        match self.form {
            Formulation::Soc => LinExpr::var(self.dc_v[d]),
            _ => LinExpr::constant(1.0).term(self.dc_v[d], 2.0),
        }
    }

    fn buses(&mut self) {
        for k in 0..self.flat.buses.len() {
            let fb = self.flat.buses[k].clone();
            let tag = format!("ac_bus:{}", fb.id);
            let vi = match self.form {
                Formulation::Exact => self.m.continuous(format!("vm_{}", fb.id), fb.vmin, fb.vmax, tag.clone()),
                Formulation::Soc => self.m.continuous(format!("w_{}", fb.id), fb.vmin * fb.vmin, fb.vmax * fb.vmax, tag.clone()),
                Formulation::Lpac => self.m.continuous(format!("phi_{}", fb.id), fb.vmin - 1.0, fb.vmax - 1.0, tag.clone()),
            };
            self.bus_v.push(vi);
            let va = (self.form != Formulation::Soc).then(|| self.m.continuous(format!("va_{}", fb.id), fb.va_min, fb.va_max, tag));
            self.bus_va.push(va);
            if let (true, Some(a)) = (fb.reference, va) {
                self.m.linear(format!("ref_{}", fb.id), Family::Reference, LinExpr::var(a), 0.0, 0.0);
            }
            if fb.gs != 0.0 || fb.bs != 0.0 {
                match self.form {
                    Formulation::Exact => {
                        let v2 = v(vi).powi(2);
                        self.pnl[k].push(v2.clone().scale(fb.gs));
                        self.qnl[k].push(v2.scale(-fb.bs));
                    }
                    _ => {
                        let s = self.sq(k);
                        self.pbal[k].add_expr(&s, fb.gs);
                        self.qbal[k].add_expr(&s, -fb.bs);
                    }
                }
            }
        }
    }

    fn dc_buses(&mut self) {
        for (d, bus) in self.net.dc_buses.iter().enumerate() {
            let tag = format!("dc_bus:{}", bus.id);
            let vi = match self.form {
                Formulation::Exact => self.m.continuous(format!("vdc_{}", bus.id), bus.vmin, bus.vmax, tag),
                Formulation::Soc => self.m.continuous(format!("wdc_{}", bus.id), bus.vmin * bus.vmin, bus.vmax * bus.vmax, tag),
                Formulation::Lpac => self.m.continuous(format!("phidc_{}", bus.id), bus.vmin - 1.0, bus.vmax - 1.0, tag),
            };
            self.dc_v.push(vi);
            if bus.gs != 0.0 {
                match self.form {
                    Formulation::Exact => self.dnl[d].push(v(vi).powi(2).scale(bus.gs)),
                    _ => {
                        let s = self.dc_sq(d);
                        self.dbal[d].add_expr(&s, bus.gs);
                    }
                }
            }
        }
    }

    fn ac_pos(&self, bus: usize, what: &str) -> Result<usize, FormulationError> {
        self.flat.index.get(&bus).copied().ok_or_else(|| FormulationError::Dangling(what.to_string()))
    }

    fn generators(&mut self) -> Result<(Vec<usize>, Vec<usize>), FormulationError> {
        let (mut ps, mut qs) = (Vec::new(), Vec::new());
        for g in &self.net.generators {
            let k = self.ac_pos(g.bus, &format!("generator {}", g.id))?;
            let tag = format!("generator:{}", g.id);
            let p = self.m.continuous(format!("pg_{}", g.id), g.pmin, g.pmax, tag.clone());
            let q = self.m.continuous(format!("qg_{}", g.id), g.qmin, g.qmax, tag);
            self.pbal[k].add_term(p, -1.0);
            self.qbal[k].add_term(q, -1.0);
            ps.push(p);
            qs.push(q);
        }
        Ok((ps, qs))
    }

    fn loads(&mut self) -> Result<(), FormulationError> {
        for l in &self.net.loads {
            match l.side {
                Side::Ac => {
                    let k = self.ac_pos(l.bus, &format!("load {}", l.id))?;
                    self.pbal[k].constant += l.p;
                    self.qbal[k].constant += l.q;
                }
                Side::Dc => {
                    let d = *self.dc_index.get(&l.bus).ok_or_else(|| FormulationError::Dangling(format!("load {}", l.id)))?;
                    self.dbal[d].constant += l.p;
                }
            }
        }
        Ok(())
    }

    fn branch_name(&self, k: usize) -> String {
        match self.flat.branches[k].origin {
            BranchOrigin::Line(id) => format!("line{id}"),
            BranchOrigin::Transformer(id) => format!("xf{id}"),
            BranchOrigin::Reactor(id) => format!("rc{id}"),
        }
    }

    /// Polygon with `n` facets circumscribing the circle of radius `r`.
    fn polygon(&mut self, name: &str, family: Family, p: &LinExpr, q: &LinExpr, r: &LinExpr) {
        let n = self.spec.polygon_sides;
        for s in 0..n {
            let a = 2.0 * PI * s as f64 / n as f64;
            let mut e = LinExpr::new();
            e.add_expr(p, a.cos());
            e.add_expr(q, a.sin());
            e.add_expr(r, -1.0);
            self.m.linear(format!("{name}_{s}"), family, e.compact(), -INF, 0.0);
        }
    }

    /// |a - b| <= big (1 - z), or a = b when always on.
    fn on_off_equal(&mut self, name: &str, family: Family, a: &LinExpr, b: &LinExpr, z: OnOff, big: f64) {
        let d = sum(a, b, -1.0);
        match z {
            OnOff::On => self.m.linear(name, family, d, 0.0, 0.0),
            OnOff::Var(zi) if self.form == Formulation::Exact && self.spec.switch_form == SwitchForm::Bilinear => {
                self.m.nonlinear(name, family, Expr::Prod(vec![Expr::var(zi), lin_to_expr(&d)]), 0.0, 0.0);
            }
            OnOff::Var(zi) => {
                self.m.linear(format!("{name}_u"), family, d.clone().term(zi, big), -INF, big);
                self.m.linear(format!("{name}_l"), family, d.term(zi, -big), -big, INF);
            }
        }
    }

    /// lo z <= x <= hi z (plain bounds when always on).
    fn scaled_bounds(&mut self, name: &str, family: Family, x: usize, lo: f64, hi: f64, z: OnOff) {
        match z {
            OnOff::On => {
                let var = &mut self.m.vars[x];
                var.lb = var.lb.max(lo);
                var.ub = var.ub.min(hi);
            }
            OnOff::Var(zi) => {
                if hi.is_finite() {
                    self.m.linear(format!("{name}_ub"), family, lin(&[(x, 1.0), (zi, -hi)]), -INF, 0.0);
                }
                if lo.is_finite() {
                    self.m.linear(format!("{name}_lb"), family, lin(&[(x, 1.0), (zi, -lo)]), 0.0, INF);
                }
            }
        }
    }

    /// On/off copy of a bus quantity: equals `x` when on, zero when off.
    fn copy(&mut self, name: &str, x: usize, z: OnOff, big: f64) -> LinExpr {
        match z {
            OnOff::On => LinExpr::var(x),
            OnOff::Var(_) => {
                let (lo, hi) = (self.m.vars[x].lb, self.m.vars[x].ub);
                let tag = self.m.vars[x].tag.clone();
                let c = self.m.continuous(name, lo.min(0.0), hi.max(0.0), tag);
                self.scaled_bounds(name, Family::AcFlow, c, lo, hi, z);
                self.on_off_equal(name, Family::AcFlow, &LinExpr::var(c), &LinExpr::var(x), z, big);
                LinExpr::var(c)
            }
        }
    }

    fn ac_branch(&mut self, k: usize, z: OnOff) -> [Flow; 4] {
        let br = self.flat.branches[k].clone();
        let (i, j) = (br.from, br.to);
        let c = FlowCoefs::of(&br).0;
        let name = self.branch_name(k);
        let tag = format!("ac_branch:{name}");
        let m_theta = self.spec.big_m.theta;
        let flows: [Flow; 4] = match self.form {
            Formulation::Exact => {
                let (vi, vj) = (self.bus_v[i], self.bus_v[j]);
                let (ai, aj) = (self.bus_va[i].unwrap(), self.bus_va[j].unwrap());
                let d = Expr::Sum(vec![v(ai), v(aj).scale(-1.0)]);
                let vv = Expr::Prod(vec![v(vi), v(vj)]);
                let w = [
                    v(vi).powi(2),
                    v(vj).powi(2),
                    Expr::Prod(vec![vv.clone(), d.clone().cos()]),
                    Expr::Prod(vec![vv, d.sin()]),
                ];
                let f: Vec<Expr> = (0..4)
                    .map(|r| {
                        let parts = (0..4).filter(|&m| c[r][m] != 0.0).map(|m| w[m].clone().scale(c[r][m])).collect();
                        times_z(z, Expr::Sum(parts))
                    })
                    .collect();
                let td = lin(&[(ai, 1.0), (aj, -1.0)]);
                match z {
                    OnOff::On => self.m.linear(format!("angle_{name}"), Family::AngleDiff, td, br.angmin, br.angmax),
                    OnOff::Var(zi) => {
                        let up = td.clone().term(zi, m_theta - br.angmax);
                        self.m.linear(format!("angle_{name}_u"), Family::AngleDiff, up, -INF, m_theta);
                        let dn = td.term(zi, -m_theta - br.angmin);
                        self.m.linear(format!("angle_{name}_l"), Family::AngleDiff, dn, -m_theta, INF);
                    }
                }
                if let Some(s) = br.rate {
                    for (side, (p, q)) in [("fr", (&f[0], &f[1])), ("to", (&f[2], &f[3]))] {
                        // The flows already carry the factor z, so p^2 + q^2 <= S^2 is the on/off form.
                        let e = Expr::Sum(vec![p.clone().powi(2), q.clone().powi(2)]);
                        self.m.nonlinear(format!("thermal_{name}_{side}"), Family::Thermal, e, -INF, s * s);
                    }
                }
                [Flow::Nl(f[0].clone()), Flow::Nl(f[1].clone()), Flow::Nl(f[2].clone()), Flow::Nl(f[3].clone())]
            }
            Formulation::Soc => {
                let (fi, fj) = (self.flat.buses[i].clone(), self.flat.buses[j].clone());
                let hi = fi.vmax * fj.vmax;
                let amax = br.angmin.abs().max(br.angmax.abs());
                let wr_lo = if amax <= FRAC_PI_2 { fi.vmin * fj.vmin * amax.cos() } else { -hi };
                let wi_hi = hi * amax.min(FRAC_PI_2).sin();
                let wr = self.m.continuous(format!("wr_{name}"), wr_lo.min(0.0).min(wr_lo), hi, tag.clone());
                let wi = self.m.continuous(format!("wi_{name}"), -wi_hi, wi_hi, tag.clone());
                self.scaled_bounds(&format!("wr_{name}"), Family::AcFlow, wr, wr_lo, hi, z);
                self.scaled_bounds(&format!("wi_{name}"), Family::AcFlow, wi, -wi_hi, wi_hi, z);
                let big = self.spec.big_m.vm.max(fi.vmax * fi.vmax).max(fj.vmax * fj.vmax);
                let wf = self.copy(&format!("wfr_{name}"), self.bus_v[i], z, big);
                let wt = self.copy(&format!("wto_{name}"), self.bus_v[j], z, big);
                self.m.cone(
                    format!("soc_{name}"),
                    Family::AcFlow,
                    vec![LinExpr::new().term(wr, 2.0), LinExpr::new().term(wi, 2.0), sum(&wf, &wt, -1.0)],
                    sum(&wf, &wt, 1.0),
                );
                if br.angmax < FRAC_PI_2 {
                    self.m.linear(format!("tan_{name}_u"), Family::AngleDiff, lin(&[(wi, 1.0), (wr, -br.angmax.tan())]), -INF, 0.0);
                }
                if br.angmin > -FRAC_PI_2 {
                    self.m.linear(format!("tan_{name}_l"), Family::AngleDiff, lin(&[(wi, 1.0), (wr, -br.angmin.tan())]), 0.0, INF);
                }
                let w = [wf, wt, LinExpr::var(wr), LinExpr::var(wi)];
                let f: Vec<LinExpr> = (0..4).map(|r| combo(&c[r], &w)).collect();
                if let Some(s) = br.rate {
                    self.m.cone(format!("thermal_{name}_fr"), Family::Thermal, vec![f[0].clone(), f[1].clone()], z.lin(s));
                    self.m.cone(format!("thermal_{name}_to"), Family::Thermal, vec![f[2].clone(), f[3].clone()], z.lin(s));
                }
                [Flow::Lin(f[0].clone()), Flow::Lin(f[1].clone()), Flow::Lin(f[2].clone()), Flow::Lin(f[3].clone())]
            }
            Formulation::Lpac => {
                let (ai, aj) = (self.bus_va[i].unwrap(), self.bus_va[j].unwrap());
                let dtheta = lin(&[(ai, 1.0), (aj, -1.0)]);
                let td = match z {
                    OnOff::On => {
                        self.m.linear(format!("angle_{name}"), Family::AngleDiff, dtheta.clone(), br.angmin, br.angmax);
                        dtheta
                    }
                    OnOff::Var(_) => {
                        let t = self.m.continuous(format!("td_{name}"), br.angmin.min(0.0), br.angmax.max(0.0), tag.clone());
                        self.scaled_bounds(&format!("td_{name}"), Family::AngleDiff, t, br.angmin, br.angmax, z);
                        self.on_off_equal(&format!("td_{name}"), Family::AngleDiff, &LinExpr::var(t), &dtheta, z, m_theta);
                        LinExpr::var(t)
                    }
                };
                let big = self.spec.big_m.vm;
                let pf = self.copy(&format!("phifr_{name}"), self.bus_v[i], z, big);
                let pt = self.copy(&format!("phito_{name}"), self.bus_v[j], z, big);
                let window = self.spec.lpac_window.unwrap_or(br.angmin.abs().max(br.angmax.abs())).clamp(1e-3, PI);
                let kappa = (1.0 - window.cos()) / (window * window);
                let cs = self.m.continuous(format!("cs_{name}"), window.cos().min(0.0), 1.0, tag.clone());
                self.scaled_bounds(&format!("cs_{name}"), Family::AcFlow, cs, window.cos(), 1.0, z);
                let zl = z.lin(1.0);
                // kappa td^2 <= z - cs as a rotated cone.
                let mut rhs = zl.clone();
                rhs.add_expr(&zl, 1.0);
                rhs.add_term(cs, -1.0);
                let mut scaled_td = LinExpr::new();
                scaled_td.add_expr(&td, 2.0 * kappa.sqrt());
                self.m.cone(format!("cos_{name}"), Family::AcFlow, vec![scaled_td, LinExpr::new().term(cs, -1.0)], rhs);
                let n = self.spec.lpac_segments;
                for s in 0..=n {
                    if n == 0 {
                        break;
                    }
                    let a = -window + 2.0 * window * s as f64 / n as f64;
                    let mut e = LinExpr::var(cs);
                    e.add_expr(&td, 2.0 * kappa * a);
                    e.add_expr(&zl, -(1.0 + kappa * a * a));
                    self.m.linear(format!("cos_{name}_{s}"), Family::AcFlow, e.compact(), -INF, 0.0);
                }
                let wi = {
                    let mut e = zl.clone();
                    e.add_expr(&pf, 2.0);
                    e
                };
                let wj = {
                    let mut e = zl.clone();
                    e.add_expr(&pt, 2.0);
                    e
                };
                let wr = sum(&sum(&LinExpr::var(cs), &pf, 1.0), &pt, 1.0);
                let w = [wi, wj, wr, td];
                let f: Vec<LinExpr> = (0..4).map(|r| combo(&c[r], &w)).collect();
                if let Some(s) = br.rate {
                    let r = z.lin(s);
                    self.polygon(&format!("thermal_{name}_fr"), Family::Thermal, &f[0], &f[1], &r);
                    self.polygon(&format!("thermal_{name}_to"), Family::Thermal, &f[2], &f[3], &r);
                }
                [Flow::Lin(f[0].clone()), Flow::Lin(f[1].clone()), Flow::Lin(f[2].clone()), Flow::Lin(f[3].clone())]
            }
        };
        for (r, bus, bal) in [(0, i, 0), (1, i, 1), (2, j, 0), (3, j, 1)] {
            match &flows[r] {
                Flow::Lin(e) => {
                    if bal == 0 {
                        self.pbal[bus].add_expr(e, 1.0)
                    } else {
                        self.qbal[bus].add_expr(e, 1.0)
                    }
                }
                Flow::Nl(e) => {
                    if bal == 0 {
                        self.pnl[bus].push(e.clone())
                    } else {
                        self.qnl[bus].push(e.clone())
                    }
                }
            }
        }
        flows
    }

    fn dc_branch(&mut self, id: usize, z: OnOff) -> DcBranchVars {
        let br = self.net.dc_branches.iter().find(|d| d.id == id).unwrap().clone();
        let (e, f) = (self.dc_index[&br.from], self.dc_index[&br.to]);
        let pg = f64::from(br.poles) * br.conductance();
        let name = format!("dcline{id}");
        let tag = format!("dc_branch:{id}");
        let (p_from, p_to) = match self.form {
            Formulation::Exact => {
                let (ue, uf) = (self.dc_v[e], self.dc_v[f]);
                let uu = Expr::Prod(vec![v(ue), v(uf)]);
                let fe = times_z(z, Expr::Sum(vec![v(ue).powi(2).scale(pg), uu.clone().scale(-pg)]));
                let ff = times_z(z, Expr::Sum(vec![v(uf).powi(2).scale(pg), uu.scale(-pg)]));
                if let Some(s) = br.rate {
                    self.m.nonlinear(format!("rate_{name}_fr"), Family::Thermal, fe.clone(), -s, s);
                    self.m.nonlinear(format!("rate_{name}_to"), Family::Thermal, ff.clone(), -s, s);
                }
                self.dnl[e].push(fe.clone());
                self.dnl[f].push(ff.clone());
                (Flow::Nl(fe), Flow::Nl(ff))
            }
            Formulation::Soc => {
                let (be, bf) = (self.net.dc_buses[e].clone(), self.net.dc_buses[f].clone());
                let (lo, hi) = (be.vmin * bf.vmin, be.vmax * bf.vmax);
                let wef = self.m.continuous(format!("wdc_{name}"), lo.min(0.0), hi, tag);
                self.scaled_bounds(&format!("wdc_{name}"), Family::DcFlow, wef, lo, hi, z);
                let big = self.spec.big_m.dc.max(be.vmax * be.vmax).max(bf.vmax * bf.vmax);
                let we = self.copy(&format!("wdcfr_{name}"), self.dc_v[e], z, big);
                let wf = self.copy(&format!("wdcto_{name}"), self.dc_v[f], z, big);
                self.m.cone(format!("soc_{name}"), Family::DcFlow, vec![LinExpr::new().term(wef, 2.0), sum(&we, &wf, -1.0)], sum(&we, &wf, 1.0));
                let mut fe = LinExpr::new();
                fe.add_expr(&we, pg);
                fe.add_term(wef, -pg);
                let mut ff = LinExpr::new();
                ff.add_expr(&wf, pg);
                ff.add_term(wef, -pg);
                if let Some(s) = br.rate {
                    for (side, fl) in [("fr", &fe), ("to", &ff)] {
                        self.m.linear(format!("rate_{name}_{side}_u"), Family::Thermal, sum(fl, &z.lin(s), -1.0), -INF, 0.0);
                        self.m.linear(format!("rate_{name}_{side}_l"), Family::Thermal, sum(fl, &z.lin(s), 1.0), 0.0, INF);
                    }
                }
                self.dbal[e].add_expr(&fe, 1.0);
                self.dbal[f].add_expr(&ff, 1.0);
                (Flow::Lin(fe.compact()), Flow::Lin(ff.compact()))
            }
            Formulation::Lpac => {
                let dphi = lin(&[(self.dc_v[e], pg), (self.dc_v[f], -pg)]);
                let s = br.rate.unwrap_or(pg * self.spec.big_m.dc);
                let fe = match z {
                    OnOff::On => {
                        if br.rate.is_some() {
                            self.m.linear(format!("rate_{name}"), Family::Thermal, dphi.clone(), -s, s);
                        }
                        dphi
                    }
                    OnOff::Var(_) => {
                        let p = self.m.continuous(format!("pdc_{name}"), -s, s, tag);
                        self.scaled_bounds(&format!("rate_{name}"), Family::Thermal, p, -s, s, z);
                        self.on_off_equal(&format!("flow_{name}"), Family::DcFlow, &LinExpr::var(p), &dphi, z, pg * self.spec.big_m.dc);
                        LinExpr::var(p)
                    }
                };
                let mut ff = LinExpr::new();
                ff.add_expr(&fe, -1.0);
                self.dbal[e].add_expr(&fe, 1.0);
                self.dbal[f].add_expr(&ff, 1.0);
                (Flow::Lin(fe), Flow::Lin(ff))
            }
        };
        DcBranchVars { z, p_from, p_to }
    }

    fn converter(&mut self, k: usize, z: OnOff) -> ConverterVars {
        let c = self.net.converters[k].clone();
        let cb = self.flat.converter_bus[k];
        let d = self.dc_index[&c.dc_bus];
        let name = format!("conv{}", c.id);
        let tag = format!("converter:{}", c.id);
        let var = |m: &mut MathModel, n: &str, lo: f64, hi: f64| m.continuous(format!("{n}_{name}"), lo.min(0.0), hi.max(0.0), tag.clone());
        let pc = var(&mut self.m, "pc", c.pac_min, c.pac_max);
        let qc = var(&mut self.m, "qc", c.qac_min, c.qac_max);
        let pd = var(&mut self.m, "pd", c.pdc_min, c.pdc_max);
        let i = var(&mut self.m, "i", 0.0, c.i_max);
        self.scaled_bounds(&format!("pc_{name}"), Family::ConverterCoupling, pc, c.pac_min, c.pac_max, z);
        self.scaled_bounds(&format!("qc_{name}"), Family::ConverterCoupling, qc, c.qac_min, c.qac_max, z);
        self.scaled_bounds(&format!("pd_{name}"), Family::ConverterCoupling, pd, c.pdc_min, c.pdc_max, z);
        self.scaled_bounds(&format!("i_{name}"), Family::ConverterCoupling, i, 0.0, c.i_max, z);
        self.pbal[cb].add_term(pc, 1.0);
        self.qbal[cb].add_term(qc, 1.0);
        self.dbal[d].add_term(pd, 1.0);
        let mut loss = lin(&[(pc, 1.0), (pd, 1.0), (i, -c.loss_b)]);
        loss.add_expr(&z.lin(c.loss_a), -1.0);
        let isq = match self.form {
            Formulation::Exact => {
                let e = Expr::Sum(vec![lin_to_expr(&loss), v(i).powi(2).scale(-c.loss_c)]);
                self.m.nonlinear(format!("loss_{name}"), Family::ConverterLoss, e, 0.0, 0.0);
                let s = Expr::Sum(vec![
                    v(pc).powi(2),
                    v(qc).powi(2),
                    Expr::Prod(vec![v(self.bus_v[cb]).powi(2), v(i).powi(2)]).scale(-1.0),
                ]);
                self.m.nonlinear(format!("coupling_{name}"), Family::ConverterCoupling, s, 0.0, 0.0);
                None
            }
            Formulation::Soc | Formulation::Lpac => {
                let isq = self.m.continuous(format!("isq_{name}"), 0.0, c.i_max * c.i_max, tag.clone());
                loss.add_term(isq, -c.loss_c);
                self.m.linear(format!("loss_{name}"), Family::ConverterLoss, loss, 0.0, 0.0);
                self.m.cone(
                    format!("isq_{name}"),
                    Family::ConverterCoupling,
                    vec![LinExpr::new().term(i, 2.0), LinExpr::constant(-1.0).term(isq, 1.0)],
                    LinExpr::constant(1.0).term(isq, 1.0),
                );
                self.m.linear(format!("isq_{name}_ub"), Family::ConverterCoupling, lin(&[(isq, 1.0), (i, -c.i_max)]), -INF, 0.0);
                if self.form == Formulation::Soc {
                    let w = LinExpr::var(self.bus_v[cb]);
                    self.m.cone(
                        format!("coupling_{name}"),
                        Family::ConverterCoupling,
                        vec![LinExpr::new().term(pc, 2.0), LinExpr::new().term(qc, 2.0), sum(&w, &LinExpr::var(isq), -1.0)],
                        sum(&w, &LinExpr::var(isq), 1.0),
                    );
                } else {
                    self.polygon(&format!("coupling_{name}"), Family::ConverterCoupling, &LinExpr::var(pc), &LinExpr::var(qc), &LinExpr::var(i));
                }
                Some(isq)
            }
        };
        ConverterVars { z, pc, qc, pd, i, isq }
    }

    fn switch(&mut self, k: usize, z: OnOff) -> SwitchVars {
        let s = self.net.switches[k].clone();
        let name = format!("sw{}", s.id);
        let tag = format!("switch:{}", s.id);
        let r = s.rating;
        let p = self.m.continuous(format!("p_{name}"), -r, r, tag.clone());
        self.scaled_bounds(&format!("p_{name}"), Family::SwitchFlowBound, p, -r, r, z);
        match s.kind.side() {
            Side::Ac => {
                let (f, t) = (self.flat.index[&s.from], self.flat.index[&s.to]);
                let q = self.m.continuous(format!("q_{name}"), -r, r, tag);
                self.scaled_bounds(&format!("q_{name}"), Family::SwitchFlowBound, q, -r, r, z);
                self.pbal[f].add_term(p, 1.0);
                self.pbal[t].add_term(p, -1.0);
                self.qbal[f].add_term(q, 1.0);
                self.qbal[t].add_term(q, -1.0);
                match self.form {
                    Formulation::Exact => {
                        let mut parts = vec![v(p).powi(2), v(q).powi(2)];
                        let hi = match z {
                            OnOff::On => r * r,
                            OnOff::Var(zi) => {
                                parts.push(v(zi).scale(-r * r));
                                0.0
                            }
                        };
                        self.m.nonlinear(format!("rate_{name}"), Family::SwitchFlowBound, Expr::Sum(parts), -INF, hi);
                    }
                    Formulation::Soc => self.m.cone(format!("rate_{name}"), Family::SwitchFlowBound, vec![LinExpr::var(p), LinExpr::var(q)], z.lin(r)),
                    Formulation::Lpac => self.polygon(&format!("rate_{name}"), Family::SwitchFlowBound, &LinExpr::var(p), &LinExpr::var(q), &z.lin(r)),
                }
                let (vf, vt) = (LinExpr::var(self.bus_v[f]), LinExpr::var(self.bus_v[t]));
                let bm = self.spec.big_m;
                self.on_off_equal(&format!("vm_{name}"), Family::SwitchVoltage, &vf, &vt, z, bm.vm);
                if let (Some(af), Some(at)) = (self.bus_va[f], self.bus_va[t]) {
                    self.on_off_equal(&format!("va_{name}"), Family::SwitchVoltage, &LinExpr::var(af), &LinExpr::var(at), z, bm.theta);
                }
                SwitchVars { z, p, q: Some(q) }
            }
            Side::Dc => {
                let (f, t) = (self.dc_index[&s.from], self.dc_index[&s.to]);
                self.dbal[f].add_term(p, 1.0);
                self.dbal[t].add_term(p, -1.0);
                let (vf, vt) = (LinExpr::var(self.dc_v[f]), LinExpr::var(self.dc_v[t]));
                self.on_off_equal(&format!("v_{name}"), Family::SwitchVoltage, &vf, &vt, z, self.spec.big_m.dc);
                SwitchVars { z, p, q: None }
            }
        }
    }

    fn exclusivity(&mut self, sw_z: &BTreeMap<usize, OnOff>) {
        let lo = match self.spec.exclusivity() {
            Exclusivity::Eq => 1.0,
            Exclusivity::Leq => -INF,
        };
        for s in &self.net.switches {
            let Some(partner) = s.partner.filter(|&p| p > s.id) else { continue };
            if let (Some(OnOff::Var(a)), Some(OnOff::Var(b))) = (sw_z.get(&s.id), sw_z.get(&partner)) {
                self.m.linear(format!("excl_sw{}_sw{}", s.id, partner), Family::Exclusivity, lin(&[(*a, 1.0), (*b, 1.0)]), lo, 1.0);
            }
        }
    }

    /// The two halves of a split bus are interchangeable, and elements on
    /// the new half are pointless while the coupler is closed.
    fn symmetry(&mut self, aug: &AugmentedNetwork, sw_z: &BTreeMap<usize, OnOff>) {
        for bb in &aug.busbars {
            let Some(OnOff::Var(zil)) = sw_z.get(&bb.zil).copied() else { continue };
            for e in &bb.elements {
                if let Some(OnOff::Var(zh)) = sw_z.get(&e.to_half).copied() {
                    self.m.linear(format!("sym_zil{}_sw{}", bb.zil, e.to_half), Family::Symmetry, lin(&[(zil, 1.0), (zh, 1.0)]), -INF, 1.0);
                }
            }
            let plain = match bb.side {
                Side::Ac => self.net.ac_bus(bb.bus).is_some_and(|b| !b.reference && b.gs == 0.0 && b.bs == 0.0),
                Side::Dc => self.net.dc_bus(bb.bus).is_some_and(|b| b.gs == 0.0),
            };
            if let (true, Some(first)) = (plain, bb.elements.first()) {
                if let Some(OnOff::Var(zh)) = sw_z.get(&first.to_half).copied() {
                    self.m.linear(format!("sym_first_sw{}", first.to_half), Family::Symmetry, LinExpr::var(zh), -INF, 0.0);
                }
            }
        }
    }

    fn balances(&mut self) {
        let lists = [(0usize, "p"), (1, "q")];
        for k in 0..self.flat.buses.len() {
            let id = self.flat.buses[k].id;
            for (which, tag) in lists {
                let (l, nl) = if which == 0 { (&self.pbal[k], &self.pnl[k]) } else { (&self.qbal[k], &self.qnl[k]) };
                let name = format!("bal{tag}_{id}");
                if nl.is_empty() {
                    let e = l.compact();
                    self.m.linear(name, Family::AcBalance, e, 0.0, 0.0);
                } else {
                    let mut parts = vec![lin_to_expr(&l.compact())];
                    parts.extend(nl.iter().cloned());
                    self.m.nonlinear(name, Family::AcBalance, Expr::Sum(parts), 0.0, 0.0);
                }
            }
        }
        for (d, bus) in self.net.dc_buses.iter().enumerate() {
            let name = format!("baldc_{}", bus.id);
            if self.dnl[d].is_empty() {
                self.m.linear(name, Family::DcBalance, self.dbal[d].compact(), 0.0, 0.0);
            } else {
                let mut parts = vec![lin_to_expr(&self.dbal[d].compact())];
                parts.extend(self.dnl[d].iter().cloned());
                self.m.nonlinear(name, Family::DcBalance, Expr::Sum(parts), 0.0, 0.0);
            }
        }
    }
}
