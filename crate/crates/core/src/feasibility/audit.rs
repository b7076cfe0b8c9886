//! Closed-form audit of an operating point, independent of any model.

use crate::formulation::eval::{converter_coupling, dc_flow, flows_from_voltages, ConverterPoint, FlowCoefs};
use crate::network::{flat_ac, BranchOrigin, Network, Side};
use crate::state::NetworkState;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Largest AC active / reactive power mismatch over all buses.
    pub ac_p: f64,
    pub ac_q: f64,
    pub dc_p: f64,
    /// Largest deviation between stated and recomputed branch flows.
    pub flows: f64,
    /// Largest converter loss or coupling residual.
    pub converters: f64,
    /// Largest bound, rating, angle or switch violation.
    pub limits: f64,
    pub worst: String,
}

impl AuditReport {
    pub fn max(&self) -> f64 {
        [self.ac_p, self.ac_q, self.dc_p, self.flows, self.converters, self.limits].into_iter().fold(0.0, f64::max)
    }

    fn note(&mut self, field: fn(&mut AuditReport) -> &mut f64, v: f64, what: impl FnOnce() -> String) {
        let v = v.abs();
        let m = self.max();
        let slot = field(self);
        if v > *slot {
            *slot = v;
        }
        if v > m {
            self.worst = what();
        }
    }
}

fn over(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

/// Recompute every balance, flow and limit of `net` (statuses already
/// applied) at `state`. `None` for states without voltage angles.
pub fn residual_audit(net: &Network, state: &NetworkState) -> Option<AuditReport> {
    let flat = flat_ac(net);
    let mut vm = vec![0.0; flat.buses.len()];
    let mut va = vec![0.0; flat.buses.len()];
    if state.ac_buses.len() != flat.buses.len() {
        return None;
    }
    for (k, (b, s)) in flat.buses.iter().zip(&state.ac_buses).enumerate() {
        if b.id != s.id {
            return None;
        }
        vm[k] = s.vm;
        va[k] = s.va?;
    }
    let mut rep = AuditReport::default();
    let nb = flat.buses.len();
    let mut p = vec![0.0; nb];
    let mut q = vec![0.0; nb];
    let stated: BTreeMap<usize, _> = state.ac_branches.iter().map(|b| (b.id, b)).collect();
    for br in &flat.branches {
        let (i, j) = (br.from, br.to);
        let f = flows_from_voltages(&FlowCoefs::of(br), vm[i], vm[j], va[i], va[j]);
        p[i] += f[0];
        q[i] += f[1];
        p[j] += f[2];
        q[j] += f[3];
        let name = match br.origin {
            BranchOrigin::Line(id) => format!("line {id}"),
            BranchOrigin::Transformer(id) => format!("transformer of converter {id}"),
            BranchOrigin::Reactor(id) => format!("reactor of converter {id}"),
        };
        if let BranchOrigin::Line(id) = br.origin {
            if let Some(s) = stated.get(&id) {
                let d = (s.p_from - f[0]).abs().max((s.q_from - f[1]).abs()).max((s.p_to - f[2]).abs()).max((s.q_to - f[3]).abs());
                rep.note(|r| &mut r.flows, d, || format!("flow of {name}"));
            }
        }
        if let Some(rate) = br.rate {
            let s = f[0].hypot(f[1]).max(f[2].hypot(f[3]));
            rep.note(|r| &mut r.limits, (s - rate).max(0.0), || format!("rating of {name}"));
        }
        rep.note(|r| &mut r.limits, over(va[i] - va[j], br.angmin, br.angmax), || format!("angle difference of {name}"));
    }
    for (k, b) in flat.buses.iter().enumerate() {
        p[k] += b.gs * vm[k] * vm[k];
        q[k] -= b.bs * vm[k] * vm[k];
        rep.note(|r| &mut r.limits, over(vm[k], b.vmin, b.vmax), || format!("voltage of AC bus {}", b.id));
    }
    for (g, s) in net.generators.iter().zip(&state.generators) {
        let k = flat.index[&g.bus];
        p[k] -= s.p;
        q[k] -= s.q;
        rep.note(|r| &mut r.limits, over(s.p, g.pmin, g.pmax).max(over(s.q, g.qmin, g.qmax)), || format!("output of generator {}", g.id));
    }
    let dc_pos: BTreeMap<usize, usize> = net.dc_buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
    let mut u = vec![0.0; net.dc_buses.len()];
    for (k, s) in state.dc_buses.iter().enumerate() {
        u[k] = s.v;
    }
    let mut pd = vec![0.0; net.dc_buses.len()];
    for l in &net.loads {
        match l.side {
            Side::Ac => {
                let k = flat.index[&l.bus];
                p[k] += l.p;
                q[k] += l.q;
            }
            Side::Dc => pd[dc_pos[&l.bus]] += l.p,
        }
    }
    for (k, (c, s)) in net.converters.iter().zip(&state.converters).enumerate() {
        let cb = flat.converter_bus[k];
        p[cb] += s.p_ac;
        q[cb] += s.q_ac;
        pd[dc_pos[&c.dc_bus]] += s.p_dc;
        let pt = ConverterPoint { p_ac: s.p_ac, q_ac: s.q_ac, p_dc: s.p_dc, i: s.i, vm: vm[cb] };
        let res = converter_coupling(c, &pt, c.in_service);
        rep.note(|r| &mut r.converters, res.loss.abs().max(res.coupling.abs()), || format!("equations of converter {}", c.id));
        rep.note(|r| &mut r.limits, res.bounds, || format!("limits of converter {}", c.id));
    }
    let dstated: BTreeMap<usize, _> = state.dc_branches.iter().map(|b| (b.id, b)).collect();
    for d in &net.dc_branches {
        let (e, f) = (dc_pos[&d.from], dc_pos[&d.to]);
        let fe = dc_flow(d, u[e], u[f], d.in_service);
        let ff = dc_flow(d, u[f], u[e], d.in_service);
        pd[e] += fe;
        pd[f] += ff;
        if let Some(s) = dstated.get(&d.id) {
            rep.note(|r| &mut r.flows, (s.p_from - fe).abs().max((s.p_to - ff).abs()), || format!("flow of DC branch {}", d.id));
        }
        if let Some(rate) = d.rate {
            rep.note(|r| &mut r.limits, (fe.abs().max(ff.abs()) - rate).max(0.0), || format!("rating of DC branch {}", d.id));
        }
    }
    for (k, b) in net.dc_buses.iter().enumerate() {
        pd[k] += b.gs * u[k] * u[k];
        rep.note(|r| &mut r.limits, over(u[k], b.vmin, b.vmax), || format!("voltage of DC bus {}", b.id));
    }
    for (s, st) in net.switches.iter().zip(&state.switches) {
        let sq = st.q.unwrap_or(0.0);
        let mag = st.p.hypot(sq);
        if !s.closed {
            rep.note(|r| &mut r.limits, mag, || format!("flow through open switch {}", s.id));
            continue;
        }
        rep.note(|r| &mut r.limits, (mag - s.rating).max(0.0), || format!("rating of switch {}", s.id));
        match s.kind.side() {
            Side::Ac => {
                let (f, t) = (flat.index[&s.from], flat.index[&s.to]);
                p[f] += st.p;
                p[t] -= st.p;
                q[f] += sq;
                q[t] -= sq;
                let d = (vm[f] - vm[t]).abs().max((va[f] - va[t]).abs());
                rep.note(|r| &mut r.limits, d, || format!("voltage across closed switch {}", s.id));
            }
            Side::Dc => {
                let (f, t) = (dc_pos[&s.from], dc_pos[&s.to]);
                pd[f] += st.p;
                pd[t] -= st.p;
                rep.note(|r| &mut r.limits, (u[f] - u[t]).abs(), || format!("voltage across closed switch {}", s.id));
            }
        }
    }
    for (k, b) in flat.buses.iter().enumerate() {
        rep.note(|r| &mut r.ac_p, p[k], || format!("active balance at AC bus {}", b.id));
        rep.note(|r| &mut r.ac_q, q[k], || format!("reactive balance at AC bus {}", b.id));
    }
    for (k, b) in net.dc_buses.iter().enumerate() {
        rep.note(|r| &mut r.dc_p, pd[k], || format!("balance at DC bus {}", b.id));
    }
    Some(rep)
}
