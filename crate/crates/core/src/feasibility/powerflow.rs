//! Sequential AC/DC Newton power flow. The AC side sees converters as PQ
//! injections; each DC island has one slack converter whose AC power is
//! updated from the DC solution until both sides agree.

use crate::formulation::eval::{converter_loss, dc_flow, flows_from_voltages, FlowCoefs};
use crate::network::{flat_ac, island_decomposition, FlatAc, Network, Side};
use crate::state::NetworkState;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PfSetpoints {
    /// Active output per generator id; generators at a slack bus are ignored.
    pub gen_p: BTreeMap<usize, f64>,
    /// Voltage magnitude per AC bus id, used at slack and generator buses.
    pub vm: BTreeMap<usize, f64>,
    /// (p, q) drawn by each converter at its internal bus.
    pub conv_pq: BTreeMap<usize, (f64, f64)>,
    /// DC voltage of the slack converter of each DC island, by converter id.
    pub dc_slack: BTreeMap<usize, f64>,
}

impl PfSetpoints {
    /// Setpoints taken from an operating point. The slack of each DC island
    /// is its converter with the largest DC power.
    pub fn from_state(net: &Network, state: &NetworkState) -> Self {
        let mut sp = PfSetpoints::default();
        for g in &state.generators {
            sp.gen_p.insert(g.id, g.p);
        }
        for b in &state.ac_buses {
            if b.station.is_none() {
                sp.vm.insert(b.id, b.vm);
            }
        }
        for c in &state.converters {
            if c.on {
                sp.conv_pq.insert(c.id, (c.p_ac, c.q_ac));
            }
        }
        let dcv: BTreeMap<usize, f64> = state.dc_buses.iter().map(|b| (b.id, b.v)).collect();
        for isl in island_decomposition(net).dc {
            let best = net
                .converters
                .iter()
                .zip(&state.converters)
                .filter(|(c, s)| c.in_service && s.on && isl.contains(&c.dc_bus))
                .max_by(|a, b| a.1.p_dc.abs().total_cmp(&b.1.p_dc.abs()).then(b.0.id.cmp(&a.0.id)));
            if let Some((c, _)) = best {
                sp.dc_slack.insert(c.id, dcv.get(&c.dc_bus).copied().unwrap_or(1.0));
            }
        }
        sp
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_outer: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tol: 1e-9, max_iter: 30, max_outer: 30 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PfResult {
    pub converged: bool,
    pub iterations: usize,
    pub outer_iterations: usize,
    /// Largest AC or DC mismatch at the returned point.
    pub mismatch: f64,
    /// (vm, va) per flat AC bus id, internal converter buses included.
    pub ac: BTreeMap<usize, (f64, f64)>,
    pub dc: BTreeMap<usize, f64>,
    /// Total generator output needed at each slack or generator bus (p, q).
    pub bus_generation: BTreeMap<usize, (f64, f64)>,
    /// Converter (p_ac, q_ac, p_dc).
    pub converters: BTreeMap<usize, (f64, f64, f64)>,
    pub message: String,
}

fn norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Newton iterations with step halving (up to six halvings) and a
/// divergence stop after five consecutive increases of the mismatch.
fn newton(x: &mut DVector<f64>, f: &dyn Fn(&DVector<f64>) -> DVector<f64>, opts: &PfOptions) -> (bool, usize, f64) {
    let mut fx = f(x);
    let mut nf = norm(&fx);
    let mut increases = 0;
    for it in 0..opts.max_iter {
        if nf <= opts.tol {
            return (true, it, nf);
        }
        let n = x.len();
        let mut jac = DMatrix::zeros(fx.len(), n);
        for j in 0..n {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let col = (f(&xp) - f(&xm)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let Some(dx) = jac.lu().solve(&(-&fx)) else {
            return (false, it, nf);
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=6 {
            let xn = &*x + &dx * step;
            let fn_ = f(&xn);
            let nn = norm(&fn_);
            if nn < nf || accepted.is_none() && step < 1.0 / 32.0 {
                accepted = Some((xn, fn_, nn));
                if nn < nf {
                    break;
                }
            }
            step *= 0.5;
        }
        let (xn, fn_, nn) = accepted.unwrap_or_else(|| {
            let xn = &*x + &dx * step;
            let fn_ = f(&xn);
            let nn = norm(&fn_);
            (xn, fn_, nn)
        });
        if nn >= nf {
            increases += 1;
            if increases >= 5 {
                *x = xn;
                return (false, it + 1, nn);
            }
        } else {
            increases = 0;
        }
        *x = xn;
        fx = fn_;
        nf = nn;
    }
    (nf <= opts.tol, opts.max_iter, nf)
}

struct AcCase<'a> {
    flat: &'a FlatAc,
    coefs: Vec<FlowCoefs>,
    slack: Vec<bool>,
    pv: Vec<bool>,
}

impl AcCase<'_> {
    /// Power leaving each bus into branches and shunts.
    fn injections(&self, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.flat.buses.len();
        let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
        for (br, c) in self.flat.branches.iter().zip(&self.coefs) {
            let (i, j) = (br.from, br.to);
            let f = flows_from_voltages(c, vm[i], vm[j], va[i], va[j]);
            p[i] += f[0];
            q[i] += f[1];
            p[j] += f[2];
            q[j] += f[3];
        }
        for (k, b) in self.flat.buses.iter().enumerate() {
            p[k] += b.gs * vm[k] * vm[k];
            q[k] -= b.bs * vm[k] * vm[k];
        }
        (p, q)
    }
}

/// Run the power flow on `net` (no closed switches; merge first).
pub fn power_flow(net: &Network, sp: &PfSetpoints, opts: &PfOptions) -> PfResult {
    let flat = flat_ac(net);
    let n = flat.buses.len();
    let mut slack = vec![false; n];
    let mut pv = vec![false; n];
    for (k, b) in flat.buses.iter().enumerate() {
        slack[k] = b.reference;
    }
    for g in &net.generators {
        let k = flat.index[&g.bus];
        if !slack[k] {
            pv[k] = true;
        }
    }
    let case = AcCase { flat: &flat, coefs: flat.branches.iter().map(FlowCoefs::of).collect(), slack, pv };
    let mut vm: Vec<f64> = flat.buses.iter().map(|b| sp.vm.get(&b.id).copied().unwrap_or(1.0)).collect();
    let mut va = vec![0.0; n];
    let mut p_load = vec![0.0; n];
    let mut q_load = vec![0.0; n];
    let mut p_gen = vec![0.0; n];
    for l in net.loads.iter().filter(|l| l.side == Side::Ac) {
        let k = flat.index[&l.bus];
        p_load[k] += l.p;
        q_load[k] += l.q;
    }
    for g in &net.generators {
        p_gen[flat.index[&g.bus]] += sp.gen_p.get(&g.id).copied().unwrap_or(0.0);
    }
    let mut conv: BTreeMap<usize, (f64, f64, f64)> = BTreeMap::new();
    for c in net.converters.iter().filter(|c| c.in_service) {
        let (p, q) = sp.conv_pq.get(&c.id).copied().unwrap_or((0.0, 0.0));
        conv.insert(c.id, (p, q, 0.0));
    }
    let dc_pos: BTreeMap<usize, usize> = net.dc_buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
    let mut u: Vec<f64> = vec![1.0; net.dc_buses.len()];
    let mut dc_slack_bus = vec![false; net.dc_buses.len()];
    for (cid, v) in &sp.dc_slack {
        if let Some(c) = net.converters.iter().find(|c| c.id == *cid) {
            let k = dc_pos[&c.dc_bus];
            u[k] = *v;
            dc_slack_bus[k] = true;
        }
    }
    for isl in island_decomposition(net).dc {
        if !isl.iter().any(|b| dc_slack_bus[dc_pos[b]]) {
            dc_slack_bus[dc_pos[&isl[0]]] = true;
        }
    }
    let mut res = PfResult::default();
    let ac_unknowns: Vec<(usize, bool)> = (0..n)
        .filter(|&k| !case.slack[k])
        .map(|k| (k, false))
        .chain((0..n).filter(|&k| !case.slack[k] && !case.pv[k]).map(|k| (k, true)))
        .collect();
    let dc_unknowns: Vec<usize> = (0..net.dc_buses.len()).filter(|&k| !dc_slack_bus[k]).collect();
    let mut converged = false;
    for outer in 0..opts.max_outer {
        res.outer_iterations = outer + 1;
        // AC side with converter injections fixed.
        let mut p_spec: Vec<f64> = (0..n).map(|k| p_gen[k] - p_load[k]).collect();
        let mut q_spec: Vec<f64> = (0..n).map(|k| -q_load[k]).collect();
        for (k, c) in net.converters.iter().enumerate() {
            if let Some(&(p, q, _)) = conv.get(&c.id) {
                p_spec[flat.converter_bus[k]] -= p;
                q_spec[flat.converter_bus[k]] -= q;
            }
        }
        let unpack = |x: &DVector<f64>, vm: &mut Vec<f64>, va: &mut Vec<f64>| {
            for (t, &(k, is_vm)) in ac_unknowns.iter().enumerate() {
                if is_vm {
                    vm[k] = x[t];
                } else {
                    va[k] = x[t];
                }
            }
        };
        let x0 = DVector::from_iterator(ac_unknowns.len(), ac_unknowns.iter().map(|&(k, is_vm)| if is_vm { vm[k] } else { va[k] }));
        let f = |x: &DVector<f64>| {
            let (mut a, mut b) = (vm.clone(), va.clone());
            unpack(x, &mut a, &mut b);
            let (p, q) = case.injections(&a, &b);
            DVector::from_iterator(ac_unknowns.len(), ac_unknowns.iter().map(|&(k, is_vm)| if is_vm { q[k] - q_spec[k] } else { p[k] - p_spec[k] }))
        };
        let mut x = x0;
        let (ok, it, _) = newton(&mut x, &f, opts);
        res.iterations += it;
        unpack(&x, &mut vm, &mut va);
        if !ok {
            res.message = "AC Newton iteration did not converge".into();
            break;
        }
        // Converter currents and DC injections of the non-slack converters.
        let mut pd_inj = vec![0.0; net.dc_buses.len()];
        for l in net.loads.iter().filter(|l| l.side == Side::Dc) {
            pd_inj[dc_pos[&l.bus]] += l.p;
        }
        for (k, c) in net.converters.iter().enumerate() {
            let Some(e) = conv.get_mut(&c.id) else { continue };
            if sp.dc_slack.contains_key(&c.id) {
                continue;
            }
            let i = e.0.hypot(e.1) / vm[flat.converter_bus[k]];
            e.2 = converter_loss(c, i, true) - e.0;
            pd_inj[dc_pos[&c.dc_bus]] += e.2;
        }
        let dc_out = |u: &[f64]| {
            let mut out = pd_inj.clone();
            for d in net.dc_branches.iter().filter(|d| d.in_service) {
                let (e, f) = (dc_pos[&d.from], dc_pos[&d.to]);
                out[e] += dc_flow(d, u[e], u[f], true);
                out[f] += dc_flow(d, u[f], u[e], true);
            }
            for (k, b) in net.dc_buses.iter().enumerate() {
                out[k] += b.gs * u[k] * u[k];
            }
            out
        };
        let g = |x: &DVector<f64>| {
            let mut uu = u.clone();
            for (t, &k) in dc_unknowns.iter().enumerate() {
                uu[k] = x[t];
            }
            let out = dc_out(&uu);
            DVector::from_iterator(dc_unknowns.len(), dc_unknowns.iter().map(|&k| out[k]))
        };
        let mut y = DVector::from_iterator(dc_unknowns.len(), dc_unknowns.iter().map(|&k| u[k]));
        let (ok, it, _) = newton(&mut y, &g, opts);
        res.iterations += it;
        for (t, &k) in dc_unknowns.iter().enumerate() {
            u[k] = y[t];
        }
        if !ok {
            res.message = "DC Newton iteration did not converge".into();
            break;
        }
        // Slack converters: DC power from the DC balance, AC power from the
        // loss equation.
        let out = dc_out(&u);
        let mut change: f64 = 0.0;
        for (k, c) in net.converters.iter().enumerate() {
            if !sp.dc_slack.contains_key(&c.id) {
                continue;
            }
            let Some(e) = conv.get_mut(&c.id) else { continue };
            let pd = -out[dc_pos[&c.dc_bus]];
            let vc = vm[flat.converter_bus[k]];
            let mut p = e.0;
            for _ in 0..100 {
                let i = p.hypot(e.1) / vc;
                let np = converter_loss(c, i, true) - pd;
                if (np - p).abs() < 1e-14 {
                    p = np;
                    break;
                }
                p = np;
            }
            change = change.max((p - e.0).abs());
            *e = (p, e.1, pd);
        }
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    // Final mismatch and generation at slack / generator buses.
    let (p, q) = case.injections(&vm, &va);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let mut pk = p[k] + p_load[k];
        let mut qk = q[k] + q_load[k];
        for (ci, c) in net.converters.iter().enumerate() {
            if flat.converter_bus[ci] == k {
                if let Some(e) = conv.get(&c.id) {
                    pk += e.0;
                    qk += e.1;
                }
            }
        }
        if case.slack[k] || case.pv[k] {
            res.bus_generation.insert(flat.buses[k].id, (pk, qk));
        }
        if !case.slack[k] {
            worst = worst.max((pk - p_gen[k]).abs());
        }
        if !case.slack[k] && !case.pv[k] {
            worst = worst.max(qk.abs());
        }
    }
    res.converged = converged;
    res.mismatch = worst;
    res.ac = flat.buses.iter().enumerate().map(|(k, b)| (b.id, (vm[k], va[k]))).collect();
    res.dc = net.dc_buses.iter().zip(&u).map(|(b, &v)| (b.id, v)).collect();
    res.converters = conv;
    if converged {
        res.message.clear();
    } else if res.message.is_empty() {
        res.message = "AC/DC iteration did not settle".into();
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{AcBranch, AcBus, Generator, Load};

    #[test]
    fn two_bus_flow_matches_closed_form() {
        let mut a = AcBus::new(1);
        a.reference = true;
        let net = Network {
            name: "t".into(),
            base_mva: 100.0,
            ac_buses: vec![a, AcBus::new(2)],
            ac_branches: vec![AcBranch {
                id: 1,
                from: 1,
                to: 2,
                r: 0.0,
                x: 0.1,
                b: 0.0,
                tap: 1.0,
                shift: 0.0,
                rate: None,
                angmin: -1.0,
                angmax: 1.0,
                in_service: true,
                switchable: false,
            }],
            generators: vec![Generator { id: 1, bus: 1, pmin: 0.0, pmax: 2.0, qmin: -2.0, qmax: 2.0, c1: 1.0, c0: 0.0 }],
            loads: vec![Load { id: 1, side: Side::Ac, bus: 2, p: 0.5, q: 0.0 }],
            ..Default::default()
        };
        let r = power_flow(&net, &PfSetpoints::default(), &PfOptions::default());
        assert!(r.converged, "{}", r.message);
        let (v2, a2) = r.ac[&2];
        // Lossless line: P = v1 v2 sin(d) / x, Q balance at bus 2 zero.
        assert!((v2 * (-a2).sin() / 0.1 - 0.5).abs() < 1e-8);
        let (p1, _) = r.bus_generation[&1];
        assert!((p1 - 0.5).abs() < 1e-8);
    }
}
