//! Exact evaluation of fixed topologies: buses joined by closed switches are
//! merged, open elements dropped, and the exact OPF is solved on the result.
//! Solutions are lifted back onto the augmented network and audited against
//! both the model and the closed-form network equations.

mod audit;
mod powerflow;

pub use audit::{residual_audit, AuditReport};
pub use powerflow::{power_flow, PfOptions, PfResult, PfSetpoints};

use crate::augment::AugmentedNetwork;
use crate::formulation::{build_model, start_point, BuiltModel, FormulationError, ProblemKind, ProblemSpec};
use crate::network::{AcBus, BusKind, DcBus, Network, Side, UnionFind};
use crate::state::{extract, NetworkState, Topology};
use gridtopo_solver::nlp::solve_nlp;
use gridtopo_solver::{Body, NodeEval, Status};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

/// A network with switch-connected buses merged into one.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedNetwork {
    pub net: Network,
    /// Representative of every AC bus of the source network.
    pub ac_rep: BTreeMap<usize, usize>,
    pub dc_rep: BTreeMap<usize, usize>,
}

fn groups(ids: &[usize], edges: impl Iterator<Item = (usize, usize)>) -> BTreeMap<usize, usize> {
    let pos: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(k, &b)| (b, k)).collect();
    let mut uf = UnionFind::new(ids.len());
    for (a, b) in edges {
        uf.union(pos[&a], pos[&b]);
    }
    // Smallest id of each group represents it.
    let mut rep_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sorted: Vec<usize> = ids.to_vec();
    sorted.sort_unstable();
    for &b in &sorted {
        let r = uf.find(pos[&b]);
        rep_of_root.entry(r).or_insert(b);
    }
    ids.iter().map(|&b| (b, rep_of_root[&uf.find(pos[&b])])).collect()
}

/// Apply `topo`, merge buses joined by closed switches and drop open
/// elements. Switched-off converters keep their transformer, filter and
/// reactor. AC islands left without a reference bus get their smallest bus
/// as angle reference.
pub fn merge_topology(net: &Network, topo: &Topology) -> MergedNetwork {
    let applied = topo.apply(net);
    let ac_ids: Vec<usize> = applied.ac_buses.iter().map(|b| b.id).collect();
    let dc_ids: Vec<usize> = applied.dc_buses.iter().map(|b| b.id).collect();
    let closed = |side: Side| applied.switches.iter().filter(move |s| s.closed && s.kind.side() == side).map(|s| (s.from, s.to));
    let ac_rep = groups(&ac_ids, closed(Side::Ac));
    let dc_rep = groups(&dc_ids, closed(Side::Dc));

    let mut out = Network { name: applied.name.clone(), base_mva: applied.base_mva, ..Default::default() };
    let mut ac: BTreeMap<usize, AcBus> = BTreeMap::new();
    for b in &applied.ac_buses {
        let r = ac_rep[&b.id];
        match ac.get_mut(&r) {
            None => {
                let mut nb = b.clone();
                nb.id = r;
                nb.kind = BusKind::Normal;
                nb.parent = None;
                ac.insert(r, nb);
            }
            Some(m) => {
                m.vmin = m.vmin.max(b.vmin);
                m.vmax = m.vmax.min(b.vmax);
                m.va_min = m.va_min.max(b.va_min);
                m.va_max = m.va_max.min(b.va_max);
                m.gs += b.gs;
                m.bs += b.bs;
                m.reference |= b.reference;
            }
        }
    }
    let mut dc: BTreeMap<usize, DcBus> = BTreeMap::new();
    for b in &applied.dc_buses {
        let r = dc_rep[&b.id];
        match dc.get_mut(&r) {
            None => {
                let mut nb = b.clone();
                nb.id = r;
                nb.kind = BusKind::Normal;
                nb.parent = None;
                dc.insert(r, nb);
            }
            Some(m) => {
                m.vmin = m.vmin.max(b.vmin);
                m.vmax = m.vmax.min(b.vmax);
                m.gs += b.gs;
            }
        }
    }
    out.ac_buses = ac.into_values().collect();
    out.dc_buses = dc.into_values().collect();
    for l in applied.ac_branches.iter().filter(|l| l.in_service) {
        let mut l = l.clone();
        l.from = ac_rep[&l.from];
        l.to = ac_rep[&l.to];
        l.switchable = false;
        out.ac_branches.push(l);
    }
    for d in applied.dc_branches.iter().filter(|d| d.in_service) {
        let mut d = d.clone();
        d.from = dc_rep[&d.from];
        d.to = dc_rep[&d.to];
        d.switchable = false;
        out.dc_branches.push(d);
    }
    for c in &applied.converters {
        let mut c = c.clone();
        c.ac_bus = ac_rep[&c.ac_bus];
        c.dc_bus = dc_rep[&c.dc_bus];
        c.switchable = false;
        out.converters.push(c);
    }
    for g in &applied.generators {
        let mut g = g.clone();
        g.bus = ac_rep[&g.bus];
        out.generators.push(g);
    }
    for l in &applied.loads {
        let mut l = l.clone();
        l.bus = match l.side {
            Side::Ac => ac_rep[&l.bus],
            Side::Dc => dc_rep[&l.bus],
        };
        out.loads.push(l);
    }
    // Branches that now join a bus to itself carry nothing useful.
    out.ac_branches.retain(|l| l.from != l.to);
    out.dc_branches.retain(|d| d.from != d.to);
    let islands = crate::network::island_decomposition(&out);
    for isl in &islands.ac {
        let has_ref = isl.iter().any(|id| out.ac_bus(*id).is_some_and(|b| b.reference));
        if !has_ref {
            let first = isl[0];
            out.ac_buses.iter_mut().find(|b| b.id == first).unwrap().reference = true;
        } else {
            // Merging can join two references; keep the smallest.
            let mut seen = false;
            for b in out.ac_buses.iter_mut().filter(|b| isl.contains(&b.id) && b.reference) {
                if seen {
                    b.reference = false;
                }
                seen = true;
            }
        }
    }
    MergedNetwork { net: out, ac_rep, dc_rep }
}

/// Outcome of an exact check of one topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// All residuals and limits within `tol` at the recomputed point.
    pub ac_feasible: bool,
    pub status: Status,
    /// Exact OPF objective of the fixed topology.
    pub objective: Option<f64>,
    pub baseline: Option<f64>,
    /// Objective strictly below the baseline (only when AC-feasible).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_than_baseline: Option<bool>,
    /// (baseline - objective) / baseline * 100, only when AC-feasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benefit_pct: Option<f64>,
    pub tol: f64,
    pub topology: Topology,
    /// Operating point on the augmented network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<NetworkState>,
    /// Largest violation of the full model at the lifted point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_violation: Option<f64>,
    /// Closed-form residuals (power balance, converter equations, limits).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
    /// Newton power flow from a flat start at the recomputed dispatch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_flow: Option<PfSummary>,
    #[serde(default)]
    pub time_s: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfSummary {
    pub converged: bool,
    pub iterations: usize,
    pub mismatch: f64,
    /// Largest voltage difference to the recomputed operating point.
    pub max_voltage_diff: f64,
}

/// Components (across converters) that carry demand but no generation.
pub fn islanded_demand(net: &Network) -> Vec<String> {
    let na = net.ac_buses.len();
    let apos: BTreeMap<usize, usize> = net.ac_buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
    let dpos: BTreeMap<usize, usize> = net.dc_buses.iter().enumerate().map(|(k, b)| (b.id, na + k)).collect();
    let node = |side: Side, id: usize| match side {
        Side::Ac => apos[&id],
        Side::Dc => dpos[&id],
    };
    let mut uf = UnionFind::new(na + net.dc_buses.len());
    for l in net.ac_branches.iter().filter(|l| l.in_service) {
        uf.union(apos[&l.from], apos[&l.to]);
    }
    for d in net.dc_branches.iter().filter(|d| d.in_service) {
        uf.union(dpos[&d.from], dpos[&d.to]);
    }
    for s in net.switches.iter().filter(|s| s.closed) {
        uf.union(node(s.kind.side(), s.from), node(s.kind.side(), s.to));
    }
    for c in net.converters.iter().filter(|c| c.in_service) {
        uf.union(apos[&c.ac_bus], dpos[&c.dc_bus]);
    }
    let mut fed = vec![false; na + net.dc_buses.len()];
    for g in &net.generators {
        let r = uf.find(apos[&g.bus]);
        fed[r] = true;
    }
    let mut out = Vec::new();
    for l in net.loads.iter().filter(|l| l.p.abs() > 0.0 || l.q.abs() > 0.0) {
        let r = uf.find(node(l.side, l.bus));
        if !fed[r] {
            out.push(format!("load {} on {:?} bus {} has no generation path", l.id, l.side, l.bus));
        }
    }
    out
}

struct MergedSolution {
    objective: f64,
    built: BuiltModel,
    x: Vec<f64>,
}

/// Exact OPF on merged topologies of an augmented network, with a cache
/// keyed by the merged network.
pub struct MergedEvaluator {
    pub full: BuiltModel,
    spec: ProblemSpec,
    cache: HashMap<String, Result<MergedSolution, (Status, String)>>,
    balance_rows: HashMap<String, usize>,
    pub solves: usize,
}

impl MergedEvaluator {
    /// `full` must be an exact model of the augmented network.
    pub fn new(full: BuiltModel) -> Self {
        let spec = ProblemSpec { kind: ProblemKind::Opf, ..full.spec.clone() };
        let balance_rows = full.model.constraints.iter().enumerate().filter(|(_, c)| c.name.starts_with("bal")).map(|(k, c)| (c.name.clone(), k)).collect();
        MergedEvaluator { full, spec, cache: HashMap::new(), balance_rows, solves: 0 }
    }

    /// Solve (or look up) `merged`; returns its cache key.
    fn solve_merged(&mut self, merged: &MergedNetwork) -> String {
        let key = serde_json::to_string(&merged.net).expect("network serializes");
        if !self.cache.contains_key(&key) {
            self.solves += 1;
            let r = self.solve_uncached(&merged.net);
            self.cache.insert(key.clone(), r);
        }
        key
    }

    fn solve_uncached(&self, net: &Network) -> Result<MergedSolution, (Status, String)> {
        let built = build_model(&AugmentedNetwork::plain(net.clone()), &self.spec).map_err(|e| (Status::Infeasible, e.to_string()))?;
        let lb: Vec<f64> = built.model.vars.iter().map(|v| v.lb).collect();
        let ub: Vec<f64> = built.model.vars.iter().map(|v| v.ub).collect();
        let dl = gridtopo_solver::deadline(&self.spec.solver);
        let mut last = (Status::Limit, String::new());
        // A second start with larger converter currents rescues the rare
        // stalls of the first.
        for scale in [1.0, 3.0] {
            let mut x0 = start_point(&built);
            if scale != 1.0 {
                for cv in built.map.conv.iter().flatten() {
                    x0[cv.i] = (x0[cv.i] * scale).min(built.model.vars[cv.i].ub);
                }
            }
            let out = solve_nlp(&built.model, &lb, &ub, &x0, &self.spec.solver, dl);
            if out.status.has_solution() && out.max_violation <= self.spec.solver.feasibility_tol {
                return Ok(MergedSolution { objective: out.objective, x: out.x, built });
            }
            last = (out.status, out.message);
            if out.status == Status::Infeasible {
                break;
            }
        }
        Err(last)
    }

    /// Evaluate a binary assignment of the full model (in its binary order).
    /// Returns the objective and the lifted full-model point.
    pub fn evaluate(&mut self, assign: &[bool]) -> Result<(f64, Vec<f64>), (Status, String)> {
        let refs = self.full.map.binary_refs();
        let topo = Topology::from_binaries(&refs, assign);
        let merged = merge_topology(self.full.net(), &topo);
        let (objective, x) = {
            let key = self.solve_merged(&merged);
            let sol = self.cache[&key].as_ref().map_err(|e| e.clone())?;
            (sol.objective, lift(&self.full, &merged, &sol.built, &sol.x, assign, &self.balance_rows))
        };
        let (viol, worst) = self.full.model.max_violation(&x);
        let tol = 10.0 * self.spec.solver.feasibility_tol;
        if viol > tol {
            return Err((Status::Limit, format!("lifted point violates {worst} by {viol:.3e}")));
        }
        Ok((objective, x))
    }

    /// Node evaluator for the branch-and-bound back-end.
    pub fn node_eval(&mut self, assign: &[bool]) -> NodeEval {
        match self.evaluate(assign) {
            Ok((objective, x)) => {
                let binaries = self.full.model.binaries().iter().map(|&i| x[i]).collect();
                NodeEval { status: Status::Optimal, objective, x, binaries, iterations: 1 }
            }
            Err((Status::Infeasible, _)) => NodeEval::infeasible(),
            Err(_) => NodeEval::failed(),
        }
    }
}

/// Map a merged solution onto the full model's variables. Switch flows are
/// recovered by peeling leaves off a spanning forest of closed switches.
fn lift(full: &BuiltModel, merged: &MergedNetwork, mb: &BuiltModel, mx: &[f64], assign: &[bool], rows: &HashMap<String, usize>) -> Vec<f64> {
    let fm = &full.map;
    let mm = &mb.map;
    let mut x = vec![0.0; full.model.vars.len()];
    for (k, &i) in full.model.binaries().iter().enumerate() {
        x[i] = if assign[k] { 1.0 } else { 0.0 };
    }
    // Internal converter buses pair up by station and order.
    let mut internal: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (k, b) in mm.flat.buses.iter().enumerate() {
        if let Some(c) = b.station {
            let n = internal.keys().filter(|key| key.0 == c).count();
            internal.insert((c, n), k);
        }
    }
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    for (k, b) in fm.flat.buses.iter().enumerate() {
        let mk = match b.station {
            Some(c) => {
                let n = seen.entry(c).or_insert(0);
                let v = internal[&(c, *n)];
                *n += 1;
                v
            }
            None => mm.flat.index[&merged.ac_rep[&b.id]],
        };
        x[fm.bus_v[k]] = mx[mm.bus_v[mk]];
        if let (Some(a), Some(ma)) = (fm.bus_va[k], mm.bus_va[mk]) {
            x[a] = mx[ma];
        }
    }
    for (d, b) in full.net().dc_buses.iter().enumerate() {
        let md = mm.dc_index[&merged.dc_rep[&b.id]];
        x[fm.dc_v[d]] = mx[mm.dc_v[md]];
    }
    for k in 0..fm.gen_p.len() {
        x[fm.gen_p[k]] = mx[mm.gen_p[k]];
        x[fm.gen_q[k]] = mx[mm.gen_q[k]];
    }
    for (fc, mc) in fm.conv.iter().zip(&mm.conv) {
        if let (Some(f), Some(m)) = (fc, mc) {
            x[f.pc] = mx[m.pc];
            x[f.qc] = mx[m.qc];
            x[f.pd] = mx[m.pd];
            x[f.i] = mx[m.i];
        }
    }
    // Balance residuals without switch flows, then peel.
    let net = full.net();
    let resid = |name: String, x: &[f64]| -> f64 {
        let c = &full.model.constraints[rows[&name]];
        match &c.body {
            Body::Linear { expr, .. } => expr.eval(x),
            Body::Nonlinear { expr, .. } => expr.eval(x),
            Body::Cone { .. } => 0.0,
        }
    };
    for side in [Side::Ac, Side::Dc] {
        let sw: Vec<usize> = (0..net.switches.len())
            .filter(|&k| net.switches[k].kind.side() == side && fm.switch[k].as_ref().is_some_and(|v| v.z.value(&x) > 0.5))
            .collect();
        if sw.is_empty() {
            continue;
        }
        let ids: Vec<usize> = match side {
            Side::Ac => net.ac_buses.iter().map(|b| b.id).collect(),
            Side::Dc => net.dc_buses.iter().map(|b| b.id).collect(),
        };
        let pos: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(k, &b)| (b, k)).collect();
        let mut uf = UnionFind::new(ids.len());
        let mut tree = Vec::new();
        for &k in &sw {
            let s = &net.switches[k];
            let (a, b) = (pos[&s.from], pos[&s.to]);
            if uf.find(a) != uf.find(b) {
                uf.union(a, b);
                tree.push(k);
            }
        }
        let nq = if side == Side::Ac { 2 } else { 1 };
        let mut r: Vec<[f64; 2]> = ids
            .iter()
            .map(|id| match side {
                Side::Ac => [resid(format!("balp_{id}"), &x), resid(format!("balq_{id}"), &x)],
                Side::Dc => [resid(format!("baldc_{id}"), &x), 0.0],
            })
            .collect();
        let mut deg = vec![0usize; ids.len()];
        for &k in &tree {
            deg[pos[&net.switches[k].from]] += 1;
            deg[pos[&net.switches[k].to]] += 1;
        }
        let mut alive = vec![true; tree.len()];
        let mut queue: Vec<usize> = (0..ids.len()).filter(|&b| deg[b] == 1).collect();
        while let Some(b) = queue.pop() {
            if deg[b] != 1 {
                continue;
            }
            let Some(t) = (0..tree.len()).find(|&t| alive[t] && (pos[&net.switches[tree[t]].from] == b || pos[&net.switches[tree[t]].to] == b)) else {
                continue;
            };
            alive[t] = false;
            let k = tree[t];
            let s = &net.switches[k];
            let v = fm.switch[k].as_ref().unwrap();
            let from_side = pos[&s.from] == b;
            let other = if from_side { pos[&s.to] } else { pos[&s.from] };
            for c in 0..nq {
                // Bus b sees +flow when it is the from end.
                let f = if from_side { -r[b][c] } else { r[b][c] };
                let var = if c == 0 { v.p } else { v.q.unwrap() };
                x[var] = f;
                r[b][c] = 0.0;
                r[other][c] += if from_side { -f } else { f };
            }
            deg[b] -= 1;
            deg[other] -= 1;
            if deg[other] == 1 {
                queue.push(other);
            }
        }
    }
    x
}

/// Default residual tolerance of the AC-feasibility verdict (p.u.).
pub const DEFAULT_TOL: f64 = 1e-6;

/// Exact check of one topology of an augmented network: merged exact OPF,
/// lifting, model audit, closed-form audit and a Newton power flow.
pub fn fix_and_check(aug: &AugmentedNetwork, topo: &Topology, spec: &ProblemSpec, baseline: Option<f64>, tol: f64) -> Result<FeasibilityReport, FormulationError> {
    if !(tol > 0.0) {
        return Err(FormulationError::InvalidSpec(format!("residual tolerance must be positive, got {tol}")));
    }
    let started = Instant::now();
    let kind = if aug.net.switches.is_empty() { ProblemKind::Ots } else { ProblemKind::OtsBs };
    let full_spec = ProblemSpec { kind, formulation: crate::formulation::Formulation::Exact, ..spec.clone() };
    // Every element named in the topology becomes a binary of the full model.
    let mut tagged = aug.clone();
    for l in &mut tagged.net.ac_branches {
        l.switchable = topo.ac_branches.contains_key(&l.id);
    }
    for d in &mut tagged.net.dc_branches {
        d.switchable = topo.dc_branches.contains_key(&d.id);
    }
    for c in &mut tagged.net.converters {
        c.switchable = topo.converters.contains_key(&c.id);
    }
    let mut rep = FeasibilityReport {
        ac_feasible: false,
        status: Status::Infeasible,
        objective: None,
        baseline,
        lower_than_baseline: None,
        benefit_pct: None,
        tol,
        topology: topo.clone(),
        state: None,
        model_violation: None,
        audit: None,
        power_flow: None,
        time_s: 0.0,
        message: String::new(),
    };
    let applied = topo.apply(&tagged.net);
    let islanded = islanded_demand(&applied);
    if !islanded.is_empty() {
        rep.message = format!("infeasible topology: {}", islanded.join("; "));
        rep.time_s = started.elapsed().as_secs_f64();
        return Ok(rep);
    }
    let mut full = build_model(&tagged, &full_spec)?;
    full.model.relaxation = None;
    // Checking a given topology: exclusivity and symmetry rows do not apply.
    full.model.constraints.retain(|c| !matches!(c.family, gridtopo_solver::Family::Exclusivity | gridtopo_solver::Family::Symmetry));
    let refs = full.map.binary_refs();
    let assign = topo.to_binaries(&refs);
    let mut ev = MergedEvaluator::new(full);
    match ev.evaluate(&assign) {
        Ok((objective, x)) => {
            let state = extract(&ev.full, &x);
            let (viol, _) = ev.full.model.max_violation(&x);
            let audit = residual_audit(&applied, &state);
            let merged = merge_topology(&applied, &Topology::default());
            let pf = power_flow(&merged.net, &PfSetpoints::from_state(&applied, &state), &PfOptions::default());
            let vdiff = pf_voltage_diff(&merged, &state, &pf);
            rep.power_flow = Some(PfSummary { converged: pf.converged, iterations: pf.iterations, mismatch: pf.mismatch, max_voltage_diff: vdiff });
            rep.status = Status::Optimal;
            rep.objective = Some(objective);
            rep.ac_feasible = audit.as_ref().is_some_and(|a| a.max() <= tol);
            if !rep.ac_feasible {
                rep.message = audit.as_ref().map_or("no angles to audit".into(), |a| format!("largest residual {:.3e} ({})", a.max(), a.worst));
            }
            if rep.ac_feasible {
                if let Some(b) = baseline {
                    rep.lower_than_baseline = Some(objective < b);
                    rep.benefit_pct = Some(benefit(b, objective));
                }
            }
            rep.model_violation = Some(viol);
            rep.audit = audit;
            rep.state = Some(state);
        }
        Err((status, message)) => {
            rep.status = status;
            rep.message = message;
        }
    }
    rep.time_s = started.elapsed().as_secs_f64();
    Ok(rep)
}

/// (baseline - objective) / baseline * 100.
pub fn benefit(baseline: f64, objective: f64) -> f64 {
    (baseline - objective) / baseline * 100.0
}

/// Largest |vm| / |va| / |U| difference between a power flow on the merged
/// network and a state of the full network.
fn pf_voltage_diff(merged: &MergedNetwork, state: &NetworkState, pf: &PfResult) -> f64 {
    let mut worst: f64 = 0.0;
    for b in state.ac_buses.iter().filter(|b| b.station.is_none()) {
        if let (Some(&(vm, va)), Some(sva)) = (pf.ac.get(&merged.ac_rep[&b.id]), b.va) {
            worst = worst.max((vm - b.vm).abs()).max((va - sva).abs());
        }
    }
    for b in &state.dc_buses {
        if let Some(&u) = pf.dc.get(&merged.dc_rep[&b.id]) {
            worst = worst.max((u - b.v).abs());
        }
    }
    worst
}
