//! Solutions in network terms: element statuses and operating points.

use crate::formulation::{BinaryRef, BuiltModel, Formulation, OnOff};
use crate::network::{BranchOrigin, Network};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// On/off status of every switchable element. Elements not listed keep
/// their status from the case.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Topology {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ac_branches: BTreeMap<usize, bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub dc_branches: BTreeMap<usize, bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub converters: BTreeMap<usize, bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub switches: BTreeMap<usize, bool>,
}

impl Topology {
    pub fn from_binaries(refs: &[BinaryRef], values: &[bool]) -> Self {
        let mut t = Topology::default();
        for (r, &v) in refs.iter().zip(values) {
            match *r {
                BinaryRef::AcBranch(id) => t.ac_branches.insert(id, v),
                BinaryRef::DcBranch(id) => t.dc_branches.insert(id, v),
                BinaryRef::Converter(id) => t.converters.insert(id, v),
                BinaryRef::Switch(id) => t.switches.insert(id, v),
            };
        }
        t
    }

    /// Binary values in the order of `refs`; unlisted elements count as on.
    pub fn to_binaries(&self, refs: &[BinaryRef]) -> Vec<bool> {
        refs.iter()
            .map(|r| match *r {
                BinaryRef::AcBranch(id) => self.ac_branches.get(&id).copied().unwrap_or(true),
                BinaryRef::DcBranch(id) => self.dc_branches.get(&id).copied().unwrap_or(true),
                BinaryRef::Converter(id) => self.converters.get(&id).copied().unwrap_or(true),
                BinaryRef::Switch(id) => self.switches.get(&id).copied().unwrap_or(true),
            })
            .collect()
    }

    /// Copy of `net` with these statuses written into it.
    pub fn apply(&self, net: &Network) -> Network {
        let mut out = net.clone();
        for l in &mut out.ac_branches {
            if let Some(&v) = self.ac_branches.get(&l.id) {
                l.in_service = l.in_service && v;
            }
        }
        for d in &mut out.dc_branches {
            if let Some(&v) = self.dc_branches.get(&d.id) {
                d.in_service = d.in_service && v;
            }
        }
        for c in &mut out.converters {
            if let Some(&v) = self.converters.get(&c.id) {
                c.in_service = c.in_service && v;
            }
        }
        for s in &mut out.switches {
            if let Some(&v) = self.switches.get(&s.id) {
                s.closed = v;
            }
        }
        out
    }

    /// Elements that are off, as `kind:id` strings.
    pub fn open_elements(&self) -> Vec<String> {
        let off = |m: &BTreeMap<usize, bool>, tag: &str| m.iter().filter(|e| !*e.1).map(|e| format!("{tag}:{}", e.0)).collect::<Vec<_>>();
        let mut v = off(&self.ac_branches, "ac_branch");
        v.extend(off(&self.dc_branches, "dc_branch"));
        v.extend(off(&self.converters, "converter"));
        v.extend(off(&self.switches, "switch"));
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcBusState {
    pub id: usize,
    pub vm: f64,
    /// Absent for formulations without angles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub va: Option<f64>,
    /// Converter owning an internal bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcBusState {
    pub id: usize,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorState {
    pub id: usize,
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcBranchState {
    pub id: usize,
    pub on: bool,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcBranchState {
    pub id: usize,
    pub on: bool,
    pub p_from: f64,
    pub p_to: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverterState {
    pub id: usize,
    pub on: bool,
    /// Power drawn from the grid bus.
    pub p_grid: f64,
    pub q_grid: f64,
    /// Power into the converter at its internal bus.
    pub p_ac: f64,
    pub q_ac: f64,
    /// Power into the converter from the DC bus.
    pub p_dc: f64,
    pub i: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchState {
    pub id: usize,
    pub closed: bool,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

/// Operating point in network terms, per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub formulation: Formulation,
    pub objective: f64,
    pub ac_buses: Vec<AcBusState>,
    pub dc_buses: Vec<DcBusState>,
    pub generators: Vec<GeneratorState>,
    pub ac_branches: Vec<AcBranchState>,
    pub dc_branches: Vec<DcBranchState>,
    pub converters: Vec<ConverterState>,
    pub switches: Vec<SwitchState>,
}

fn on(z: OnOff, x: &[f64]) -> bool {
    z.value(x) > 0.5
}

/// Read a solution vector of `built` back into network terms.
pub fn extract(built: &BuiltModel, x: &[f64]) -> NetworkState {
    let map = &built.map;
    let net = built.net();
    let form = map.formulation;
    let vm = |k: usize| {
        let v = x[map.bus_v[k]];
        match form {
            Formulation::Exact => v,
            Formulation::Soc => v.max(0.0).sqrt(),
            Formulation::Lpac => 1.0 + v,
        }
    };
    let ac_buses = map
        .flat
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| AcBusState { id: b.id, vm: vm(k), va: map.bus_va[k].map(|a| x[a]), station: b.station })
        .collect();
    let dc_buses = net
        .dc_buses
        .iter()
        .zip(&map.dc_v)
        .map(|(b, &i)| DcBusState {
            id: b.id,
            v: match form {
                Formulation::Exact => x[i],
                Formulation::Soc => x[i].max(0.0).sqrt(),
                Formulation::Lpac => 1.0 + x[i],
            },
        })
        .collect();
    let generators = net.generators.iter().enumerate().map(|(k, g)| GeneratorState { id: g.id, p: x[map.gen_p[k]], q: x[map.gen_q[k]] }).collect();
    let mut line_pos = BTreeMap::new();
    let mut internal: BTreeMap<usize, usize> = BTreeMap::new();
    for (k, br) in map.flat.branches.iter().enumerate() {
        match br.origin {
            BranchOrigin::Line(id) => {
                line_pos.insert(id, k);
            }
            BranchOrigin::Transformer(id) | BranchOrigin::Reactor(id) => {
                // First internal branch of a station leaves the grid bus.
                internal.entry(id).or_insert(k);
            }
        }
    }
    let ac_branches = net
        .ac_branches
        .iter()
        .map(|l| match line_pos.get(&l.id) {
            Some(&k) => {
                let f = &map.branch_flow[k];
                let o = on(map.branch_z[k], x);
                AcBranchState { id: l.id, on: o, p_from: f[0].eval(x), q_from: f[1].eval(x), p_to: f[2].eval(x), q_to: f[3].eval(x) }
            }
            None => AcBranchState { id: l.id, on: false, p_from: 0.0, q_from: 0.0, p_to: 0.0, q_to: 0.0 },
        })
        .collect();
    let dc_branches = net
        .dc_branches
        .iter()
        .zip(&map.dc_branch)
        .map(|(d, v)| match v {
            Some(v) => DcBranchState { id: d.id, on: on(v.z, x), p_from: v.p_from.eval(x), p_to: v.p_to.eval(x) },
            None => DcBranchState { id: d.id, on: false, p_from: 0.0, p_to: 0.0 },
        })
        .collect();
    let converters = net
        .converters
        .iter()
        .zip(&map.conv)
        .map(|(c, v)| {
            let (p_grid, q_grid) = match internal.get(&c.id) {
                Some(&k) => (map.branch_flow[k][0].eval(x), map.branch_flow[k][1].eval(x)),
                None => v.as_ref().map_or((0.0, 0.0), |v| (x[v.pc], x[v.qc])),
            };
            match v {
                Some(v) => ConverterState { id: c.id, on: on(v.z, x), p_grid, q_grid, p_ac: x[v.pc], q_ac: x[v.qc], p_dc: x[v.pd], i: x[v.i] },
                None => ConverterState { id: c.id, on: false, p_grid, q_grid, p_ac: 0.0, q_ac: 0.0, p_dc: 0.0, i: 0.0 },
            }
        })
        .collect();
    let switches = net
        .switches
        .iter()
        .zip(&map.switch)
        .map(|(s, v)| match v {
            Some(v) => SwitchState { id: s.id, closed: on(v.z, x), p: x[v.p], q: v.q.map(|q| x[q]) },
            None => SwitchState { id: s.id, closed: false, p: 0.0, q: None },
        })
        .collect();
    let objective = built.model.objective.eval(x);
    NetworkState { formulation: form, objective, ac_buses, dc_buses, generators, ac_branches, dc_branches, converters, switches }
}
