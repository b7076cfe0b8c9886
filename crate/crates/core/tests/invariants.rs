//! Model invariants on random topologies of the 5-bus case.

mod common;

use common::{case5, split};
use gridtopo::augment::{AugmentedNetwork, SplitPlan};
use gridtopo::feasibility::{fix_and_check, DEFAULT_TOL};
use gridtopo::formulation::{build_model, BuiltModel, Formulation, ProblemKind, ProblemSpec, Scope};
use gridtopo::network::{Network, Side};
use gridtopo::state::{extract, NetworkState, Topology};
use gridtopo::study::prepare;
use gridtopo_solver::{solve, SolverOptions};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn built(kind: ProblemKind, f: Formulation, scope: Scope, plan: &SplitPlan) -> (AugmentedNetwork, BuiltModel) {
    let spec = ProblemSpec { kind, formulation: f, scope, ..Default::default() };
    let aug = prepare(&case5(), &spec, plan).unwrap();
    let b = build_model(&aug, &spec).unwrap();
    (aug, b)
}

/// Solve with every binary fixed; `None` when the restriction is infeasible.
fn solve_fixed(b: &BuiltModel, bits: &[bool]) -> Option<NetworkState> {
    let mut m = b.model.clone();
    for (k, i) in m.binaries().into_iter().enumerate() {
        let v = if bits[k] { 1.0 } else { 0.0 };
        m.vars[i].lb = v;
        m.vars[i].ub = v;
    }
    let r = solve(&m, &SolverOptions::default()).ok()?;
    r.status.has_solution().then(|| extract(b, &r.x))
}

fn switch_voltage_gap(net: &Network, st: &NetworkState) -> f64 {
    let ac: BTreeMap<usize, (f64, Option<f64>)> = st.ac_buses.iter().map(|b| (b.id, (b.vm, b.va))).collect();
    let dc: BTreeMap<usize, f64> = st.dc_buses.iter().map(|b| (b.id, b.v)).collect();
    let closed: BTreeMap<usize, bool> = st.switches.iter().map(|s| (s.id, s.closed)).collect();
    let mut worst: f64 = 0.0;
    for s in net.switches.iter().filter(|s| closed[&s.id]) {
        let gap = match s.kind.side() {
            Side::Ac => {
                let (a, b) = (ac[&s.from], ac[&s.to]);
                let dth = match (a.1, b.1) {
                    (Some(x), Some(y)) => (x - y).abs(),
                    _ => 0.0,
                };
                (a.0 - b.0).abs().max(dth)
            }
            Side::Dc => (dc[&s.from] - dc[&s.to]).abs(),
        };
        worst = worst.max(gap);
    }
    worst
}

/// Flows of de-energized elements and open switches.
fn dead_flow(st: &NetworkState) -> f64 {
    let mut m: f64 = 0.0;
    for b in st.ac_branches.iter().filter(|b| !b.on) {
        m = m.max(b.p_from.abs()).max(b.q_from.abs()).max(b.p_to.abs()).max(b.q_to.abs());
    }
    for d in st.dc_branches.iter().filter(|d| !d.on) {
        m = m.max(d.p_from.abs()).max(d.p_to.abs());
    }
    for c in st.converters.iter().filter(|c| !c.on) {
        m = m.max(c.p_ac.abs()).max(c.q_ac.abs()).max(c.p_dc.abs());
    }
    for s in st.switches.iter().filter(|s| !s.closed) {
        m = m.max(s.p.abs()).max(s.q.unwrap_or(0.0).abs());
    }
    m
}

fn bs_bits(aug: &AugmentedNetwork, refs: &[gridtopo::formulation::BinaryRef], choice: &[bool], zil: bool) -> Vec<bool> {
    let bb = &aug.busbars[0];
    let mut topo = Topology::default();
    topo.switches.insert(bb.zil, zil);
    for (d, &c) in bb.elements.iter().zip(choice) {
        topo.switches.insert(d.to_original, c);
        topo.switches.insert(d.to_half, !c);
    }
    topo.to_binaries(refs)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn ots_restrictions_respect_de_energization(bits in prop::collection::vec(any::<bool>(), 13), lpac in any::<bool>()) {
        let f = if lpac { Formulation::Lpac } else { Formulation::Soc };
        let (_, b) = built(ProblemKind::Ots, f, Scope::AcDc, &SplitPlan::default());
        if let Some(st) = solve_fixed(&b, &bits) {
            prop_assert!(dead_flow(&st) <= 1e-9, "{}", dead_flow(&st));
        }
    }

    #[test]
    fn bs_restrictions_tie_closed_switches(choice in prop::collection::vec(any::<bool>(), 7), zil in any::<bool>(), lpac in any::<bool>()) {
        let f = if lpac { Formulation::Lpac } else { Formulation::Soc };
        let (aug, b) = built(ProblemKind::Bs, f, Scope::None, &split(&[2]));
        let refs = b.map.binary_refs();
        let bits = bs_bits(&aug, &refs, &choice, zil);
        if let Some(st) = solve_fixed(&b, &bits) {
            prop_assert!(dead_flow(&st) <= 1e-9);
            prop_assert!(switch_voltage_gap(&aug.net, &st) <= 1e-6);
            // Exclusivity: exactly one switch of each pair is closed.
            let closed: BTreeMap<usize, bool> = st.switches.iter().map(|s| (s.id, s.closed)).collect();
            for d in &aug.busbars[0].elements {
                prop_assert!(closed[&d.to_original] ^ closed[&d.to_half]);
            }
        }
    }

    #[test]
    fn exact_check_of_random_splits(choice in prop::collection::vec(any::<bool>(), 7), zil in any::<bool>()) {
        let spec = ProblemSpec { kind: ProblemKind::Bs, scope: Scope::None, ..Default::default() };
        let aug = prepare(&case5(), &spec, &split(&[2])).unwrap();
        let bb = &aug.busbars[0];
        let mut topo = Topology::default();
        topo.switches.insert(bb.zil, zil);
        for (d, &c) in bb.elements.iter().zip(&choice) {
            topo.switches.insert(d.to_original, c);
            topo.switches.insert(d.to_half, !c);
        }
        let rep = fix_and_check(&aug, &topo, &spec, None, DEFAULT_TOL).unwrap();
        if rep.ac_feasible {
            let st = rep.state.as_ref().unwrap();
            let applied = topo.apply(&aug.net);
            prop_assert!(switch_voltage_gap(&applied, st) <= 1e-6);
            prop_assert!(dead_flow(st) <= 1e-9);
            // Switch ratings hold at the recomputed point.
            for s in &st.switches {
                let sw = applied.switches.iter().find(|x| x.id == s.id).unwrap();
                prop_assert!(s.p.hypot(s.q.unwrap_or(0.0)) <= sw.rating + 1e-6);
            }
            prop_assert!(rep.audit.as_ref().unwrap().max() <= DEFAULT_TOL);
        }
    }

    #[test]
    fn leq_mode_allows_both_open(choice in prop::collection::vec(0u8..3, 7)) {
        let spec = ProblemSpec { kind: ProblemKind::OtsBs, formulation: Formulation::Lpac, scope: Scope::None, ..Default::default() };
        let aug = prepare(&case5(), &spec, &split(&[2])).unwrap();
        let b = build_model(&aug, &spec).unwrap();
        let bb = &aug.busbars[0];
        let mut topo = Topology::default();
        for (d, &c) in bb.elements.iter().zip(&choice) {
            topo.switches.insert(d.to_original, c == 1);
            topo.switches.insert(d.to_half, c == 2);
        }
        let bits = topo.to_binaries(&b.map.binary_refs());
        // With both switches of a pair closed the restriction must be rejected.
        let mut both = bits.clone();
        let refs = b.map.binary_refs();
        let d0 = &bb.elements[0];
        for (k, r) in refs.iter().enumerate() {
            if *r == gridtopo::formulation::BinaryRef::Switch(d0.to_original) || *r == gridtopo::formulation::BinaryRef::Switch(d0.to_half) {
                both[k] = true;
            }
        }
        prop_assert!(solve_fixed(&b, &both).is_none());
        if let Some(st) = solve_fixed(&b, &bits) {
            prop_assert!(dead_flow(&st) <= 1e-9);
        }
    }
}
