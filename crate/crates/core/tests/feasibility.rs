mod common;

use common::{case5, micro3, split};
use gridtopo::augment::{augment, AugmentedNetwork, SplitPlan};
use gridtopo::feasibility::{benefit, fix_and_check, islanded_demand, power_flow, residual_audit, PfOptions, PfSetpoints, DEFAULT_TOL};
use gridtopo::formulation::{Formulation, ProblemKind, ProblemSpec, Scope};
use gridtopo::network::{AcBus, Network};
use gridtopo::state::Topology;
use gridtopo::study::{exact_opf, prepare, run_study};

fn ots_spec(scope: Scope) -> ProblemSpec {
    ProblemSpec { kind: ProblemKind::Ots, scope, ..Default::default() }
}

fn baseline(net: &Network) -> f64 {
    exact_opf(net, &ProblemSpec::default()).unwrap().objective.unwrap()
}

#[test]
fn identity_topology_has_zero_benefit() {
    let net = case5();
    let base = baseline(&net);
    let spec = ots_spec(Scope::AcDc);
    let aug = prepare(&net, &spec, &SplitPlan::default()).unwrap();
    let rep = fix_and_check(&aug, &Topology::default(), &spec, Some(base), DEFAULT_TOL).unwrap();
    assert!(rep.ac_feasible, "{}", rep.message);
    assert!(rep.benefit_pct.unwrap().abs() < 1e-6, "{:?}", rep.benefit_pct);
    assert_eq!(rep.lower_than_baseline, Some(false));
    // The power flow at the recomputed dispatch lands on the same voltages.
    let pf = rep.power_flow.unwrap();
    assert!(pf.converged && pf.max_voltage_diff < 1e-6, "{pf:?}");
}

#[test]
fn benefit_definition() {
    assert!((benefit(194.139, 185.652) - 4.3716).abs() < 1e-4);
    assert_eq!(benefit(100.0, 100.0), 0.0);
}

#[test]
fn islanded_load_is_infeasible() {
    let net = micro3();
    let spec = ots_spec(Scope::Ac);
    let aug = prepare(&net, &spec, &SplitPlan::default()).unwrap();
    // Lines 1 (1-2) and 3 (2-3) open: bus 2 keeps its load and loses supply.
    let mut topo = Topology::default();
    topo.ac_branches.insert(1, false);
    topo.ac_branches.insert(3, false);
    assert!(!islanded_demand(&topo.apply(&aug.net)).is_empty());
    let rep = fix_and_check(&aug, &topo, &spec, None, DEFAULT_TOL).unwrap();
    assert!(!rep.ac_feasible);
    assert!(rep.benefit_pct.is_none() && rep.lower_than_baseline.is_none());
    assert!(!rep.message.is_empty());
}

#[test]
fn off_converter_injects_nothing() {
    let net = case5();
    let spec = ots_spec(Scope::Dc);
    let aug = prepare(&net, &spec, &SplitPlan::default()).unwrap();
    let mut topo = Topology::default();
    topo.converters.insert(3, false);
    let rep = fix_and_check(&aug, &topo, &spec, None, DEFAULT_TOL).unwrap();
    assert!(rep.ac_feasible, "{}", rep.message);
    let st = rep.state.as_ref().unwrap();
    let c = st.converters.iter().find(|c| c.id == 3).unwrap();
    assert!(!c.on);
    // Transformer and filter stay energized; only the valve side is off.
    for v in [c.p_ac, c.q_ac, c.p_dc, c.i] {
        assert_eq!(v, 0.0);
    }
    let applied = topo.apply(&aug.net);
    let pf = power_flow(&applied, &PfSetpoints::from_state(&applied, st), &PfOptions::default());
    assert!(pf.converged, "{}", pf.message);
    assert_eq!(pf.converters.get(&3).copied().unwrap_or((0.0, 0.0, 0.0)), (0.0, 0.0, 0.0));
}

#[test]
fn two_bus_no_load_is_flat() {
    let mut a = AcBus::new(1);
    a.reference = true;
    let net = Network {
        name: "flat".into(),
        base_mva: 100.0,
        ac_buses: vec![a, AcBus::new(2)],
        ac_branches: vec![gridtopo::network::AcBranch { b: 0.0, ..common::line(1, 1, 2, 0.01, 0.1, None) }],
        ..Default::default()
    };
    let r = power_flow(&net, &PfSetpoints::default(), &PfOptions::default());
    assert!(r.converged && r.iterations <= 1, "{r:?}");
    for (vm, va) in r.ac.values() {
        assert!((vm - 1.0).abs() < 1e-12 && va.abs() < 1e-12);
    }
}

#[test]
fn audit_of_the_opf_and_of_a_perturbed_point() {
    let net = case5();
    let r = run_study(&net, &ProblemSpec::default(), &SplitPlan::default(), None).unwrap();
    let st = r.state.unwrap();
    let a = residual_audit(&net, &st).unwrap();
    assert!(a.max() <= 1e-6, "{a:?}");
    let mut bad = st.clone();
    bad.ac_buses.iter_mut().find(|b| b.id == 3).unwrap().vm += 0.1;
    let a = residual_audit(&net, &bad).unwrap();
    assert!(a.ac_p.max(a.ac_q) > DEFAULT_TOL, "{a:?}");
}

#[test]
fn closed_zil_angle_gap_is_reported() {
    let net = case5();
    let base = baseline(&net);
    let spec = ProblemSpec::default();
    let aug = augment(&net, &split(&[2])).unwrap();
    let bb = &aug.busbars[0];
    let mut topo = Topology::default();
    for d in &bb.elements {
        topo.switches.insert(d.to_original, true);
        topo.switches.insert(d.to_half, false);
    }
    let rep = fix_and_check(&aug, &topo, &spec, Some(base), DEFAULT_TOL).unwrap();
    assert!(rep.ac_feasible, "{}", rep.message);
    let mut st = rep.state.unwrap();
    let applied = topo.apply(&aug.net);
    // Merge correctness: the two halves carry one voltage.
    let v = |st: &gridtopo::state::NetworkState, id: usize| {
        let b = st.ac_buses.iter().find(|b| b.id == id).unwrap();
        (b.vm, b.va.unwrap())
    };
    let (v1, v2) = (v(&st, bb.bus), v(&st, bb.half));
    assert!((v1.0 - v2.0).abs() < 1e-9 && (v1.1 - v2.1).abs() < 1e-9);
    st.ac_buses.iter_mut().find(|b| b.id == bb.half).unwrap().va = Some(v1.1 + 0.01);
    let a = residual_audit(&applied, &st).unwrap();
    assert!((a.limits - 0.01).abs() < 1e-9, "{a:?}");
}

#[test]
fn soc_dispatch_costs_at_least_the_relaxation() {
    let net = case5();
    let base = baseline(&net);
    let r = run_study(&net, &ProblemSpec::new(ProblemKind::Opf, Formulation::Soc), &SplitPlan::default(), Some(base)).unwrap();
    let c = r.check.unwrap();
    assert!(c.objective.unwrap() >= r.solve.objective.unwrap());
}

#[test]
fn plain_augmented_network_checks_like_the_opf() {
    let net = micro3();
    let base = baseline(&net);
    let rep = fix_and_check(&AugmentedNetwork::plain(net), &Topology::default(), &ProblemSpec::default(), Some(base), DEFAULT_TOL).unwrap();
    assert!(rep.ac_feasible);
    assert!((rep.objective.unwrap() - base).abs() < 1e-6);
}
