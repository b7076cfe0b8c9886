mod common;

use common::{case39, case5, micro3, split};
use gridtopo::augment::{attached, augment, count_switches, split_busbars, tag_switchable, AugmentError, BusSelector, SplitPlan, SwitchableSet};
use gridtopo::feasibility::{fix_and_check, DEFAULT_TOL};
use gridtopo::formulation::{build_model, ProblemKind, ProblemSpec, Scope};
use gridtopo::network::{island_decomposition, validate_network, AcBus, BusKind, Generator, Load, Network, Side, SwitchKind};
use gridtopo::state::Topology;
use gridtopo::study::{exact_opf, prepare};
use proptest::prelude::*;
use std::collections::BTreeSet;

/// A star: bus 1 joined to buses 2..=n+1, generator and load elsewhere, so
/// bus 1 carries exactly `n` elements.
fn star(n: usize) -> Network {
    let mut b1 = AcBus::new(1);
    b1.reference = true;
    let mut buses = vec![b1];
    let mut lines = Vec::new();
    for k in 0..n {
        buses.push(AcBus::new(k + 2));
        lines.push(common::line(k + 1, 1, k + 2, 0.01, 0.1, Some(1.0)));
    }
    let net = Network {
        name: format!("star{n}"),
        base_mva: 100.0,
        ac_buses: buses,
        ac_branches: lines,
        generators: vec![Generator { id: 1, bus: 2, pmin: 0.0, pmax: 1.0, qmin: -1.0, qmax: 1.0, c1: 1.0, c0: 0.0 }],
        loads: vec![Load { id: 1, side: Side::Ac, bus: n + 1, p: 0.1, q: 0.0 }],
        ..Default::default()
    };
    validate_network(net).unwrap()
}

fn binaries(net: &Network, kind: ProblemKind, scope: Scope, plan: &SplitPlan) -> usize {
    let spec = ProblemSpec { kind, scope, ..Default::default() };
    let aug = prepare(net, &spec, plan).unwrap();
    build_model(&aug, &spec).unwrap().model.binaries().len()
}

#[test]
fn one_island_each_side() {
    let isl = island_decomposition(&case5());
    assert_eq!(isl.ac, vec![vec![1, 2, 3, 4, 5]]);
    assert_eq!(isl.dc, vec![vec![1, 2, 3]]);
}

#[test]
fn opening_all_dc_branches_gives_three_dc_islands() {
    let mut net = case5();
    for d in &mut net.dc_branches {
        d.in_service = false;
    }
    assert_eq!(island_decomposition(&net).dc, vec![vec![1], vec![2], vec![3]]);
}

#[test]
fn open_zil_separates_busbar_halves() {
    let aug = augment(&case5(), &split(&[2])).unwrap();
    let bb = &aug.busbars[0];
    let mut topo = Topology::default();
    topo.switches.insert(bb.zil, false);
    // Every element on the original half except the generator.
    for d in &bb.elements {
        let on_half = d.element.kind == gridtopo::network::ElementKind::Generator;
        topo.switches.insert(d.to_original, !on_half);
        topo.switches.insert(d.to_half, on_half);
    }
    let isl = island_decomposition(&topo.apply(&aug.net));
    let gen = bb.elements.iter().find(|d| d.element.kind == gridtopo::network::ElementKind::Generator).unwrap();
    // Oracle: breadth-first search over in-service branches and closed switches.
    let net = topo.apply(&aug.net);
    let mut seen = BTreeSet::from([bb.half]);
    let mut stack = vec![bb.half];
    while let Some(b) = stack.pop() {
        let nbrs = net
            .ac_branches
            .iter()
            .filter(|l| l.in_service)
            .map(|l| (l.from, l.to))
            .chain(net.switches.iter().filter(|s| s.closed && s.kind.side() == Side::Ac).map(|s| (s.from, s.to)));
        for (f, t) in nbrs {
            for (x, y) in [(f, t), (t, f)] {
                if x == b && seen.insert(y) {
                    stack.push(y);
                }
            }
        }
    }
    assert_eq!(seen, BTreeSet::from([bb.half, gen.aux]));
    assert!(isl.ac.iter().any(|c| c.iter().copied().collect::<BTreeSet<_>>() == seen));
    assert_eq!(isl.ac.len(), 2);
}

#[test]
fn reverse_views_mirror_forward_ones() {
    let net = case39();
    let fwd: BTreeSet<_> = net.ac_branches.iter().map(|l| (l.id, l.from, l.to)).collect();
    let rev: BTreeSet<_> = net.ac_reverse().into_iter().map(|(l, i, j)| (l, j, i)).collect();
    assert_eq!(fwd, rev);
    let dfwd: BTreeSet<_> = net.dc_branches.iter().map(|d| (d.id, d.from, d.to)).collect();
    let drev: BTreeSet<_> = net.dc_reverse().into_iter().map(|(l, i, j)| (l, j, i)).collect();
    assert_eq!(dfwd, drev);
}

#[test]
fn busbar_two_adds_fifteen_switches() {
    let aug = augment(&case5(), &split(&[2])).unwrap();
    assert_eq!(aug.added_switches, 15);
    assert_eq!(aug.net.switches.len(), 15);
    assert_eq!(binaries(&case5(), ProblemKind::Bs, Scope::None, &split(&[2])), 15);
}

#[test]
fn busbars_two_and_four_add_twenty_four() {
    assert_eq!(augment(&case5(), &split(&[2, 4])).unwrap().added_switches, 24);
    assert_eq!(binaries(&case5(), ProblemKind::Bs, Scope::None, &split(&[2, 4])), 24);
}

#[test]
fn count_formula_examples() {
    let one = SplitPlan { busbars: vec![BusSelector { side: Side::Ac, bus: 1 }], ..Default::default() };
    assert_eq!(count_switches(&one, &star(4)).unwrap(), 9);
    assert_eq!(split_busbars(&star(4), &one).unwrap().added_switches, 9);
    // Two busbars with 3 and 5 elements: centre of a 3-star and centre of a 5-star.
    let mut net = star(5);
    net.ac_buses.push(AcBus::new(100));
    for (k, to) in [2, 3, 4].into_iter().enumerate() {
        net.ac_branches.push(common::line(100 + k, 100, to, 0.01, 0.1, None));
    }
    let net = validate_network(net).unwrap();
    let plan = SplitPlan { busbars: vec![BusSelector { side: Side::Ac, bus: 100 }, BusSelector { side: Side::Ac, bus: 1 }], ..Default::default() };
    assert_eq!(attached(&net, Side::Ac, 100).len(), 3);
    assert_eq!(attached(&net, Side::Ac, 1).len(), 5);
    assert_eq!(count_switches(&plan, &net).unwrap(), 18);
    assert_eq!(split_busbars(&net, &plan).unwrap().added_switches, 18);
}

#[test]
fn bad_plans_are_rejected() {
    let net = case5();
    assert_eq!(augment(&net, &split(&[9])).unwrap_err(), AugmentError::UnknownBus(Side::Ac, 9));
    assert_eq!(augment(&net, &split(&[2, 2])).unwrap_err(), AugmentError::Duplicate(Side::Ac, 2));
    let set = SwitchableSet { ac_branches: vec![42], ..Default::default() };
    assert!(tag_switchable(&net, &set).is_err());
}

#[test]
fn ots_binary_counts() {
    let net = case5();
    assert_eq!(binaries(&net, ProblemKind::Ots, Scope::Ac, &SplitPlan::default()), 7);
    assert_eq!(binaries(&net, ProblemKind::Ots, Scope::AcDc, &SplitPlan::default()), 13);
    assert_eq!(binaries(&net, ProblemKind::Ots, Scope::None, &SplitPlan::default()), 0);
    assert_eq!(binaries(&case39(), ProblemKind::Ots, Scope::AcDc, &SplitPlan::default()), 68);
}

#[test]
fn tagging_sets_flags_only() {
    let net = case5();
    let tagged = tag_switchable(&net, &SwitchableSet::all(&net, true, false)).unwrap();
    assert!(tagged.ac_branches.iter().all(|l| l.switchable));
    assert!(tagged.dc_branches.iter().all(|d| !d.switchable));
    let mut back = tagged.clone();
    back.ac_branches.iter_mut().for_each(|l| l.switchable = false);
    assert_eq!(back, net);
}

#[test]
fn split_defaults() {
    let net = case5();
    let aug = augment(&net, &split(&[1])).unwrap();
    let bb = &aug.busbars[0];
    // The reference flag stays on the original half.
    assert!(aug.net.ac_bus(1).unwrap().reference);
    assert!(!aug.net.ac_bus(bb.half).unwrap().reference);
    assert_eq!(aug.net.ac_bus(bb.half).unwrap().kind, BusKind::SplitHalf);
    // Element switches inherit the element rating; the ZIL carries their sum.
    let zil = aug.net.switches.iter().find(|s| s.id == bb.zil).unwrap();
    assert_eq!(zil.kind, SwitchKind::AcZil);
    let pair_sum: f64 = bb.elements.iter().map(|d| aug.net.switches.iter().find(|s| s.id == d.to_original).unwrap().rating).sum();
    assert!((zil.rating - pair_sum).abs() < 1e-12);
    for d in &bb.elements {
        if d.element.kind == gridtopo::network::ElementKind::AcBranch {
            let rate = net.ac_branches.iter().find(|l| l.id == d.element.id).unwrap().rate.unwrap();
            assert_eq!(aug.net.switches.iter().find(|s| s.id == d.to_half).unwrap().rating, rate);
        }
    }
    // No load or generation is left on either half.
    assert!(aug.net.loads.iter().all(|l| l.bus != 1 && l.bus != bb.half));
    assert!(aug.net.generators.iter().all(|g| g.bus != 1 && g.bus != bb.half));
}

#[test]
fn augmentation_is_deterministic() {
    let plan = split(&[2, 4]);
    assert_eq!(augment(&case5(), &plan).unwrap(), augment(&case5(), &plan).unwrap());
}

#[test]
fn merged_split_reproduces_the_opf() {
    let net = case5();
    let spec = ProblemSpec::default();
    let base = exact_opf(&net, &spec).unwrap().objective.unwrap();
    let aug = augment(&net, &split(&[2])).unwrap();
    let bb = &aug.busbars[0];
    let mut topo = Topology::default();
    topo.switches.insert(bb.zil, true);
    for d in &bb.elements {
        topo.switches.insert(d.to_original, true);
        topo.switches.insert(d.to_half, false);
    }
    let rep = fix_and_check(&aug, &topo, &spec, Some(base), DEFAULT_TOL).unwrap();
    assert!(rep.ac_feasible, "{}", rep.message);
    assert!((rep.objective.unwrap() - base).abs() < 1e-6, "{:?} vs {base}", rep.objective);
}

#[test]
fn micro_network_split_counts() {
    // Bus 1 carries two lines and a generator.
    assert_eq!(augment(&micro3(), &split(&[1])).unwrap().added_switches, 7);
}

proptest! {
    #[test]
    fn switch_count_formula(mask in 1u32..(1 << 8)) {
        let net = case5();
        let sel: Vec<BusSelector> = (0..8usize)
            .filter(|k| mask >> k & 1 == 1)
            .map(|k| if k < 5 { BusSelector { side: Side::Ac, bus: k + 1 } } else { BusSelector { side: Side::Dc, bus: k - 4 } })
            .collect();
        let plan = SplitPlan { busbars: sel.clone(), ..Default::default() };
        let n: usize = sel.iter().map(|s| attached(&net, s.side, s.bus).len()).sum();
        let aug = augment(&net, &plan).unwrap();
        prop_assert_eq!(aug.added_switches, 2 * n + sel.len());
        prop_assert_eq!(count_switches(&plan, &net).unwrap(), aug.added_switches);
        prop_assert_eq!(aug.net.switches.len(), aug.added_switches);
        // Every switch pair is mutual and serves one element.
        for s in aug.net.switches.iter().filter(|s| !s.kind.is_zil()) {
            let p = aug.net.switches.iter().find(|t| Some(t.id) == s.partner).unwrap();
            prop_assert_eq!(p.partner, Some(s.id));
            prop_assert_eq!(p.element, s.element);
        }
    }

    #[test]
    fn islands_partition_the_buses(open in prop::collection::vec(any::<bool>(), 10)) {
        let mut net = case5();
        for (l, o) in net.ac_branches.iter_mut().zip(&open) {
            l.in_service = !o;
        }
        for (d, o) in net.dc_branches.iter_mut().zip(&open[7..]) {
            d.in_service = !o;
        }
        let isl = island_decomposition(&net);
        let ac: Vec<usize> = isl.ac.iter().flatten().copied().collect();
        let set: BTreeSet<usize> = ac.iter().copied().collect();
        prop_assert_eq!(ac.len(), set.len());
        prop_assert_eq!(set, net.ac_buses.iter().map(|b| b.id).collect::<BTreeSet<_>>());
        prop_assert_eq!(isl.dc.iter().map(Vec::len).sum::<usize>(), 3);
    }
}
