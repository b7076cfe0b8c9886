#![allow(dead_code)]

use gridtopo::augment::{BusSelector, SplitPlan};
use gridtopo::case_io::load_case;
use gridtopo::network::{validate_network, AcBranch, AcBus, Generator, Load, Network, Side};
use std::path::{Path, PathBuf};

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn case5() -> Network {
    load_case(&data("case5_acdc.m")).expect("bundled 5-bus case").0
}

pub fn case39() -> Network {
    load_case(&data("case39_acdc.m")).expect("bundled 39-bus case").0
}

pub fn split(buses: &[usize]) -> SplitPlan {
    SplitPlan { busbars: buses.iter().map(|&bus| BusSelector { side: Side::Ac, bus }).collect(), ..Default::default() }
}

pub fn line(id: usize, from: usize, to: usize, r: f64, x: f64, rate: Option<f64>) -> AcBranch {
    AcBranch { id, from, to, r, x, b: 0.02, tap: 1.0, shift: 0.0, rate, angmin: -1.0, angmax: 1.0, in_service: true, switchable: false }
}

/// Three AC buses in a triangle: cheap generation at bus 1, expensive at
/// bus 3, demand at buses 2 and 3.
pub fn micro3() -> Network {
    let mut b1 = AcBus::new(1);
    b1.reference = true;
    let net = Network {
        name: "micro3".into(),
        base_mva: 100.0,
        ac_buses: vec![b1, AcBus::new(2), AcBus::new(3)],
        ac_branches: vec![line(1, 1, 2, 0.01, 0.1, Some(1.2)), line(2, 1, 3, 0.02, 0.2, Some(0.6)), line(3, 2, 3, 0.01, 0.1, Some(1.0))],
        generators: vec![
            Generator { id: 1, bus: 1, pmin: 0.0, pmax: 2.0, qmin: -1.0, qmax: 1.0, c1: 10.0, c0: 0.0 },
            Generator { id: 2, bus: 3, pmin: 0.0, pmax: 2.0, qmin: -1.0, qmax: 1.0, c1: 30.0, c0: 0.0 },
        ],
        loads: vec![Load { id: 1, side: Side::Ac, bus: 2, p: 0.9, q: 0.2 }, Load { id: 2, side: Side::Ac, bus: 3, p: 0.5, q: 0.1 }],
        ..Default::default()
    };
    validate_network(net).expect("micro network is valid")
}
