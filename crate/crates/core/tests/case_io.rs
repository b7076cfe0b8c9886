mod common;

use common::{case39, case5, data, micro3, split};
use gridtopo::augment::augment;
use gridtopo::case_io::{load_case, parse_json_case, parse_json_document, parse_matpower_acdc, write_json_case, write_json_document, CaseError};
use gridtopo::network::{validate, validate_network, Network};
use proptest::prelude::*;

fn case5_text() -> String {
    std::fs::read_to_string(data("case5_acdc.m")).unwrap()
}

/// Drop every `mpc.<name> = [ ... ];` block whose name is in `names`.
fn strip_tables(text: &str, names: &[&str]) -> String {
    let mut out = String::new();
    let mut skipping = false;
    for line in text.lines() {
        let t = line.trim_start();
        if names.iter().any(|n| t.starts_with(&format!("mpc.{n} "))) {
            skipping = !t.contains("];") && t.contains('[');
            continue;
        }
        if skipping {
            if t.starts_with("];") {
                skipping = false;
            }
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

#[test]
fn five_bus_counts() {
    assert_eq!(case5().counts(), (5, 3, 3, 7, 3));
}

#[test]
fn thirty_nine_bus_counts() {
    assert_eq!(case39().counts(), (39, 10, 10, 46, 12));
}

#[test]
fn absent_dc_sections_give_pure_ac() {
    let text = strip_tables(&case5_text(), &["busdc", "convdc", "branchdc", "dcpol"]);
    let raw = parse_matpower_acdc(&text).unwrap();
    assert!(raw.net.dc_buses.is_empty() && raw.net.dc_branches.is_empty() && raw.net.converters.is_empty());
    assert_eq!(raw.net.ac_buses.len(), 5);
    validate(raw).unwrap();
}

#[test]
fn missing_bus_table_is_reported() {
    let text = strip_tables(&case5_text(), &["bus"]);
    assert!(matches!(parse_matpower_acdc(&text), Err(CaseError::Missing(s)) if s == "bus"));
}

#[test]
fn short_row_is_reported_with_its_line() {
    let bad = case5_text().replace("\t3\t1\t45\t15\t0\t0\t1\t1\t0\t345\t1\t1.1\t0.9;", "\t3\t1\t45\t15\t0;");
    match parse_matpower_acdc(&bad) {
        Err(CaseError::RowWidth { line, expected, found, .. }) => assert_eq!((line, expected, found), (14, 13, 5)),
        other => panic!("expected a row-width error, got {other:?}"),
    }
}

#[test]
fn every_bundled_case_parses() {
    for entry in std::fs::read_dir(data("")).unwrap() {
        let p = entry.unwrap().path();
        load_case(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

const MINIMAL: &str = r#"{
  "schema_version": 1,
  "name": "two-bus",
  "base_mva": 100,
  "ac_buses": [
    {"id": 1, "vmin": 0.9, "vmax": 1.1, "va_min": -3.14, "va_max": 3.14, "reference": true},
    {"id": 2, "vmin": 0.9, "vmax": 1.1, "va_min": -3.14, "va_max": 3.14}
  ],
  "dc_buses": [],
  "ac_branches": [{"id": 1, "from": 1, "to": 2, "r": 0.01, "x": 0.1, "rate": 2.0, "angmin": -1, "angmax": 1}],
  "dc_branches": [],
  "converters": [],
  "generators": [{"id": 1, "bus": 1, "pmin": 0, "pmax": 2, "qmin": -1, "qmax": 1, "c1": 10, "c0": 0}],
  "loads": [{"id": 1, "side": "ac", "bus": 2, "p": 0.5, "q": 0.1}],
  "switches": []
}"#;

#[test]
fn minimal_document() {
    let raw = parse_json_case(MINIMAL).unwrap();
    assert_eq!(raw.net.counts(), (2, 0, 0, 1, 0));
    assert_eq!((raw.net.generators.len(), raw.net.loads.len()), (1, 1));
    validate(raw).unwrap();
}

#[test]
fn missing_base_mva_is_a_schema_error() {
    let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
    v.as_object_mut().unwrap().remove("base_mva");
    match parse_json_case(&v.to_string()) {
        Err(CaseError::Schema { msg, .. }) => assert!(msg.contains("base_mva"), "{msg}"),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn schema_errors_carry_a_pointer() {
    let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
    v["ac_branches"][0]["r"] = serde_json::json!("small");
    match parse_json_case(&v.to_string()) {
        Err(CaseError::Schema { pointer, .. }) => assert_eq!(pointer, "/ac_branches/0/r"),
        other => panic!("expected a schema error, got {other:?}"),
    }
    v["ac_branches"][0]["r"] = serde_json::json!(0.01);
    v["schema_version"] = serde_json::json!(7);
    assert!(matches!(parse_json_case(&v.to_string()), Err(CaseError::Schema { pointer, .. }) if pointer == "/schema_version"));
}

#[test]
fn json_rendering_matches_matpower() {
    let net = case5();
    let text = write_json_case(&net);
    let back = validate(parse_json_case(&text).unwrap()).unwrap();
    assert_eq!(back, net);
}

#[test]
fn empty_dc_arrays_are_written() {
    let v: serde_json::Value = serde_json::from_str(&write_json_case(&micro3())).unwrap();
    for key in ["dc_buses", "dc_branches", "converters", "switches"] {
        assert_eq!(v[key], serde_json::json!([]), "{key}");
    }
}

#[test]
fn augmented_network_round_trips() {
    let aug = augment(&case5(), &split(&[2])).unwrap();
    let text = write_json_case(&aug.net);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let sw = v["switches"].as_array().unwrap();
    assert_eq!(sw.len(), 15);
    assert!(sw.iter().any(|s| s["kind"] == "ac-zil"));
    assert_eq!(validate_network(parse_json_case(&text).unwrap().net).unwrap(), aug.net);
}

#[test]
fn split_plan_travels_with_the_document() {
    let plan = split(&[2, 4]);
    let text = write_json_document(&case5(), Some(&plan));
    assert_eq!(parse_json_document(&text).unwrap().split_plan, Some(plan));
}

#[test]
fn output_is_canonical() {
    let a = write_json_case(&case39());
    let b = write_json_case(&validate_network(parse_json_case(&a).unwrap().net).unwrap());
    assert_eq!(a, b);
}

fn perturbed(seed: Vec<f64>) -> Network {
    let mut net = case5();
    for (b, s) in net.ac_branches.iter_mut().zip(&seed) {
        b.r *= s;
        b.x *= s;
    }
    for (g, s) in net.generators.iter_mut().zip(&seed) {
        g.c1 *= s;
        g.pmax *= s;
    }
    net
}

proptest! {
    #[test]
    fn round_trip_is_identity(seed in prop::collection::vec(0.5f64..2.0, 7)) {
        let net = validate_network(perturbed(seed)).unwrap();
        let back = validate_network(parse_json_case(&write_json_case(&net)).unwrap().net).unwrap();
        prop_assert_eq!(back, net);
    }
}
