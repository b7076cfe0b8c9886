//! Result files: study JSON (run times split off into a metadata file), the
//! comparison CSV and the plain-text report.

use anyhow::{Context, Result};
use gridtopo::feasibility::{benefit, FeasibilityReport};
use gridtopo::formulation::ProblemKind;
use gridtopo::study::StudyResult;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub case: String,
    pub kind: ProblemKind,
    pub opf_objective: Option<f64>,
    pub results: Vec<StudyResult>,
}

/// Pull every `time_s` out of `v`, recording it under its JSON path.
fn take_times(v: &mut Value, path: &str, out: &mut serde_json::Map<String, Value>) {
    match v {
        Value::Object(m) => {
            if let Some(t) = m.remove("time_s") {
                out.insert(format!("{path}/time_s"), t);
            }
            for (k, c) in m.iter_mut() {
                take_times(c, &format!("{path}/{k}"), out);
            }
        }
        Value::Array(a) => {
            for (k, c) in a.iter_mut().enumerate() {
                take_times(c, &format!("{path}/{k}"), out);
            }
        }
        _ => {}
    }
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Write `result.json` (reproducible) and `metadata.json` (run times).
pub fn write_results(dir: &Path, doc: &ResultDocument) -> Result<()> {
    let mut v = serde_json::to_value(doc)?;
    let mut times = serde_json::Map::new();
    take_times(&mut v, "", &mut times);
    write(dir, "result.json", &pretty(&v))?;
    let meta = serde_json::json!({ "version": env!("CARGO_PKG_VERSION"), "run_times": times });
    write(dir, "metadata.json", &pretty(&meta))
}

pub fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(name);
    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
}

/// One CSV row per study. The benefit column is derived from the two
/// objective columns of the same row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub opf_objective: Option<f64>,
    pub topo_objective: Option<f64>,
    pub time_s: f64,
    pub binaries: usize,
    pub ac_feasible: bool,
    pub lo_vs_opf: Option<bool>,
    pub benefit_pct: Option<f64>,
}

pub fn comparison_row(r: &StudyResult) -> ComparisonRow {
    let check: Option<&FeasibilityReport> = r.check.as_ref();
    let feasible = check.is_some_and(|c| c.ac_feasible);
    let topo = r.topo_objective();
    let (lo, ben) = match (feasible, r.opf_objective, topo) {
        (true, Some(b), Some(t)) => (Some(t < b), Some(benefit(b, t))),
        _ => (None, None),
    };
    ComparisonRow {
        model: format!("{}-{}", r.formulation.name(), r.kind.name()),
        opf_objective: r.opf_objective,
        topo_objective: topo,
        time_s: r.solve.time_s,
        binaries: r.solve.binaries,
        ac_feasible: feasible,
        lo_vs_opf: lo,
        benefit_pct: ben,
    }
}

pub fn comparison_csv(results: &[StudyResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        w.serialize(comparison_row(r))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn num(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.3}"))
}

/// Table laid out like the study tables: one line per formulation.
pub fn report_table(doc: &ResultDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "case {} ({}), exact OPF objective {}", doc.case, doc.kind.name(), num(doc.opf_objective));
    let _ = writeln!(
        s,
        "{:<12} {:>12} {:>10} {:>8} {:>8} {:>10} {:>12} {:>8} {:>10}",
        "model", "objective", "time [s]", "binaries", "status", "check [s]", "exact obj", "AC feas", "benefit %"
    );
    for r in &doc.results {
        let c = r.check.as_ref();
        let row = comparison_row(r);
        let _ = writeln!(
            s,
            "{:<12} {:>12} {:>10.2} {:>8} {:>8} {:>10} {:>12} {:>8} {:>10}",
            row.model,
            num(r.solve.objective),
            r.solve.time_s,
            row.binaries,
            format!("{:?}", r.solve.status).to_lowercase(),
            c.map_or("-".into(), |c| format!("{:.3}", c.time_s)),
            num(row.topo_objective),
            if c.is_none() { "-" } else if row.ac_feasible { "yes" } else { "no" },
            row.benefit_pct.map_or("-".into(), |b| format!("{b:.2}")),
        );
    }
    s
}
