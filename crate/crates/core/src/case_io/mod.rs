//! Case files: MATPOWER-style text with DC tables, and the native JSON
//! schema (see FORMATS.md).

mod matpower;

pub use matpower::{parse_matpower_acdc, read_text, MatpowerText, Table};

use crate::augment::SplitPlan;
use crate::network::{validate, Network, RawCase, ValidationError};
use serde::Serialize;
use std::path::Path;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown section `{name}` at line {line}")]
    UnknownSection { name: String, line: usize },
    #[error("section `{section}` line {line}: expected {expected} columns, found {found}")]
    RowWidth { section: String, line: usize, expected: usize, found: usize },
    #[error("duplicate bus id {id} at line {line}")]
    DuplicateBus { id: usize, line: usize },
    #[error("missing required section `{0}`")]
    Missing(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("schema violation at {pointer}: {msg}")]
    Schema { pointer: String, msg: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Parsed native document.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDocument {
    pub raw: RawCase,
    pub split_plan: Option<SplitPlan>,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        s.push('/');
        match seg {
            Segment::Seq { index } => s.push_str(&index.to_string()),
            Segment::Map { key } => s.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => s.push_str(variant),
            Segment::Unknown => s.push('?'),
        }
    }
    if s.is_empty() {
        s.push('/');
    }
    s
}

fn schema(pointer: impl Into<String>, msg: impl Into<String>) -> CaseError {
    CaseError::Schema { pointer: pointer.into(), msg: msg.into() }
}

pub fn parse_json_document(text: &str) -> Result<CaseDocument, CaseError> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema("/", format!("line {}, column {}: {e}", e.line(), e.column())))?;
    let obj = value.as_object_mut().ok_or_else(|| schema("/", "document must be an object"))?;
    match obj.remove("schema_version") {
        None => return Err(schema("/schema_version", "missing required key")),
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(schema("/schema_version", format!("unsupported version {v}"))),
    }
    let split_plan = match obj.remove("split_plan") {
        None | Some(serde_json::Value::Null) => None,
        Some(v) => Some(
            serde_path_to_error::deserialize::<_, SplitPlan>(v)
                .map_err(|e| schema(format!("/split_plan{}", pointer(e.path()).trim_end_matches('/')), e.inner().to_string()))?,
        ),
    };
    let net: Network = serde_path_to_error::deserialize(value).map_err(|e| schema(pointer(e.path()), e.inner().to_string()))?;
    Ok(CaseDocument { raw: RawCase { net }, split_plan })
}

pub fn parse_json_case(text: &str) -> Result<RawCase, CaseError> {
    parse_json_document(text).map(|d| d.raw)
}

#[derive(Serialize)]
struct DocOut<'a> {
    schema_version: u64,
    #[serde(flatten)]
    net: &'a Network,
    #[serde(skip_serializing_if = "Option::is_none")]
    split_plan: Option<&'a SplitPlan>,
}

/// Canonical JSON rendering; floats use the shortest representation that
/// parses back to the same value.
pub fn write_json_case(net: &Network) -> String {
    write_json_document(net, None)
}

pub fn write_json_document(net: &Network, split_plan: Option<&SplitPlan>) -> String {
    let doc = DocOut { schema_version: SCHEMA_VERSION, net, split_plan };
    let mut s = serde_json::to_string_pretty(&doc).expect("network serializes");
    s.push('\n');
    s
}

/// Read and validate a case, choosing the format from the extension
/// (`.json` native, anything else MATPOWER-style).
pub fn load_case(path: &Path) -> Result<(Network, Option<SplitPlan>), CaseError> {
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io { path: path.display().to_string(), source })?;
    let (raw, plan) = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let d = parse_json_document(&text)?;
        (d.raw, d.split_plan)
    } else {
        (parse_matpower_acdc(&text)?, None)
    };
    Ok((validate(raw)?, plan))
}
