//! MATPOWER-style text cases with the MatACDC/PowerModelsACDC DC tables
//! (`busdc`, `branchdc`, `convdc`, scalar `dcpol`).

use super::CaseError;
use crate::network::{AcBranch, AcBus, Converter, DcBranch, DcBus, Generator, Impedance, Load, Network, RawCase, Side};
use std::collections::BTreeMap;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<Vec<f64>>,
    /// 1-based source line of each row.
    pub lines: Vec<usize>,
}

/// Sections and scalars as they appear in the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatpowerText {
    pub name: String,
    pub scalars: BTreeMap<String, f64>,
    pub tables: BTreeMap<String, Table>,
}

const TABLES: &[&str] = &["bus", "gen", "gencost", "branch", "busdc", "branchdc", "convdc"];
const SCALARS: &[&str] = &["baseMVA", "dcpol", "baseMVAac", "baseMVAdc"];
const IGNORED: &[&str] = &["version", "bus_name", "areas", "pol"];

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> CaseError {
    CaseError::Syntax { line, col, msg: msg.into() }
}

fn number(tok: &str, line: usize, col: usize) -> Result<f64, CaseError> {
    match tok {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().map_err(|_| syntax(line, col, format!("expected a number, found `{tok}`"))),
    }
}

/// Tokenize the assignment structure of the file.
pub fn read_text(text: &str) -> Result<MatpowerText, CaseError> {
    let mut out = MatpowerText::default();
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let lineno = i + 1;
        let raw = lines[i];
        let code = raw.split('%').next().unwrap_or("");
        let trimmed = code.trim();
        i += 1;
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                out.name = rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let col0 = code.find(|c: char| !c.is_whitespace()).unwrap_or(0) + 1;
        let Some(rest) = trimmed.strip_prefix("mpc.") else {
            return Err(syntax(lineno, col0, format!("expected `mpc.<section> = ...`, found `{trimmed}`")));
        };
        let Some(eq) = rest.find('=') else {
            return Err(syntax(lineno, col0, "missing `=`"));
        };
        let key = rest[..eq].trim().to_string();
        let value = rest[eq + 1..].trim();
        let vcol = code.find('=').map_or(1, |p| p + 2);
        if IGNORED.contains(&key.as_str()) {
            if value.starts_with('{') && !value.contains('}') {
                while i < lines.len() && !lines[i].split('%').next().unwrap_or("").contains('}') {
                    i += 1;
                }
                i += 1;
            }
            continue;
        }
        if TABLES.contains(&key.as_str()) {
            if !value.starts_with('[') {
                return Err(syntax(lineno, vcol, format!("section `{key}` must be a matrix")));
            }
            let mut table = Table { rows: Vec::new(), lines: Vec::new() };
            // Content after '[' on the same line, then following lines until ']'.
            let mut chunks: Vec<(usize, usize, String)> = vec![(lineno, vcol + 1, value[1..].to_string())];
            let mut closed = value.contains(']');
            while !closed {
                if i >= lines.len() {
                    return Err(syntax(lineno, vcol, format!("unterminated matrix for `{key}`")));
                }
                let c = lines[i].split('%').next().unwrap_or("").to_string();
                closed = c.contains(']');
                chunks.push((i + 1, 1, c));
                i += 1;
            }
            for (ln, base_col, chunk) in chunks {
                let body = chunk.split(']').next().unwrap_or("");
                let mut offset = 0;
                for piece in body.split(';') {
                    let mut row = Vec::new();
                    let mut pos = 0;
                    for tok in piece.split(|c: char| c.is_whitespace() || c == ',') {
                        let start = piece[pos..].find(tok).map_or(pos, |p| p + pos);
                        pos = start + tok.len();
                        if tok.is_empty() {
                            continue;
                        }
                        row.push(number(tok, ln, base_col + offset + start)?);
                    }
                    offset += piece.len() + 1;
                    if !row.is_empty() {
                        if let Some(first) = table.rows.first() {
                            if first.len() != row.len() {
                                return Err(CaseError::RowWidth { section: key.clone(), line: ln, expected: first.len(), found: row.len() });
                            }
                        }
                        table.rows.push(row);
                        table.lines.push(ln);
                    }
                }
            }
            out.tables.insert(key, table);
            continue;
        }
        if SCALARS.contains(&key.as_str()) {
            let v = value.trim_end_matches(';').trim();
            out.scalars.insert(key, number(v, lineno, vcol)?);
            continue;
        }
        return Err(CaseError::UnknownSection { name: key, line: lineno });
    }
    Ok(out)
}

fn check_width(name: &str, t: &Table, allowed: &[usize], min: usize) -> Result<(), CaseError> {
    let Some(first) = t.rows.first() else { return Ok(()) };
    let ok = |w: usize| allowed.contains(&w) || (allowed.is_empty() && w >= min);
    let expected = if ok(first.len()) { first.len() } else { allowed.first().copied().unwrap_or(min) };
    for (row, &line) in t.rows.iter().zip(&t.lines) {
        if row.len() != expected || !ok(row.len()) {
            return Err(CaseError::RowWidth { section: name.into(), line, expected, found: row.len() });
        }
    }
    Ok(())
}

fn deg(v: f64) -> f64 {
    v * PI / 180.0
}

/// Parse a case and convert to per unit. Absent DC tables give a pure AC
/// network.
pub fn parse_matpower_acdc(text: &str) -> Result<RawCase, CaseError> {
    let mt = read_text(text)?;
    let base = *mt.scalars.get("baseMVA").ok_or_else(|| CaseError::Missing("baseMVA".into()))?;
    let empty = Table { rows: Vec::new(), lines: Vec::new() };
    let tab = |k: &str| mt.tables.get(k).unwrap_or(&empty);
    let bus = mt.tables.get("bus").ok_or_else(|| CaseError::Missing("bus".into()))?;
    check_width("bus", bus, &[13, 17], 13)?;
    check_width("gen", tab("gen"), &[10, 21, 25], 10)?;
    check_width("branch", tab("branch"), &[13, 17, 21], 13)?;
    check_width("busdc", tab("busdc"), &[9], 9)?;
    check_width("branchdc", tab("branchdc"), &[9], 9)?;
    check_width("convdc", tab("convdc"), &[], 34)?;
    if tab("gencost").rows.iter().any(|r| r.len() < 4 || r.len() < 4 + r[3] as usize) {
        return Err(CaseError::RowWidth { section: "gencost".into(), line: tab("gencost").lines[0], expected: 7, found: tab("gencost").rows[0].len() });
    }
    let mut net = Network { name: mt.name.clone(), base_mva: base, ..Default::default() };
    let mut loads = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (k, r) in bus.rows.iter().enumerate() {
        let id = r[0] as usize;
        if !seen.insert(id) {
            return Err(CaseError::DuplicateBus { id, line: bus.lines[k] });
        }
        let mut b = AcBus::new(id);
        b.reference = r[1] as i64 == 3;
        b.gs = r[4] / base;
        b.bs = r[5] / base;
        b.vmax = r[11];
        b.vmin = r[12];
        net.ac_buses.push(b);
        if r[2] != 0.0 || r[3] != 0.0 {
            loads.push((Side::Ac, id, r[2] / base, r[3] / base));
        }
    }
    let costs = tab("gencost");
    let mut gen_row = 0;
    for (k, r) in tab("gen").rows.iter().enumerate() {
        if r[7] <= 0.0 {
            continue;
        }
        gen_row += 1;
        let (c1, c0) = match costs.rows.get(k) {
            None => (0.0, 0.0),
            Some(c) => {
                if c[0] as i64 != 2 {
                    return Err(CaseError::Unsupported(format!("gencost line {}: only polynomial costs are supported", costs.lines[k])));
                }
                let n = c[3] as usize;
                let coef = &c[4..4 + n];
                if n > 2 && coef[..n - 2].iter().any(|v| *v != 0.0) {
                    return Err(CaseError::Unsupported(format!("gencost line {}: only linear costs are supported", costs.lines[k])));
                }
                match n {
                    0 => (0.0, 0.0),
                    1 => (0.0, coef[0]),
                    _ => (coef[n - 2] * base, coef[n - 1]),
                }
            }
        };
        net.generators.push(Generator {
            id: gen_row,
            bus: r[0] as usize,
            pmin: r[9] / base,
            pmax: r[8] / base,
            qmin: r[4] / base,
            qmax: r[3] / base,
            c1,
            c0,
        });
    }
    for (k, r) in tab("branch").rows.iter().enumerate() {
        let (angmin, angmax) = if r[11] == 0.0 && r[12] == 0.0 { (-PI, PI) } else { (deg(r[11]).max(-PI), deg(r[12]).min(PI)) };
        net.ac_branches.push(AcBranch {
            id: k + 1,
            from: r[0] as usize,
            to: r[1] as usize,
            r: r[2],
            x: r[3],
            b: r[4],
            tap: if r[8] == 0.0 { 1.0 } else { r[8] },
            shift: deg(r[9]),
            rate: if r[5] == 0.0 { None } else { Some(r[5] / base) },
            angmin,
            angmax,
            in_service: r[10] > 0.0,
            switchable: false,
        });
    }
    let mut dseen = std::collections::BTreeSet::new();
    for (k, r) in tab("busdc").rows.iter().enumerate() {
        let id = r[0] as usize;
        if !dseen.insert(id) {
            return Err(CaseError::DuplicateBus { id, line: tab("busdc").lines[k] });
        }
        net.dc_buses.push(DcBus { id, vmin: r[7], vmax: r[6], gs: 0.0, kind: Default::default(), parent: None });
        if r[3] != 0.0 {
            loads.push((Side::Dc, id, r[3] / base, 0.0));
        }
    }
    let poles = mt.scalars.get("dcpol").copied().unwrap_or(2.0) as u8;
    for (k, r) in tab("branchdc").rows.iter().enumerate() {
        net.dc_branches.push(DcBranch {
            id: k + 1,
            from: r[0] as usize,
            to: r[1] as usize,
            r: r[2],
            poles,
            rate: if r[5] == 0.0 { None } else { Some(r[5] / base) },
            in_service: r[8] > 0.0,
            switchable: false,
        });
    }
    for (k, r) in tab("convdc").rows.iter().enumerate() {
        let kv = r[17];
        let ibase = base / (3f64.sqrt() * kv);
        let pac_max = r[30] / base;
        let pac_min = r[31] / base;
        let pdc = 1.2 * pac_max.abs().max(pac_min.abs());
        net.converters.push(Converter {
            id: k + 1,
            dc_bus: r[0] as usize,
            ac_bus: r[1] as usize,
            loss_a: r[22] / base,
            loss_b: r[23] * ibase / base,
            loss_c: r[24].max(r[25]) * ibase * ibase / base,
            transformer: (r[10] != 0.0).then(|| Impedance { r: r[8], x: r[9] }),
            tap: if r[10] != 0.0 && r[11] != 0.0 { r[11] } else { 1.0 },
            filter_b: (r[13] != 0.0).then_some(r[12]),
            reactor: (r[16] != 0.0).then(|| Impedance { r: r[14], x: r[15] }),
            pac_min,
            pac_max,
            qac_min: r[33] / base,
            qac_max: r[32] / base,
            pdc_min: -pdc,
            pdc_max: pdc,
            i_max: r[20],
            vmin: r[19],
            vmax: r[18],
            in_service: r[21] > 0.0,
            switchable: false,
        });
    }
    for (k, (side, bus, p, q)) in loads.into_iter().enumerate() {
        net.loads.push(Load { id: k + 1, side, bus, p, q });
    }
    Ok(RawCase { net })
}
