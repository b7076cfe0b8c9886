//! Per-unit model of a hybrid AC/DC grid, its validation and island
//! decomposition, and the flat AC view in which converter stations are
//! expanded into internal buses and branches.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Ac,
    Dc,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKind {
    #[default]
    Normal,
    /// Second half of a split busbar.
    SplitHalf,
    /// Bus holding one detached element of a split busbar.
    Auxiliary,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

fn yes() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcBus {
    pub id: usize,
    pub vmin: f64,
    pub vmax: f64,
    pub va_min: f64,
    pub va_max: f64,
    /// Shunt conductance and susceptance at 1 p.u. voltage.
    #[serde(default)]
    pub gs: f64,
    #[serde(default)]
    pub bs: f64,
    #[serde(default)]
    pub reference: bool,
    #[serde(default, skip_serializing_if = "is_default")]
    pub kind: BusKind,
    /// Original busbar for split halves and auxiliary buses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
}

impl AcBus {
    pub fn new(id: usize) -> Self {
        AcBus { id, vmin: 0.9, vmax: 1.1, va_min: -PI, va_max: PI, gs: 0.0, bs: 0.0, reference: false, kind: BusKind::Normal, parent: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcBus {
    pub id: usize,
    pub vmin: f64,
    pub vmax: f64,
    #[serde(default)]
    pub gs: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub kind: BusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcBranch {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, half at each end.
    #[serde(default)]
    pub b: f64,
    #[serde(default = "one")]
    pub tap: f64,
    /// Phase shift in radians.
    #[serde(default)]
    pub shift: f64,
    /// Apparent-power rating; `None` means unlimited.
    pub rate: Option<f64>,
    pub angmin: f64,
    pub angmax: f64,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub in_service: bool,
    #[serde(default, skip_serializing_if = "is_default")]
    pub switchable: bool,
}

fn one() -> f64 {
    1.0
}

impl AcBranch {
    /// Series admittance g + jb.
    pub fn admittance(&self) -> (f64, f64) {
        let d = self.r * self.r + self.x * self.x;
        (self.r / d, -self.x / d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcBranch {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    /// 1 for monopolar, 2 for balanced bipolar links.
    pub poles: u8,
    pub rate: Option<f64>,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub in_service: bool,
    #[serde(default, skip_serializing_if = "is_default")]
    pub switchable: bool,
}

impl DcBranch {
    pub fn conductance(&self) -> f64 {
        1.0 / self.r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Impedance {
    pub r: f64,
    pub x: f64,
}

impl Impedance {
    pub fn admittance(&self) -> (f64, f64) {
        let d = self.r * self.r + self.x * self.x;
        (self.r / d, -self.x / d)
    }
}

/// Voltage-source converter station: grid bus - transformer - filter bus
/// (shunt susceptance) - phase reactor - converter bus, where the converter
/// exchanges power with its DC bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Converter {
    pub id: usize,
    pub ac_bus: usize,
    pub dc_bus: usize,
    /// Loss a + b I + c I^2, all per unit.
    pub loss_a: f64,
    pub loss_b: f64,
    pub loss_c: f64,
    pub transformer: Option<Impedance>,
    #[serde(default = "one")]
    pub tap: f64,
    pub filter_b: Option<f64>,
    pub reactor: Option<Impedance>,
    pub pac_min: f64,
    pub pac_max: f64,
    pub qac_min: f64,
    pub qac_max: f64,
    pub pdc_min: f64,
    pub pdc_max: f64,
    pub i_max: f64,
    /// Voltage bounds of the internal buses.
    pub vmin: f64,
    pub vmax: f64,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub in_service: bool,
    #[serde(default, skip_serializing_if = "is_default")]
    pub switchable: bool,
}

impl Converter {
    pub fn s_max(&self) -> f64 {
        let p = self.pac_min.abs().max(self.pac_max.abs());
        let q = self.qac_min.abs().max(self.qac_max.abs());
        p.hypot(q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    /// $/(p.u. h)
    pub c1: f64,
    /// $/h
    pub c0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: usize,
    pub side: Side,
    pub bus: usize,
    pub p: f64,
    #[serde(default)]
    pub q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchKind {
    AcElement,
    AcZil,
    DcElement,
    DcZil,
}

impl SwitchKind {
    pub fn side(self) -> Side {
        match self {
            SwitchKind::AcElement | SwitchKind::AcZil => Side::Ac,
            SwitchKind::DcElement | SwitchKind::DcZil => Side::Dc,
        }
    }

    pub fn is_zil(self) -> bool {
        matches!(self, SwitchKind::AcZil | SwitchKind::DcZil)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    AcBranch,
    DcBranch,
    Converter,
    Generator,
    Load,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ElementRef {
    pub kind: ElementKind,
    pub id: usize,
}

/// Lossless switch between two buses of the same side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub id: usize,
    pub kind: SwitchKind,
    pub from: usize,
    pub to: usize,
    /// Apparent-power rating (AC) or active-power rating (DC).
    pub rating: f64,
    /// The other switch of an element's pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<usize>,
    /// Element served by an element switch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<ElementRef>,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub closed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub ac_buses: Vec<AcBus>,
    pub dc_buses: Vec<DcBus>,
    pub ac_branches: Vec<AcBranch>,
    pub dc_branches: Vec<DcBranch>,
    pub converters: Vec<Converter>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub switches: Vec<Switch>,
}

/// A parsed case before validation; quantities are already per unit.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCase {
    pub net: Network,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("{what} {id} references missing {side:?} bus {bus}")]
    DanglingReference { what: &'static str, id: usize, side: Side, bus: usize },
    #[error("duplicate {what} id {id}")]
    DuplicateId { what: &'static str, id: usize },
    #[error("bound inversion: {0}")]
    BoundInversion(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("AC island containing bus {0} has no reference bus")]
    NoReference(usize),
    #[error("AC island containing bus {0} has more than one reference bus")]
    MultipleReferences(usize),
    #[error("converter {0} must bridge one AC bus and one DC bus")]
    ConverterSides(usize),
    #[error("switch {0}: {1}")]
    BadSwitch(usize, String),
}

fn check_unique<T>(items: &[T], what: &'static str, id: impl Fn(&T) -> usize) -> Result<BTreeSet<usize>, ValidationError> {
    let mut seen = BTreeSet::new();
    for it in items {
        if !seen.insert(id(it)) {
            return Err(ValidationError::DuplicateId { what, id: id(it) });
        }
    }
    Ok(seen)
}

fn bounds(what: String, lo: f64, hi: f64) -> Result<(), ValidationError> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(ValidationError::BoundInversion(format!("{what}: [{lo}, {hi}]")));
    }
    Ok(())
}

/// Check every invariant of the domain model. Idempotent: a validated
/// network validates to itself.
pub fn validate(raw: RawCase) -> Result<Network, ValidationError> {
    let net = raw.net;
    use ValidationError::*;
    if !(net.base_mva > 0.0) {
        return Err(InvalidParameter(format!("base power must be positive, got {}", net.base_mva)));
    }
    let ac = check_unique(&net.ac_buses, "AC bus", |b| b.id)?;
    let dc = check_unique(&net.dc_buses, "DC bus", |b| b.id)?;
    check_unique(&net.ac_branches, "AC branch", |b| b.id)?;
    check_unique(&net.dc_branches, "DC branch", |b| b.id)?;
    check_unique(&net.converters, "converter", |c| c.id)?;
    check_unique(&net.generators, "generator", |g| g.id)?;
    check_unique(&net.loads, "load", |l| l.id)?;
    let sw_ids = check_unique(&net.switches, "switch", |s| s.id)?;
    let need = |what: &'static str, id: usize, side: Side, bus: usize| {
        let ok = match side {
            Side::Ac => ac.contains(&bus),
            Side::Dc => dc.contains(&bus),
        };
        if ok {
            Ok(())
        } else {
            Err(DanglingReference { what, id, side, bus })
        }
    };
    for b in &net.ac_buses {
        if !(b.vmin > 0.0) {
            return Err(InvalidParameter(format!("AC bus {} minimum voltage must be positive", b.id)));
        }
        bounds(format!("AC bus {} voltage", b.id), b.vmin, b.vmax)?;
        bounds(format!("AC bus {} angle", b.id), b.va_min, b.va_max)?;
    }
    for b in &net.dc_buses {
        if !(b.vmin > 0.0) {
            return Err(InvalidParameter(format!("DC bus {} minimum voltage must be positive", b.id)));
        }
        bounds(format!("DC bus {} voltage", b.id), b.vmin, b.vmax)?;
    }
    for l in &net.ac_branches {
        need("AC branch", l.id, Side::Ac, l.from)?;
        need("AC branch", l.id, Side::Ac, l.to)?;
        if l.r == 0.0 && l.x == 0.0 {
            return Err(InvalidParameter(format!("AC branch {} has zero impedance", l.id)));
        }
        if !(l.tap > 0.0) {
            return Err(InvalidParameter(format!("AC branch {} tap must be positive", l.id)));
        }
        if let Some(r) = l.rate {
            if !(r > 0.0) {
                return Err(InvalidParameter(format!("AC branch {} rating must be positive", l.id)));
            }
        }
        bounds(format!("AC branch {} angle difference", l.id), l.angmin, l.angmax)?;
    }
    for d in &net.dc_branches {
        need("DC branch", d.id, Side::Dc, d.from)?;
        need("DC branch", d.id, Side::Dc, d.to)?;
        if !(d.r > 0.0) {
            return Err(InvalidParameter(format!("DC branch {} resistance must be positive", d.id)));
        }
        if d.poles != 1 && d.poles != 2 {
            return Err(InvalidParameter(format!("DC branch {} pole count must be 1 or 2", d.id)));
        }
        if let Some(r) = d.rate {
            if !(r > 0.0) {
                return Err(InvalidParameter(format!("DC branch {} rating must be positive", d.id)));
            }
        }
    }
    for c in &net.converters {
        if !ac.contains(&c.ac_bus) || !dc.contains(&c.dc_bus) {
            if dc.contains(&c.ac_bus) || ac.contains(&c.dc_bus) {
                return Err(ConverterSides(c.id));
            }
            need("converter", c.id, Side::Ac, c.ac_bus)?;
            need("converter", c.id, Side::Dc, c.dc_bus)?;
        }
        if c.loss_a < 0.0 || c.loss_c < 0.0 {
            return Err(InvalidParameter(format!("converter {} loss coefficients a and c must be non-negative", c.id)));
        }
        bounds(format!("converter {} AC active power", c.id), c.pac_min, c.pac_max)?;
        bounds(format!("converter {} AC reactive power", c.id), c.qac_min, c.qac_max)?;
        bounds(format!("converter {} DC power", c.id), c.pdc_min, c.pdc_max)?;
        bounds(format!("converter {} internal voltage", c.id), c.vmin, c.vmax)?;
        if !(c.i_max > 0.0) || !(c.vmin > 0.0) || !(c.tap > 0.0) {
            return Err(InvalidParameter(format!("converter {} current bound, voltage bounds and tap must be positive", c.id)));
        }
    }
    for g in &net.generators {
        need("generator", g.id, Side::Ac, g.bus)?;
        bounds(format!("generator {} active power", g.id), g.pmin, g.pmax)?;
        bounds(format!("generator {} reactive power", g.id), g.qmin, g.qmax)?;
    }
    for l in &net.loads {
        need("load", l.id, l.side, l.bus)?;
    }
    let by_id: BTreeMap<usize, &Switch> = net.switches.iter().map(|s| (s.id, s)).collect();
    for s in &net.switches {
        need("switch", s.id, s.kind.side(), s.from)?;
        need("switch", s.id, s.kind.side(), s.to)?;
        if s.from == s.to {
            return Err(BadSwitch(s.id, "endpoints coincide".into()));
        }
        if !(s.rating > 0.0) {
            return Err(BadSwitch(s.id, "rating must be positive".into()));
        }
        if let Some(p) = s.partner {
            if !sw_ids.contains(&p) || by_id[&p].partner != Some(s.id) {
                return Err(BadSwitch(s.id, format!("partner {p} is not mutual")));
            }
            if s.kind.is_zil() {
                return Err(BadSwitch(s.id, "a ZIL has no partner".into()));
            }
        }
    }
    let net = net;
    let islands = island_decomposition(&net);
    for isl in &islands.ac {
        let refs = isl.iter().filter(|&&b| net.ac_buses.iter().any(|x| x.id == b && x.reference)).count();
        if refs == 0 {
            return Err(NoReference(isl[0]));
        }
        if refs > 1 {
            return Err(MultipleReferences(isl[0]));
        }
    }
    Ok(net)
}

pub fn validate_network(net: Network) -> Result<Network, ValidationError> {
    validate(RawCase { net })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Islands {
    /// Components of AC bus ids, each sorted, ordered by smallest id.
    pub ac: Vec<Vec<usize>>,
    pub dc: Vec<Vec<usize>>,
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller index as root for deterministic representatives.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn components(ids: &[usize], edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let pos: BTreeMap<usize, usize> = sorted.iter().enumerate().map(|(k, &b)| (b, k)).collect();
    let mut uf = UnionFind::new(sorted.len());
    for (a, b) in edges {
        if let (Some(&i), Some(&j)) = (pos.get(&a), pos.get(&b)) {
            uf.union(i, j);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &b) in sorted.iter().enumerate() {
        let r = uf.find(k);
        groups.entry(r).or_default().push(b);
    }
    groups.into_values().collect()
}

/// Connected components over in-service branches and closed switches.
/// Converters do not join AC islands (angles of different AC islands are
/// independent).
pub fn island_decomposition(net: &Network) -> Islands {
    let ac_ids: Vec<usize> = net.ac_buses.iter().map(|b| b.id).collect();
    let dc_ids: Vec<usize> = net.dc_buses.iter().map(|b| b.id).collect();
    let ac_edges = net
        .ac_branches
        .iter()
        .filter(|l| l.in_service)
        .map(|l| (l.from, l.to))
        .chain(net.switches.iter().filter(|s| s.closed && s.kind.side() == Side::Ac).map(|s| (s.from, s.to)));
    let dc_edges = net
        .dc_branches
        .iter()
        .filter(|d| d.in_service)
        .map(|d| (d.from, d.to))
        .chain(net.switches.iter().filter(|s| s.closed && s.kind.side() == Side::Dc).map(|s| (s.from, s.to)));
    Islands { ac: components(&ac_ids, ac_edges), dc: components(&dc_ids, dc_edges) }
}

impl Network {
    pub fn ac_bus(&self, id: usize) -> Option<&AcBus> {
        self.ac_buses.iter().find(|b| b.id == id)
    }

    pub fn dc_bus(&self, id: usize) -> Option<&DcBus> {
        self.dc_buses.iter().find(|b| b.id == id)
    }

    pub fn reference_bus(&self) -> Option<usize> {
        self.ac_buses.iter().find(|b| b.reference).map(|b| b.id)
    }

    /// Reverse AC topology: every (l, i, j) as (l, j, i).
    pub fn ac_reverse(&self) -> Vec<(usize, usize, usize)> {
        self.ac_branches.iter().map(|l| (l.id, l.to, l.from)).collect()
    }

    pub fn dc_reverse(&self) -> Vec<(usize, usize, usize)> {
        self.dc_branches.iter().map(|d| (d.id, d.to, d.from)).collect()
    }

    /// Table-of-counts summary: AC buses, DC buses, converters, AC branches, DC branches.
    pub fn counts(&self) -> (usize, usize, usize, usize, usize) {
        (self.ac_buses.len(), self.dc_buses.len(), self.converters.len(), self.ac_branches.len(), self.dc_branches.len())
    }

    pub fn total_cost(&self, pg: &BTreeMap<usize, f64>) -> Option<f64> {
        let mut s = 0.0;
        for g in &self.generators {
            s += g.c1 * pg.get(&g.id)? + g.c0;
        }
        Some(s)
    }
}

/// Where a flat AC branch comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BranchOrigin {
    Line(usize),
    Transformer(usize),
    Reactor(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatBus {
    pub id: usize,
    pub vmin: f64,
    pub vmax: f64,
    pub va_min: f64,
    pub va_max: f64,
    pub gs: f64,
    pub bs: f64,
    pub reference: bool,
    /// Converter that owns this internal bus.
    pub station: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatBranch {
    pub origin: BranchOrigin,
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
    pub bc: f64,
    pub tap: f64,
    pub shift: f64,
    pub rate: Option<f64>,
    pub angmin: f64,
    pub angmax: f64,
    pub switchable: bool,
}

/// AC side with converter stations expanded. Bus and branch positions are
/// indices into `buses`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatAc {
    pub buses: Vec<FlatBus>,
    pub branches: Vec<FlatBranch>,
    /// Per converter (network order): flat index of the bus where the
    /// converter injects its AC power.
    pub converter_bus: Vec<usize>,
    pub index: BTreeMap<usize, usize>,
}

/// Angle-difference limit of internal converter branches.
pub const INTERNAL_ANGLE: f64 = PI / 3.0;

/// Expand converter stations into internal buses and branches. Internal
/// bus ids continue after the largest AC bus id, two per converter in
/// converter order (filter bus, then converter bus), skipping absent ones.
/// In-service AC branches only.
pub fn flat_ac(net: &Network) -> FlatAc {
    let mut buses: Vec<FlatBus> = net
        .ac_buses
        .iter()
        .map(|b| FlatBus {
            id: b.id,
            vmin: b.vmin,
            vmax: b.vmax,
            va_min: b.va_min,
            va_max: b.va_max,
            gs: b.gs,
            bs: b.bs,
            reference: b.reference,
            station: None,
        })
        .collect();
    let mut index: BTreeMap<usize, usize> = buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
    let mut branches = Vec::new();
    for l in net.ac_branches.iter().filter(|l| l.in_service) {
        let (g, b) = l.admittance();
        branches.push(FlatBranch {
            origin: BranchOrigin::Line(l.id),
            from: index[&l.from],
            to: index[&l.to],
            g,
            b,
            bc: l.b,
            tap: l.tap,
            shift: l.shift,
            rate: l.rate,
            angmin: l.angmin,
            angmax: l.angmax,
            switchable: l.switchable,
        });
    }
    let mut next = net.ac_buses.iter().map(|b| b.id).max().unwrap_or(0);
    let mut converter_bus = Vec::new();
    for c in &net.converters {
        let mut add_bus = |buses: &mut Vec<FlatBus>, index: &mut BTreeMap<usize, usize>| {
            next += 1;
            buses.push(FlatBus {
                id: next,
                vmin: c.vmin,
                vmax: c.vmax,
                va_min: -PI,
                va_max: PI,
                gs: 0.0,
                bs: 0.0,
                reference: false,
                station: Some(c.id),
            });
            index.insert(next, buses.len() - 1);
            buses.len() - 1
        };
        let grid = index[&c.ac_bus];
        let internal = |origin, from, to, z: &Impedance, tap| {
            let (g, b) = z.admittance();
            FlatBranch {
                origin,
                from,
                to,
                g,
                b,
                bc: 0.0,
                tap,
                shift: 0.0,
                rate: None,
                angmin: -INTERNAL_ANGLE,
                angmax: INTERNAL_ANGLE,
                switchable: false,
            }
        };
        let filter = match &c.transformer {
            Some(z) => {
                let f = add_bus(&mut buses, &mut index);
                branches.push(internal(BranchOrigin::Transformer(c.id), grid, f, z, c.tap));
                f
            }
            None => grid,
        };
        if let Some(bf) = c.filter_b {
            buses[filter].bs += bf;
        }
        let conv = match &c.reactor {
            Some(z) => {
                let k = add_bus(&mut buses, &mut index);
                branches.push(internal(BranchOrigin::Reactor(c.id), filter, k, z, 1.0));
                k
            }
            None => filter,
        };
        converter_bus.push(conv);
    }
    FlatAc { buses, branches, converter_bus, index }
}
