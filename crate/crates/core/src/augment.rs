//! Busbar-splitting augmentation and OTS tagging.
//!
//! Splitting bus `i` adds a second half `i'`, moves each of its `n` elements
//! onto an auxiliary bus joined to `i` and `i'` by a pair of switches, and
//! joins `i` and `i'` by a switchable zero-impedance link (ZIL).

use crate::network::{BusKind, DcBus, ElementKind, ElementRef, Network, Side, Switch, SwitchKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusSelector {
    pub side: Side,
    pub bus: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exclusivity {
    /// Each detached element sits on exactly one half.
    Eq,
    /// At most one half; the element may be disconnected.
    Leq,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchableSet {
    #[serde(default)]
    pub ac_branches: Vec<usize>,
    #[serde(default)]
    pub dc_branches: Vec<usize>,
    #[serde(default)]
    pub converters: Vec<usize>,
}

impl SwitchableSet {
    pub fn is_empty(&self) -> bool {
        self.ac_branches.is_empty() && self.dc_branches.is_empty() && self.converters.is_empty()
    }

    /// Every AC branch (`ac`), every DC branch and converter (`dc`), or both.
    pub fn all(net: &Network, ac: bool, dc: bool) -> Self {
        SwitchableSet {
            ac_branches: if ac { net.ac_branches.iter().map(|l| l.id).collect() } else { Vec::new() },
            dc_branches: if dc { net.dc_branches.iter().map(|d| d.id).collect() } else { Vec::new() },
            converters: if dc { net.converters.iter().map(|c| c.id).collect() } else { Vec::new() },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    #[serde(default)]
    pub busbars: Vec<BusSelector>,
    /// `None` lets the problem kind decide (BS: eq, OTS+BS: leq).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusivity: Option<Exclusivity>,
    #[serde(default)]
    pub switchable: SwitchableSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetachedElement {
    pub element: ElementRef,
    pub aux: usize,
    /// Switch to the original half `i`.
    pub to_original: usize,
    /// Switch to the new half `i'`.
    pub to_half: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitBusbar {
    pub side: Side,
    pub bus: usize,
    pub half: usize,
    pub zil: usize,
    pub elements: Vec<DetachedElement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedNetwork {
    pub net: Network,
    pub busbars: Vec<SplitBusbar>,
    pub added_switches: usize,
}

impl AugmentedNetwork {
    /// Network without any split.
    pub fn plain(net: Network) -> Self {
        AugmentedNetwork { net, busbars: Vec::new(), added_switches: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("{0:?} bus {1} does not exist")]
    UnknownBus(Side, usize),
    #[error("{0:?} bus {1} has no connected elements")]
    NoElements(Side, usize),
    #[error("{0:?} bus {1} selected twice")]
    Duplicate(Side, usize),
    #[error("unknown {0:?} id {1}")]
    UnknownElement(ElementKind, usize),
}

/// Elements attached to a bus, in split order: branches, generators, loads,
/// converters, each by id.
pub fn attached(net: &Network, side: Side, bus: usize) -> Vec<ElementRef> {
    let mut out = Vec::new();
    let mut push = |kind, mut ids: Vec<usize>| {
        ids.sort_unstable();
        out.extend(ids.into_iter().map(|id| ElementRef { kind, id }));
    };
    match side {
        Side::Ac => {
            push(ElementKind::AcBranch, net.ac_branches.iter().filter(|l| l.from == bus || l.to == bus).map(|l| l.id).collect());
            push(ElementKind::Generator, net.generators.iter().filter(|g| g.bus == bus).map(|g| g.id).collect());
            push(ElementKind::Load, net.loads.iter().filter(|l| l.side == Side::Ac && l.bus == bus).map(|l| l.id).collect());
            push(ElementKind::Converter, net.converters.iter().filter(|c| c.ac_bus == bus).map(|c| c.id).collect());
        }
        Side::Dc => {
            push(ElementKind::DcBranch, net.dc_branches.iter().filter(|d| d.from == bus || d.to == bus).map(|d| d.id).collect());
            push(ElementKind::Load, net.loads.iter().filter(|l| l.side == Side::Dc && l.bus == bus).map(|l| l.id).collect());
            push(ElementKind::Converter, net.converters.iter().filter(|c| c.dc_bus == bus).map(|c| c.id).collect());
        }
    }
    out
}

fn check_plan(net: &Network, plan: &SplitPlan) -> Result<Vec<usize>, AugmentError> {
    let mut counts = Vec::new();
    for (k, s) in plan.busbars.iter().enumerate() {
        let exists = match s.side {
            Side::Ac => net.ac_bus(s.bus).is_some(),
            Side::Dc => net.dc_bus(s.bus).is_some(),
        };
        if !exists {
            return Err(AugmentError::UnknownBus(s.side, s.bus));
        }
        if plan.busbars[..k].contains(s) {
            return Err(AugmentError::Duplicate(s.side, s.bus));
        }
        let n = attached(net, s.side, s.bus).len();
        if n == 0 {
            return Err(AugmentError::NoElements(s.side, s.bus));
        }
        counts.push(n);
    }
    Ok(counts)
}

/// Number of switches a split would add: sum of 2 n_b over busbars, plus B.
pub fn count_switches(plan: &SplitPlan, net: &Network) -> Result<usize, AugmentError> {
    let counts = check_plan(net, plan)?;
    Ok(counts.iter().map(|n| 2 * n).sum::<usize>() + counts.len())
}

fn element_rating(net: &Network, e: ElementRef) -> f64 {
    let r = match e.kind {
        ElementKind::AcBranch => net.ac_branches.iter().find(|l| l.id == e.id).and_then(|l| l.rate),
        ElementKind::DcBranch => net.dc_branches.iter().find(|d| d.id == e.id).and_then(|d| d.rate),
        ElementKind::Converter => net.converters.iter().find(|c| c.id == e.id).map(|c| c.s_max()),
        ElementKind::Generator => net.generators.iter().find(|g| g.id == e.id).map(|g| g.pmax.abs().max(g.pmin.abs()).hypot(g.qmax.abs().max(g.qmin.abs()))),
        ElementKind::Load => net.loads.iter().find(|l| l.id == e.id).map(|l| l.p.hypot(l.q)),
    };
    // Unrated elements get a rating that never binds at per-unit scale.
    match r {
        Some(v) if v > 0.0 => v,
        _ => UNRATED,
    }
}

/// Switch rating used for unrated elements.
pub const UNRATED: f64 = 100.0;

/// Apply the plan's busbar splits. Ids are deterministic: new buses and
/// switches take consecutive ids after the current maxima.
pub fn split_busbars(net: &Network, plan: &SplitPlan) -> Result<AugmentedNetwork, AugmentError> {
    check_plan(net, plan)?;
    let mut out = net.clone();
    let mut next_ac = out.ac_buses.iter().map(|b| b.id).max().unwrap_or(0);
    let mut next_dc = out.dc_buses.iter().map(|b| b.id).max().unwrap_or(0);
    let mut next_sw = out.switches.iter().map(|s| s.id).max().unwrap_or(0);
    let mut busbars = Vec::new();
    let mut added = 0;
    for sel in &plan.busbars {
        let elements = attached(&out, sel.side, sel.bus);
        let mut new_bus = |out: &mut Network, kind: BusKind| match sel.side {
            Side::Ac => {
                next_ac += 1;
                let mut b = out.ac_bus(sel.bus).unwrap().clone();
                b.id = next_ac;
                b.gs = 0.0;
                b.bs = 0.0;
                b.reference = false;
                b.kind = kind;
                b.parent = Some(sel.bus);
                out.ac_buses.push(b);
                next_ac
            }
            Side::Dc => {
                next_dc += 1;
                let b = out.dc_bus(sel.bus).unwrap();
                let nb = DcBus { id: next_dc, vmin: b.vmin, vmax: b.vmax, gs: 0.0, kind, parent: Some(sel.bus) };
                out.dc_buses.push(nb);
                next_dc
            }
        };
        let half = new_bus(&mut out, BusKind::SplitHalf);
        let (ek, zk) = match sel.side {
            Side::Ac => (SwitchKind::AcElement, SwitchKind::AcZil),
            Side::Dc => (SwitchKind::DcElement, SwitchKind::DcZil),
        };
        let mut detached = Vec::new();
        let mut zil_rating = 0.0;
        for e in elements {
            let aux = new_bus(&mut out, BusKind::Auxiliary);
            let rating = element_rating(&out, e);
            zil_rating += rating;
            let bus = sel.bus;
            let mv = |b: &mut usize| {
                if *b == bus {
                    *b = aux;
                }
            };
            match e.kind {
                ElementKind::AcBranch => {
                    let l = out.ac_branches.iter_mut().find(|l| l.id == e.id).unwrap();
                    if l.from == bus {
                        l.from = aux;
                    } else {
                        mv(&mut l.to);
                    }
                }
                ElementKind::DcBranch => {
                    let d = out.dc_branches.iter_mut().find(|d| d.id == e.id).unwrap();
                    if d.from == bus {
                        d.from = aux;
                    } else {
                        mv(&mut d.to);
                    }
                }
                ElementKind::Generator => mv(&mut out.generators.iter_mut().find(|g| g.id == e.id).unwrap().bus),
                ElementKind::Load => mv(&mut out.loads.iter_mut().find(|l| l.id == e.id).unwrap().bus),
                ElementKind::Converter => {
                    let c = out.converters.iter_mut().find(|c| c.id == e.id).unwrap();
                    match sel.side {
                        Side::Ac => mv(&mut c.ac_bus),
                        Side::Dc => mv(&mut c.dc_bus),
                    }
                }
            }
            let s1 = next_sw + 1;
            let s2 = next_sw + 2;
            next_sw += 2;
            out.switches.push(Switch { id: s1, kind: ek, from: aux, to: sel.bus, rating, partner: Some(s2), element: Some(e), closed: true });
            out.switches.push(Switch { id: s2, kind: ek, from: aux, to: half, rating, partner: Some(s1), element: Some(e), closed: true });
            detached.push(DetachedElement { element: e, aux, to_original: s1, to_half: s2 });
            added += 2;
        }
        next_sw += 1;
        out.switches.push(Switch { id: next_sw, kind: zk, from: sel.bus, to: half, rating: zil_rating, partner: None, element: None, closed: true });
        added += 1;
        busbars.push(SplitBusbar { side: sel.side, bus: sel.bus, half, zil: next_sw, elements: detached });
    }
    Ok(AugmentedNetwork { net: out, busbars, added_switches: added })
}

/// Flag the plan's switchable subsets for OTS.
pub fn tag_switchable(net: &Network, set: &SwitchableSet) -> Result<Network, AugmentError> {
    let mut out = net.clone();
    for &id in &set.ac_branches {
        out.ac_branches.iter_mut().find(|l| l.id == id).ok_or(AugmentError::UnknownElement(ElementKind::AcBranch, id))?.switchable = true;
    }
    for &id in &set.dc_branches {
        out.dc_branches.iter_mut().find(|d| d.id == id).ok_or(AugmentError::UnknownElement(ElementKind::DcBranch, id))?.switchable = true;
    }
    for &id in &set.converters {
        out.converters.iter_mut().find(|c| c.id == id).ok_or(AugmentError::UnknownElement(ElementKind::Converter, id))?.switchable = true;
    }
    Ok(out)
}

/// Tagging followed by splitting.
pub fn augment(net: &Network, plan: &SplitPlan) -> Result<AugmentedNetwork, AugmentError> {
    let tagged = tag_switchable(net, &plan.switchable)?;
    split_busbars(&tagged, plan)
}
