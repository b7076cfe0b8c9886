//! Optimization models of the augmented network: the exact polar AC/DC
//! model, its second-order cone relaxation and the LPAC approximation, each
//! with optional line switching and busbar-splitting switches.

mod build;
pub mod eval;

use crate::augment::{AugmentedNetwork, Exclusivity};
use crate::network::{FlatAc, Network};
use gridtopo_solver::{Expr, LinExpr, MathModel, SolverOptions};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    #[default]
    Opf,
    Ots,
    Bs,
    OtsBs,
}

impl ProblemKind {
    /// Line, DC branch and converter states are decisions.
    pub fn switches_elements(self) -> bool {
        matches!(self, ProblemKind::Ots | ProblemKind::OtsBs)
    }

    /// Busbar switches are decisions.
    pub fn splits(self) -> bool {
        matches!(self, ProblemKind::Bs | ProblemKind::OtsBs)
    }

    pub fn default_exclusivity(self) -> Exclusivity {
        match self {
            ProblemKind::OtsBs => Exclusivity::Leq,
            _ => Exclusivity::Eq,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Opf => "opf",
            ProblemKind::Ots => "ots",
            ProblemKind::Bs => "bs",
            ProblemKind::OtsBs => "ots-bs",
        }
    }
}

/// Which side's elements an OTS study may switch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Ac,
    Dc,
    #[default]
    AcDc,
    /// No element switching; OTS reduces to OPF.
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    #[default]
    Exact,
    Soc,
    Lpac,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Exact => "exact",
            Formulation::Soc => "soc",
            Formulation::Lpac => "lpac",
        }
    }
}

impl std::str::FromStr for Formulation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exact" | "ac" => Ok(Formulation::Exact),
            "soc" => Ok(Formulation::Soc),
            "lpac" => Ok(Formulation::Lpac),
            _ => Err(format!("unknown formulation `{s}` (expected exact, soc or lpac)")),
        }
    }
}

/// How a switch ties the voltages of its two ends in the exact model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchForm {
    /// Pairs of linear rows relaxed by the big-M constants.
    #[default]
    BigM,
    /// z (x_i - x_j) = 0. Relaxations keep the big-M rows.
    Bilinear,
}

/// Big-M constants of the on/off constraints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BigM {
    /// Angle difference across an open switch or line (rad).
    pub theta: f64,
    /// AC voltage magnitude (or its square / deviation) difference.
    pub vm: f64,
    /// DC voltage difference.
    pub dc: f64,
}

impl Default for BigM {
    fn default() -> Self {
        BigM { theta: 2.0 * std::f64::consts::PI, vm: 1.0, dc: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub scope: Scope,
    pub formulation: Formulation,
    /// Overrides the plan's and the kind's default.
    pub exclusivity: Option<Exclusivity>,
    pub big_m: BigM,
    /// Tangent cuts added up front to each LPAC cosine cap.
    pub lpac_segments: usize,
    /// Angle window of the LPAC cosine; `None` uses each branch's limits.
    pub lpac_window: Option<f64>,
    /// Sides of the polygons that stand in for circles in LPAC.
    pub polygon_sides: usize,
    pub symmetry_cuts: bool,
    pub switch_form: SwitchForm,
    pub solver: SolverOptions,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            kind: ProblemKind::Opf,
            scope: Scope::AcDc,
            formulation: Formulation::Exact,
            exclusivity: None,
            big_m: BigM::default(),
            lpac_segments: 10,
            lpac_window: None,
            polygon_sides: 16,
            symmetry_cuts: true,
            switch_form: SwitchForm::BigM,
            solver: SolverOptions::default(),
        }
    }
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, formulation: Formulation) -> Self {
        ProblemSpec { kind, formulation, ..Default::default() }
    }

    pub fn exclusivity(&self) -> Exclusivity {
        self.exclusivity.unwrap_or(self.kind.default_exclusivity())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormulationError {
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),
    #[error("{0} references an element that is not in the network")]
    Dangling(String),
}

/// Status of an element in a model: always on, or tied to a binary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OnOff {
    On,
    Var(usize),
}

impl OnOff {
    pub fn lin(self, c: f64) -> LinExpr {
        match self {
            OnOff::On => LinExpr::constant(c),
            OnOff::Var(z) => LinExpr::new().term(z, c),
        }
    }

    pub fn value(self, x: &[f64]) -> f64 {
        match self {
            OnOff::On => 1.0,
            OnOff::Var(z) => x[z],
        }
    }

    pub fn var(self) -> Option<usize> {
        match self {
            OnOff::On => None,
            OnOff::Var(z) => Some(z),
        }
    }
}

/// A flow quantity as a function of the model variables.
#[derive(Clone, Debug, PartialEq)]
pub enum Flow {
    Lin(LinExpr),
    Nl(Expr),
}

impl Flow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Flow::Lin(e) => e.eval(x),
            Flow::Nl(e) => e.eval(x),
        }
    }
}

/// What a binary variable switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "element", content = "id", rename_all = "kebab-case")]
pub enum BinaryRef {
    AcBranch(usize),
    DcBranch(usize),
    Converter(usize),
    Switch(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConverterVars {
    pub z: OnOff,
    pub pc: usize,
    pub qc: usize,
    pub pd: usize,
    pub i: usize,
    pub isq: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcBranchVars {
    pub z: OnOff,
    pub p_from: Flow,
    pub p_to: Flow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchVars {
    pub z: OnOff,
    pub p: usize,
    pub q: Option<usize>,
}

/// Where each network quantity lives in the model.
#[derive(Clone, Debug, PartialEq)]
pub struct VarMap {
    pub formulation: Formulation,
    pub flat: FlatAc,
    /// Per flat AC bus: vm (exact), w = vm^2 (SOC) or vm - 1 (LPAC).
    pub bus_v: Vec<usize>,
    /// Per flat AC bus: angle (exact, LPAC).
    pub bus_va: Vec<Option<usize>>,
    pub gen_p: Vec<usize>,
    pub gen_q: Vec<usize>,
    /// Per flat branch.
    pub branch_z: Vec<OnOff>,
    /// Per flat branch: p_from, q_from, p_to, q_to.
    pub branch_flow: Vec<[Flow; 4]>,
    /// Per DC bus (network order): U (exact), U^2 (SOC) or U - 1 (LPAC).
    pub dc_v: Vec<usize>,
    pub dc_index: BTreeMap<usize, usize>,
    /// Per DC branch; `None` when out of service.
    pub dc_branch: Vec<Option<DcBranchVars>>,
    /// Per converter; `None` when out of service.
    pub conv: Vec<Option<ConverterVars>>,
    /// Per switch; `None` when fixed open.
    pub switch: Vec<Option<SwitchVars>>,
    /// Binary variables in model order.
    pub binaries: Vec<(BinaryRef, usize)>,
}

impl VarMap {
    pub fn binary_refs(&self) -> Vec<BinaryRef> {
        self.binaries.iter().map(|b| b.0).collect()
    }
}

/// A model together with the network it was built from.
#[derive(Clone, Debug)]
pub struct BuiltModel {
    pub model: MathModel,
    pub map: VarMap,
    pub aug: AugmentedNetwork,
    pub spec: ProblemSpec,
}

impl BuiltModel {
    pub fn net(&self) -> &Network {
        &self.aug.net
    }
}

fn check_spec(spec: &ProblemSpec) -> Result<(), FormulationError> {
    let bad = |m: &str| Err(FormulationError::InvalidSpec(m.into()));
    let m = spec.big_m;
    if !(m.theta > 0.0 && m.vm > 0.0 && m.dc > 0.0) || !(m.theta.is_finite() && m.vm.is_finite() && m.dc.is_finite()) {
        return bad("big-M constants must be positive and finite");
    }
    if spec.polygon_sides < 4 {
        return bad("polygon_sides must be at least 4");
    }
    if let Some(w) = spec.lpac_window {
        if !(w > 0.0 && w <= std::f64::consts::PI) {
            return bad("lpac_window must lie in (0, pi]");
        }
    }
    spec.solver.validate().map_err(|e| FormulationError::InvalidSpec(e.to_string()))
}

/// Build the model of `spec.formulation`. Exact models carry the SOC model
/// as their relaxation, with binaries in the same order.
pub fn build_model(aug: &AugmentedNetwork, spec: &ProblemSpec) -> Result<BuiltModel, FormulationError> {
    check_spec(spec)?;
    let (mut model, map) = build::build(aug, spec, spec.formulation)?;
    if spec.formulation == Formulation::Exact {
        let (relax, rmap) = build::build(aug, spec, Formulation::Soc)?;
        debug_assert_eq!(rmap.binary_refs(), map.binary_refs());
        model.relaxation = Some(Box::new(relax));
    }
    Ok(BuiltModel { model, map, aug: aug.clone(), spec: spec.clone() })
}

/// SOC relaxation of a built model, over the same network and binaries.
pub fn soc_lift(built: &BuiltModel) -> Result<BuiltModel, FormulationError> {
    let spec = ProblemSpec { formulation: Formulation::Soc, ..built.spec.clone() };
    build_model(&built.aug, &spec)
}

/// LPAC model of the network.
pub fn lpac_build(aug: &AugmentedNetwork, spec: &ProblemSpec) -> Result<BuiltModel, FormulationError> {
    let spec = ProblemSpec { formulation: Formulation::Lpac, ..spec.clone() };
    build_model(aug, &spec)
}

/// Flat start for the interior-point solver: unit voltages, zero angles and
/// a small consistent operating point at every converter. Starting all
/// converters at zero current stalls the solver, because the converter
/// equations have a vanishing gradient there.
pub fn start_point(built: &BuiltModel) -> Vec<f64> {
    let m = &built.model;
    let mut x = gridtopo_solver::bnb::default_start(m);
    let mut set = |i: usize, v: f64| x[i] = v.clamp(m.vars[i].lb, m.vars[i].ub);
    let unit = match built.map.formulation {
        Formulation::Lpac => 0.0,
        _ => 1.0,
    };
    for &k in built.map.bus_v.iter().chain(&built.map.dc_v) {
        set(k, unit);
    }
    for a in built.map.bus_va.iter().flatten() {
        set(*a, 0.0);
    }
    for (c, vars) in built.net().converters.iter().zip(&built.map.conv) {
        let Some(cv) = vars else { continue };
        let i0 = 0.25 * c.i_max;
        let s = i0 / std::f64::consts::SQRT_2;
        set(cv.i, i0);
        set(cv.pc, s);
        set(cv.qc, s);
        set(cv.pd, eval::converter_loss(c, i0, true) - s);
        if let Some(q) = cv.isq {
            set(q, i0 * i0);
        }
    }
    x
}
