//! One study: augment the case, solve the chosen problem, check the
//! resulting topology with the exact model.

use crate::augment::{augment, AugmentError, AugmentedNetwork, SplitPlan, SwitchableSet};
use crate::feasibility::{fix_and_check, FeasibilityReport, MergedEvaluator, DEFAULT_TOL};
use crate::formulation::{build_model, start_point, BuiltModel, Formulation, FormulationError, ProblemKind, ProblemSpec, Scope};
use crate::network::Network;
use crate::state::{extract, NetworkState, Topology};
use gridtopo_solver::{NlpBackend, SolveResult, SolverError, Status};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Solver summary without the raw variable vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: Status,
    pub objective: Option<f64>,
    /// Lower bound; `null` when no bound is available (local NLP solves).
    pub bound: Option<f64>,
    pub nodes: usize,
    pub iterations: usize,
    pub binaries: usize,
    #[serde(default)]
    pub time_s: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
}

impl SolveSummary {
    fn from_result(r: &SolveResult, binaries: usize, time_s: f64) -> Self {
        SolveSummary {
            status: r.status,
            objective: r.objective,
            bound: r.bound.is_finite().then_some(r.bound),
            nodes: r.nodes,
            iterations: r.iterations,
            binaries,
            time_s,
            message: r.message.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub case: String,
    pub kind: ProblemKind,
    pub formulation: Formulation,
    pub solve: SolveSummary,
    /// Statuses chosen for the switchable elements.
    pub topology: Topology,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<NetworkState>,
    /// Exact OPF objective of the unswitched case.
    pub opf_objective: Option<f64>,
    /// Exact check of `topology`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<FeasibilityReport>,
}

impl StudyResult {
    pub fn topo_objective(&self) -> Option<f64> {
        self.check.as_ref().and_then(|c| c.objective)
    }
}

/// Apply the problem's split plan and switchable set. For OTS without an
/// explicit set, every element in the spec's scope is switchable.
pub fn prepare(net: &Network, spec: &ProblemSpec, plan: &SplitPlan) -> Result<AugmentedNetwork, StudyError> {
    let mut plan = plan.clone();
    if !spec.kind.splits() {
        plan.busbars.clear();
    }
    if !spec.kind.switches_elements() {
        plan.switchable = SwitchableSet::default();
    } else if plan.switchable.is_empty() {
        let (ac, dc) = match spec.scope {
            Scope::Ac => (true, false),
            Scope::Dc => (false, true),
            Scope::AcDc => (true, true),
            Scope::None => (false, false),
        };
        plan.switchable = SwitchableSet::all(net, ac, dc);
    }
    Ok(augment(net, &plan)?)
}

/// Solve a built model. Exact models get a non-zero start and, with
/// binaries, merged-network evaluation of every leaf.
pub fn solve_built(built: &BuiltModel) -> Result<SolveResult, StudyError> {
    let opts = &built.spec.solver;
    let started = Instant::now();
    let nbin = built.model.binaries().len();
    let mut r = if built.spec.formulation != Formulation::Exact {
        gridtopo_solver::solve(&built.model, opts)?
    } else if nbin == 0 {
        let mut ev = MergedEvaluator::new(built.clone());
        match ev.evaluate(&[]) {
            Ok((objective, x)) => SolveResult {
                status: Status::Optimal,
                objective: Some(objective),
                bound: f64::NEG_INFINITY,
                x,
                binaries: Vec::new(),
                nodes: 0,
                iterations: 1,
                wall_time: 0.0,
                message: String::new(),
            },
            Err((status, message)) => SolveResult::failed(status, message),
        }
    } else {
        let mut ev = MergedEvaluator::new(built.clone());
        let dl = gridtopo_solver::deadline(opts);
        let mut backend = NlpBackend::new(&built.model, opts, dl).with_start(start_point(built)).with_restrict(Box::new(|a| ev.node_eval(a)));
        gridtopo_solver::solve_with(&built.model, &mut backend, opts)?
    };
    r.wall_time = started.elapsed().as_secs_f64();
    Ok(r)
}

/// Exact OPF objective of `net` with no switching.
pub fn exact_opf(net: &Network, spec: &ProblemSpec) -> Result<SolveResult, StudyError> {
    let spec = ProblemSpec { kind: ProblemKind::Opf, formulation: Formulation::Exact, ..spec.clone() };
    let built = build_model(&AugmentedNetwork::plain(net.clone()), &spec)?;
    solve_built(&built)
}

/// Full study. `baseline` is the exact OPF objective when already known.
pub fn run_study(net: &Network, spec: &ProblemSpec, plan: &SplitPlan, baseline: Option<f64>) -> Result<StudyResult, StudyError> {
    let opf_objective = match baseline {
        Some(b) => Some(b),
        None => exact_opf(net, spec)?.objective,
    };
    let aug = prepare(net, spec, plan)?;
    let built = build_model(&aug, spec)?;
    let nbin = built.model.binaries().len();
    log::info!("{} {} on {}: {} variables, {} constraints, {} binaries", spec.formulation.name(), spec.kind.name(), net.name, built.model.vars.len(), built.model.constraints.len(), nbin);
    let r = solve_built(&built)?;
    let solve = SolveSummary::from_result(&r, nbin, r.wall_time);
    log::info!("solve finished: {:?} objective {:?} after {} nodes, {:.2}s", r.status, r.objective, r.nodes, r.wall_time);
    let mut out = StudyResult {
        case: net.name.clone(),
        kind: spec.kind,
        formulation: spec.formulation,
        solve,
        topology: Topology::default(),
        state: None,
        opf_objective,
        check: None,
    };
    if r.objective.is_none() {
        return Ok(out);
    }
    let refs = built.map.binary_refs();
    let values: Vec<bool> = r.binaries.iter().map(|b| b.1).collect();
    out.topology = Topology::from_binaries(&refs, &values);
    out.state = Some(extract(&built, &r.x));
    let check = fix_and_check(&aug, &out.topology, spec, opf_objective, DEFAULT_TOL)?;
    log::info!("exact check: feasible {} objective {:?}", check.ac_feasible, check.objective);
    out.check = Some(check);
    Ok(out)
}
