//! Deterministic best-bound branch and bound over pluggable node back-ends,
//! and the brute-force enumeration oracle.

use crate::conic::{linear_rows, solve_cone_lp};
use crate::lp::LpRow;
use crate::model::{Body, MathModel};
use crate::nlp::solve_nlp;
use crate::options::SolverOptions;
use crate::result::{SolveResult, Status};
use crate::SolverError;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct NodeEval {
    pub status: Status,
    pub objective: f64,
    /// Point in the model's variable space (may be empty for bound-only evaluations).
    pub x: Vec<f64>,
    /// Binary values in model binary order.
    pub binaries: Vec<f64>,
    pub iterations: usize,
}

impl NodeEval {
    pub fn infeasible() -> Self {
        NodeEval { status: Status::Infeasible, objective: f64::INFINITY, x: Vec::new(), binaries: Vec::new(), iterations: 0 }
    }

    pub fn failed() -> Self {
        NodeEval { status: Status::Limit, objective: f64::NAN, x: Vec::new(), binaries: Vec::new(), iterations: 0 }
    }
}

pub trait NodeBackend {
    /// Continuous relaxation with some binaries fixed (`None` = relaxed to [0, 1]).
    fn relax(&mut self, fix: &[Option<bool>]) -> NodeEval;
    /// Optimum of the restriction with every binary fixed.
    fn restrict(&mut self, assign: &[bool]) -> NodeEval;
    /// True when an integral relaxation point already solves its subtree.
    fn exact_at_integral(&self) -> bool;
}

fn bounds_with(model: &MathModel, bins: &[usize], fix: &[Option<bool>]) -> (Vec<f64>, Vec<f64>) {
    let mut lb: Vec<f64> = model.vars.iter().map(|v| v.lb).collect();
    let mut ub: Vec<f64> = model.vars.iter().map(|v| v.ub).collect();
    for (k, &i) in bins.iter().enumerate() {
        if let Some(b) = fix[k] {
            let v = if b { 1.0 } else { 0.0 };
            lb[i] = v;
            ub[i] = v;
        }
    }
    (lb, ub)
}

/// LP / cone outer-approximation back-end with a cut pool shared by all nodes.
pub struct ConvexBackend<'a> {
    pub model: &'a MathModel,
    bins: Vec<usize>,
    base: Vec<LpRow>,
    pool: Vec<LpRow>,
    opts: SolverOptions,
    deadline: Option<Instant>,
}

impl<'a> ConvexBackend<'a> {
    pub fn new(model: &'a MathModel, opts: &SolverOptions, deadline: Option<Instant>) -> Self {
        ConvexBackend { model, bins: model.binaries(), base: linear_rows(model), pool: Vec::new(), opts: opts.clone(), deadline }
    }

    fn run(&mut self, fix: &[Option<bool>], fresh: bool) -> NodeEval {
        let (lb, ub) = bounds_with(self.model, &self.bins, fix);
        let mut scratch = Vec::new();
        let pool = if fresh { &mut scratch } else { &mut self.pool };
        let out = solve_cone_lp(self.model, &self.base, &lb, &ub, pool, &self.opts, self.deadline);
        if out.status != Status::Optimal {
            return NodeEval { status: out.status, objective: f64::NAN, x: Vec::new(), binaries: Vec::new(), iterations: out.rounds };
        }
        let binaries = self.bins.iter().map(|&i| out.x[i]).collect();
        NodeEval { status: Status::Optimal, objective: out.objective, x: out.x, binaries, iterations: out.rounds + 1 }
    }
}

impl NodeBackend for ConvexBackend<'_> {
    fn relax(&mut self, fix: &[Option<bool>]) -> NodeEval {
        self.run(fix, false)
    }

    fn restrict(&mut self, assign: &[bool]) -> NodeEval {
        let fix: Vec<Option<bool>> = assign.iter().map(|&b| Some(b)).collect();
        self.run(&fix, true)
    }

    fn exact_at_integral(&self) -> bool {
        true
    }
}

pub type RestrictFn<'a> = Box<dyn FnMut(&[bool]) -> NodeEval + 'a>;

/// Smooth non-convex back-end: bounds from the attached convex relaxation,
/// incumbents from the NLP restriction (or a caller-supplied evaluator).
pub struct NlpBackend<'a> {
    pub model: &'a MathModel,
    bins: Vec<usize>,
    relaxation: Option<ConvexBackend<'a>>,
    start: Vec<f64>,
    opts: SolverOptions,
    deadline: Option<Instant>,
    restrict_fn: Option<RestrictFn<'a>>,
}

impl<'a> NlpBackend<'a> {
    pub fn new(model: &'a MathModel, opts: &SolverOptions, deadline: Option<Instant>) -> Self {
        let relaxation = model.relaxation.as_deref().map(|r| ConvexBackend::new(r, opts, deadline));
        NlpBackend {
            model,
            bins: model.binaries(),
            relaxation,
            start: default_start(model),
            opts: opts.clone(),
            deadline,
            restrict_fn: None,
        }
    }

    /// Start point of the restriction solves (defaults to [`default_start`]).
    pub fn with_start(mut self, x0: Vec<f64>) -> Self {
        assert_eq!(x0.len(), self.model.vars.len(), "start point length");
        self.start = x0;
        self
    }

    pub fn with_restrict(mut self, f: RestrictFn<'a>) -> Self {
        self.restrict_fn = Some(f);
        self
    }
}

impl NodeBackend for NlpBackend<'_> {
    fn relax(&mut self, fix: &[Option<bool>]) -> NodeEval {
        match &mut self.relaxation {
            Some(r) => {
                let mut e = r.relax(fix);
                e.x.clear();
                e
            }
            None => NodeEval {
                status: Status::Optimal,
                objective: f64::NEG_INFINITY,
                x: Vec::new(),
                binaries: fix.iter().map(|f| f.map_or(0.5, |b| if b { 1.0 } else { 0.0 })).collect(),
                iterations: 0,
            },
        }
    }

    fn restrict(&mut self, assign: &[bool]) -> NodeEval {
        if let Some(f) = &mut self.restrict_fn {
            return f(assign);
        }
        let fix: Vec<Option<bool>> = assign.iter().map(|&b| Some(b)).collect();
        let (lb, ub) = bounds_with(self.model, &self.bins, &fix);
        let out = solve_nlp(self.model, &lb, &ub, &self.start, &self.opts, self.deadline);
        let ok = out.status.has_solution() && out.max_violation <= self.opts.feasibility_tol;
        if !ok {
            let mut e = if out.status == Status::Infeasible { NodeEval::infeasible() } else { NodeEval::failed() };
            e.iterations = out.iterations;
            return e;
        }
        let binaries = self.bins.iter().map(|&i| out.x[i]).collect();
        NodeEval { status: Status::Optimal, objective: out.objective, x: out.x, binaries, iterations: out.iterations }
    }

    fn exact_at_integral(&self) -> bool {
        false
    }
}

/// Start point: zero where allowed, otherwise the middle of the bounds.
pub fn default_start(model: &MathModel) -> Vec<f64> {
    model
        .vars
        .iter()
        .map(|v| {
            if v.lb <= 0.0 && 0.0 <= v.ub {
                0.0
            } else if v.lb.is_finite() && v.ub.is_finite() {
                0.5 * (v.lb + v.ub)
            } else if v.lb.is_finite() {
                v.lb
            } else {
                v.ub
            }
        })
        .collect()
}

/// Pure-binary structure used for propagation: groups with sum <= 1
/// (or == 1) and single-binary bounds.
#[derive(Clone, Debug, Default)]
pub struct BinaryLogic {
    pub groups: Vec<(Vec<usize>, bool)>,
    pub fixed: Vec<(usize, bool)>,
}

impl BinaryLogic {
    pub fn from_model(model: &MathModel) -> Self {
        let bins = model.binaries();
        let pos: BTreeMap<usize, usize> = bins.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let mut logic = BinaryLogic::default();
        for c in &model.constraints {
            let Body::Linear { expr, lo, hi } = &c.body else { continue };
            let e = expr.compact();
            if e.terms.is_empty() || !e.terms.iter().all(|t| pos.contains_key(&t.0)) {
                continue;
            }
            let (lo, hi) = (lo - e.constant, hi - e.constant);
            if e.terms.len() == 1 {
                let (v, a) = e.terms[0];
                let (l, u) = if a > 0.0 { (lo / a, hi / a) } else { (hi / a, lo / a) };
                if u < 0.5 {
                    logic.fixed.push((pos[&v], false));
                } else if l > 0.5 {
                    logic.fixed.push((pos[&v], true));
                }
                continue;
            }
            if e.terms.iter().all(|t| t.1 == 1.0) && hi == 1.0 {
                let members = e.terms.iter().map(|t| pos[&t.0]).collect();
                logic.groups.push((members, lo == 1.0));
            }
        }
        logic
    }

    /// Apply implications in place; false if the fixings are contradictory.
    pub fn propagate(&self, fix: &mut [Option<bool>]) -> bool {
        for &(k, b) in &self.fixed {
            match fix[k] {
                Some(v) if v != b => return false,
                _ => fix[k] = Some(b),
            }
        }
        loop {
            let mut changed = false;
            for (members, exact) in &self.groups {
                let ones = members.iter().filter(|&&m| fix[m] == Some(true)).count();
                if ones > 1 {
                    return false;
                }
                if ones == 1 {
                    for &m in members {
                        if fix[m].is_none() {
                            fix[m] = Some(false);
                            changed = true;
                        }
                    }
                } else if *exact {
                    let open: Vec<usize> = members.iter().copied().filter(|&m| fix[m].is_none()).collect();
                    if open.is_empty() {
                        return false;
                    }
                    if open.len() == 1 {
                        fix[open[0]] = Some(true);
                        changed = true;
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }

    pub fn satisfied(&self, assign: &[bool]) -> bool {
        let mut fix: Vec<Option<bool>> = assign.iter().map(|&b| Some(b)).collect();
        self.propagate(&mut fix) && fix.iter().zip(assign).all(|(f, a)| *f == Some(*a))
    }
}

struct Node {
    fix: Vec<Option<bool>>,
    bound: f64,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // Max-heap: smallest bound first, then lowest sequence number.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then_with(|| o.seq.cmp(&self.seq))
    }
}

fn gap_tol(opts: &SolverOptions, inc: f64) -> f64 {
    opts.gap_abs.max(opts.gap_rel * inc.abs())
}

fn finalize(model: &MathModel, mut r: SolveResult, started: Instant) -> SolveResult {
    let bins = model.binaries();
    if !r.x.is_empty() {
        r.binaries = bins.iter().map(|&i| (i, r.x[i] > 0.5)).collect();
        for &(i, b) in &r.binaries {
            r.x[i] = if b { 1.0 } else { 0.0 };
        }
    }
    r.wall_time = started.elapsed().as_secs_f64();
    r
}

pub fn branch_and_bound(model: &MathModel, backend: &mut dyn NodeBackend, opts: &SolverOptions) -> SolveResult {
    let started = Instant::now();
    let nb = model.binaries().len();
    let logic = BinaryLogic::from_model(model);
    let mut root: Vec<Option<bool>> = vec![None; nb];
    let bins = model.binaries();
    for (k, &i) in bins.iter().enumerate() {
        if model.vars[i].ub < 0.5 {
            root[k] = Some(false);
        } else if model.vars[i].lb > 0.5 {
            root[k] = Some(true);
        }
    }
    if !logic.propagate(&mut root) {
        return finalize(model, SolveResult::failed(Status::Infeasible, "binary logic infeasible at root"), started);
    }
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node { fix: root, bound: f64::NEG_INFINITY, seq });
    let mut inc: Option<NodeEval> = None;
    let mut cache: BTreeMap<Vec<bool>, NodeEval> = BTreeMap::new();
    let mut pruned_min = f64::INFINITY;
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    let mut stopped = None;
    let mut saw_failure = false;
    while let Some(node) = heap.pop() {
        let inc_obj = inc.as_ref().map_or(f64::INFINITY, |e| e.objective);
        if inc.is_some() && node.bound >= inc_obj - gap_tol(opts, inc_obj) {
            pruned_min = pruned_min.min(node.bound);
            continue;
        }
        if let Some(t) = opts.time_limit {
            if started.elapsed().as_secs_f64() > t {
                stopped = Some("time limit");
                heap.push(node);
                break;
            }
        }
        if let Some(nl) = opts.node_limit {
            if nodes >= nl {
                stopped = Some("node limit");
                heap.push(node);
                break;
            }
        }
        nodes += 1;
        let r = backend.relax(&node.fix);
        iterations += r.iterations;
        let bound = match r.status {
            Status::Infeasible => continue,
            Status::Optimal => r.objective.max(node.bound),
            _ => {
                saw_failure = true;
                node.bound
            }
        };
        if inc.is_some() && bound >= inc_obj - gap_tol(opts, inc_obj) {
            pruned_min = pruned_min.min(bound);
            continue;
        }
        let vals: Vec<f64> = if r.binaries.len() == nb {
            r.binaries.clone()
        } else {
            node.fix.iter().map(|f| f.map_or(0.5, |b| if b { 1.0 } else { 0.0 })).collect()
        };
        // Most fractional free binary, ties to the lowest index.
        let mut branch: Option<(usize, f64)> = None;
        for k in 0..nb {
            if node.fix[k].is_some() {
                continue;
            }
            let frac = (vals[k] - vals[k].round()).abs();
            if frac > opts.integrality_tol && branch.is_none_or(|(_, f)| frac > f + 1e-12) {
                branch = Some((k, frac));
            }
        }
        if branch.is_none() {
            let assign: Vec<bool> = (0..nb).map(|k| node.fix[k].unwrap_or(vals[k] > 0.5)).collect();
            let leaf = cache.entry(assign.clone()).or_insert_with(|| backend.restrict(&assign)).clone();
            iterations += leaf.iterations;
            if leaf.status == Status::Optimal && leaf.objective < inc_obj {
                log::debug!("incumbent {:.6} at node {nodes}", leaf.objective);
                inc = Some(leaf);
            }
            let all_fixed = node.fix.iter().all(|f| f.is_some());
            if backend.exact_at_integral() && r.status == Status::Optimal || all_fixed {
                continue;
            }
            let k = (0..nb).find(|&k| node.fix[k].is_none()).expect("unfixed binary");
            branch = Some((k, 0.0));
        }
        let (k, _) = branch.unwrap();
        for val in [false, true] {
            let mut fix = node.fix.clone();
            fix[k] = Some(val);
            if logic.propagate(&mut fix) {
                seq += 1;
                heap.push(Node { fix, bound, seq });
            }
        }
    }
    let open_min = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let mut result = match inc {
        Some(e) => {
            let bound = open_min.min(pruned_min).min(e.objective);
            let status = match stopped {
                None => Status::Optimal,
                Some(_) if e.objective - bound <= gap_tol(opts, e.objective) => Status::Optimal,
                Some(_) => Status::FeasibleGap,
            };
            SolveResult {
                status,
                objective: Some(e.objective),
                bound,
                x: e.x,
                binaries: Vec::new(),
                nodes,
                iterations,
                wall_time: 0.0,
                message: stopped.unwrap_or("").to_string(),
            }
        }
        None => {
            let status = if stopped.is_some() || saw_failure { Status::Limit } else { Status::Infeasible };
            let mut r = SolveResult::failed(status, stopped.unwrap_or(if saw_failure { "relaxation failures" } else { "" }));
            r.nodes = nodes;
            r.iterations = iterations;
            r.bound = open_min;
            r
        }
    };
    if saw_failure && result.message.is_empty() {
        result.message = "some node relaxations failed; their parent bound was kept".into();
    }
    finalize(model, result, started)
}

/// Exhaustive search over binary assignments that satisfy the model's pure
/// binary constraints. Ground truth for branch and bound.
pub fn enumerate_with(model: &MathModel, backend: &mut dyn NodeBackend, opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    let started = Instant::now();
    let bins = model.binaries();
    let nb = bins.len();
    let logic = BinaryLogic::from_model(model);
    let mut root: Vec<Option<bool>> = vec![None; nb];
    for (k, &i) in bins.iter().enumerate() {
        if model.vars[i].ub < 0.5 {
            root[k] = Some(false);
        } else if model.vars[i].lb > 0.5 {
            root[k] = Some(true);
        }
    }
    let free: Vec<usize> = (0..nb).filter(|&k| root[k].is_none()).collect();
    if free.len() > 20 {
        return Err(SolverError::TooManyBinaries(free.len()));
    }
    let mut best: Option<NodeEval> = None;
    let mut count = 0usize;
    let mut iterations = 0usize;
    for mask in 0u64..(1u64 << free.len()) {
        let mut assign: Vec<bool> = root.iter().map(|f| f.unwrap_or(false)).collect();
        for (j, &k) in free.iter().enumerate() {
            // First free binary is the most significant bit: lexicographic order.
            assign[k] = (mask >> (free.len() - 1 - j)) & 1 == 1;
        }
        if !logic.satisfied(&assign) {
            continue;
        }
        if let Some(t) = opts.time_limit {
            if started.elapsed().as_secs_f64() > t {
                break;
            }
        }
        count += 1;
        let e = backend.restrict(&assign);
        iterations += e.iterations;
        if e.status == Status::Optimal && best.as_ref().is_none_or(|b| e.objective < b.objective) {
            best = Some(e);
        }
    }
    let r = match best {
        Some(e) => SolveResult {
            status: Status::Optimal,
            objective: Some(e.objective),
            bound: e.objective,
            x: e.x,
            binaries: Vec::new(),
            nodes: count,
            iterations,
            wall_time: 0.0,
            message: String::new(),
        },
        None => {
            let mut r = SolveResult::failed(Status::Infeasible, "no feasible assignment");
            r.nodes = count;
            r
        }
    };
    Ok(finalize(model, r, started))
}
