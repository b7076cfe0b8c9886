//! Solver-agnostic optimization models and a deterministic branch-and-bound
//! engine with LP, cone outer-approximation and interior-point back-ends.

pub mod bnb;
pub mod conic;
pub mod expr;
pub mod lp;
pub mod lpfile;
pub mod model;
pub mod nlp;
pub mod options;
pub mod presolve;
pub mod result;

pub use bnb::{branch_and_bound, enumerate_with, BinaryLogic, ConvexBackend, NlpBackend, NodeBackend, NodeEval};
pub use expr::Expr;
pub use model::{Body, Constraint, Family, LinExpr, MathModel, VarKind, Variable};
pub use options::SolverOptions;
pub use result::{SolveResult, Status};

use std::time::{Duration, Instant};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("{0} free binaries exceed the enumeration limit of 20")]
    TooManyBinaries(usize),
    #[error("model exchange: {0}")]
    Exchange(String),
}

pub fn deadline(opts: &SolverOptions) -> Option<Instant> {
    opts.time_limit.map(|t| Instant::now() + Duration::from_secs_f64(t))
}

/// Structural checks: indices in range, finite coefficients, sane bounds.
pub fn check_model(model: &MathModel) -> Result<(), SolverError> {
    let n = model.vars.len();
    let bad = |m: String| Err(SolverError::MalformedModel(m));
    for v in &model.vars {
        if v.lb.is_nan() || v.ub.is_nan() || v.lb > v.ub {
            return bad(format!("variable {} has bounds [{}, {}]", v.name, v.lb, v.ub));
        }
        if v.kind == VarKind::Binary && (v.lb < 0.0 || v.ub > 1.0) {
            return bad(format!("binary {} has bounds outside [0, 1]", v.name));
        }
    }
    let lin_ok = |e: &LinExpr| e.constant.is_finite() && e.terms.iter().all(|&(i, c)| i < n && c.is_finite());
    if !lin_ok(&model.objective) {
        return bad("objective references an unknown variable or a non-finite coefficient".into());
    }
    for c in &model.constraints {
        let ok = match &c.body {
            Body::Linear { expr, lo, hi } => lin_ok(expr) && lo <= hi,
            Body::Cone { norm, bound } => norm.iter().all(&lin_ok) && lin_ok(bound),
            Body::Nonlinear { expr, lo, hi } => expr.vars().iter().all(|&i| i < n) && lo <= hi,
        };
        if !ok {
            return bad(format!("constraint {}", c.name));
        }
    }
    if let Some(r) = &model.relaxation {
        check_model(r)?;
        if r.has_nonlinear() {
            return bad("relaxation must be convex (linear and cone rows only)".into());
        }
        if r.binaries().len() != model.binaries().len() {
            return bad("relaxation binary count differs from the model".into());
        }
    }
    Ok(())
}

fn backend<'a>(model: &'a MathModel, opts: &SolverOptions, dl: Option<Instant>) -> Box<dyn NodeBackend + 'a> {
    if model.has_nonlinear() {
        Box::new(NlpBackend::new(model, opts, dl))
    } else {
        Box::new(ConvexBackend::new(model, opts, dl))
    }
}

/// Mixed-integer solve. For linear and cone models an optimal status is a
/// global optimum; for nonlinear models incumbents are local optima and the
/// bound comes from the attached relaxation.
pub fn solve(model: &MathModel, opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    opts.validate()?;
    check_model(model)?;
    let dl = deadline(opts);
    let mut b = backend(model, opts, dl);
    Ok(branch_and_bound(model, b.as_mut(), opts))
}

/// Same as [`solve`] with a caller-supplied back-end.
pub fn solve_with(model: &MathModel, backend: &mut dyn NodeBackend, opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    opts.validate()?;
    check_model(model)?;
    Ok(branch_and_bound(model, backend, opts))
}

/// Continuous solve: binaries with equal bounds stay fixed, the rest are
/// relaxed to [0, 1].
pub fn solve_continuous(model: &MathModel, opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    solve_continuous_from(model, opts, &bnb::default_start(model))
}

/// [`solve_continuous`] with an explicit NLP start point (ignored for
/// convex models).
pub fn solve_continuous_from(model: &MathModel, opts: &SolverOptions, x0: &[f64]) -> Result<SolveResult, SolverError> {
    opts.validate()?;
    check_model(model)?;
    if x0.len() != model.vars.len() {
        return Err(SolverError::MalformedModel(format!("start point has {} entries for {} variables", x0.len(), model.vars.len())));
    }
    let started = Instant::now();
    let dl = deadline(opts);
    let lb: Vec<f64> = model.vars.iter().map(|v| v.lb).collect();
    let ub: Vec<f64> = model.vars.iter().map(|v| v.ub).collect();
    let (status, objective, x, iterations, message) = if model.has_nonlinear() {
        let out = nlp::solve_nlp(model, &lb, &ub, x0, opts, dl);
        (out.status, out.objective, out.x, out.iterations, out.message)
    } else {
        let mut pool = Vec::new();
        let out = conic::solve_cone_lp(model, &conic::linear_rows(model), &lb, &ub, &mut pool, opts, dl);
        (out.status, out.objective, out.x, out.rounds + 1, out.message)
    };
    let mut r = if status.has_solution() {
        SolveResult {
            status,
            objective: Some(objective),
            bound: if model.has_nonlinear() { f64::NEG_INFINITY } else { objective },
            binaries: model.binaries().iter().map(|&i| (i, x[i] > 0.5)).collect(),
            x,
            nodes: 0,
            iterations,
            wall_time: 0.0,
            message,
        }
    } else {
        let mut r = SolveResult::failed(status, message);
        r.iterations = iterations;
        r
    };
    r.wall_time = started.elapsed().as_secs_f64();
    Ok(r)
}

/// Exhaustive enumeration over all admissible binary assignments.
pub fn enumerate_oracle(model: &MathModel, opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    opts.validate()?;
    check_model(model)?;
    let dl = deadline(opts);
    let mut b = backend(model, opts, dl);
    enumerate_with(model, b.as_mut(), opts)
}
