mod config;
mod output;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{parse_exclusivity, parse_split, parse_switchable, RunConfig};
use gridtopo::augment::SplitPlan;
use gridtopo::case_io::{load_case, write_json_document};
use gridtopo::feasibility::{fix_and_check, DEFAULT_TOL};
use gridtopo::formulation::{Formulation, ProblemKind, ProblemSpec};
use gridtopo::state::Topology;
use gridtopo::study::{exact_opf, prepare, run_study};
use output::{comparison_csv, report_table, write, write_results, ResultDocument};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gridtopo", version, about = "Transmission switching and busbar splitting for hybrid AC/DC grids")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal power flow without switching.
    Opf(StudyArgs),
    /// Optimal transmission switching.
    Ots(StudyArgs),
    /// Busbar splitting (with --switchable, combined with OTS).
    Bs(StudyArgs),
    /// Exact AC-feasibility check of a saved topology.
    Check(CheckArgs),
    /// Print the table of a finished study.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Case file (.m MATPOWER-style or .json).
    #[arg(long)]
    case: Option<PathBuf>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Busbars to split, e.g. ac:2,4 (repeatable).
    #[arg(long)]
    split: Vec<String>,
    #[arg(long, value_name = "SECONDS")]
    time_limit: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// exact, soc or lpac; repeat or comma-separate to compare.
    #[arg(long, value_delimiter = ',')]
    formulation: Vec<Formulation>,
    /// Elements open to switching: ac, dc, all or none.
    #[arg(long)]
    switchable: Option<String>,
    /// eq (each element on exactly one half) or leq (at most one).
    #[arg(long)]
    exclusivity: Option<String>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Topology JSON (as written by the study commands).
    #[arg(long)]
    topology: PathBuf,
    /// Exact OPF objective to compare against; computed when absent.
    #[arg(long)]
    baseline: Option<f64>,
    /// Residual tolerance of the verdict (p.u.).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Study output directory (or its result.json).
    #[arg(long)]
    out: PathBuf,
}

/// Usage or input problem: exit code 2.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(ConfigError(e)))
}

fn base_config(c: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &c.case {
        cfg.case = Some(p.clone());
    }
    if !c.split.is_empty() {
        let mut plan = cfg.split_plan.take().unwrap_or_default();
        plan.busbars.clear();
        for s in &c.split {
            plan.busbars.extend(parse_split(s)?);
        }
        cfg.split_plan = Some(plan);
    }
    if let Some(t) = c.time_limit {
        cfg.solver.time_limit = Some(t);
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn load(cfg: &RunConfig) -> Result<(gridtopo::network::Network, SplitPlan)> {
    let path = cfg.case_path()?;
    let (net, doc_plan) = load_case(path).with_context(|| format!("loading {}", path.display()))?;
    let plan = cfg.split_plan.clone().or(doc_plan).unwrap_or_default();
    Ok((net, plan))
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("gridtopo-out"))
}

fn cmd_study(kind: ProblemKind, a: StudyArgs) -> Result<ExitCode> {
    let (cfg, net, plan, kind) = config_err((|| {
        let mut cfg = base_config(&a.common)?;
        if !a.formulation.is_empty() {
            cfg.formulations = a.formulation.clone();
        }
        if cfg.formulations.is_empty() {
            cfg.formulations = vec![Formulation::Exact];
        }
        if let Some(s) = &a.switchable {
            cfg.scope = Some(parse_switchable(s)?);
        }
        if let Some(e) = &a.exclusivity {
            cfg.exclusivity = Some(parse_exclusivity(e)?);
        }
        let kind = match (kind, cfg.kind) {
            // `bs --switchable` combines splitting with element switching.
            (ProblemKind::Bs, _) if a.switchable.as_deref().is_some_and(|s| s != "none") => ProblemKind::OtsBs,
            (ProblemKind::Bs, Some(ProblemKind::OtsBs)) => ProblemKind::OtsBs,
            (k, _) => k,
        };
        let (net, plan) = load(&cfg)?;
        if kind.splits() && plan.busbars.is_empty() {
            bail!("busbar splitting needs at least one busbar (--split ac:<bus> or the config's split_plan)");
        }
        Ok((cfg, net, plan, kind))
    })())?;
    let dir = out_dir(&cfg);
    let baseline = match cfg.baseline {
        Some(b) => Some(b),
        None => exact_opf(&net, &cfg.spec(ProblemKind::Opf, Formulation::Exact))?.objective,
    };
    let mut results = Vec::new();
    for &f in &cfg.formulations {
        let spec: ProblemSpec = cfg.spec(kind, f);
        let r = run_study(&net, &spec, &plan, baseline)?;
        if r.solve.objective.is_some() && kind != ProblemKind::Opf {
            let aug = prepare(&net, &spec, &plan)?;
            write(&dir, &format!("topology_{}.json", f.name()), &serde_json::to_string_pretty(&r.topology)?)?;
            write(&dir, &format!("case_{}.json", f.name()), &write_json_document(&r.topology.apply(&aug.net), None))?;
        }
        println!(
            "{:<6} {:<7} status {:<12} objective {:>12} exact {:>12}",
            f.name(),
            kind.name(),
            format!("{:?}", r.solve.status).to_lowercase(),
            r.solve.objective.map_or("-".into(), |o| format!("{o:.4}")),
            r.topo_objective().map_or("-".into(), |o| format!("{o:.4}")),
        );
        results.push(r);
    }
    let doc = ResultDocument { case: net.name.clone(), kind, opf_objective: baseline, results };
    write_results(&dir, &doc)?;
    write(&dir, "comparison.csv", &comparison_csv(&doc.results)?)?;
    print!("{}", report_table(&doc));
    let solved = doc.results.iter().any(|r| r.solve.status.has_solution());
    Ok(if solved { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_check(a: CheckArgs) -> Result<ExitCode> {
    let (cfg, net, plan, topo) = config_err((|| {
        let mut cfg = base_config(&a.common)?;
        if a.baseline.is_some() {
            cfg.baseline = a.baseline;
        }
        if a.tol.is_some() {
            cfg.tol = a.tol;
        }
        let (net, plan) = load(&cfg)?;
        let text = std::fs::read_to_string(&a.topology).with_context(|| format!("reading {}", a.topology.display()))?;
        let topo: Topology = serde_json::from_str(&text).with_context(|| format!("malformed topology file {}", a.topology.display()))?;
        Ok((cfg, net, plan, topo))
    })())?;
    let spec = cfg.spec(if plan.busbars.is_empty() { ProblemKind::Ots } else { ProblemKind::OtsBs }, Formulation::Exact);
    let aug = prepare(&net, &ProblemSpec { scope: gridtopo::formulation::Scope::None, ..spec.clone() }, &plan)?;
    let baseline = match cfg.baseline {
        Some(b) => Some(b),
        None => exact_opf(&net, &spec)?.objective,
    };
    let rep = fix_and_check(&aug, &topo, &spec, baseline, cfg.tol.unwrap_or(DEFAULT_TOL))?;
    let dir = out_dir(&cfg);
    write(&dir, "check.json", &serde_json::to_string_pretty(&rep)?)?;
    if rep.ac_feasible {
        println!(
            "AC-feasible: objective {:.4}, benefit {}",
            rep.objective.unwrap_or(f64::NAN),
            rep.benefit_pct.map_or("-".into(), |b| format!("{b:.2}%"))
        );
        Ok(ExitCode::SUCCESS)
    } else {
        println!("not AC-feasible ({:?}): {}", rep.status, rep.message);
        Ok(ExitCode::from(1))
    }
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode> {
    let (file, dir) = if a.out.is_dir() { (a.out.join("result.json"), a.out.clone()) } else { (a.out.clone(), a.out.parent().unwrap_or(Path::new(".")).to_path_buf()) };
    let mut v: serde_json::Value = config_err((|| {
        let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        Ok(serde_json::from_str(&text)?)
    })())?;
    // Restore run times when the metadata file is alongside.
    if let Ok(meta) = std::fs::read_to_string(dir.join("metadata.json")) {
        let meta: serde_json::Value = serde_json::from_str(&meta)?;
        if let Some(times) = meta["run_times"].as_object() {
            for (path, t) in times {
                let (parent, key) = path.rsplit_once('/').unwrap_or(("", path));
                if let Some(serde_json::Value::Object(m)) = v.pointer_mut(parent) {
                    m.insert(key.to_string(), t.clone());
                }
            }
        }
    }
    let doc: ResultDocument = serde_json::from_value(v).context("result file does not match the result schema")?;
    print!("{}", report_table(&doc));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDTOPO_LOG", "warn")).init();
    let cli = Cli::parse();
    let r = match cli.cmd {
        Command::Opf(a) => cmd_study(ProblemKind::Opf, a),
        Command::Ots(a) => cmd_study(ProblemKind::Ots, a),
        Command::Bs(a) => cmd_study(ProblemKind::Bs, a),
        Command::Check(a) => cmd_check(a),
        Command::Report(a) => cmd_report(a),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<ConfigError>() || e.chain().any(|c| c.is::<std::io::Error>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
