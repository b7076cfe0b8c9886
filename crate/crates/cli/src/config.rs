//! Run configuration: a JSON file, overridden by command-line flags.

use anyhow::{bail, Context, Result};
use gridtopo::augment::{BusSelector, Exclusivity, SplitPlan};
use gridtopo::formulation::{BigM, Formulation, ProblemKind, ProblemSpec, Scope};
use gridtopo::network::Side;
use gridtopo_solver::SolverOptions;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Relative paths are resolved against the config file's directory.
    pub case: Option<PathBuf>,
    pub kind: Option<ProblemKind>,
    pub scope: Option<Scope>,
    pub formulations: Vec<Formulation>,
    pub split_plan: Option<SplitPlan>,
    pub exclusivity: Option<Exclusivity>,
    pub big_m: Option<BigM>,
    pub lpac_segments: Option<usize>,
    pub lpac_window: Option<f64>,
    pub polygon_sides: Option<usize>,
    pub symmetry_cuts: Option<bool>,
    pub solver: SolverOptions,
    /// Exact OPF objective to compare against; computed when absent.
    pub baseline: Option<f64>,
    /// Residual tolerance of the AC-feasibility verdict.
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if let Some(c) = &cfg.case {
            if c.is_relative() {
                cfg.case = Some(dir.join(c));
            }
        }
        if let Some(o) = &cfg.out {
            if o.is_relative() {
                cfg.out = Some(dir.join(o));
            }
        }
        Ok(cfg)
    }

    pub fn spec(&self, kind: ProblemKind, formulation: Formulation) -> ProblemSpec {
        let mut s = ProblemSpec::new(kind, formulation);
        if let Some(v) = self.scope {
            s.scope = v;
        }
        s.exclusivity = self.exclusivity.or(self.split_plan.as_ref().and_then(|p| p.exclusivity));
        if let Some(v) = self.big_m {
            s.big_m = v;
        }
        if let Some(v) = self.lpac_segments {
            s.lpac_segments = v;
        }
        s.lpac_window = self.lpac_window;
        if let Some(v) = self.polygon_sides {
            s.polygon_sides = v;
        }
        if let Some(v) = self.symmetry_cuts {
            s.symmetry_cuts = v;
        }
        s.solver = self.solver.clone();
        s
    }

    pub fn case_path(&self) -> Result<&Path> {
        let p = self.case.as_deref().context("no case given (use --case or the config's `case`)")?;
        if !p.exists() {
            bail!("case file {} does not exist", p.display());
        }
        Ok(p)
    }
}

/// `ac:2,4` or `dc:1`.
pub fn parse_split(s: &str) -> Result<Vec<BusSelector>> {
    let (side, buses) = s.split_once(':').with_context(|| format!("bad --split `{s}`: expected ac:<bus>[,...] or dc:<bus>[,...]"))?;
    let side = match side.trim().to_ascii_lowercase().as_str() {
        "ac" => Side::Ac,
        "dc" => Side::Dc,
        other => bail!("bad --split side `{other}`: expected ac or dc"),
    };
    buses
        .split(',')
        .map(|b| {
            let bus = b.trim().parse().with_context(|| format!("bad bus id `{b}` in --split"))?;
            Ok(BusSelector { side, bus })
        })
        .collect()
}

pub fn parse_switchable(s: &str) -> Result<Scope> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "ac" => Scope::Ac,
        "dc" => Scope::Dc,
        "all" => Scope::AcDc,
        "none" => Scope::None,
        _ => bail!("bad --switchable `{s}`: expected ac, dc, all or none"),
    })
}

pub fn parse_exclusivity(s: &str) -> Result<Exclusivity> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "eq" => Exclusivity::Eq,
        "leq" => Exclusivity::Leq,
        _ => bail!("bad --exclusivity `{s}`: expected eq or leq"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_flags() {
        let v = parse_split("ac:2,4").unwrap();
        assert_eq!(v, vec![BusSelector { side: Side::Ac, bus: 2 }, BusSelector { side: Side::Ac, bus: 4 }]);
        assert_eq!(parse_split("DC:3").unwrap()[0].side, Side::Dc);
        assert!(parse_split("2,4").is_err());
        assert!(parse_split("xx:2").is_err());
        assert!(parse_split("ac:two").is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"formulation": "soc"}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"formulations": ["soc", "lpac"], "solver": {"time_limit": 5}}"#).unwrap();
        assert_eq!(c.formulations, vec![Formulation::Soc, Formulation::Lpac]);
        assert_eq!(c.solver.time_limit, Some(5.0));
    }
}
