use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    /// Seconds; `None` means unlimited.
    pub time_limit: Option<f64>,
    pub node_limit: Option<usize>,
    pub cone_cut_tol: f64,
    pub max_cut_rounds: usize,
    pub nlp_max_iter: usize,
    /// Unused by the deterministic search; kept so runs can record it.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_abs: 1e-6,
            gap_rel: 1e-4,
            feasibility_tol: 1e-6,
            integrality_tol: 1e-6,
            time_limit: Some(3600.0),
            node_limit: None,
            cone_cut_tol: 1e-7,
            max_cut_rounds: 3000,
            nlp_max_iter: 300,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), crate::SolverError> {
        let pos = [
            ("gap_abs", self.gap_abs),
            ("feasibility_tol", self.feasibility_tol),
            ("integrality_tol", self.integrality_tol),
            ("cone_cut_tol", self.cone_cut_tol),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(crate::SolverError::InvalidOptions(format!("{name} must be positive")));
            }
        }
        if !(self.gap_rel >= 0.0) {
            return Err(crate::SolverError::InvalidOptions("gap_rel must be non-negative".into()));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(crate::SolverError::InvalidOptions("time_limit must be positive".into()));
            }
        }
        if self.node_limit == Some(0) || self.max_cut_rounds == 0 || self.nlp_max_iter == 0 {
            return Err(crate::SolverError::InvalidOptions("limits must be positive".into()));
        }
        Ok(())
    }
}
