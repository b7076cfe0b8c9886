use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    FeasibleGap,
    Infeasible,
    Unbounded,
    Limit,
}

impl Status {
    pub fn has_solution(self) -> bool {
        matches!(self, Status::Optimal | Status::FeasibleGap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: Status,
    /// Incumbent objective; `None` without an incumbent.
    pub objective: Option<f64>,
    pub bound: f64,
    pub x: Vec<f64>,
    /// (variable index, value) for every binary, rounded.
    pub binaries: Vec<(usize, bool)>,
    pub nodes: usize,
    pub iterations: usize,
    #[serde(skip)]
    pub wall_time: f64,
    /// Human-readable reason for non-optimal statuses.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
}

impl SolveResult {
    pub fn failed(status: Status, message: impl Into<String>) -> Self {
        SolveResult {
            status,
            objective: None,
            bound: f64::NEG_INFINITY,
            x: Vec::new(),
            binaries: Vec::new(),
            nodes: 0,
            iterations: 0,
            wall_time: 0.0,
            message: message.into(),
        }
    }

    pub fn gap(&self) -> Option<f64> {
        self.objective.map(|o| o - self.bound)
    }
}
