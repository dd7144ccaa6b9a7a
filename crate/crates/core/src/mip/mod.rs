//! MILP construction for both formulations, solution decoding, recourse
//! evaluation, MPS exchange and solver backends.

mod bnb;
mod decode;
mod external;
mod model;
mod mps;
mod node;
mod path;
mod recourse;
mod variant;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::{CostParams, Instance, Neighborhoods, ScenarioSet};
use crate::error::Result;

pub use bnb::{solve_internal, BnbOptions};
pub use decode::{decode_solution, CostBreakdown, PlanRoute, PlanSolution, RecourseAction};
pub use external::{solve_external, SOLVER_CMD_ENV};
pub use model::{
    relative_gap, Constraint, MipModel, MipSolution, Sense, SolveStatus, VarKind, Variable,
};
pub use mps::{export_mps, export_mps_with, parse_mps, MpsFormat, MpsOutput};
pub use node::{build_node_model, NodeLayout};
pub use path::{build_path_model, build_path_model_with, route_admissible, PathLayout, PathOptions};
pub use recourse::{evaluate_recourse, RecourseResult};
pub use variant::{apply_measure_variant, MeasureVariant};

/// Data shared by both formulations.
#[derive(Clone, Copy, Debug)]
pub struct StochasticInput<'a> {
    pub instance: &'a Instance,
    pub scenarios: &'a ScenarioSet,
    pub neighborhoods: &'a Neighborhoods,
    pub costs: &'a CostParams,
}

/// Index maps that tie model variables back to the formulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layout {
    Node(NodeLayout),
    Path(PathLayout),
}

impl Layout {
    pub fn first_stage(&self) -> Vec<usize> {
        match self {
            Layout::Node(l) => l.first_stage(),
            Layout::Path(l) => l.first_stage(),
        }
    }
}

/// Objective coefficient of serving `j` from `i` before probability weighting.
/// Serving a node from itself is not a recourse action and costs nothing.
pub(crate) fn recourse_coef(input: &StochasticInput, i: usize, j: usize) -> f64 {
    if i == j {
        0.0
    } else {
        input.costs.recourse_cost(input.instance.dist(i, j))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Wall-clock limit in seconds.
    pub time: Option<f64>,
    /// Relative optimality gap at which search stops.
    pub gap: f64,
    pub node_limit: Option<usize>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            time: None,
            gap: 1e-6,
            node_limit: None,
        }
    }
}

impl Limits {
    pub fn with_time(seconds: f64) -> Self {
        Limits {
            time: Some(seconds),
            ..Limits::default()
        }
    }

    pub(crate) fn duration(&self) -> Option<Duration> {
        self.time.map(|t| Duration::from_secs_f64(t.max(0.0)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Internal,
    /// Command template with `{mps}` and `{sol}` placeholders.
    MpsExternal { command: String },
}

/// Solves `model` to the given limits.
pub fn solve(model: &MipModel, backend: &Backend, limits: &Limits) -> Result<MipSolution> {
    match backend {
        Backend::Internal => solve_internal(
            model,
            &BnbOptions {
                limits: *limits,
                ..BnbOptions::default()
            },
        ),
        Backend::MpsExternal { command } => solve_external(model, command, limits),
    }
}
