//! Equilibria and optima of the entanglement routing game.
//!
//! Users pick Alice-Bob paths; a path's payoff is the fidelity of the
//! end-to-end pair swapped along it. [`greedy_ne`] plays the discrete game
//! with `nu * M` users, [`solve_wardrop`] finds the continuous-flow limit, and
//! the remaining solvers optimize the mean fidelity under different fairness
//! constraints.

use serde::Serialize;

use crate::entops::{fidelity_from_werner, WernerParam};
use crate::netmodel::DemandSpec;

mod greedy;
mod optima;
mod problem;
mod wardrop;

pub use greedy::{greedy_ne, greedy_ne_on, verify_ne, DiscreteAssignment, GreedyOutcome, NeReport};
pub use optima::{solve_btn, solve_btn_with, solve_fair, solve_global, solve_global_from};
pub use problem::{CommodityPaths, RoutingProblem};
pub use wardrop::{
    equilibrate, solve_wardrop, verify_wardrop, we_objective, EquilibrationStats, WardropReport,
};

/// A user only switches paths for a fidelity gain above this.
pub const EPS_IMPROVE: f64 = 1e-9;
/// Largest Wardrop objective accepted as an equilibrium.
pub const EPS_WE: f64 = 1e-8;
/// Paths carrying at most this much normalized flow count as unused.
pub const X_CUT: f64 = 1e-6;
/// Allowed shortfall of a better-than-Nash path below the Nash floor (Werner parameter).
pub const EPS_FLOOR: f64 = 1e-6;
/// Allowed spread of used-path parameters at the fair optimum.
pub const EPS_FAIR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SolverKind {
    GreedyNE,
    Wardrop,
    Global,
    BtN,
    Fair,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::GreedyNE => "ne",
            SolverKind::Wardrop => "we",
            SolverKind::Global => "global",
            SolverKind::BtN => "btn",
            SolverKind::Fair => "fair",
        }
    }
}

/// Normalized path flows `x_j` and the edge loads `y_i` they induce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowAssignment {
    pub flows: Vec<f64>,
    pub loads: Vec<f64>,
    pub demand: DemandSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Solver-specific objective at the returned point (Wardrop gap, `-p`, ...).
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub solver: SolverKind,
    pub seed: u64,
    pub assignment: FlowAssignment,
    pub path_nodes: Vec<Vec<usize>>,
    pub path_commodity: Vec<usize>,
    pub path_params: Vec<f64>,
    pub average_param: f64,
    pub average_fidelity: f64,
    pub diagnostics: Diagnostics,
}

impl EquilibriumResult {
    pub(crate) fn from_flows(
        problem: &RoutingProblem,
        flows: Vec<f64>,
        loads: Vec<f64>,
        solver: SolverKind,
        seed: u64,
        diagnostics: Diagnostics,
    ) -> Self {
        let path_params = problem.path_params(&loads);
        let average_param = problem.average_param(&flows, &path_params);
        Self {
            solver,
            seed,
            assignment: FlowAssignment {
                flows,
                loads,
                demand: problem.demand().clone(),
            },
            path_nodes: (0..problem.path_count())
                .map(|j| problem.path_nodes(j).to_vec())
                .collect(),
            path_commodity: (0..problem.path_count())
                .map(|j| problem.path_commodity(j))
                .collect(),
            path_params,
            average_param,
            average_fidelity: fidelity(average_param),
            diagnostics,
        }
    }

    pub fn flows(&self) -> &[f64] {
        &self.assignment.flows
    }

    pub fn path_fidelities(&self) -> Vec<f64> {
        self.path_params.iter().map(|&p| fidelity(p)).collect()
    }

    /// Indices of paths carrying more than [`X_CUT`].
    pub fn used_paths(&self) -> Vec<usize> {
        (0..self.path_params.len())
            .filter(|&j| self.assignment.flows[j] > X_CUT)
            .collect()
    }

    /// `(min, max)` Werner parameter over used paths.
    pub fn used_param_range(&self) -> (f64, f64) {
        self.used_paths()
            .into_iter()
            .map(|j| self.path_params[j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p), hi.max(p))
            })
    }

    /// Share of all user pairs whose fidelity is below `threshold`.
    pub fn mass_below(&self, threshold: f64) -> f64 {
        let total: f64 = self.assignment.flows.iter().sum();
        let below: f64 = self
            .assignment
            .flows
            .iter()
            .zip(&self.path_params)
            .filter(|&(_, &p)| fidelity(p) < threshold)
            .map(|(x, _)| x)
            .sum();
        below / total
    }
}

pub(crate) fn fidelity(p: f64) -> f64 {
    fidelity_from_werner(WernerParam::new(p.clamp(0.0, 1.0)).expect("clamped"))
}
