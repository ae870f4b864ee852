//! Discrete Nash equilibrium by greedy insertion plus best-response sweeps.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::Serialize;

use super::problem::discrete_response;
use super::{fidelity, Diagnostics, EquilibriumResult, RoutingProblem, SolverKind, EPS_IMPROVE};
use crate::error::{Error, Result};
use crate::netmodel::{DemandSpec, Network};

pub const MAX_SWEEPS: usize = 10_000;

/// Integer users per path and the entangled pairs they demand on each edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscreteAssignment {
    pub budget: u32,
    pub path_counts: Vec<u32>,
    pub edge_demand: Vec<u32>,
}

impl DiscreteAssignment {
    /// Assignment with `path_counts` users per path; edge demands are derived.
    pub fn from_counts(problem: &RoutingProblem, budget: u32, path_counts: Vec<u32>) -> Result<Self> {
        if path_counts.len() != problem.path_count() {
            return Err(Error::Config("one count per path required".into()));
        }
        let mut edge_demand = vec![0u32; problem.edge_count()];
        for (j, &n) in path_counts.iter().enumerate() {
            for &e in problem.path_edges(j) {
                edge_demand[e] += n;
            }
        }
        Ok(Self {
            budget,
            path_counts,
            edge_demand,
        })
    }

    pub fn users(&self) -> u32 {
        self.path_counts.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    pub result: EquilibriumResult,
    pub assignment: DiscreteAssignment,
}

/// Discrete payoffs: `table[e][m]` is edge `e`'s delivered parameter with `m` users.
struct Payoffs<'a> {
    problem: &'a RoutingProblem,
    table: Vec<Arc<Vec<f64>>>,
}

impl<'a> Payoffs<'a> {
    fn new(problem: &'a RoutingProblem, budget: u32, max_users: usize) -> Self {
        let table = problem
            .states()
            .iter()
            .zip(problem.responses())
            .map(|(&s, r)| discrete_response(s, r, budget, max_users + 1))
            .collect();
        Self { problem, table }
    }

    fn product(&self, path: usize, users_on: impl Fn(usize) -> u32) -> f64 {
        let edges = self.problem.path_edges(path);
        let mut buf = [0.0f64; 64];
        if edges.len() > buf.len() {
            return self
                .problem
                .product_over(edges, |e| self.table[e][users_on(e) as usize]);
        }
        let factors = &mut buf[..edges.len()];
        for (slot, &e) in factors.iter_mut().zip(edges) {
            *slot = self.table[e][users_on(e) as usize];
        }
        crate::entops::sorted_product(factors)
    }

    fn current(&self, path: usize, demand: &[u32]) -> f64 {
        self.product(path, |e| demand[e])
    }

    fn joining(&self, path: usize, demand: &[u32]) -> f64 {
        self.product(path, |e| demand[e] + 1)
    }

    /// Parameter a user on `from` would get after moving its unit to `to`.
    fn deviating(&self, from: usize, to: usize, demand: &[u32]) -> f64 {
        let source = self.problem.path_edges(from);
        self.product(to, |e| demand[e] + u32::from(!source.contains(&e)))
    }

    /// Best deviation target for a user on `from`: `(path, parameter)`,
    /// ties broken towards the lowest index.
    fn best_deviation(&self, from: usize, demand: &[u32]) -> Option<(usize, f64)> {
        let commodity = self.problem.path_commodity(from);
        let range = self.problem.commodities()[commodity].range.clone();
        let mut best: Option<(usize, f64)> = None;
        for to in range.filter(|&t| t != from) {
            let p = self.deviating(from, to, demand);
            if best.map_or(true, |(_, b)| p > b) {
                best = Some((to, p));
            }
        }
        best
    }
}

fn move_user(problem: &RoutingProblem, from: usize, to: usize, counts: &mut [u32], demand: &mut [u32]) {
    counts[from] -= 1;
    counts[to] += 1;
    for &e in problem.path_edges(from) {
        demand[e] -= 1;
    }
    for &e in problem.path_edges(to) {
        demand[e] += 1;
    }
}

/// Greedy Nash equilibrium for the network's budget `M`.
pub fn greedy_ne(net: &Network, demand: &DemandSpec, seed: u64) -> Result<GreedyOutcome> {
    let problem = RoutingProblem::new(net, demand)?;
    greedy_ne_on(&problem, net.budget(), seed)
}

/// Greedy Nash equilibrium with `round(nu_i * budget)` users per commodity.
///
/// Users join one at a time, round-robin over commodities, each taking the
/// path that maximizes its own fidelity at the current loads. Best-response
/// sweeps then move any user that can gain more than [`EPS_IMPROVE`] until a
/// full sweep makes no move. The procedure is deterministic; `seed` is only
/// recorded.
pub fn greedy_ne_on(problem: &RoutingProblem, budget: u32, seed: u64) -> Result<GreedyOutcome> {
    if budget == 0 {
        return Err(Error::Config("budget must be positive".into()));
    }
    let mut notes = Vec::new();
    let targets: Vec<u32> = problem
        .commodities()
        .iter()
        .map(|c| {
            let exact = c.commodity.demand * f64::from(budget);
            let users = exact.round();
            if (exact - users).abs() > 1e-9 {
                notes.push(format!(
                    "demand {} x budget {} rounded to {} users",
                    c.commodity.demand, budget, users
                ));
            }
            users as u32
        })
        .collect();
    let total_users: u32 = targets.iter().sum();
    if total_users == 0 {
        return Err(Error::Infeasible("demand rounds to zero users".into()));
    }
    let payoffs = Payoffs::new(problem, budget, total_users as usize);
    let n_paths = problem.path_count();
    let mut counts = vec![0u32; n_paths];
    let mut demand = vec![0u32; problem.edge_count()];
    let mut user_path: Vec<usize> = Vec::with_capacity(total_users as usize);

    // Payoffs only fall as users join, so stale heap keys are upper bounds.
    let mut heaps: Vec<BinaryHeap<(u64, Reverse<usize>)>> = problem
        .commodities()
        .iter()
        .map(|c| {
            c.range
                .clone()
                .map(|j| (payoffs.joining(j, &demand).to_bits(), Reverse(j)))
                .collect()
        })
        .collect();
    let mut placed = vec![0u32; targets.len()];
    let mut remaining = total_users;
    while remaining > 0 {
        for (c, heap) in heaps.iter_mut().enumerate() {
            if placed[c] == targets[c] {
                continue;
            }
            let chosen = loop {
                let (key, Reverse(j)) = heap.pop().expect("commodity has paths");
                let actual = payoffs.joining(j, &demand).to_bits();
                if actual == key {
                    break j;
                }
                heap.push((actual, Reverse(j)));
            };
            counts[chosen] += 1;
            for &e in problem.path_edges(chosen) {
                demand[e] += 1;
            }
            heap.push((payoffs.joining(chosen, &demand).to_bits(), Reverse(chosen)));
            user_path.push(chosen);
            placed[c] += 1;
            remaining -= 1;
        }
    }

    // Best-response sweeps. Users sharing a path face the same choice, so a
    // path found stable stays stable until the next move.
    let mut version = 0u64;
    let mut stable_at = vec![u64::MAX; n_paths];
    let mut sweeps = 0;
    let mut moves = 0usize;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut moved = false;
        for user in 0..user_path.len() {
            let from = user_path[user];
            if stable_at[from] == version {
                continue;
            }
            let current = payoffs.current(from, &demand);
            match payoffs.best_deviation(from, &demand) {
                Some((to, p)) if fidelity(p) - fidelity(current) > EPS_IMPROVE => {
                    move_user(problem, from, to, &mut counts, &mut demand);
                    user_path[user] = to;
                    version += 1;
                    moves += 1;
                    moved = true;
                }
                _ => stable_at[from] = version,
            }
        }
        if !moved {
            converged = true;
            break;
        }
    }
    if !converged {
        notes.push(format!("best-response sweeps hit the cap of {MAX_SWEEPS}"));
    }

    let m = f64::from(budget);
    let flows: Vec<f64> = counts.iter().map(|&n| f64::from(n) / m).collect();
    let loads: Vec<f64> = demand.iter().map(|&n| f64::from(n) / m).collect();
    let assignment = DiscreteAssignment {
        budget,
        path_counts: counts,
        edge_demand: demand,
    };
    let report = verify_ne(problem, &assignment);
    let diagnostics = Diagnostics {
        objective: report.max_improvement,
        iterations: sweeps,
        evaluations: moves,
        converged: converged && report.passes,
        notes,
    };
    let result = EquilibriumResult::from_flows(problem, flows, loads, SolverKind::GreedyNE, seed, diagnostics);
    Ok(GreedyOutcome { result, assignment })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeReport {
    /// Largest fidelity gain any single user could get by switching paths.
    pub max_improvement: f64,
    /// `(from, to)` path pair achieving it.
    pub deviation: Option<(usize, usize)>,
    pub passes: bool,
}

/// Checks every used path against every alternative, moving one user's unit of load.
pub fn verify_ne(problem: &RoutingProblem, assignment: &DiscreteAssignment) -> NeReport {
    let payoffs = Payoffs::new(problem, assignment.budget, assignment.users() as usize);
    let demand = &assignment.edge_demand;
    let mut max_improvement = f64::NEG_INFINITY;
    let mut deviation = None;
    for from in (0..problem.path_count()).filter(|&j| assignment.path_counts[j] > 0) {
        let current = fidelity(payoffs.current(from, demand));
        let range = problem.commodities()[problem.path_commodity(from)].range.clone();
        for to in range.filter(|&t| t != from) {
            let gain = fidelity(payoffs.deviating(from, to, demand)) - current;
            if gain > max_improvement {
                max_improvement = gain;
                deviation = Some((from, to));
            }
        }
    }
    if deviation.is_none() {
        max_improvement = 0.0;
    }
    NeReport {
        max_improvement,
        deviation,
        passes: max_improvement <= EPS_IMPROVE,
    }
}
