//! Wardrop equilibrium: the continuous-flow limit of the routing game.

use serde::Serialize;

use super::{Diagnostics, EquilibriumResult, RoutingProblem, SolverKind, EPS_WE, X_CUT};
use crate::error::Result;
use crate::optimize::{basin_hop, project_feasible, LocalMethod, OptimizerConfig};

/// Parameter gap at which path equilibration stops.
const EQUILIBRATION_TOL: f64 = 1e-13;
const EQUILIBRATION_MAX_SWEEPS: usize = 200_000;
const BISECTION_STEPS: usize = 200;
const STALL_SWEEPS: usize = 5;

/// Deviation from the Wardrop conditions: per commodity `i`,
/// `sum_j (pbar_i - p_j)^2 * x_j^beta_j` with `beta_j = 0` when `p_j >= pbar_i`
/// and `1` otherwise (`0^0 = 1`). Zero exactly at an equilibrium.
pub fn we_objective(problem: &RoutingProblem, flows: &[f64]) -> f64 {
    let params = problem.path_params(&problem.loads(flows));
    we_objective_at(problem, flows, &params)
}

fn we_objective_at(problem: &RoutingProblem, flows: &[f64], params: &[f64]) -> f64 {
    let means = problem.commodity_means(flows, params);
    let mut c = 0.0;
    for (cp, pbar) in problem.commodities().iter().zip(means) {
        for j in cp.range.clone() {
            let gap = (pbar - params[j]).powi(2);
            c += if params[j] >= pbar { gap } else { gap * flows[j].max(0.0) };
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibrationStats {
    pub sweeps: usize,
    /// Largest parameter gap between the best path and the worst used path.
    pub gap: f64,
}

/// Path equilibration: repeatedly moves flow from each commodity's worst used
/// path to its best path until their parameters meet.
///
/// Path cost `-ln p` is a sum of nondecreasing edge costs, so this descends a
/// convex potential and the equilibrium parameters it reaches are unique.
pub fn equilibrate(problem: &RoutingProblem, x0: &[f64]) -> Result<(Vec<f64>, EquilibrationStats)> {
    equilibrate_within(problem, x0, None)
}

/// As [`equilibrate`], moving flow only between paths with `allowed[j]`.
pub(crate) fn equilibrate_within(
    problem: &RoutingProblem,
    x0: &[f64],
    allowed: Option<&[bool]>,
) -> Result<(Vec<f64>, EquilibrationStats)> {
    let mut x = project_feasible(x0, &problem.blocks())?;
    let usable = |j: usize| allowed.map_or(true, |a| a[j]);
    let mut loads = problem.loads(&x);
    let mut gap = f64::INFINITY;
    let mut sweeps = 0;
    let mut best_gap = f64::INFINITY;
    let mut stalled = 0;
    while sweeps < EQUILIBRATION_MAX_SWEEPS {
        sweeps += 1;
        gap = 0.0;
        for cp in problem.commodities() {
            let paths: Vec<usize> = cp.range.clone().filter(|&j| usable(j)).collect();
            for &s in &paths {
                if x[s] <= 0.0 {
                    continue;
                }
                let params: Vec<f64> = paths.iter().map(|&j| path_param(problem, &loads, j)).collect();
                let (bi, &pt) = params
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .expect("nonempty");
                let t = paths[bi];
                let ps = path_param(problem, &loads, s);
                let g = pt - ps;
                if t == s || g <= EQUILIBRATION_TOL {
                    continue;
                }
                gap = gap.max(g);
                let delta = balancing_shift(problem, &loads, s, t, x[s]);
                shift(problem, &mut x, &mut loads, s, t, delta);
            }
        }
        if gap <= EQUILIBRATION_TOL {
            break;
        }
        // Near the tolerance the gap can sit at rounding level without shrinking.
        if gap < best_gap {
            best_gap = gap;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_SWEEPS {
                break;
            }
        }
    }
    Ok((x, EquilibrationStats { sweeps, gap }))
}

fn path_param(problem: &RoutingProblem, loads: &[f64], j: usize) -> f64 {
    problem.product_over(problem.path_edges(j), |e| problem.responses()[e].eval(loads[e].max(0.0)))
}

fn shifted_params(problem: &RoutingProblem, loads: &[f64], s: usize, t: usize, delta: f64) -> (f64, f64) {
    let mut trial = loads.to_vec();
    for &e in problem.path_edges(s) {
        trial[e] -= delta;
    }
    for &e in problem.path_edges(t) {
        trial[e] += delta;
    }
    let value = |j: usize| {
        problem.product_over(problem.path_edges(j), |e| {
            problem.responses()[e].eval(trial[e].max(0.0))
        })
    };
    (value(s), value(t))
}

/// Amount of flow to move from `s` to `t` so their parameters meet, capped at `available`.
fn balancing_shift(problem: &RoutingProblem, loads: &[f64], s: usize, t: usize, available: f64) -> f64 {
    let (ps, pt) = shifted_params(problem, loads, s, t, available);
    if pt >= ps {
        return available;
    }
    let (mut lo, mut hi) = (0.0, available);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (ps, pt) = shifted_params(problem, loads, s, t, mid);
        if pt > ps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Always make progress: lo = 0 only when the gap closes within one ulp of flow.
    if lo > 0.0 {
        lo
    } else {
        hi
    }
}

fn shift(problem: &RoutingProblem, x: &mut [f64], loads: &mut [f64], s: usize, t: usize, delta: f64) {
    let delta = delta.min(x[s]);
    x[s] = if delta == x[s] { 0.0 } else { x[s] - delta };
    x[t] += delta;
    for &e in problem.path_edges(s) {
        loads[e] -= delta;
    }
    for &e in problem.path_edges(t) {
        loads[e] += delta;
    }
}

/// Wardrop equilibrium: path equilibration from the uniform split, followed by
/// basin hopping on [`we_objective`] if the result is not yet within [`EPS_WE`].
pub fn solve_wardrop(problem: &RoutingProblem, config: &OptimizerConfig) -> Result<EquilibriumResult> {
    config.validate()?;
    let blocks = problem.blocks();
    let (mut x, stats) = equilibrate(problem, &blocks.uniform())?;
    let mut c = we_objective(problem, &x);
    let mut iterations = stats.sweeps;
    let mut evaluations = 0;
    let mut notes = Vec::new();
    if c > EPS_WE {
        notes.push(format!("equilibration stopped at C = {c:e}; basin hopping"));
        let hop_config = OptimizerConfig {
            target: Some(EPS_WE),
            local_method: LocalMethod::Hybrid,
            ..config.clone()
        };
        let objective = |v: &[f64]| we_objective(problem, v);
        let hopped = basin_hop(&objective, &x, &blocks, &hop_config)?;
        evaluations += hopped.evals;
        iterations += hopped.trace.len();
        let (polished, more) = equilibrate(problem, &hopped.x)?;
        iterations += more.sweeps;
        let polished_c = we_objective(problem, &polished);
        if polished_c < c {
            x = polished;
            c = polished_c;
        }
    }
    let loads = problem.loads(&x);
    let diagnostics = Diagnostics {
        objective: c,
        iterations,
        evaluations,
        converged: c <= EPS_WE,
        notes,
    };
    Ok(EquilibriumResult::from_flows(
        problem,
        x,
        loads,
        SolverKind::Wardrop,
        config.seed,
        diagnostics,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WardropReport {
    /// Largest parameter spread among a commodity's used paths.
    pub spread: f64,
    /// Largest amount by which an unused path beats its commodity's worst used path.
    pub excess: f64,
    pub passes: bool,
}

/// Checks the Wardrop conditions per commodity; paths with flow at most
/// [`X_CUT`] count as unused.
pub fn verify_wardrop(result: &EquilibriumResult, tol: f64) -> WardropReport {
    let flows = result.flows();
    let commodities = result.assignment.demand.commodities.len();
    let mut spread: f64 = 0.0;
    let mut excess: f64 = 0.0;
    for c in 0..commodities {
        let paths: Vec<usize> = (0..flows.len())
            .filter(|&j| result.path_commodity[j] == c)
            .collect();
        let used = paths.iter().filter(|&&j| flows[j] > X_CUT);
        let (lo, hi) = used
            .map(|&j| result.path_params[j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
        if lo > hi {
            continue;
        }
        spread = spread.max(hi - lo);
        for &j in paths.iter().filter(|&&j| flows[j] <= X_CUT) {
            excess = excess.max(result.path_params[j] - lo);
        }
    }
    WardropReport {
        spread,
        excess,
        passes: spread <= tol && excess <= tol,
    }
}
