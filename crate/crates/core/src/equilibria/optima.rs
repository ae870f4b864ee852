//! Social optima: global, better-than-Nash and fair.

use super::wardrop::{equilibrate_within, solve_wardrop};
use super::{
    greedy_ne_on, Diagnostics, EquilibriumResult, RoutingProblem, SolverKind, EPS_FAIR, EPS_FLOOR,
    X_CUT,
};
use crate::error::{Error, Result};
use crate::optimize::{basin_hop, project_feasible, Blocks, LocalMethod, OptimizerConfig};

const PENALTY_ROUNDS: [f64; 5] = [1e2, 1e3, 1e4, 1e5, 1e6];
const BLEND_STEPS: usize = 20;
const SUPPORT_STEPS: usize = 200;
/// Smallest mean-parameter gain that counts as a better support.
const SUPPORT_GAIN: f64 = 1e-12;

struct Search {
    x: Vec<f64>,
    value: f64,
    evals: usize,
    hops: usize,
    converged: bool,
}

/// Local search from every start, then basin hopping from the best of them.
fn search(
    objective: &dyn Fn(&[f64]) -> f64,
    starts: &[&[f64]],
    blocks: &Blocks<f64>,
    config: &OptimizerConfig,
) -> Result<Search> {
    let local_only = OptimizerConfig {
        hop_count: 0,
        ..config.clone()
    };
    let mut best: Option<Search> = None;
    for start in starts {
        let r = basin_hop(objective, start, blocks, &local_only)?;
        let improves = best.as_ref().map_or(true, |b| r.value < b.value);
        let evals = r.evals + best.as_ref().map_or(0, |b| b.evals);
        if improves {
            best = Some(Search {
                x: r.x,
                value: r.value,
                evals,
                hops: 0,
                converged: r.local_converged,
            });
        } else if let Some(b) = best.as_mut() {
            b.evals = evals;
        }
    }
    let mut best = best.ok_or_else(|| Error::Config("no starting point".into()))?;
    if config.hop_count > 0 {
        let hopped = basin_hop(objective, &best.x, blocks, config)?;
        best.evals += hopped.evals;
        best.hops = hopped.trace.len();
        if hopped.value < best.value {
            best.x = hopped.x;
            best.value = hopped.value;
            best.converged = hopped.local_converged;
        }
    }
    Ok(best)
}

fn hybrid(config: &OptimizerConfig) -> OptimizerConfig {
    OptimizerConfig {
        local_method: LocalMethod::Hybrid,
        target: None,
        ..config.clone()
    }
}

fn mean_param(problem: &RoutingProblem, x: &[f64]) -> f64 {
    let params = problem.path_params(&problem.loads(x));
    problem.average_param(x, &params)
}

/// Zeroes flows at or below [`X_CUT`] and restores conservation.
fn drop_dust(problem: &RoutingProblem, x: &[f64]) -> Result<Vec<f64>> {
    let blocks = problem.blocks();
    let mut out = x.to_vec();
    for b in blocks.iter() {
        let block = &mut out[b.start..b.start + b.len];
        let kept: f64 = block.iter().filter(|&&v| v > X_CUT).sum();
        if kept <= 0.0 {
            continue;
        }
        for v in block.iter_mut() {
            *v = if *v > X_CUT { *v * b.total / kept } else { 0.0 };
        }
    }
    project_feasible(&out, &blocks)
}

fn finish(
    problem: &RoutingProblem,
    x: Vec<f64>,
    solver: SolverKind,
    config: &OptimizerConfig,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    notes: Vec<String>,
) -> EquilibriumResult {
    let loads = problem.loads(&x);
    let objective = -mean_param(problem, &x);
    EquilibriumResult::from_flows(
        problem,
        x,
        loads,
        solver,
        config.seed,
        Diagnostics {
            objective,
            iterations,
            evaluations,
            converged,
            notes,
        },
    )
}

/// Maximizes the flow-weighted mean parameter, starting from the Nash and
/// Wardrop equilibria.
pub fn solve_global(problem: &RoutingProblem, config: &OptimizerConfig) -> Result<EquilibriumResult> {
    let ne = greedy_ne_on(problem, problem.budget(), config.seed)?.result;
    let we = solve_wardrop(problem, config)?;
    solve_global_from(problem, config, &[ne.flows(), we.flows()])
}

/// Global optimum searched from the given feasible starting flows.
pub fn solve_global_from(
    problem: &RoutingProblem,
    config: &OptimizerConfig,
    starts: &[&[f64]],
) -> Result<EquilibriumResult> {
    config.validate()?;
    let blocks = problem.blocks();
    let objective = |x: &[f64]| -mean_param(problem, x);
    let found = search(&objective, starts, &blocks, &hybrid(config))?;
    // Never return worse than a start.
    let mut x = found.x;
    let mut value = found.value;
    for s in starts {
        let s = project_feasible(s, &blocks)?;
        let v = objective(&s);
        if v < value {
            x = s;
            value = v;
        }
    }
    Ok(finish(
        problem,
        x,
        SolverKind::Global,
        config,
        found.hops,
        found.evals,
        found.converged,
        Vec::new(),
    ))
}

/// Largest shortfall of a used path below `floor`.
fn floor_violation(problem: &RoutingProblem, x: &[f64], floor: f64) -> f64 {
    let params = problem.path_params(&problem.loads(x));
    x.iter()
        .zip(&params)
        .filter(|&(&xj, _)| xj > X_CUT)
        .map(|(_, &p)| floor - p)
        .fold(0.0, f64::max)
}

/// Better-than-Nash optimum: maximizes the mean parameter while every used
/// path keeps at least the worst parameter a user gets at `ne`.
///
/// Penalty continuation over `mu`; each round's minimizer is cleaned of dust
/// flows and, if still infeasible, pulled back towards the Nash flows until
/// the floor holds. The best feasible point is kept, so the result never falls
/// below the Nash average.
pub fn solve_btn(
    problem: &RoutingProblem,
    ne: &EquilibriumResult,
    config: &OptimizerConfig,
) -> Result<EquilibriumResult> {
    // A fair flow whose common value clears the floor is feasible here too.
    let fair = solve_fair(problem, config)?;
    solve_btn_with(problem, ne, config, &[fair.flows()])
}

/// As [`solve_btn`], also considering the given flows as candidates when they
/// respect the floor.
pub fn solve_btn_with(
    problem: &RoutingProblem,
    ne: &EquilibriumResult,
    config: &OptimizerConfig,
    candidates: &[&[f64]],
) -> Result<EquilibriumResult> {
    config.validate()?;
    if ne.flows().len() != problem.path_count() {
        return Err(Error::Config("Nash result belongs to a different problem".into()));
    }
    let floor = ne.used_param_range().0;
    let blocks = problem.blocks();
    let base = ne.flows().to_vec();
    let we = solve_wardrop(problem, config)?;
    let cfg = hybrid(config);
    let local_cfg = OptimizerConfig { hop_count: 0, ..cfg.clone() };

    let mut best_x = base.clone();
    let mut best_p = mean_param(problem, &base);
    let mut current = base.clone();
    let (mut evals, mut hops) = (0, 0);
    let mut converged = true;
    for (round, &mu) in PENALTY_ROUNDS.iter().enumerate() {
        let objective = |x: &[f64]| {
            let params = problem.path_params(&problem.loads(x));
            let penalty: f64 = x
                .iter()
                .zip(&params)
                .map(|(&xj, &p)| xj.max(0.0) * (floor - p).max(0.0).powi(2))
                .sum();
            -problem.average_param(x, &params) + mu * penalty
        };
        let found = if round == 0 {
            search(&objective, &[&base, we.flows()], &blocks, &cfg)?
        } else {
            search(&objective, &[&current], &blocks, &local_cfg)?
        };
        evals += found.evals;
        hops += found.hops;
        converged &= found.converged;
        current = found.x;
        let cleaned = drop_dust(problem, &current)?;
        if let Some((x, p)) = feasible_blend(problem, &base, &cleaned, |x| {
            floor_violation(problem, x, floor) < EPS_FLOOR
        })? {
            if p > best_p {
                best_x = x;
                best_p = p;
            }
        }
    }
    for &c in candidates {
        let c = project_feasible(c, &blocks)?;
        if floor_violation(problem, &c, floor) < EPS_FLOOR {
            let p = mean_param(problem, &c);
            if p > best_p {
                best_x = c;
                best_p = p;
            }
        }
    }
    Ok(finish(
        problem,
        best_x,
        SolverKind::BtN,
        config,
        hops,
        evals,
        converged,
        vec![format!("floor parameter {floor}")],
    ))
}

/// Best feasible point on the segment from `anchor` (assumed feasible) to
/// `target`, scanning from the target end.
fn feasible_blend(
    problem: &RoutingProblem,
    anchor: &[f64],
    target: &[f64],
    feasible: impl Fn(&[f64]) -> bool,
) -> Result<Option<(Vec<f64>, f64)>> {
    let blocks = problem.blocks();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for k in 0..BLEND_STEPS {
        let t = 1.0 - k as f64 / BLEND_STEPS as f64;
        let mixed: Vec<f64> = anchor
            .iter()
            .zip(target)
            .map(|(a, b)| a + t * (b - a))
            .collect();
        let x = if k == 0 { target.to_vec() } else { drop_dust(problem, &project_feasible(&mixed, &blocks)?)? };
        if feasible(&x) {
            let p = mean_param(problem, &x);
            if best.as_ref().map_or(true, |(_, b)| p > *b) {
                best = Some((x, p));
            }
        }
    }
    Ok(best)
}

/// Largest parameter spread among a commodity's used paths.
fn fair_spread(problem: &RoutingProblem, x: &[f64]) -> f64 {
    let params = problem.path_params(&problem.loads(x));
    problem
        .commodities()
        .iter()
        .map(|c| {
            let (lo, hi) = c
                .range
                .clone()
                .filter(|&j| x[j] > X_CUT)
                .map(|j| params[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
            if lo > hi {
                0.0
            } else {
                hi - lo
            }
        })
        .fold(0.0, f64::max)
}

/// Wardrop equilibrium of the game restricted to `support`, if it is fair and
/// every commodity keeps a path.
fn restricted_we(problem: &RoutingProblem, support: &[bool]) -> Result<Option<(Vec<f64>, f64)>> {
    let mut x0 = vec![0.0; problem.path_count()];
    for c in problem.commodities() {
        let n = c.range.clone().filter(|&j| support[j]).count();
        if n == 0 {
            return Ok(None);
        }
        for j in c.range.clone().filter(|&j| support[j]) {
            x0[j] = c.commodity.demand / n as f64;
        }
    }
    let (x, _) = equilibrate_within(problem, &x0, Some(support))?;
    let x = drop_dust(problem, &x)?;
    if fair_spread(problem, &x) > EPS_FAIR {
        return Ok(None);
    }
    let p = mean_param(problem, &x);
    Ok(Some((x, p)))
}

/// Hill climbing over path supports by single-path toggles, best move first.
fn support_search(
    problem: &RoutingProblem,
    start: Vec<bool>,
) -> Result<Option<(Vec<f64>, f64, usize)>> {
    let Some((mut best_x, mut best_p)) = restricted_we(problem, &start)? else {
        return Ok(None);
    };
    let mut support = start;
    let mut steps = 0;
    while steps < SUPPORT_STEPS {
        steps += 1;
        let mut improved: Option<(usize, Vec<f64>, f64)> = None;
        for j in 0..support.len() {
            let mut trial = support.clone();
            trial[j] = !trial[j];
            if let Some((x, p)) = restricted_we(problem, &trial)? {
                let bar = improved.as_ref().map_or(best_p + SUPPORT_GAIN, |(_, _, b)| *b);
                if p > bar {
                    improved = Some((j, x, p));
                }
            }
        }
        let Some((j, x, p)) = improved else { break };
        support[j] = !support[j];
        best_x = x;
        best_p = p;
    }
    Ok(Some((best_x, best_p, steps)))
}

/// Fair optimum: the highest mean parameter among flows whose used paths
/// share one parameter within each commodity.
///
/// A fair flow is the Wardrop equilibrium of the game restricted to its own
/// support, so the search runs over supports: penalty continuation (pulling
/// used paths towards their commodity mean) proposes supports, and hill
/// climbing over single-path toggles refines them. The Wardrop equilibrium
/// itself is the all-paths candidate.
pub fn solve_fair(problem: &RoutingProblem, config: &OptimizerConfig) -> Result<EquilibriumResult> {
    config.validate()?;
    let blocks = problem.blocks();
    let we = solve_wardrop(problem, config)?;
    let ne = greedy_ne_on(problem, problem.budget(), config.seed)?.result;
    let cfg = hybrid(config);
    let local_cfg = OptimizerConfig { hop_count: 0, ..cfg.clone() };

    let mut best_x = we.flows().to_vec();
    let mut best_p = if fair_spread(problem, &best_x) <= EPS_FAIR {
        mean_param(problem, &best_x)
    } else {
        f64::NEG_INFINITY
    };
    let mut current = we.flows().to_vec();
    let (mut evals, mut hops) = (0, 0);
    let mut converged = true;
    let mut supports: Vec<Vec<bool>> = vec![vec![true; problem.path_count()]];
    for (round, &mu) in PENALTY_ROUNDS.iter().enumerate() {
        let objective = |x: &[f64]| {
            let params = problem.path_params(&problem.loads(x));
            let means = problem.commodity_means(x, &params);
            let mut penalty = 0.0;
            for (c, m) in problem.commodities().iter().zip(&means) {
                for j in c.range.clone() {
                    penalty += x[j].max(0.0) * (params[j] - m).powi(2);
                }
            }
            -problem.average_param(x, &params) + mu * penalty
        };
        let found = if round == 0 {
            search(&objective, &[we.flows(), ne.flows()], &blocks, &cfg)?
        } else {
            search(&objective, &[&current], &blocks, &local_cfg)?
        };
        evals += found.evals;
        hops += found.hops;
        converged &= found.converged;
        current = found.x;
        let support: Vec<bool> = drop_dust(problem, &current)?.iter().map(|&v| v > 0.0).collect();
        if !supports.contains(&support) {
            supports.push(support);
        }
    }
    for support in supports {
        if let Some((x, p, steps)) = support_search(problem, support)? {
            hops += steps;
            if p > best_p {
                best_x = x;
                best_p = p;
            }
        }
    }
    let mut notes = Vec::new();
    if best_p == f64::NEG_INFINITY {
        notes.push("no assignment met the fairness tolerance".into());
        converged = false;
    }
    Ok(finish(problem, best_x, SolverKind::Fair, config, hops, evals, converged, notes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{greedy_ne, verify_wardrop};
    use crate::netmodel::{demand_for, EdgeState, Network};

    fn small() -> (Network, RoutingProblem) {
        let w = EdgeState::werner(0.9).unwrap();
        let b = EdgeState::Bell;
        let net = Network::new(
            5,
            vec![(0, 1), (0, 2), (1, 2), (1, 4), (2, 4), (0, 3), (3, 4)],
            vec![b, w, b, w, b, w, w],
            200,
        )
        .unwrap();
        let demand = demand_for(&net, &[(0, 4)]).unwrap();
        let p = RoutingProblem::new(&net, &demand).unwrap();
        (net, p)
    }

    fn cfg() -> OptimizerConfig {
        OptimizerConfig {
            hop_count: 10,
            ..OptimizerConfig::for_demand(3.0)
        }
    }

    #[test]
    fn ordering_on_small_instance() {
        let (net, p) = small();
        let ne = greedy_ne(&net, p.demand(), 0).unwrap().result;
        let btn = solve_btn(&p, &ne, &cfg()).unwrap();
        let we = solve_wardrop(&p, &cfg()).unwrap();
        let global = solve_global_from(&p, &cfg(), &[ne.flows(), we.flows(), btn.flows()]).unwrap();
        let fair = solve_fair(&p, &cfg()).unwrap();
        assert!(global.average_param >= btn.average_param - 1e-12);
        assert!(btn.average_param >= ne.average_param - 1e-12);
        assert!(global.average_param >= we.average_param - 1e-6);
        assert!(fair.average_param >= we.average_param - 1e-6);
        assert!(fair_spread(&p, fair.flows()) <= EPS_FAIR);
        let floor = ne.used_param_range().0;
        assert!(btn.used_param_range().0 >= floor - EPS_FLOOR);
        assert!((p.conservation_error(global.flows())) < 1e-9);
    }

    #[test]
    fn symmetric_network_all_agree() {
        let w = EdgeState::werner(0.9).unwrap();
        let net = Network::new(4, vec![(0, 1), (1, 3), (0, 2), (2, 3)], vec![w; 4], 100).unwrap();
        let demand = demand_for(&net, &[(0, 3)]).unwrap();
        let p = RoutingProblem::new(&net, &demand).unwrap();
        let c = OptimizerConfig { hop_count: 5, ..OptimizerConfig::for_demand(2.0) };
        let we = solve_wardrop(&p, &c).unwrap();
        let global = solve_global(&p, &c).unwrap();
        let fair = solve_fair(&p, &c).unwrap();
        assert!((global.average_param - we.average_param).abs() < 1e-9);
        assert!((fair.average_param - we.average_param).abs() < 1e-9);
        assert!(verify_wardrop(&global, 1e-6).passes);
    }
}
