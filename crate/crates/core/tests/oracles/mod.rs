//! Reference implementations shared by the property and acceptance tests.
//! They recompute everything from first principles and share no code paths
//! with the solvers beyond the edge response functions.
#![allow(dead_code)]

use qnet_core::entops::{purify_pair, WernerParam};
use qnet_core::equilibria::RoutingProblem;
use qnet_core::netmodel::Network;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Monte Carlo estimate of the pumped parameter: mean and standard error.
///
/// Each trial starts from `ensemble` copies of `p0` and repeatedly purifies the
/// two lowest states (success keeps the output, failure loses both) until at
/// most `floor(y * ensemble)` states remain. Trials that lose every state are
/// discarded.
pub fn pump_monte_carlo(p0: f64, y: f64, ensemble: usize, trials: usize, seed: u64) -> (f64, f64) {
    let stop = ((y * ensemble as f64 + 1e-9).floor() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq, mut kept) = (0.0, 0.0, 0usize);
    let mut states: Vec<f64> = Vec::with_capacity(ensemble);
    for _ in 0..trials {
        states.clear();
        states.resize(ensemble, p0);
        // Kept sorted descending so the two lowest sit at the end.
        while states.len() > stop && states.len() >= 2 {
            let a = states.pop().unwrap();
            let b = states.pop().unwrap();
            let (out, q) = purify_pair(WernerParam::new(a).unwrap(), WernerParam::new(b).unwrap());
            if rng.gen::<f64>() < q {
                let v = out.value();
                let pos = states.partition_point(|&s| s > v);
                states.insert(pos, v);
            }
        }
        if states.is_empty() {
            continue;
        }
        let mean = states.iter().sum::<f64>() / states.len() as f64;
        sum += mean;
        sum_sq += mean * mean;
        kept += 1;
    }
    let n = kept as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Every simple path from `a` to `b` found by trying all node sequences, as sorted node lists.
pub fn brute_force_paths(net: &Network, a: usize, b: usize) -> Vec<Vec<usize>> {
    let n = net.node_count();
    let mut out = Vec::new();
    let inner: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
    // Every ordered selection of intermediate nodes, i.e. prefixes of all permutations.
    let mut seq = vec![a];
    fn extend(
        net: &Network,
        b: usize,
        inner: &[usize],
        used: &mut Vec<bool>,
        seq: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let last = *seq.last().unwrap();
        if net.edge_index(last, b).is_some() {
            let mut p = seq.clone();
            p.push(b);
            out.push(p);
        }
        for (i, &v) in inner.iter().enumerate() {
            if !used[i] {
                used[i] = true;
                seq.push(v);
                let valid = seq.windows(2).all(|w| net.edge_index(w[0], w[1]).is_some());
                if valid {
                    extend(net, b, inner, used, seq, out);
                }
                seq.pop();
                used[i] = false;
            }
        }
    }
    let mut used = vec![false; inner.len()];
    extend(net, b, &inner, &mut used, &mut seq, &mut out);
    out.sort();
    out
}

/// Payoff (Werner parameter) of a user on `path` when edges carry `demand` users.
pub fn discrete_payoff(problem: &RoutingProblem, path: usize, demand: &[u32]) -> f64 {
    let m = f64::from(problem.budget());
    let mut factors: Vec<f64> = problem
        .path_edges(path)
        .iter()
        .map(|&e| problem.responses()[e].eval(f64::from(demand[e]) / m))
        .collect();
    factors.sort_by(f64::total_cmp);
    factors.iter().product()
}

fn edge_demand(problem: &RoutingProblem, counts: &[u32]) -> Vec<u32> {
    let mut demand = vec![0u32; problem.edge_count()];
    for (j, &c) in counts.iter().enumerate() {
        for &e in problem.path_edges(j) {
            demand[e] += c;
        }
    }
    demand
}

/// Largest gain any single user can get by switching paths within its commodity.
pub fn best_single_deviation(problem: &RoutingProblem, counts: &[u32]) -> f64 {
    let demand = edge_demand(problem, counts);
    let mut best = f64::NEG_INFINITY;
    for cp in problem.commodities() {
        for from in cp.range.clone().filter(|&j| counts[j] > 0) {
            let stay = discrete_payoff(problem, from, &demand);
            for to in cp.range.clone().filter(|&j| j != from) {
                let mut moved = demand.clone();
                for &e in problem.path_edges(from) {
                    moved[e] -= 1;
                }
                for &e in problem.path_edges(to) {
                    moved[e] += 1;
                }
                best = best.max(discrete_payoff(problem, to, &moved) - stay);
            }
        }
    }
    best
}

/// All ways of splitting `users` indistinguishable users over `paths` paths.
pub fn compositions(users: u32, paths: usize) -> Vec<Vec<u32>> {
    if paths == 1 {
        return vec![vec![users]];
    }
    let mut out = Vec::new();
    for first in 0..=users {
        for mut rest in compositions(users - first, paths - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Every pure-strategy profile (per-path user counts) in which no single user
/// gains more than `eps` by deviating.
pub fn exhaustive_equilibria(problem: &RoutingProblem, users: &[u32], eps: f64) -> Vec<Vec<u32>> {
    let per_commodity: Vec<Vec<Vec<u32>>> = problem
        .commodities()
        .iter()
        .zip(users)
        .map(|(cp, &u)| compositions(u, cp.range.len()))
        .collect();
    let mut profiles: Vec<Vec<u32>> = vec![Vec::new()];
    for options in &per_commodity {
        profiles = profiles
            .iter()
            .flat_map(|p| {
                options.iter().map(move |o| {
                    let mut q = p.clone();
                    q.extend_from_slice(o);
                    q
                })
            })
            .collect();
    }
    profiles
        .into_iter()
        .filter(|c| best_single_deviation(problem, c) <= eps)
        .collect()
}
