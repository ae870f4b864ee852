//! Braess removal scans, all-pair sweeps and seeded ensembles over random networks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{
    greedy_ne_on, solve_btn_with, solve_fair, solve_global_from, solve_wardrop, EquilibriumResult,
    RoutingProblem,
};
use crate::error::{Error, Result};
use crate::netmodel::{assign_states, demand_for, generate_er, DemandSpec, FidelitySpec, Network};
use crate::optimize::OptimizerConfig;

pub const MAX_REMOVAL_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanSolver {
    GreedyNe,
    Wardrop,
}

/// Solves one routing problem with the chosen equilibrium solver.
pub fn solve_equilibrium(
    problem: &RoutingProblem,
    solver: ScanSolver,
    config: &OptimizerConfig,
) -> Result<EquilibriumResult> {
    match solver {
        ScanSolver::GreedyNe => Ok(greedy_ne_on(problem, problem.budget(), config.seed)?.result),
        ScanSolver::Wardrop => solve_wardrop(problem, config),
    }
}

/// Outcome of re-solving after removing one edge subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Removal {
    pub edges: Vec<usize>,
    pub endpoints: Vec<(usize, usize)>,
    pub bell: Vec<bool>,
    pub post_fidelity: f64,
    pub improvement: f64,
    pub used_paths: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub max_size: usize,
    pub baseline: EquilibriumResult,
    /// Every evaluated subset, sizes ascending, lexicographic within a size.
    pub removals: Vec<Removal>,
    /// Index into `removals` of the largest improvement (first on ties).
    pub best: Option<usize>,
    /// Full equilibrium after the best removal.
    pub best_result: Option<EquilibriumResult>,
    /// Subsets that leave some commodity without a path.
    pub skipped: Vec<Vec<usize>>,
}

impl ScanResult {
    pub fn best_removal(&self) -> Option<&Removal> {
        self.best.map(|i| &self.removals[i])
    }

    /// Largest fidelity improvement; zero when no subset could be removed.
    pub fn best_improvement(&self) -> f64 {
        self.best_removal().map_or(0.0, |r| r.improvement)
    }

    pub fn converged(&self) -> bool {
        self.baseline.diagnostics.converged && self.removals.iter().all(|r| r.converged)
    }
}

/// All subsets of `0..n` with `1..=max_size` elements, sizes ascending and
/// lexicographic within a size.
pub fn removal_subsets(n: usize, max_size: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, size: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            extend(i + 1, n, size, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    for size in 1..=max_size.min(n) {
        extend(0, n, size, &mut Vec::with_capacity(size), &mut out);
    }
    out
}

/// Re-solves the equilibrium after removing every edge subset of size at most
/// `max_size`, keeping the demand of the intact network.
pub fn braess_scan(
    net: &Network,
    demand: &DemandSpec,
    max_size: usize,
    solver: ScanSolver,
    config: &OptimizerConfig,
) -> Result<ScanResult> {
    if !(1..=MAX_REMOVAL_SIZE).contains(&max_size) {
        return Err(Error::Config(format!(
            "removal size must be 1..={MAX_REMOVAL_SIZE}, got {max_size}"
        )));
    }
    let problem = RoutingProblem::new(net, demand)?;
    let baseline = solve_equilibrium(&problem, solver, config)?;
    let subsets = removal_subsets(net.edge_count(), max_size);
    let outcomes: Vec<Option<(Removal, EquilibriumResult)>> = subsets
        .par_iter()
        .map(|subset| -> Result<_> {
            let Ok(reduced) = problem.without_edges(subset) else {
                return Ok(None);
            };
            let post = solve_equilibrium(&reduced, solver, config)?;
            let removal = Removal {
                edges: subset.clone(),
                endpoints: subset.iter().map(|&e| net.edges()[e]).collect(),
                bell: subset.iter().map(|&e| net.states()[e].is_bell()).collect(),
                post_fidelity: post.average_fidelity,
                improvement: post.average_fidelity - baseline.average_fidelity,
                used_paths: post.used_paths().len(),
                converged: post.diagnostics.converged,
            };
            Ok(Some((removal, post)))
        })
        .collect::<Result<_>>()?;

    let mut removals: Vec<Removal> = Vec::new();
    let mut skipped = Vec::new();
    let mut best: Option<usize> = None;
    let mut best_result = None;
    for (subset, outcome) in subsets.into_iter().zip(outcomes) {
        match outcome {
            None => skipped.push(subset),
            Some((removal, post)) => {
                if best.map_or(true, |b| removal.improvement > removals[b].improvement) {
                    best = Some(removals.len());
                    best_result = Some(post);
                }
                removals.push(removal);
            }
        }
    }
    Ok(ScanResult {
        max_size,
        baseline,
        removals,
        best,
        best_result,
        skipped,
    })
}

/// Everything reported for one Alice-Bob pair of a network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub pair: (usize, usize),
    pub ne_fidelity: f64,
    pub best_removal: Option<Vec<(usize, usize)>>,
    pub post_removal_fidelity: f64,
    pub improvement: f64,
    pub global_fidelity: f64,
    pub btn_fidelity: f64,
    pub fair_fidelity: f64,
    /// Share of user pairs whose fidelity at the global optimum is below the Nash value.
    pub global_mass_below_ne: f64,
    /// Smallest used-path fidelity at the better-than-Nash optimum.
    pub btn_min_fidelity: f64,
    /// Smallest used-path fidelity at the Nash equilibrium.
    pub ne_min_fidelity: f64,
    pub converged: bool,
}

/// Nash equilibrium, best single-edge removal and the three optima for every
/// unordered node pair, in lexicographic pair order.
pub fn ab_sweep(net: &Network, solver: ScanSolver, config: &OptimizerConfig) -> Result<Vec<PairReport>> {
    let n = net.node_count();
    if n < 2 {
        return Err(Error::Infeasible("need at least two nodes".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    pairs
        .par_iter()
        .map(|&(a, b)| pair_report(net, a, b, solver, config))
        .collect()
}

fn pair_report(
    net: &Network,
    a: usize,
    b: usize,
    solver: ScanSolver,
    config: &OptimizerConfig,
) -> Result<PairReport> {
    let demand = demand_for(net, &[(a, b)])?;
    let scan = braess_scan(net, &demand, 1, solver, config)?;
    let problem = RoutingProblem::new(net, &demand)?;
    let cfg = OptimizerConfig {
        hop_step: 0.1 * demand.total(),
        ..config.clone()
    };
    let ne = greedy_ne_on(&problem, problem.budget(), config.seed)?.result;
    let we = solve_wardrop(&problem, &cfg)?;
    let fair = solve_fair(&problem, &cfg)?;
    let btn = solve_btn_with(&problem, &ne, &cfg, &[fair.flows()])?;
    let global = solve_global_from(&problem, &cfg, &[ne.flows(), we.flows(), btn.flows()])?;
    let ne_min = fidelity_of(ne.used_param_range().0);
    let converged = scan.converged()
        && [&ne, &we, &btn, &global, &fair]
            .iter()
            .all(|r| r.diagnostics.converged);
    Ok(PairReport {
        pair: (a, b),
        ne_fidelity: scan.baseline.average_fidelity,
        best_removal: scan.best_removal().map(|r| r.endpoints.clone()),
        post_removal_fidelity: scan
            .best_removal()
            .map_or(scan.baseline.average_fidelity, |r| r.post_fidelity),
        improvement: scan.best_improvement(),
        global_fidelity: global.average_fidelity,
        btn_fidelity: btn.average_fidelity,
        fair_fidelity: fair.average_fidelity,
        global_mass_below_ne: global.mass_below(ne_min - 1e-9),
        btn_min_fidelity: fidelity_of(btn.used_param_range().0),
        ne_min_fidelity: ne_min,
        converged,
    })
}

fn fidelity_of(p: f64) -> f64 {
    (3.0 * p + 1.0) / 4.0
}

/// Independent stream seed for work item `index`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(master) ^ index)
}

/// Random-network ensemble definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub nodes: usize,
    pub degree: f64,
    pub fidelity: FidelitySpec,
    pub bell_fraction: f64,
    /// Number of simultaneous Alice-Bob pairs.
    pub pairs: usize,
    pub removal_size: usize,
    pub runs: usize,
    pub master_seed: u64,
    pub budget: u32,
    pub solver: ScanSolver,
    /// How each realization chooses its Alice-Bob pairs.
    pub placement: Placement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Placement {
    /// Every unordered node pair (single-pair demand only).
    AllPairs,
    /// This many random placements of disjoint pairs.
    Sampled { count: usize },
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.fidelity.validate()?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.pairs == 0 || 2 * self.pairs > self.nodes {
            return Err(Error::Config(format!(
                "cannot place {} disjoint pairs on {} nodes",
                self.pairs, self.nodes
            )));
        }
        if !(0.0..=1.0).contains(&self.bell_fraction) {
            return Err(Error::Config(format!(
                "bell fraction must lie in [0, 1], got {}",
                self.bell_fraction
            )));
        }
        if !(1..=MAX_REMOVAL_SIZE).contains(&self.removal_size) {
            return Err(Error::Config(format!(
                "removal size must be 1..={MAX_REMOVAL_SIZE}, got {}",
                self.removal_size
            )));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        match self.placement {
            Placement::AllPairs if self.pairs != 1 => Err(Error::Config(
                "all-pairs placement needs single-pair demand".into(),
            )),
            Placement::Sampled { count: 0 } => {
                Err(Error::Config("sampled placement needs a positive count".into()))
            }
            _ => Ok(()),
        }
    }

    /// FNV-1a hash of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(runs)`; absent for a single run.
    pub standard_error: Option<f64>,
    pub fingerprint: String,
}

impl EnsembleStats {
    pub fn from_values(values: Vec<f64>, fingerprint: String) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let standard_error = (values.len() >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self {
            values,
            mean,
            standard_error,
            fingerprint,
        }
    }
}

/// Best removal found for one placement of Alice-Bob pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementRecord {
    pub realization: usize,
    pub seed: u64,
    pub pairs: Vec<(usize, usize)>,
    pub removal: Option<Vec<(usize, usize)>>,
    pub baseline_fidelity: f64,
    pub post_fidelity: f64,
    pub improvement: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleOutcome {
    pub config: EnsembleConfig,
    /// Per-realization mean of per-placement best improvements, negatives floored at zero.
    pub floored: EnsembleStats,
    /// The same statistic without flooring.
    pub unfloored: EnsembleStats,
    pub records: Vec<PlacementRecord>,
    pub converged: bool,
}

/// Network and placements for realization `index`.
fn realization(config: &EnsembleConfig, index: usize) -> Result<(u64, Network, Vec<Vec<(usize, usize)>>)> {
    let seed = derive_seed(config.master_seed, index as u64);
    let net = generate_er(config.nodes, config.degree, seed)?
        .with_budget(config.budget)?;
    let net = assign_states(&net, config.bell_fraction, config.fidelity, derive_seed(seed, 1))?;
    let n = config.nodes;
    let placements = match config.placement {
        Placement::AllPairs => (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| vec![(a, b)]))
            .collect(),
        Placement::Sampled { count } => {
            // Generated networks are connected, so every placement has paths.
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
            (0..count)
                .map(|_| {
                    let nodes = sample(&mut rng, n, 2 * config.pairs).into_vec();
                    nodes
                        .chunks(2)
                        .map(|c| (c[0].min(c[1]), c[0].max(c[1])))
                        .collect()
                })
                .collect()
        }
    };
    Ok((seed, net, placements))
}

/// Runs the ensemble: each realization draws a network, scans every placement
/// of Alice-Bob pairs for its best removal, and contributes the placement mean.
/// Results do not depend on the worker count.
pub fn ensemble_run(config: &EnsembleConfig) -> Result<EnsembleOutcome> {
    config.validate()?;
    let items: Vec<(usize, u64, Network, Vec<(usize, usize)>)> = (0..config.runs)
        .map(|i| realization(config, i))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .enumerate()
        .flat_map(|(i, (seed, net, placements))| {
            placements.into_iter().map(move |p| (i, seed, net.clone(), p))
        })
        .collect();
    let records: Vec<PlacementRecord> = items
        .par_iter()
        .map(|(i, seed, net, pairs)| -> Result<PlacementRecord> {
            let demand = demand_for(net, pairs)?;
            let opt = OptimizerConfig::for_demand(demand.total()).with_seed(*seed);
            let scan = braess_scan(net, &demand, config.removal_size, config.solver, &opt)?;
            let best = scan.best_removal();
            Ok(PlacementRecord {
                realization: *i,
                seed: *seed,
                pairs: pairs.clone(),
                removal: best.map(|r| r.endpoints.clone()),
                baseline_fidelity: scan.baseline.average_fidelity,
                post_fidelity: best.map_or(scan.baseline.average_fidelity, |r| r.post_fidelity),
                improvement: scan.best_improvement(),
                converged: scan.converged(),
            })
        })
        .collect::<Result<_>>()?;

    let mut floored = vec![0.0; config.runs];
    let mut unfloored = vec![0.0; config.runs];
    let mut counts = vec![0usize; config.runs];
    for r in &records {
        floored[r.realization] += r.improvement.max(0.0);
        unfloored[r.realization] += r.improvement;
        counts[r.realization] += 1;
    }
    for i in 0..config.runs {
        floored[i] /= counts[i] as f64;
        unfloored[i] /= counts[i] as f64;
    }
    let fingerprint = config.fingerprint();
    Ok(EnsembleOutcome {
        config: config.clone(),
        floored: EnsembleStats::from_values(floored, fingerprint.clone()),
        unfloored: EnsembleStats::from_values(unfloored, fingerprint),
        converged: records.iter().all(|r| r.converged),
        records,
    })
}

/// Multi-pair ensemble: `config.pairs` disjoint pairs share the network. With
/// one pair and all-pairs placement this is exactly [`ensemble_run`].
pub fn multi_pair_run(config: &EnsembleConfig) -> Result<EnsembleOutcome> {
    ensemble_run(config)
}

/// Improvements sorted by size, as `(rank fraction, cumulative share)` points.
/// Negative improvements count as zero; an all-zero input gives a flat curve.
pub fn cumulative_improvement(improvements: &[f64]) -> Result<Vec<(f64, f64)>> {
    if improvements.is_empty() {
        return Err(Error::Config("no improvements to accumulate".into()));
    }
    let mut sorted: Vec<f64> = improvements.iter().map(|v| v.max(0.0)).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    let n = sorted.len() as f64;
    let mut running = 0.0;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(k, v)| {
            running += v;
            let share = if total > 0.0 { running / total } else { 0.0 };
            ((k + 1) as f64 / n, share)
        })
        .collect())
}

fn pairs_cell(pairs: &[(usize, usize)]) -> String {
    pairs
        .iter()
        .map(|(a, b)| format!("{a}:{b}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn edges_cell(edges: Option<&[(usize, usize)]>) -> String {
    edges.map_or_else(String::new, |e| {
        e.iter().map(|(u, v)| format!("{u}-{v}")).collect::<Vec<_>>().join(" ")
    })
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

/// CSV with one row per evaluated removal subset.
pub fn scan_csv(pairs: &[(usize, usize)], scan: &ScanResult, seed: u64) -> String {
    to_csv(
        &["seed", "pairs", "removal", "baseline_fidelity", "post_fidelity", "improvement", "used_paths"],
        scan.removals.iter().map(|r| {
            vec![
                seed.to_string(),
                pairs_cell(pairs),
                edges_cell(Some(&r.endpoints)),
                scan.baseline.average_fidelity.to_string(),
                r.post_fidelity.to_string(),
                r.improvement.to_string(),
                r.used_paths.to_string(),
            ]
        }),
    )
}

/// CSV with one row per Alice-Bob pair of an all-pairs sweep.
pub fn sweep_csv(reports: &[PairReport], seed: u64) -> String {
    to_csv(
        &[
            "seed",
            "pairs",
            "removal",
            "baseline_fidelity",
            "post_fidelity",
            "improvement",
            "global_fidelity",
            "btn_fidelity",
            "fair_fidelity",
            "global_mass_below_ne",
        ],
        reports.iter().map(|r| {
            vec![
                seed.to_string(),
                pairs_cell(&[r.pair]),
                edges_cell(r.best_removal.as_deref()),
                r.ne_fidelity.to_string(),
                r.post_removal_fidelity.to_string(),
                r.improvement.to_string(),
                r.global_fidelity.to_string(),
                r.btn_fidelity.to_string(),
                r.fair_fidelity.to_string(),
                r.global_mass_below_ne.to_string(),
            ]
        }),
    )
}

/// CSV with one row per placement of an ensemble.
pub fn ensemble_csv(outcome: &EnsembleOutcome) -> String {
    to_csv(
        &["seed", "pairs", "removal", "baseline_fidelity", "post_fidelity", "improvement"],
        outcome.records.iter().map(|r| {
            vec![
                r.seed.to_string(),
                pairs_cell(&r.pairs),
                edges_cell(r.removal.as_deref()),
                r.baseline_fidelity.to_string(),
                r.post_fidelity.to_string(),
                r.improvement.to_string(),
            ]
        }),
    )
}
