//! Network representation, generators, simple-path enumeration and demand.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entops::{fidelity_from_werner, werner_from_fidelity, WernerParam};
use crate::error::{invariant, Error, Result};

/// Maximum number of G(N, K) draws before ER generation gives up on connectivity.
pub const ER_MAX_ATTEMPTS: usize = 10_000;

/// Entangled state every copy on an edge is prepared in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeState {
    Bell,
    Werner { p0: f64 },
}

impl EdgeState {
    pub fn werner(p0: f64) -> Result<Self> {
        if p0 > 1.0 / 3.0 && p0 < 1.0 {
            Ok(EdgeState::Werner { p0 })
        } else {
            Err(invariant("p0", format!("Werner parameter {p0} outside (1/3, 1)")))
        }
    }

    pub fn from_fidelity(f0: f64) -> Result<Self> {
        if !(f0 > 0.5 && f0 < 1.0) {
            return Err(Error::Domain {
                what: "initial fidelity",
                value: f0,
            });
        }
        Self::werner(werner_from_fidelity(f0)?.value())
    }

    pub fn p0(&self) -> f64 {
        match *self {
            EdgeState::Bell => 1.0,
            EdgeState::Werner { p0 } => p0,
        }
    }

    pub fn fidelity(&self) -> f64 {
        fidelity_from_werner(WernerParam::new(self.p0()).expect("validated p0"))
    }

    pub fn is_bell(&self) -> bool {
        matches!(self, EdgeState::Bell)
    }
}

/// Undirected simple graph whose edges each hold `budget` copies of an entangled state.
///
/// Edges are kept sorted as `(u, v)` with `u < v`; an edge's position in that
/// list is its identity everywhere else in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    states: Vec<EdgeState>,
    budget: u32,
}

impl Network {
    /// Builds a connected network. Edges may be given in any order and orientation.
    pub fn new(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        states: Vec<EdgeState>,
        budget: u32,
    ) -> Result<Self> {
        let net = Self::unchecked_connectivity(node_count, edges, states, budget)?;
        if !net.is_connected() {
            return Err(invariant("edges", "network is not connected"));
        }
        Ok(net)
    }

    fn unchecked_connectivity(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        states: Vec<EdgeState>,
        budget: u32,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(invariant("n", "network needs at least one node"));
        }
        if budget == 0 {
            return Err(invariant("m_budget", "budget must be positive"));
        }
        if edges.len() != states.len() {
            return Err(invariant("states", "one state per edge required"));
        }
        let mut paired: Vec<((usize, usize), EdgeState)> = Vec::with_capacity(edges.len());
        for ((u, v), state) in edges.into_iter().zip(states) {
            if u == v {
                return Err(invariant("edges", format!("self-loop at node {u}")));
            }
            for node in [u, v] {
                if node >= node_count {
                    return Err(Error::InvalidNode { node, node_count });
                }
            }
            if let EdgeState::Werner { p0 } = state {
                EdgeState::werner(p0)?;
            }
            paired.push(((u.min(v), u.max(v)), state));
        }
        paired.sort_by_key(|&(e, _)| e);
        if let Some(w) = paired.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(invariant("edges", format!("duplicate edge {:?}", w[0].0)));
        }
        let (edges, states) = paired.into_iter().unzip();
        Ok(Self {
            node_count,
            edges,
            states,
            budget,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn states(&self) -> &[EdgeState] {
        &self.states
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn with_budget(mut self, budget: u32) -> Result<Self> {
        if budget == 0 {
            return Err(invariant("m_budget", "budget must be positive"));
        }
        self.budget = budget;
        Ok(self)
    }

    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.binary_search(&(u.min(v), u.max(v))).ok()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(u, v)| u == node || v == node)
            .count()
    }

    /// Neighbors of each node as `(neighbor, edge index)`, ascending by neighbor.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for (idx, &(u, v)) in self.edges.iter().enumerate() {
            adj[u].push((v, idx));
            adj[v].push((u, idx));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.node_count);
        for &(u, v) in &self.edges {
            uf.union(u, v);
        }
        uf.components() == 1
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node < self.node_count {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node,
                node_count: self.node_count,
            })
        }
    }
}

/// Disjoint-set forest with path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            components: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        self.components -= 1;
        true
    }

    pub fn components(&self) -> usize {
        self.components
    }
}

/// Uniform connected graph with `n * k / 2` edges: G(N, K) conditioned on connectivity.
/// All edges start as Bell states; use [`assign_states`] to prepare them.
pub fn generate_er(n_nodes: usize, avg_degree: f64, seed: u64) -> Result<Network> {
    if n_nodes < 2 {
        return Err(Error::Infeasible(format!("need at least 2 nodes, got {n_nodes}")));
    }
    let k_edges = avg_degree * n_nodes as f64 / 2.0;
    if !(k_edges.is_finite() && (k_edges - k_edges.round()).abs() < 1e-9) {
        return Err(Error::Infeasible(format!(
            "n*k/2 = {k_edges} is not an integer edge count"
        )));
    }
    let k_edges = k_edges.round() as usize;
    let all_pairs = n_nodes * (n_nodes - 1) / 2;
    if k_edges < n_nodes - 1 || k_edges > all_pairs {
        return Err(Error::Infeasible(format!(
            "{k_edges} edges cannot form a connected simple graph on {n_nodes} nodes"
        )));
    }
    let pair_of = |mut idx: usize| {
        // Row-major enumeration of pairs u < v.
        let mut u = 0;
        while idx >= n_nodes - 1 - u {
            idx -= n_nodes - 1 - u;
            u += 1;
        }
        (u, u + 1 + idx)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ER_MAX_ATTEMPTS {
        let edges: Vec<(usize, usize)> = sample(&mut rng, all_pairs, k_edges)
            .into_iter()
            .map(pair_of)
            .collect();
        let mut uf = UnionFind::new(n_nodes);
        for &(u, v) in &edges {
            uf.union(u, v);
        }
        if uf.components() == 1 {
            let states = vec![EdgeState::Bell; edges.len()];
            return Network::new(n_nodes, edges, states, 1000);
        }
    }
    Err(Error::ResampleExhausted {
        attempts: ER_MAX_ATTEMPTS,
    })
}

/// `side x side` square lattice with open boundaries; node `(r, c)` has index `r * side + c`.
pub fn generate_lattice(side: usize) -> Result<Network> {
    if side < 2 {
        return Err(Error::Infeasible(format!("lattice side must be >= 2, got {side}")));
    }
    let id = |r: usize, c: usize| r * side + c;
    let mut edges = Vec::with_capacity(2 * side * (side - 1));
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < side {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    let states = vec![EdgeState::Bell; edges.len()];
    Network::new(side * side, edges, states, 1000)
}

/// How Werner edges pick their initial fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FidelitySpec {
    Constant { f0: f64 },
    /// Discrete truncated Gaussian over `{0.55, 0.575, ..., 0.975}`.
    Gaussian { mean: f64, sigma: f64 },
}

impl FidelitySpec {
    pub const GAUSSIAN_SUPPORT_LEN: usize = 18;

    pub fn gaussian_support() -> Vec<f64> {
        (0..Self::GAUSSIAN_SUPPORT_LEN)
            .map(|i| (550 + 25 * i) as f64 / 1000.0)
            .collect()
    }

    /// Normalized probabilities over [`FidelitySpec::gaussian_support`].
    pub fn gaussian_weights(mean: f64, sigma: f64) -> Vec<f64> {
        let raw: Vec<f64> = Self::gaussian_support()
            .into_iter()
            .map(|f| (-0.5 * ((f - mean) / sigma).powi(2)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FidelitySpec::Constant { f0 } if !(f0 > 0.5 && f0 < 1.0) => Err(Error::Domain {
                what: "initial fidelity",
                value: f0,
            }),
            FidelitySpec::Gaussian { sigma, mean } if !(sigma > 0.0 && mean.is_finite()) => {
                Err(Error::Domain {
                    what: "Gaussian fidelity width",
                    value: sigma,
                })
            }
            _ => Ok(()),
        }
    }
}

/// Prepares `round(bell_fraction * K)` uniformly chosen edges in Bell states and the
/// rest in Werner states drawn from `f0`.
pub fn assign_states(
    net: &Network,
    bell_fraction: f64,
    f0: FidelitySpec,
    seed: u64,
) -> Result<Network> {
    use rand::distributions::{Distribution, WeightedIndex};

    if !(0.0..=1.0).contains(&bell_fraction) {
        return Err(Error::Domain {
            what: "Bell fraction",
            value: bell_fraction,
        });
    }
    f0.validate()?;
    let k = net.edge_count();
    let bell_count = (bell_fraction * k as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_bell = vec![false; k];
    for idx in sample(&mut rng, k, bell_count) {
        is_bell[idx] = true;
    }
    let support = FidelitySpec::gaussian_support();
    let sampler = match f0 {
        FidelitySpec::Gaussian { mean, sigma } => Some(
            WeightedIndex::new(FidelitySpec::gaussian_weights(mean, sigma))
                .map_err(|e| Error::Config(e.to_string()))?,
        ),
        FidelitySpec::Constant { .. } => None,
    };
    let mut states = Vec::with_capacity(k);
    for bell in is_bell {
        let state = if bell {
            EdgeState::Bell
        } else {
            let fidelity = match (&sampler, f0) {
                (Some(dist), _) => support[dist.sample(&mut rng)],
                (None, FidelitySpec::Constant { f0 }) => f0,
                (None, FidelitySpec::Gaussian { .. }) => unreachable!(),
            };
            EdgeState::from_fidelity(fidelity)?
        };
        states.push(state);
    }
    Ok(Network {
        states,
        ..net.clone()
    })
}

/// One simple path, as visited nodes and the traversed edge indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

/// All simple paths between two nodes in lexicographic node order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub source: usize,
    pub target: usize,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Paths that avoid every edge in `removed` (indices of the parent network).
    pub fn without_edges(&self, removed: &[usize]) -> PathSet {
        PathSet {
            source: self.source,
            target: self.target,
            paths: self
                .paths
                .iter()
                .filter(|p| !p.edges.iter().any(|e| removed.contains(e)))
                .cloned()
                .collect(),
        }
    }
}

/// Depth-first enumeration of simple `a -> b` paths. Neighbors are explored in
/// ascending order, so paths come out lexicographically sorted.
pub fn enumerate_simple_paths(net: &Network, a: usize, b: usize) -> Result<PathSet> {
    net.check_node(a)?;
    net.check_node(b)?;
    if a == b {
        return Err(Error::Infeasible(format!("source and target coincide at {a}")));
    }
    let adj = net.adjacency();
    let mut on_path = vec![false; net.node_count()];
    let mut nodes = vec![a];
    let mut edges = Vec::new();
    let mut paths = Vec::new();
    // Iterative DFS: the stack holds the next neighbor slot for each depth.
    let mut cursor = vec![0usize];
    on_path[a] = true;
    while let Some(slot) = cursor.last_mut() {
        let here = *nodes.last().expect("nonempty path");
        if let Some(&(next, edge)) = adj[here].get(*slot) {
            *slot += 1;
            if on_path[next] {
                continue;
            }
            if next == b {
                let mut found_nodes = nodes.clone();
                found_nodes.push(b);
                let mut found_edges = edges.clone();
                found_edges.push(edge);
                paths.push(Path {
                    nodes: found_nodes,
                    edges: found_edges,
                });
                continue;
            }
            on_path[next] = true;
            nodes.push(next);
            edges.push(edge);
            cursor.push(0);
        } else {
            cursor.pop();
            if let Some(left) = nodes.pop() {
                on_path[left] = false;
            }
            edges.pop();
        }
    }
    Ok(PathSet {
        source: a,
        target: b,
        paths,
    })
}

/// One Alice-Bob pair and its normalized demand `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Commodity {
    pub source: usize,
    pub target: usize,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    pub commodities: Vec<Commodity>,
}

impl DemandSpec {
    pub fn pair_count(&self) -> usize {
        self.commodities.len()
    }

    pub fn total(&self) -> f64 {
        self.commodities.iter().map(|c| c.demand).sum()
    }
}

/// Demand `min(deg A_i, deg B_i) / d` for each of the `d` pairs.
pub fn demand_for(net: &Network, pairs: &[(usize, usize)]) -> Result<DemandSpec> {
    if pairs.is_empty() {
        return Err(Error::Infeasible("no Alice-Bob pairs given".into()));
    }
    let d = pairs.len() as f64;
    let mut seen = Vec::with_capacity(pairs.len());
    let mut commodities = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        net.check_node(a)?;
        net.check_node(b)?;
        if a == b {
            return Err(Error::Infeasible(format!("Alice and Bob coincide at node {a}")));
        }
        let key = (a.min(b), a.max(b));
        if seen.contains(&key) {
            return Err(Error::Infeasible(format!("pair {key:?} listed twice")));
        }
        seen.push(key);
        let nu = net.degree(a).min(net.degree(b)) as f64 / d;
        if nu <= 0.0 {
            return Err(Error::Infeasible(format!("pair ({a}, {b}) has an isolated end node")));
        }
        commodities.push(Commodity {
            source: a,
            target: b,
            demand: nu,
        });
    }
    Ok(DemandSpec { commodities })
}

/// Copy of `net` without the listed edges. The result may be disconnected.
pub fn remove_edges(net: &Network, edge_indices: &[usize]) -> Result<Network> {
    let mut drop = vec![false; net.edge_count()];
    for &idx in edge_indices {
        if idx >= net.edge_count() {
            return Err(Error::InvalidEdge {
                index: idx,
                edge_count: net.edge_count(),
            });
        }
        if drop[idx] {
            return Err(Error::Infeasible(format!("edge {idx} listed twice")));
        }
        drop[idx] = true;
    }
    let (edges, states) = net
        .edges
        .iter()
        .zip(&net.states)
        .zip(&drop)
        .filter(|(_, &d)| !d)
        .map(|((&e, &s), _)| (e, s))
        .unzip();
    Ok(Network {
        edges,
        states,
        ..net.clone()
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    u: usize,
    v: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p0: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDocument {
    version: u32,
    n: usize,
    m_budget: u32,
    edges: Vec<EdgeRecord>,
}

pub const NETWORK_FORMAT_VERSION: u32 = 1;

pub fn save_network(net: &Network) -> Vec<u8> {
    let doc = NetworkDocument {
        version: NETWORK_FORMAT_VERSION,
        n: net.node_count,
        m_budget: net.budget,
        edges: net
            .edges
            .iter()
            .zip(&net.states)
            .map(|(&(u, v), state)| match *state {
                EdgeState::Bell => EdgeRecord {
                    u,
                    v,
                    kind: "bell".into(),
                    p0: None,
                },
                EdgeState::Werner { p0 } => EdgeRecord {
                    u,
                    v,
                    kind: "werner".into(),
                    p0: Some(p0),
                },
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("network document serializes");
    out.push(b'\n');
    out
}

pub fn load_network(bytes: &[u8]) -> Result<Network> {
    let doc: NetworkDocument =
        serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))?;
    if doc.version != NETWORK_FORMAT_VERSION {
        return Err(invariant("version", format!("unsupported version {}", doc.version)));
    }
    let mut edges = Vec::with_capacity(doc.edges.len());
    let mut states = Vec::with_capacity(doc.edges.len());
    for (i, rec) in doc.edges.iter().enumerate() {
        if rec.u >= rec.v {
            return Err(invariant(
                format!("edges[{i}]"),
                format!("expected u < v, got ({}, {})", rec.u, rec.v),
            ));
        }
        if let Some(&prev) = edges.last() {
            if (rec.u, rec.v) <= prev {
                return Err(invariant(
                    format!("edges[{i}]"),
                    format!("({}, {}) is a duplicate or out of canonical order", rec.u, rec.v),
                ));
            }
        }
        let state = match (rec.kind.as_str(), rec.p0) {
            ("bell", None) => EdgeState::Bell,
            ("bell", Some(_)) => {
                return Err(invariant(format!("edges[{i}].p0"), "Bell edges carry no p0"))
            }
            ("werner", Some(p0)) => EdgeState::werner(p0)
                .map_err(|_| invariant(format!("edges[{i}].p0"), format!("{p0} outside (1/3, 1)")))?,
            ("werner", None) => {
                return Err(invariant(format!("edges[{i}].p0"), "Werner edge needs p0"))
            }
            (other, _) => {
                return Err(invariant(
                    format!("edges[{i}].kind"),
                    format!("unknown kind `{other}`"),
                ))
            }
        };
        edges.push((rec.u, rec.v));
        states.push(state);
    }
    Network::new(doc.n, edges, states, doc.m_budget)
}

/// Per-node degree census, handy for fixtures.
pub fn degree_census(net: &Network) -> HashMap<usize, usize> {
    let mut census = HashMap::new();
    for node in 0..net.node_count() {
        *census.entry(net.degree(node)).or_insert(0) += 1;
    }
    census
}
