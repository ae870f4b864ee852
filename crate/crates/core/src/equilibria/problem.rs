use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, OnceLock, RwLock};

use crate::entops::{cached_table, sorted_product, EdgeResponse};
use crate::error::{Error, Result};
use crate::netmodel::{enumerate_simple_paths, Commodity, DemandSpec, EdgeState, Network, PathSet};
use crate::optimize::Blocks;

/// Paths of one commodity inside the flattened path list.
#[derive(Debug, Clone, PartialEq)]
pub struct CommodityPaths {
    pub commodity: Commodity,
    pub range: Range<usize>,
}

/// Routing game on a fixed network: every commodity's candidate paths and the
/// load response of every edge.
#[derive(Debug, Clone)]
pub struct RoutingProblem {
    budget: u32,
    states: Vec<EdgeState>,
    responses: Vec<EdgeResponse<f64>>,
    commodities: Vec<CommodityPaths>,
    path_nodes: Vec<Vec<usize>>,
    path_edges: Vec<Vec<usize>>,
    path_commodity: Vec<usize>,
    demand: DemandSpec,
}

impl RoutingProblem {
    pub fn new(net: &Network, demand: &DemandSpec) -> Result<Self> {
        let sets = demand
            .commodities
            .iter()
            .map(|c| enumerate_simple_paths(net, c.source, c.target))
            .collect::<Result<Vec<_>>>()?;
        Self::from_path_sets(net, demand, &sets)
    }

    /// Problem whose commodities may only use the given path sets (indices refer to `net`).
    pub fn from_path_sets(net: &Network, demand: &DemandSpec, sets: &[PathSet]) -> Result<Self> {
        if sets.len() != demand.commodities.len() {
            return Err(Error::Config("one path set per commodity required".into()));
        }
        let responses = net
            .states()
            .iter()
            .map(|s| match *s {
                EdgeState::Bell => Ok(EdgeResponse::Bell),
                EdgeState::Werner { p0 } => Ok(EdgeResponse::Werner(cached_table(p0)?)),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut commodities = Vec::with_capacity(sets.len());
        let mut path_nodes = Vec::new();
        let mut path_edges = Vec::new();
        let mut path_commodity = Vec::new();
        for (idx, (c, set)) in demand.commodities.iter().zip(sets).enumerate() {
            if set.is_empty() {
                return Err(Error::NoPath {
                    commodity: idx,
                    source_node: c.source,
                    target_node: c.target,
                });
            }
            let start = path_nodes.len();
            for p in &set.paths {
                path_nodes.push(p.nodes.clone());
                path_edges.push(p.edges.clone());
                path_commodity.push(idx);
            }
            commodities.push(CommodityPaths {
                commodity: *c,
                range: start..path_nodes.len(),
            });
        }
        Ok(Self {
            budget: net.budget(),
            states: net.states().to_vec(),
            responses,
            commodities,
            path_nodes,
            path_edges,
            path_commodity,
            demand: demand.clone(),
        })
    }

    /// The same game with every path through a `removed` edge deleted, or the
    /// index of the first commodity left without a path.
    pub fn without_edges(&self, removed: &[usize]) -> std::result::Result<Self, usize> {
        let mut commodities = Vec::with_capacity(self.commodities.len());
        let mut path_nodes = Vec::new();
        let mut path_edges = Vec::new();
        let mut path_commodity = Vec::new();
        for (idx, c) in self.commodities.iter().enumerate() {
            let start = path_nodes.len();
            for j in c.range.clone() {
                if self.path_edges[j].iter().any(|e| removed.contains(e)) {
                    continue;
                }
                path_nodes.push(self.path_nodes[j].clone());
                path_edges.push(self.path_edges[j].clone());
                path_commodity.push(idx);
            }
            if path_nodes.len() == start {
                return Err(idx);
            }
            commodities.push(CommodityPaths {
                commodity: c.commodity,
                range: start..path_nodes.len(),
            });
        }
        Ok(Self {
            commodities,
            path_nodes,
            path_edges,
            path_commodity,
            ..self.clone()
        })
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn edge_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[EdgeState] {
        &self.states
    }

    pub fn responses(&self) -> &[EdgeResponse<f64>] {
        &self.responses
    }

    pub fn demand(&self) -> &DemandSpec {
        &self.demand
    }

    pub fn commodities(&self) -> &[CommodityPaths] {
        &self.commodities
    }

    pub fn path_count(&self) -> usize {
        self.path_edges.len()
    }

    pub fn path_edges(&self, path: usize) -> &[usize] {
        &self.path_edges[path]
    }

    pub fn path_nodes(&self, path: usize) -> &[usize] {
        &self.path_nodes[path]
    }

    pub fn path_commodity(&self, path: usize) -> usize {
        self.path_commodity[path]
    }

    pub fn blocks(&self) -> Blocks<f64> {
        let spec: Vec<(usize, f64)> = self
            .commodities
            .iter()
            .map(|c| (c.range.len(), c.commodity.demand))
            .collect();
        Blocks::new(&spec).expect("commodities have paths and positive demand")
    }

    /// Edge loads `y_i = sum of x_j over paths through e_i`.
    pub fn loads(&self, flows: &[f64]) -> Vec<f64> {
        let mut loads = vec![0.0; self.edge_count()];
        for (edges, &x) in self.path_edges.iter().zip(flows) {
            for &e in edges {
                loads[e] += x;
            }
        }
        loads
    }

    pub fn edge_values(&self, loads: &[f64]) -> Vec<f64> {
        self.responses
            .iter()
            .zip(loads)
            .map(|(r, &y)| r.eval(y))
            .collect()
    }

    /// Werner parameter of every path at the given edge loads. Unloaded edges
    /// deliver what a single prospective user would get.
    pub fn path_params(&self, loads: &[f64]) -> Vec<f64> {
        let values = self.edge_values(loads);
        self.path_edges
            .iter()
            .map(|edges| self.product_over(edges, |e| values[e]))
            .collect()
    }

    pub(crate) fn product_over(&self, edges: &[usize], value: impl Fn(usize) -> f64) -> f64 {
        let mut factors: Vec<f64> = edges.iter().map(|&e| value(e)).collect();
        sorted_product(&mut factors)
    }

    /// Per-commodity mean parameter `(1/nu_i) sum_j p_j x_j`.
    pub fn commodity_means(&self, flows: &[f64], params: &[f64]) -> Vec<f64> {
        self.commodities
            .iter()
            .map(|c| {
                let s: f64 = c.range.clone().map(|j| params[j] * flows[j]).sum();
                s / c.commodity.demand
            })
            .collect()
    }

    /// Mean parameter over all user pairs, weighted by flow.
    pub fn average_param(&self, flows: &[f64], params: &[f64]) -> f64 {
        let s: f64 = flows.iter().zip(params).map(|(x, p)| x * p).sum();
        s / self.demand.total()
    }

    /// Flow-conservation residual: largest `|sum_j x_j - nu_i|` over commodities.
    pub fn conservation_error(&self, flows: &[f64]) -> f64 {
        self.commodities
            .iter()
            .map(|c| (c.range.clone().map(|j| flows[j]).sum::<f64>() - c.commodity.demand).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum ResponseKey {
    Bell,
    Werner(u64),
}

fn discrete_cache() -> &'static RwLock<HashMap<(ResponseKey, u32), Arc<Vec<f64>>>> {
    static CACHE: OnceLock<RwLock<HashMap<(ResponseKey, u32), Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// `g(m / M)` for `m = 0..=max_users` (entry 0 evaluates the zero-load clamp).
pub(crate) fn discrete_response(
    state: EdgeState,
    response: &EdgeResponse<f64>,
    budget: u32,
    max_users: usize,
) -> Arc<Vec<f64>> {
    let key = (
        match state {
            EdgeState::Bell => ResponseKey::Bell,
            EdgeState::Werner { p0 } => ResponseKey::Werner(p0.to_bits()),
        },
        budget,
    );
    if let Some(values) = discrete_cache().read().expect("cache poisoned").get(&key) {
        if values.len() > max_users {
            return Arc::clone(values);
        }
    }
    let len = (max_users + 1).max(4 * budget as usize + 1);
    let m = f64::from(budget);
    let values: Arc<Vec<f64>> = Arc::new((0..len).map(|k| response.eval(k as f64 / m)).collect());
    let mut cache = discrete_cache().write().expect("cache poisoned");
    let slot = cache.entry(key).or_insert_with(|| Arc::clone(&values));
    if slot.len() < values.len() {
        *slot = Arc::clone(&values);
    }
    Arc::clone(slot)
}
