use thiserror::Error;

/// Errors produced by network construction, entanglement math and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid node index {node} (network has {node_count} nodes)")]
    InvalidNode { node: usize, node_count: usize },

    #[error("invalid edge index {index} (network has {edge_count} edges)")]
    InvalidEdge { index: usize, edge_count: usize },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("no connected sample after {attempts} attempts")]
    ResampleExhausted { attempts: usize },

    #[error("invalid field `{field}`: {reason}")]
    Invariant { field: String, reason: String },

    #[error("malformed document: {0}")]
    Format(String),

    #[error("commodity {commodity} ({source_node} -> {target_node}) has no path")]
    NoPath {
        commodity: usize,
        source_node: usize,
        target_node: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invariant(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Invariant {
        field: field.into(),
        reason: reason.into(),
    }
}
