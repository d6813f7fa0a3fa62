use thiserror::Error;

/// Errors raised by grid construction, geometry, energy assembly and the
/// causal queries.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("missing boundary data at node {node} {index:?}")]
    MissingBoundary { node: usize, index: Vec<usize> },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate metric at node {node} (det g = {det:e})")]
    DegenerateMetric { node: usize, det: f64 },

    #[error("metric at node {node} has no timelike direction (det g = {det:e})")]
    Signature { node: usize, det: f64 },

    #[error("degenerate normal frame at node {node}: null direction in the tangent complement")]
    DegenerateFrame { node: usize },

    #[error("normal at node {node} is not unit (n.n = {norm})")]
    NonUnitNormal { node: usize, norm: f64 },

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("motion at chart node {node} is not timelike (-g_jk du_j/dt du_k/dt = {value:e})")]
    NonTimelikeMotion { node: usize, value: f64 },

    #[error("non-finite J_K while probing degree of freedom {dof}")]
    NonFiniteProbe { dof: usize },

    #[error("invalid chart: {0}")]
    Chart(String),

    #[error("invalid event set: {0}")]
    Events(String),

    #[error("path step {from} -> {to} does not join graph neighbors")]
    NotNeighbor { from: usize, to: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
