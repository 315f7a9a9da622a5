use thiserror::Error;

/// Errors shared by the graph, forward and inverse solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vertex {vertex} out of range 1..={n}")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("{0} is not an edge of the graph")]
    NotAnEdge(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("graph must have at least one vertex")]
    EmptyGraph,
    #[error("boundary is empty")]
    EmptyBoundary,
    #[error("vertex {0} listed twice in the boundary")]
    DuplicateBoundary(usize),
    #[error("edge function is not {0}")]
    WrongKind(&'static str),
    #[error("value on edge {{{0}, {1}}} is negative or not finite")]
    InvalidEdgeValue(usize, usize),
    #[error("neumann data incompatible: sum of injected current is {0}")]
    IncompatibleNeumann(f64),
    #[error("neumann data is identically zero")]
    ZeroNeumann,
    #[error("linear system is singular: {0}")]
    Singular(String),
    #[error("linear solve residual {residual:e} exceeds bound {bound:e}")]
    Residual { residual: f64, bound: f64 },
    #[error("edge {{{0}, {1}}} is a perfect conductor; its current is not determined by the potential")]
    PerfectConductor(usize, usize),
    #[error("current opposes the potential drop on edge {{{0}, {1}}}")]
    SignViolation(usize, usize),
    #[error("vertex {0} has zero total conductivity")]
    IsolatedVertex(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate scale: recovered lambda = {0}")]
    DegenerateScale(f64),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Data(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
