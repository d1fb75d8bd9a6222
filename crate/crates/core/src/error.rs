use thiserror::Error;

use crate::graph::VertexId;

pub type Result<T, E = SandlabError> = std::result::Result<T, E>;

/// Errors raised across the library.
///
/// Variants fall into three groups that the CLI maps onto exit codes:
/// precondition violations, resource limits, and internal failures.
#[derive(Debug, Error)]
pub enum SandlabError {
    // graph construction and metric queries
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("subset is empty")]
    EmptySubset,
    #[error("subset not connected")]
    SubsetNotConnected,
    #[error("subset has no boundary edges (sink unreachable)")]
    SinkUnreachable,
    #[error("vertex {0} does not exist")]
    UnknownVertex(VertexId),
    #[error("vertex {0} is not an ordinary vertex")]
    NotOrdinary(VertexId),
    #[error("ball reaches sink (center {center}, radius {radius})")]
    BallReachesSink { center: VertexId, radius: u32 },
    #[error("invalid family parameters: {0}")]
    InvalidFamily(String),

    // engine
    #[error("sink never topples")]
    SinkNeverTopples,
    #[error("source set is empty")]
    EmptySource,
    #[error("target contains the sink")]
    TargetContainsSink,
    #[error("configuration is not stable")]
    UnstableConfiguration,
    #[error("configuration has {got} values, graph has {expected} ordinary vertices")]
    ConfigurationLength { expected: usize, got: usize },
    #[error("particle counter overflow")]
    Overflow,
    #[error("state space exceeds limit ({states} stable states, limit {limit})")]
    StateSpaceLimit { states: u128, limit: u64 },
    #[error("cycle among transient states")]
    TransientCycle,

    // potentials
    #[error("vertices must differ")]
    SameVertex,
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("pole unreachable scale: potential {value:e} at vertex {vertex}")]
    PoleUnreachableScale { vertex: VertexId, value: f64 },
    #[error("infeasible dual certificate (violation {violation:e})")]
    InfeasibleCertificate { violation: f64 },

    // estimators
    #[error("family too thin: no vertex admits a radius-2 ball")]
    FamilyTooThin,
    #[error("degenerate fit: need at least two distinct radii")]
    DegenerateFit,
    #[error("invalid estimator parameters: {0}")]
    InvalidParameters(String),

    // epicenter
    #[error("central-path construction defined for grid family only")]
    NotGridFamily,
    #[error("path not (k,l)-central: {0}")]
    PathNotCentral(String),
    #[error("no interior ball: eta({vertex}) = {eta}")]
    NoInteriorBall { vertex: VertexId, eta: u32 },
    #[error("vertex {vertex} at distance {actual}, expected {expected}")]
    WrongDistance { vertex: VertexId, expected: u32, actual: u32 },
    #[error("non-advancing phase (g_hat = {0})")]
    NonAdvancingPhase(f64),
    #[error("configuration does not flood the starting ball")]
    StartNotFlooded,
    #[error("target not flooded within {steps} steps")]
    NotFlooded { steps: usize },

    // grid toolkit
    #[error("center undefined for even side {0}")]
    CenterUndefined(usize),
    #[error("function is not D4-symmetric and axis-monotone")]
    Asymmetric,

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SandlabError {
    /// True for failures caused by exhausting a configured limit.
    pub fn is_resource_limit(&self) -> bool {
        matches!(
            self,
            SandlabError::StateSpaceLimit { .. }
                | SandlabError::Overflow
                | SandlabError::NotFlooded { .. }
        )
    }
}
