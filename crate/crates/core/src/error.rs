use thiserror::Error;

/// Errors raised by field construction, geometry, flow and monitors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("point lies outside the lower half-space chart (last coordinate {0} must be < 0)")]
    ChartViolation(f64),
    #[error("chart point {point:?} lies outside the grid domain")]
    OutOfDomain { point: Vec<f64> },
    #[error("node {node} lacks a stencil margin of {margin} cells")]
    BoundaryNode { node: usize, margin: usize },
    #[error("Hessian is not positive definite at node {node} (det = {det:e})")]
    DegenerateHessian { node: usize, det: f64 },
    #[error("ill-conditioned linear system: {0}")]
    IllConditioned(String),
    #[error("time {t} is at or past the extinction time {t_ext}")]
    PastExtinction { t: f64, t_ext: f64 },
    #[error("time {t} is outside the validity interval of the oracle")]
    OutsideValidity { t: f64 },
    #[error("affine map is not unimodular (|det A| = {0})")]
    NotUnimodular(f64),
    #[error("affine map is singular")]
    SingularMap,
    #[error("convexity lost at t = {t} (min Hessian eigenvalue {min_eig:e})")]
    ConvexityLost { t: f64, min_eig: f64 },
    #[error("oracle returned +inf at a boundary node {node}")]
    InfiniteBoundary { node: usize },
    #[error("truncation radius {0} captures no body sample points")]
    EmptyTruncation(f64),
    #[error("nondegeneracy violated: {0}")]
    Nondegeneracy(String),
    #[error("bowl domain is empty at level {0}")]
    EmptyBowl(f64),
    #[error("support value {value} at node {node} (t = {t}) dips below the floor {floor}")]
    FloorViolated { node: usize, t: f64, value: f64, floor: f64 },
    #[error("degenerate simplex: {0}")]
    DegenerateSimplex(String),
    #[error("affine frame is singular at node {0}")]
    SingularFrame(usize),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("ambiguous eigenvalue signature: {0:?}")]
    AmbiguousSignature(Vec<f64>),
    #[error("io error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
