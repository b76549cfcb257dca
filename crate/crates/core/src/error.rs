//! Error types shared across the crate.

use thiserror::Error;

/// Errors from model construction and simulation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid fundamental diagram: {0}")]
    InvalidDiagram(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("section index {index} out of range 1..={max}")]
    SectionOutOfRange { index: usize, max: usize },
    #[error("boundary index {index} out of range 0..={max}")]
    BoundaryOutOfRange { index: usize, max: usize },
    #[error("section {0} has no on-ramp")]
    NoOnRamp(usize),
    #[error("section {0} has no off-ramp")]
    NoOffRamp(usize),
    #[error("invalid traffic state: {0}")]
    InvalidState(String),
    #[error("invalid exogenous input: {0}")]
    InvalidInput(String),
    #[error(
        "density update left [0, {jam}] by more than round-off at state {index}: {value}"
    )]
    DensityOutOfBounds { index: usize, value: f64, jam: f64 },
    #[error("invalid sensor layout: {0}")]
    InvalidSensors(String),
    #[error("degenerate sampling domain: {0}")]
    DegenerateDomain(String),
}

/// Errors from observer-gain synthesis.
#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("invalid synthesis data: {0}")]
    InvalidProblem(String),
    #[error(
        "(A, C) is not detectable: {undetectable} unobservable mode(s) with |lambda| >= 1 \
         (worst |lambda| = {worst_magnitude}); add sensors or change the linear part"
    )]
    Undetectable {
        undetectable: usize,
        worst_magnitude: f64,
    },
    #[error("constraints infeasible: minimal uniform block shift {min_shift:.3e} > 0")]
    Infeasible { min_shift: f64 },
    #[error("interior-point solver stalled: {0}")]
    SolverStalled(String),
    #[error("all {0} grid points infeasible")]
    SweepExhausted(usize),
    #[error("synthesis report i/o: {0}")]
    ReportIo(String),
    #[error("synthesis report malformed: {0}")]
    ReportFormat(String),
}

/// Errors from the estimation algorithms.
#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sigma-point scaling invalid: n + lambda = {0} must be positive")]
    SigmaScaling(f64),
    #[error("covariance not repairable: {0}")]
    CovarianceRepair(String),
    #[error("empty estimation trace")]
    EmptyTrace,
}

/// Errors from scenario files and the experiment harness.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario validation: {0}")]
    Validation(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error("report malformed: {0}")]
    ReportFormat(String),
    #[error("missing synthesis metadata: {0}")]
    MissingMetadata(String),
}
