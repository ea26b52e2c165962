use thiserror::Error;

use crate::grid::Point;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain has no node in Y")]
    EmptyY,

    #[error("Y-subgraph is disconnected ({components} components)")]
    DisconnectedY { components: usize },

    #[error("invalid domain specification: {0}")]
    InvalidSpec(String),

    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: usize, to: usize },

    #[error("radius {r} out of range for curvature bound L = {l} (need r < pi/(2 sqrt L))")]
    RadiusOutOfRange { l: f64, r: f64 },

    #[error("ball center {center:?} lies at distance {distance} < r = {radius} from Y")]
    CenterTooClose { center: Point, distance: f64, radius: f64 },

    #[error("audit region is empty")]
    EmptyRegion,

    #[error("band (0, {0}] contains no node")]
    EmptyBand(f64),

    #[error("step size collapsed at t = {t} (V = {value})")]
    StepCollapse { t: f64, value: f64 },

    #[error("trajectory left the grid at {point:?}")]
    LeftGrid { point: Point },

    #[error("linear solver diverged after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("support of size {size} exceeds the exact solver limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid dimension N = {0} (need N >= 1)")]
    InvalidDimension(f64),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid { field: field.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
