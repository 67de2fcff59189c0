use std::fmt;

use crate::grid::{FaceTag, Side};

pub type Result<T> = std::result::Result<T, Error>;

/// A single problem found while validating a scenario configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum ConfigIssue {
    /// A compatibility condition between initial and boundary data fails on some faces.
    CompatibilityViolated { condition: String, faces: usize, max_mismatch: f64 },
    /// The exponents (p, q) violate `q > d` and `max{2q/(q-1), 2q/(2q-d)} < p`.
    ExponentConditionViolated { p: f64, q: f64, detail: String },
    InvalidParameter(String),
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigIssue::CompatibilityViolated { condition, faces, max_mismatch } => write!(
                f,
                "compatibility violated: {condition} fails on {faces} boundary face(s), max mismatch {max_mismatch:.3e}"
            ),
            ConfigIssue::ExponentConditionViolated { p, q, detail } => {
                write!(f, "exponent condition violated for p={p}, q={q}: {detail}")
            }
            ConfigIssue::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field shape does not match grid: {0}")]
    ShapeMismatch(String),
    #[error("{count} boundary face(s) have inward velocity weaker than the inflow threshold {threshold} (weakest u_B·n = {weakest:.3e})")]
    AmbiguousInflow { count: usize, threshold: f64, weakest: f64 },
    #[error("inflow faces form {runs} disjoint boundary segments; a single connected segment is required")]
    DisconnectedInflow { runs: usize },
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("trajectories have mismatched sampling: {0}")]
    MismatchedSampling(String),
    #[error("invalid norm specification: {0}")]
    InvalidNormSpec(String),
    #[error("velocity is not interpolable at t = {time} (window [{start}, {end}])")]
    VelocityNotInterpolable { time: f64, start: f64, end: f64 },
    #[error("backward characteristic from ({x:.4}, {y:.4}) leaves through the {side:?} face tagged {tag:?}, where no density is prescribed")]
    CharacteristicEntersThroughNonInflow { x: f64, y: f64, side: Side, tag: FaceTag },
    #[error("non-positive data: {0}")]
    NonPositiveData(String),
    #[error("inflow speed {speed:.3e} is below the threshold {threshold}")]
    InflowSpeedBelowThreshold { speed: f64, threshold: f64 },
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolveDiverged { iterations: usize, residual: f64 },
    #[error("density coefficient is not positive (min {min:.3e})")]
    NonPositiveDensityCoefficient { min: f64 },
    #[error("density {min:.4e} fell below the floor r0 = {floor:.4e}")]
    DensityFloorViolated { min: f64, floor: f64 },
    #[error("fixed-point iteration did not converge after {shrinks} window reductions")]
    NoConvergence { shrinks: usize },
    #[error("invalid configuration:\n{}", format_issues(.0))]
    InvalidConfig(Vec<ConfigIssue>),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n")
}

impl Error {
    /// Configuration issues carried by an `InvalidConfig` error, empty otherwise.
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            Error::InvalidConfig(issues) => issues,
            _ => &[],
        }
    }
}
