use alloc::string::String;

/// Errors raised by the damping optimization core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("network topology error: {0}")]
    Topology(String),
    #[error("dispatch out of bounds: generator {generator} at {value} outside [{min}, {max}]")]
    DispatchOutOfBounds {
        generator: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("power flow did not converge after {iterations} iterations (max mismatch {mismatch:e})")]
    Divergence { iterations: usize, mismatch: f64 },
    #[error("network reduction failed: {0}")]
    Reduction(String),
    #[error("eigenvalue solver did not converge")]
    EigenSolver,
    #[error("no electromechanical mode found")]
    NoElectromechanicalMode,
    #[error("target mode lost under perturbation of feature {feature} (correlation {correlation:.3})")]
    TrackingLost { feature: usize, correlation: f64 },
    #[error("invalid fault specification: {0}")]
    InvalidFault(String),
    #[error("damping estimation failed: {0}")]
    Estimation(String),
    #[error("sample timestamps must increase (last {last}, got {got})")]
    Ordering { last: f64, got: f64 },
    #[error("normal matrix is singular (condition number {condition:e})")]
    Singular { condition: f64 },
    #[error("feature reduction failed: {0}")]
    FeatureReduction(String),
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("cannot build LP: {0}")]
    LpBuild(String),
    #[error("no remaining headroom to redistribute {amount} p.u. of planned dispatch")]
    NoHeadroom { amount: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = core::result::Result<T, Error>;
