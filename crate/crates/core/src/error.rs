use thiserror::Error;

/// Failures surfaced by the numerical routines.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// Prior has no components, or collapses to a single point mass.
    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    /// Component weights are negative or do not sum to one.
    #[error("invalid weights: {0}")]
    InvalidWeight(String),

    /// Argument outside the documented domain.
    #[error("{name} = {value} out of range: {reason}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        reason: String,
    },

    /// Adaptive integration hit its refinement cap before reaching tolerance.
    #[error("quadrature did not converge: estimate {estimate}, last delta {last_delta}")]
    QuadratureFailure { estimate: f64, last_delta: f64 },

    /// A sign change straddles adjacent cells even after refinement.
    #[error("fixed-point grid too coarse near z = {z}")]
    GridTooCoarse { z: f64 },

    /// Two local minima of the potential agree to tolerance; the minimizer is ambiguous.
    #[error("tie at minimum: z = {z_low} and z = {z_high} both attain {value}")]
    TieAtMinimum { z_low: f64, z_high: f64, value: f64 },

    /// State-evolution iteration failed to settle.
    #[error("no convergence after {iterations} iterations (last z = {last})")]
    NoConvergence { last: f64, iterations: usize },

    /// Posterior enumeration would exceed the state cap.
    #[error("enumeration too large: {states} states exceeds cap {cap}")]
    EnumerationTooLarge { states: u128, cap: u128 },

    /// Inputs valid in isolation but incompatible together.
    #[error("domain error: {0}")]
    DomainError(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
