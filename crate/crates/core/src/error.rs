use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandscapeError {
    #[error("potential is not finite at {at:?}")]
    PotentialOverflow { at: Vec<f64> },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("no minima found in the box")]
    NoMinima,
    #[error("minima at unequal depths: {values:?} (tolerance {tol:e})")]
    UnequalDepth { values: Vec<f64>, tol: f64 },
    #[error("degenerate Hessian at {at:?}")]
    Degeneracy { at: Vec<f64> },
    #[error("index-{index} critical point at {at:?} lies on the barrier")]
    HigherIndexOnBarrier { at: Vec<f64>, index: usize },
    #[error("box boundary too low: min boundary value {boundary_min} < H + 1 = {required}")]
    BoxTooSmall { boundary_min: f64, required: f64 },
    #[error("margin eta = {eta} is not admissible: {reason}")]
    InadmissibleEta { eta: f64, reason: String },
    #[error("descent from saddle at {at:?} did not reach a minimum")]
    DescentFailed { at: Vec<f64> },
    #[error("valley graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("valley {valley} mask is empty on this grid")]
    EmptyValley { valley: usize },
    #[error("valleys {a} and {b} share a connected component of the sublevel set")]
    MergedValleys { a: usize, b: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatesError {
    #[error("right-hand side not in range: sum of entries is {sum:e}")]
    Range { sum: f64 },
    #[error("valley graph is disconnected: null space has dimension {nullity}")]
    Singularity { nullity: usize },
    #[error("degenerate saddle Hessian: |det| = {det:e}")]
    Degeneracy { det: f64 },
    #[error("critical point is not an index-one saddle")]
    NotASaddle,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("grid spacing {spacing} exceeds sqrt(eps)/4 = {limit} for eps = {epsilon}")]
    Resolution { epsilon: f64, spacing: f64, limit: f64 },
    #[error("region violates Phi >= H + c: min value {min_value} on region, H = {barrier}")]
    Precondition { min_value: f64, barrier: f64 },
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("conjugate gradients stagnated after {iterations} iterations (relative residual {residual:e})")]
    Stagnation { iterations: usize, residual: f64 },
    #[error("tridiagonal solve hit a zero pivot at row {row}")]
    ZeroPivot { row: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("time step {dt} violates the stability bound {bound}")]
    Stability { dt: f64, bound: f64 },
    #[error("scheme violated bounds at t = {t}: {detail}")]
    Scheme { t: f64, detail: String },
    #[error("evolution supports a one-dimensional landscape only (got d = {0})")]
    Dimension(usize),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error(transparent)]
    Rates(#[from] RatesError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

pub type Result<T> = std::result::Result<T, Error>;
