use thiserror::Error;

/// Errors raised by the solvers and checkers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("negative coefficient {value} for p = {p}")]
    NegativeCoefficient { p: u32, value: f64 },
    #[error("mixture has no positive coefficient")]
    EmptyMixture,
    #[error("mixture key p = {0} is below 2")]
    KeyBelowTwo(u32),
    #[error("mixture coefficients are not summable (sum of 2^p beta_p^2 = {0})")]
    NotSummable(f64),
    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },
    #[error("ordering violation: {0}")]
    OrderingViolation(String),
    #[error("range violation: {0}")]
    RangeViolation(String),
    #[error("measure has {atoms} atoms but only {capacity} levels were requested")]
    Capacity { atoms: usize, capacity: usize },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid grid parameters: {0}")]
    InvalidGrid(String),
    #[error("spatial grid too small: |d_x Phi| at the boundary is {boundary_slope}")]
    GridTooSmall { boundary_slope: f64 },
    #[error("quadrature underflow at u = {u}")]
    QuadratureUnderflow { u: f64 },
    #[error("tilted density leaks mass: slice mass {mass} at u = {u}")]
    MassLeak { u: f64, mass: f64 },
    #[error("recursion oracle supports k <= {max}, got k = {k}")]
    LevelCapExceeded { k: usize, max: usize },
    #[error("no Gamma sample at atom q = {0}")]
    MissingGammaSample(f64),
    #[error("invalid perturbation field: {0}")]
    InvalidPerturbation(String),
    #[error("x-hat vanishes at q = {0}")]
    DegenerateTail(f64),
    #[error("xi''(u) = 0 at u = {0}")]
    SingularMixture(f64),
    #[error("distribution function value {value} at u = {u} is outside [0, 1]")]
    CdfOutOfRange { u: f64, value: f64 },
    #[error("optimizer budget exhausted after {evaluations} evaluations")]
    BudgetExhausted { evaluations: usize },
    #[error("malformed solution dump: {0}")]
    Dump(String),
}

pub type Result<T> = std::result::Result<T, Error>;
