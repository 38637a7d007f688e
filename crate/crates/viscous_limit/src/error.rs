use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library.
///
/// Variants split into two groups: violations of a structural hypothesis by
/// the input system ([`Error::is_hypothesis`]) and failures of a numerical
/// procedure on otherwise admissible input.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown catalog system `{0}`")]
    UnknownSystem(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("state {state:?} lies outside the delta-ball (distance {distance:.3e} > {delta:.3e})")]
    OutsideBall {
        state: Vec<f64>,
        distance: f64,
        delta: f64,
    },
    #[error("amplitude {amplitude:.3e} exceeds delta = {delta:.3e}")]
    AmplitudeTooLarge { amplitude: f64, delta: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("rank of B is not constant: expected {expected}, found {found} at {state:?}")]
    RankNotConstant {
        expected: usize,
        found: usize,
        state: Vec<f64>,
    },
    #[error("check `{0}` is vacuous for invertible viscosity (r = N)")]
    Vacuous(String),
    #[error("eigenvalue {value} is not real (imaginary part {imag:.3e})")]
    NonRealSpectrum { value: f64, imag: f64 },
    #[error("matrix is defective within tolerance: {0}")]
    Defective(String),
    #[error("A^I_21 is rank deficient (Kawashima condition violated): rank {rank} < q = {q}")]
    KawashimaViolated { rank: usize, q: usize },
    #[error("stable dimension mismatch: generalized count {generalized} != k-1-n11-q = {formula}")]
    DimensionMismatch { generalized: usize, formula: usize },
    #[error("two eigenvalues are simultaneously near zero: {0:?}")]
    TwoNearZero(Vec<f64>),
    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("basis has {found} vectors, expected {expected}")]
    Cardinality { expected: usize, found: usize },
    #[error("datum has dimension {found}, solver expects {expected}")]
    DatumDimension { expected: usize, found: usize },
    #[error("{stage}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        stage: String,
        iterations: usize,
        residual: f64,
    },
    #[error("boundary layer diverges: {0}")]
    Divergence(String),
    #[error("ODE integration failed: {0}")]
    Integration(String),
    #[error("CFL condition violated: dt = {dt:.3e} > bound {bound:.3e}")]
    Cfl { dt: f64, bound: f64 },
    #[error("simulation blew up at t = {0}")]
    BlowUp(f64),
    #[error("trace window collides with a wave (variation {0:.3e})")]
    WindowCollision(f64),
    #[error("truncation length too small (tail {0:.3e})")]
    Truncation(f64),
    #[error("internal inconsistency: {0}")]
    Internal(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True when the error reports a violated structural hypothesis of the
    /// input system rather than a solver failure.
    pub fn is_hypothesis(&self) -> bool {
        match self {
            Error::Hypothesis(_)
            | Error::RankNotConstant { .. }
            | Error::NonRealSpectrum { .. }
            | Error::Defective(_)
            | Error::KawashimaViolated { .. }
            | Error::DimensionMismatch { .. }
            | Error::TwoNearZero(_) => true,
            Error::Stage { source, .. } => source.is_hypothesis(),
            _ => false,
        }
    }

    pub(crate) fn at(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
