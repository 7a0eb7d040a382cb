use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid increment spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("starting point {0} is not on the state lattice")]
    OffLattice(f64),

    #[error("step guard exceeded after {work} work units (guard {guard})")]
    GuardExceeded { work: u64, guard: u64 },

    #[error("operation requires a lattice increment law")]
    NotLattice,

    #[error("density vanishes on the whole interval [0, {0}]")]
    DegenerateInterval(f64),

    #[error("truncation window too small: {outside:.3e} of the mass falls outside")]
    TruncationTooSmall { outside: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("distributions have different geometry")]
    ModeMismatch,

    #[error("insufficient samples: {got} effective counts, need {need}")]
    InsufficientSamples { got: u64, need: u64 },

    #[error("only {usable} points above the noise floor; rate bounded by {r_bound:.4}")]
    NoiseFloor { usable: usize, r_bound: f64 },

    #[error("fitted slope {slope:.4} does not decay")]
    NotDecaying { slope: f64 },

    #[error("quadrature failed to converge: estimate {estimate:.6e}, error {error:.3e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
