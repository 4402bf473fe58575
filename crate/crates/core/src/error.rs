use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("angle {0} rad outside [-pi/2, pi/2]")]
    AngleOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("duplicate target angle {0} rad: Fisher matrix would be singular")]
    DuplicateTargets(f64),

    #[error("unresolvable targets: Fisher matrix condition number {0:.3e} exceeds 1e12")]
    DegenerateGeometry(f64),

    #[error("point is off the oblique manifold (row {row}: norm {norm}, radius {radius})")]
    OffManifold { row: usize, norm: f64, radius: f64 },

    #[error("cannot retract: row {0} is zero")]
    DegenerateRetraction(usize),

    #[error("channel matrix is rank deficient; zero-forcing impossible")]
    RankDeficient,

    #[error("equal-rate power allocation infeasible: p[{index}] = {value:.3e} < 0")]
    NegativePower { index: usize, value: f64 },

    #[error("rate constraints not met after {iterations} iterations (min-rate gap {gap:.3e} bit/s/Hz)")]
    RateInfeasible { iterations: usize, gap: f64 },

    #[error("objective or gradient not finite at iteration {0}")]
    NonFinite(usize),

    #[error("search direction is not a descent direction (slope {0:.3e})")]
    NotDescent(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::AngleOutOfRange(_)
            | Error::ShapeMismatch { .. }
            | Error::DuplicateTargets(_) => 2,
            Error::RankDeficient | Error::NegativePower { .. } | Error::RateInfeasible { .. } => 3,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 4,
        }
    }
}
