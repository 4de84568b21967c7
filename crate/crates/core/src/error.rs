use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("colatitude {0} is outside [0, pi]")]
    Colatitude(f64),

    #[error("coordinate is not finite")]
    NonFinite,

    #[error("harmonic order m={m} is not allowed for degree l={l}")]
    HarmonicIndex { l: usize, m: i64 },

    #[error("argument {0} is outside [-1, 1]")]
    Domain(f64),

    #[error("decay parameter r={0} is outside [0, 1)")]
    Decay(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient data: n={n} but more than {needed} observations are required")]
    InsufficientData { n: usize, needed: usize },

    #[error("lag bin {bin} ({lo:.4}..{hi:.4} rad) has no pairs; use fewer bins")]
    EmptyBin { bin: usize, lo: f64, hi: f64 },

    #[error("design matrix has rank {rank} but {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("every lag bin was excluded by the near-zero covariance guard")]
    AllBinsGuarded,

    #[error("singular kriging system: {0}")]
    SingularSystem(String),

    #[error("nil-space anchor configuration is singular (condition number {0:e})")]
    SingularConfiguration(f64),

    #[error("Cholesky factorization failed after diagonal jitter up to {0:e}")]
    Factorization(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical procedure on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::AllBinsGuarded
                | Error::SingularSystem(_)
                | Error::SingularConfiguration(_)
                | Error::Factorization(_)
        )
    }
}
