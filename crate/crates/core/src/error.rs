use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("{what} contains non-finite entries")]
    NonFinite { what: &'static str },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric within tolerance (asymmetry {asymmetry:e}, allowed {allowed:e})")]
    Asymmetric { asymmetry: f64, allowed: f64 },

    #[error("weight matrix is not symmetric positive definite")]
    IndefiniteWeight,

    #[error("relation basis is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("relation is not maximal dissipative: {0}")]
    NotMaximalDissipative(String),

    #[error("matrix is not a contraction: operator norm {norm} exceeds 1 + {tol:e}")]
    NotContraction { norm: f64, tol: f64 },

    #[error("W1 + W2 is not injective (smallest/largest singular value ratio {ratio:e})")]
    SumNotInjective { ratio: f64 },

    #[error("range condition violated: ran(W1 - W2) is not contained in ran(W1 + W2)")]
    RangeConditionViolated,

    #[error("linear solve residual {residual:e} exceeds tolerance {tol:e}")]
    SolveResidual { residual: f64, tol: f64 },

    #[error("implicit midpoint matrix I - dt/2 M is singular at dt = {dt} (resonant pole)")]
    SingularImplicitMatrix { dt: f64 },

    #[error("incompatible initial data: {0}")]
    Incompatible(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid material: {0}")]
    Material(String),

    #[error("invalid damping: {0}")]
    Damping(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Representation(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Input or configuration problems, as opposed to failures of the
    /// numerics on otherwise valid input.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SolveResidual { .. }
                | Error::SingularImplicitMatrix { .. }
                | Error::NotContraction { .. }
                | Error::NotMaximalDissipative(_)
                | Error::RankDeficient { .. }
        )
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            1
        } else {
            2
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
