use std::fmt;

use serde::Serialize;

/// A dyad-period cell that was expected in an input file but not found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingCell {
    pub origin: String,
    pub dest: String,
    pub year: i64,
}

impl fmt::Display for MissingCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.origin, self.dest, self.year)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("diagonal entry ({0}, {0}) is undefined for dyadic data")]
    DiagonalAccess(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error(
        "rank-deficient design (reciprocal condition {rcond:.3e}); suspect columns: [{}]",
        columns.join(", ")
    )]
    RankDeficient { rcond: f64, columns: Vec<String> },

    #[error("posterior mean of the error variance is undefined: inverse-gamma shape {0} <= 1")]
    UndefinedMean(f64),

    #[error("explosive process: sum of absolute lag coefficients is {0}, must be < 1")]
    Explosive(f64),

    #[error(
        "sampler diverged at iteration {iteration}: sigma2_eps = {value:.3e} exceeds {limit:.3e}"
    )]
    Divergence {
        iteration: usize,
        value: f64,
        limit: f64,
    },

    #[error("{} missing cell(s): {}", .0.len(), fmt_cells(.0))]
    MissingCells(Vec<MissingCell>),

    #[error("cannot log-transform non-positive value {value} at {location}")]
    NonPositiveLog { location: String, value: f64 },

    #[error("invalid weight scheme: {0}")]
    InvalidWeights(String),

    #[error("oracle check failed for {family}: max deviation {deviation:.3e} > {tolerance:.1e}")]
    OracleFailure {
        family: String,
        deviation: f64,
        tolerance: f64,
    },

    #[error("quadrature grid too coarse: normalisation differs by {0:.3e} between resolutions")]
    GridTooCoarse(f64),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

fn fmt_cells(cells: &[MissingCell]) -> String {
    cells
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    /// Stable machine-readable tag for the error record emitted by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::DiagonalAccess(_) => "diagonal_access",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite(_) => "non_finite",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::UndefinedMean(_) => "undefined_mean",
            Error::Explosive(_) => "explosive",
            Error::Divergence { .. } => "divergence",
            Error::MissingCells(_) => "missing_cells",
            Error::NonPositiveLog { .. } => "non_positive_log",
            Error::InvalidWeights(_) => "invalid_weights",
            Error::OracleFailure { .. } => "oracle_failure",
            Error::GridTooCoarse(_) => "grid_too_coarse",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::TomlDe(_) | Error::TomlSer(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
