use thiserror::Error;

/// Errors produced by model construction, recovery and file handling.
///
/// State indices carried in variants are 0-based; `Display` prints them
/// 1-based to match the file formats and CLI output.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("state index {} out of range for n = {n}", .index + 1)]
    StateOutOfRange { index: usize, n: usize },

    #[error("non-stochastic row: chain {}, state {}", .chain + 1, .state + 1)]
    NonStochasticRow { chain: usize, state: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot determine r: {0}")]
    CannotDetermineR(String),

    #[error("state {} has no companion", .state + 1)]
    NoCompanion { state: usize },

    #[error("starting-ratio degeneracy between states {} and {} (relative eigenvalue gap {gap:.3e})", .state + 1, .companion + 1)]
    StartingRatioDegeneracy { state: usize, companion: usize, gap: f64 },

    #[error("non-real spectrum for states {} and {} (imaginary part {imag:.3e})", .state + 1, .companion + 1)]
    NonRealSpectrum { state: usize, companion: usize, imag: f64 },

    #[error("scaling underdetermined for state {}", .state + 1)]
    ScalingUnderdetermined { state: usize },

    #[error("vanishing scale for state {} (|d| = {value:.3e})", .state + 1)]
    VanishingScale { state: usize, value: f64 },

    #[error("components not covered: {distinct} distinct component columns, expected {expected}")]
    ComponentsNotCovered { distinct: usize, expected: usize },

    #[error("row-support mismatch for state {}: {found} non-zero rows, expected {expected}", .state + 1)]
    RowSupportMismatch {
        state: usize,
        found: usize,
        expected: usize,
    },

    #[error("infeasible labeling")]
    InfeasibleLabeling,

    #[error("singular change of basis")]
    SingularBasis,

    #[error("empty spectrum")]
    EmptySpectrum,

    #[error("invalid cut: {0}")]
    InvalidCut(String),

    #[error("non-finite cost entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("generation failed after {attempts} attempts: {last}")]
    GenerationFailed { attempts: usize, last: String },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no trails")]
    NoTrails,

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strips any stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
