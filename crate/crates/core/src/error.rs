use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("player {i} cannot be matched against itself")]
    SelfMatch { i: usize },

    #[error("player index {index} out of range for {players} players")]
    IndexOutOfRange { index: usize, players: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("comparison graph is disconnected ({} components)", components.len())]
    Disconnected { components: Vec<Vec<usize>> },

    #[error("maximum likelihood estimate does not exist: players {players:?} are separated from the rest")]
    Divergent { players: Vec<usize> },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("at lambda = {lambda}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("empty lambda path")]
    EmptyPath,

    #[error("rank correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical routines, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Disconnected { .. }
            | Error::Divergent { .. }
            | Error::NotConverged { .. }
            | Error::UndefinedCorrelation(_) => true,
            Error::AtLambda { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
