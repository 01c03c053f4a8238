use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {context} (layer {layer})")]
    NonFinite { context: &'static str, layer: usize },
    #[error("degenerate policy: sigma must be positive for {0}")]
    DegeneratePolicy(&'static str),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("invalid consensus matrix: {0}")]
    ConsensusMatrix(String),
    #[error("no reward-gradient source for agent {0}")]
    MissingGradients(usize),
    #[error("estimation diverged at iteration {iteration}: loss {loss:e}")]
    Diverged { iteration: usize, loss: f64 },
    #[error("training failed at iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("unknown environment `{name}`; available: {available}")]
    UnknownEnv { name: String, available: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            got,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Training {
            iteration,
            source: Box::new(self),
        }
    }
}
