use thiserror::Error;

/// Errors raised across the model, sampler and post-processing layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("design matrix for the {regression} regression is rank deficient")]
    RankDeficient { regression: &'static str },

    #[error("degenerate g-prior for the {regression} regression: R^2 = 1")]
    DegenerateGPrior { regression: &'static str },

    #[error("{regression} regression needs more than {needed} rows, got {rows}")]
    TooFewRows {
        regression: &'static str,
        rows: usize,
        needed: usize,
    },

    #[error("all class weights underflowed for cluster {cluster}")]
    WeightUnderflow { cluster: String },

    #[error("positive-definiteness violated: {0}")]
    NotPositiveDefinite(String),

    #[error("CDF inversion failed: {0}")]
    Inversion(String),

    #[error("g-computation produced {succeeded} usable synthetic clusters out of {requested}")]
    TooFewSyntheticClusters { succeeded: usize, requested: usize },

    #[error("zero likelihood for observation {0}")]
    ZeroLikelihood(usize),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("length mismatch: {0}")]
    Mismatch(String),

    #[error("sweep {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv error at {location}: {message}")]
    Csv { location: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
