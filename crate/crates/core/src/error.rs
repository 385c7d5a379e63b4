use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset failed validation: {0}")]
    Validation(String),

    #[error("no such preset: {0:?}")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown parameter: {0:?}")]
    UnknownParameter(String),

    #[error("degenerate full conditional for record {record}")]
    DegenerateFullConditional { record: usize },

    #[error("initialization failure: no finite log-posterior after {attempts} draws")]
    InitializationFailure { attempts: usize },

    #[error("non-finite log-posterior ({value}) encountered")]
    NonFinitePosterior { value: f64 },

    #[error("no gold-standard data")]
    NoGoldStandard,

    #[error("unstable fit: {0}")]
    UnstableFit(String),

    #[error("too few studies: need at least {needed}, have {have}")]
    TooFewStudies { needed: usize, have: usize },

    #[error("too few draws: need at least {needed}, have {have}")]
    TooFewDraws { needed: usize, have: usize },

    #[error("no completed replications")]
    NoCompletedReplications,

    #[error("timeout")]
    Timeout,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that originate in the MCMC machinery rather than in
    /// the inputs handed to it.
    pub fn is_sampler_failure(&self) -> bool {
        matches!(
            self,
            Error::DegenerateFullConditional { .. }
                | Error::InitializationFailure { .. }
                | Error::NonFinitePosterior { .. }
                | Error::Timeout
        )
    }
}
