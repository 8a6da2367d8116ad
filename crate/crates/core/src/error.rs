use std::fmt;

use thiserror::Error;

/// Pipeline stage an error surfaced in, used to tag errors from `run_pipeline`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Acquisition,
    Features,
    Events,
    Dtw,
    Classifier,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Acquisition => "acquisition",
            Stage::Features => "features",
            Stage::Events => "events",
            Stage::Dtw => "dtw",
            Stage::Classifier => "classifier",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("power triangle inconsistent: |P| = {p} exceeds S = {s}")]
    Inconsistent { p: f64, s: f64 },
    #[error("window error: {0}")]
    Window(String),
    #[error("feature error: {0}")]
    Feature(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("inference error: {0}")]
    Inference(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
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
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Wraps `self` with the stage it came from. Already-tagged errors keep their original stage.
    pub fn at(self, stage: Stage) -> Self {
        match self {
            tagged @ Error::Stage { .. } => tagged,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The underlying error with any stage tag removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// True for errors caused by bad input data or configuration rather than I/O.
    pub fn is_data_error(&self) -> bool {
        !matches!(self.root(), Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
