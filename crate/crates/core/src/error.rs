use crate::geometry::Pose;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by every stage of the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point lies behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("insufficient constraints: {available} usable entries, need {required}")]
    InsufficientConstraints { available: usize, required: usize },
    /// Damping exceeded its cap; the best pose seen so far is kept.
    #[error("optimizer did not converge after {iterations} iterations (cost {cost})")]
    NonConvergence {
        best: Box<Pose>,
        cost: f64,
        iterations: usize,
    },
    #[error("correlation undefined for an all-zero block")]
    UndefinedCorrelation,
    #[error("low correlation: best score {score:.4} below acceptance")]
    LowCorrelation { score: f64 },
    #[error("epipolar search segment lies outside the image")]
    OutOfView,
    #[error("no depth support under the requested patch")]
    NoSupport,
    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),
    #[error("footpoint ray does not meet visible ground (n^T K^-1 b = {denominator})")]
    HorizonOrAbove { denominator: f64 },
    #[error("invalid tracklet pair: {0}")]
    InvalidPair(String),
    #[error("insufficient seeds: {available}, need at least {required}")]
    InsufficientSeeds { available: usize, required: usize },
    #[error("metrics undefined: {0}")]
    UndefinedMetrics(String),
    #[error("empty report: {0}")]
    EmptyReport(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateGeometry(msg.into())
    }

    pub fn at_frame(self, frame: usize) -> Self {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with frame and stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Frame { source, .. } | Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True when the error stems from malformed or missing input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self.root(),
            Error::Parse { .. }
                | Error::Io(_)
                | Error::NoSupport
                | Error::EmptyReport(_)
                | Error::UndefinedMetrics(_)
        )
    }

    /// True when the error is a numerical or geometric failure.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::BehindCamera { .. }
                | Error::DegenerateGeometry(_)
                | Error::InsufficientConstraints { .. }
                | Error::NonConvergence { .. }
                | Error::UndefinedCorrelation
                | Error::LowCorrelation { .. }
                | Error::OutOfView
                | Error::DegenerateSamples(_)
                | Error::HorizonOrAbove { .. }
                | Error::InsufficientSeeds { .. }
        )
    }
}
