use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ProsodyError>;

#[derive(Debug, Error)]
pub enum ProsodyError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate utterance_id {0}")]
    DuplicateUtterance(String),

    #[error("pair {pair_id}: {message}")]
    InvalidPair { pair_id: String, message: String },

    #[error("utterance {utterance_id} lasts {duration_s:.3} s, below the 0.5 s minimum")]
    UtteranceTooShort {
        utterance_id: String,
        duration_s: f64,
    },

    #[error("{path}: unsupported audio encoding: {message}")]
    UnsupportedEncoding { path: PathBuf, message: String },

    #[error("{path}: channel {channel} out of range ({channels} channels)")]
    ChannelOutOfRange {
        path: PathBuf,
        channel: usize,
        channels: usize,
    },

    #[error("{path}: audio contains no samples")]
    EmptyAudio { path: PathBuf },

    #[error("{path}: wav decode error: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("utterance {utterance_id}: interval [{start_s}, {end_s}) s exceeds track length {track_s:.3} s")]
    IntervalOutOfRange {
        utterance_id: String,
        start_s: f64,
        end_s: f64,
        track_s: f64,
    },

    #[error("utterance {utterance_id}: span {span} contains no frames")]
    EmptySpan { utterance_id: String, span: usize },

    #[error("feature index {0} out of range 0..100")]
    FeatureIndex(usize),

    #[error("non-finite value in vector {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("unknown utterance {0}")]
    UnknownUtterance(String),

    #[error("pair sets differ: {0}")]
    PairMismatch(String),

    #[error("split constraint unsatisfied after {attempts} attempts: {message}")]
    SplitConstraint { attempts: u32, message: String },

    #[error("missing synthesized audio for {0}")]
    MissingSynth(String),

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl ProsodyError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Self::Csv {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by violated split constraints rather than bad input data.
    pub fn is_constraint_failure(&self) -> bool {
        matches!(self, Self::SplitConstraint { .. })
    }
}
