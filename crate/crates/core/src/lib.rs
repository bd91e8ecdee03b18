//! Prosody toolkit for matched English/Spanish dialog utterances.
//!
//! The pipeline runs from audio to a 100-dimensional prosody vector per
//! utterance ([`dsp`] then [`midlevel`]), compares vectors by Euclidean
//! dissimilarity ([`metric`]), analyzes cross-language rank correlations
//! ([`analysis`]) and fits and evaluates baseline prosody-transfer models
//! ([`models`]).

pub mod analysis;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod metric;
pub mod midlevel;
pub mod models;
pub mod pipeline;
pub mod synthetic;

pub use corpus::{AudioTrack, CorpusManifest, Language, MatchedPair, UtteranceRecord};
pub use error::{ProsodyError, Result};
pub use midlevel::{FeatureTable, ProsodyVector, DIM};
