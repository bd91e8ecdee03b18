//! Baseline prosody-transfer models and their evaluation.
//!
//! Three models map the prosody vector of a source utterance to a prediction
//! for its translation: the naive identity map, a least-squares linear map
//! ([`LinearModel`]) and the prosody of externally synthesized audio
//! ([`eval_external_audio`]).

mod eval;
mod linear;
mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use eval::{
    eval_external_audio, evaluate, naive_predict, read_exclusions, EvaluationReport, PairError,
};
pub use linear::{fit_linear, top_coefficients, Coefficient, LinearModel, N_WEIGHT_COLUMNS};
pub use split::{
    read_split, split_pairs, write_split, SplitAssignment, SplitSpec, SPLIT_ATTEMPTS,
};

use crate::corpus::{Language, MatchedPair};
use crate::error::{ProsodyError, Result};
use crate::midlevel::{FeatureTable, ProsodyVector};

/// Translation direction: source language to target language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "en-es")]
    EnEs,
    #[serde(rename = "es-en")]
    EsEn,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::EnEs, Direction::EsEn];

    pub fn source(self) -> Language {
        match self {
            Direction::EnEs => Language::En,
            Direction::EsEn => Language::Es,
        }
    }

    pub fn target(self) -> Language {
        self.source().other()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::EnEs => "en-es",
            Direction::EsEn => "es-en",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = ProsodyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "en-es" => Ok(Direction::EnEs),
            "es-en" => Ok(Direction::EsEn),
            _ => Err(ProsodyError::InvalidArgument(format!(
                "direction must be en-es or es-en, got {s:?}"
            ))),
        }
    }
}

/// Source and target vectors of one matched pair in a given direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PairVectors {
    pub pair_id: String,
    pub source: ProsodyVector,
    pub target: ProsodyVector,
}

/// Looks up both sides of each pair in the feature table.
pub fn pair_vectors(
    table: &FeatureTable,
    pairs: &[MatchedPair],
    direction: Direction,
) -> Result<Vec<PairVectors>> {
    pairs
        .iter()
        .map(|p| {
            Ok(PairVectors {
                pair_id: p.pair_id.clone(),
                source: table.require(&p.side(direction.source()).utterance_id)?.clone(),
                target: table.require(&p.side(direction.target()).utterance_id)?.clone(),
            })
        })
        .collect()
}
