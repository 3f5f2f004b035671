//! Reading trained prototypes back in clinical terms: decoded prototype
//! states, the clinical explainable map, nearest-sample retrieval and
//! difference maps against prototypical samples.

mod morph;
mod retrieve;
mod states;

pub use morph::{morph_difference, percentile, MorphDiffMap, DEFAULT_PERCENTILE};
pub use retrieve::{
    retrieve_nearest_samples, select_stage_representatives, PrototypeSamples, PrototypicalSampleSet,
    StageSelection,
};
pub use states::{
    build_clinical_map, decode_prototypes, ExplainEntry, ExplainableMap, PrototypicalState,
};

use crate::adpen::AdpenError;

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Adpen(#[from] AdpenError),
}
