//! Likelihood maps over the prototype grid: pseudo maps from clinical
//! latents, the consistency autoencoder and the imaging-side estimator.

mod cae;
mod estimator;
mod map;
mod train;

pub use cae::{pretrain_cae, CaeConfig, ConsistencyCae};
pub(crate) use cae::gather_rows;
pub use estimator::{
    cons_loss, est_loss, task_loss, total_loss, total_loss_tape, DenseExtractor, EstimatorStack,
    FeatureExtractor, LossWeights, StackWidths, TapedObjective, TaskHead, TaskKind, TaskTarget,
};
pub use map::{
    minmax_normalize, pseudo_map, pseudo_maps, pseudo_probabilities, resolve_temperature,
    LikelihoodMap, MapKind, Temperature, DEGENERATE_SPREAD,
};
pub use train::{task_score, train_estimator, EstimatorConfig, EstimatorData, EstimatorEpoch, EstimatorLog};

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum LikelihoodError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
