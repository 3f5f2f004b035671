//! AD-spectrum-aware prototypical embedding network: a VAE over composite
//! clinical vectors, a severity ordering head and a topology-aware prototype
//! grid, trained jointly.

mod checkpoint;
mod ordering;
mod som;
mod train;
mod vae;

pub use checkpoint::{AdpenCheckpoint, CHECKPOINT_VERSION};
pub use ordering::{
    ordering_loss, ordering_loss_tape, OrderingConfig, OrderingForm, OrderingHead,
    MIN_PAIR_DISTANCE,
};
pub use som::{
    batch_weights, bmu_index, neighborhood_weights, quantization_error, radius, som_loss,
    som_loss_tape, topo_distances, topographic_error, topology_distances, two_nearest,
    PrototypeGrid, SomSchedule, Topology,
};
pub use train::{
    continue_adpen, finetune_som, train_adpen, AdpenConfig, AdpenModel, EpochRecord, FinetuneLog,
    TrainingLog,
};
pub use vae::{
    kl_divergence, reconstruction_loss, vae_loss, BoundVae, LatentPoint, Sampling, VaeConfig,
    VaeForward, VaeModel,
};

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum AdpenError {
    #[error("model error: {0}")]
    Model(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged { epoch: usize, step: u64, detail: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
