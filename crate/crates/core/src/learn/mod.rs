//! Structure generation and parameter learning.
//!
//! Structures come from recursive random variable decomposition: each scope
//! spawns several random partitions realized as product nodes, with sum
//! nodes mixing the partitions, down to per-variable indicator mixtures.
//! Parameters are learned by projected mini-batch gradient ascent under a
//! generative (mean log-likelihood) or discriminative (class cross-entropy)
//! loss; an EM-style multiplicative update is available as an alternative
//! for the generative loss.

mod prune;
mod structure;
mod train;

pub use prune::prune;
pub use structure::{generate_dense_structure, StructureConfig};
pub use train::{
    init_leaf_weights_from_counts, loglik_weight_gradients, train_discriminative, train_generative,
    train_top_generative, GenerativeAlgo, LabeledSample, Loss, SoftSample, TraceRow, TrainConfig,
    TrainTrace,
};

pub(crate) use structure::{generate_mixtures, AtomSource, VarAtoms};

use thiserror::Error;

use crate::spn::SpnError;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("structure generation requires a nonempty scope")]
    EmptyScope,
    #[error("configuration field {field} must be at least 1")]
    BadConfig { field: &'static str },
    #[error("training requires a nonempty dataset")]
    EmptyData,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error("sample {sample} has label {label} but the model has {classes} classes")]
    BadLabel { sample: usize, label: usize, classes: usize },
    #[error("no trainable layer annotation was provided")]
    MissingLayerAnnotation,
    #[error("pruning node {node} would remove all of its children")]
    PruneWouldEmpty { node: u32 },
    #[error(transparent)]
    Spn(#[from] SpnError),
}
