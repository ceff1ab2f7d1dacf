//! Permutation-learning autoencoder for graph matrix reorderings.
//!
//! An encoder maps a reordered adjacency matrix `A_P` to a point in a 2-D
//! latent space; a decoder maps latent points back to a soft permutation
//! (Sinkhorn or SoftSort), which is hardened into an exact one. Decoded
//! matrices are always `P′ A P′ᵀ` for a genuine permutation, so they carry
//! the same graph.

pub mod assign;
pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod loss;
pub mod net;
pub mod operators;
pub mod optim;
pub mod train;

pub use assign::{greedy_argmax, harden, hungarian};
pub use checkpoint::Checkpoint;
pub use config::{Architecture, DecoderKind, ModelConfig, LATENT_DIM};
pub use loss::error_rate;
pub use net::{Decoded, LossInputs, Model, Param};
pub use optim::Adamax;
pub use train::{evaluate, train, train_dataset, EpochLog, Evaluation, Trained};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {norms}")]
    NonFinite { epoch: usize, batch: usize, norms: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Autodiff(#[from] reorder_autodiff::Error),

    #[error(transparent)]
    Core(#[from] reorder_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
