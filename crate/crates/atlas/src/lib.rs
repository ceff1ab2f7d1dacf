//! Sampling a trained model's latent space: grids of decoded reorderings,
//! quality-metric heatmaps and matrix images.

pub mod atlas;
pub mod metrics;
pub mod render;

pub use atlas::{build_grid, build_heatmap, lattice_point, AtlasGrid, GridCell, MetricHeatmap};
pub use metrics::{ar_events, bar_measure, cor_measure, default_band, normalize, Bar, Cor, QualityMetric};
pub use render::{render_field, render_matrix};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("decoded order {order:?} at z = {z:?} does not preserve the graph")]
    Structure { z: [f64; 2], order: Vec<usize> },

    #[error(transparent)]
    Core(#[from] reorder_core::Error),

    #[error(transparent)]
    Model(#[from] reorder_model::Error),

    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
