//! Graphs, node orderings and the classical seriation toolbox used to build
//! corpora of adjacency-matrix reorderings.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] holds simple undirected graphs, their adjacency matrices and
//!   the `reorder` operation `A_P = P A Pᵀ`.
//! * [`permutation`] is the node-ordering type everything else speaks.
//! * [`distances`] turns an adjacency matrix into node dissimilarities.
//! * [`seriation`] implements the reordering methods.
//! * [`dataset`] enumerates method × distance × seed jobs into a deduplicated
//!   corpus and splits it into cross-validation folds.

pub mod dataset;
pub mod digest;
pub mod distances;
pub mod error;
pub mod graph;
pub mod permutation;
pub mod seriation;

pub use dataset::{Dataset, FoldSplit, ReorderingRecord};
pub use distances::{DistanceMatrix, DistanceSpec, Metric};
pub use error::{Error, Result};
pub use graph::{AdjacencyMatrix, Graph, MatrixVariant};
pub use permutation::Permutation;
pub use seriation::{Method, MethodSpec};
