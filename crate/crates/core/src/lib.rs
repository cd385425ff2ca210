//! Multiscale organization of data matrices with partition trees.
//!
//! A data matrix is viewed as a set of features (rows) and observations
//! (columns). Each axis is equipped with a [`PartitionTree`] of nested
//! folders, and the trees induce linear transforms (structure, averaging,
//! difference, joint and multi-tree), a weighted tree metric that
//! approximates the earth mover's distance, and a Haar-like basis used to
//! score how smooth a joint organization is. [`biorg::bi_organize`] alternates
//! between the two axes, building each tree from the metric induced by the
//! other one.

pub mod biorg;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod flexible;
pub mod heatmap;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod refinement;
pub mod synth;
pub mod transforms;
pub mod tree;

pub use error::{Error, Result};
pub use matrix::{Axis, DataMatrix};
pub use tree::{Folder, PartitionTree, RawTree};
