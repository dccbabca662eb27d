//! Hop-hop relation-aware graph neural networks (HHR-GNN).
//!
//! A node classifier that mixes a node's own representation with its
//! representations at several hops (homogeneous graphs) or along several
//! meta-paths (heterogeneous graphs). Each hop gets its own projection, and a
//! bilinear tensor scores how strongly each hop relates to the node itself.
//! The scored hop vectors are concatenated into the next layer's input.
//!
//! Module map:
//!
//! - [`graphstore`]: graph data model, on-disk formats, synthetic generators,
//!   train/val/test splits.
//! - [`sparsela`]: CSR matrices, typed adjacency, normalization, and
//!   compilation of relations (powers and meta-path sums).
//! - [`diffcore`]: a small reverse-mode differentiation tape over dense
//!   `f64` matrices, plus a finite-difference oracle.
//! - [`hhrmodel`]: the HHR layer stack, classifier head, loss, and a GCN
//!   baseline.
//! - [`trainer`]: Adam with decoupled weight decay, early stopping, metrics,
//!   and the whole-model gradient check.
//! - [`run`]: run configuration, artifact writing, and relation-score export
//!   used by the command-line tool.

pub mod diffcore;
pub mod error;
pub mod graphstore;
pub mod hhrmodel;
pub mod run;
pub mod sparsela;
pub mod trainer;

pub use error::{Error, Result};
