//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records primitive operations as they are evaluated. Node ids are
//! assigned in evaluation order, so every node's inputs have smaller ids and
//! [`Tape::backward`] can walk the tape once in decreasing id order.
//! Sparse adjacency matrices enter as borrowed constants and receive no
//! gradient.

mod gradcheck;
mod tape;

pub use gradcheck::{finite_diff_check, max_relative_error, numeric_gradient, relative_error};
pub use tape::{Activation, Gradients, NodeId, Tape};

pub type DenseMatrix = ndarray::Array2<f64>;
