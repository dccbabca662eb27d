//! Sparse adjacency algebra.
//!
//! [`CsrMatrix`] carries every adjacency in the crate. Relations (adjacency
//! powers and meta-path sums) are compiled once into normalized CSR matrices
//! and reused for every epoch.

mod csr;
mod relation;

pub use csr::{CsrMatrix, Normalization};
pub use relation::{
    base_adjacency, build_typed_adjacency, compilations_on_current_thread, compile_relation,
    compile_relations, CompiledRelation, RelationKind, RelationSpec,
};
