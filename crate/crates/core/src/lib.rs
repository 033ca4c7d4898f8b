//! Score-based learning of Bayesian networks with a hard treewidth bound.
//!
//! The pipeline is: load a categorical dataset ([`dataset`]), enumerate
//! and score candidate parent sets with BIC-bound pruning ([`scoring`]),
//! then search for a high-scoring DAG whose moral graph fits inside a
//! k-tree ([`search`] for the order-based k-G / k-A* learners,
//! [`baseline`] for the k-tree sampling learners S2 / S2+). [`exact`]
//! provides the unconstrained optimum on small problems and [`bench`]
//! compares methods.

pub mod baseline;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod exact;
pub mod graph;
pub mod scoring;
pub mod search;
pub mod synth;

pub use error::{Error, Result};
