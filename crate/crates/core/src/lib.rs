//! Multi-instance learning with graph-structured bag kernels.
//!
//! Bags are sets of instances. Instead of treating the instances of a bag as
//! independent samples, the kernels here look at how the instances relate to
//! each other: MIGraph builds an explicit ε-graph per bag and compares nodes
//! and edges, miGraph weights each instance by the size of its soft clique in
//! a thresholded affinity matrix. MI-Kernel, which ignores those relations,
//! is included as the baseline.
//!
//! The crate also carries the kernel machines that consume the Gram
//! matrices (SMO-trained SVMs, one-vs-one multiclass, kernel ridge
//! regression) and a cross-validation harness with nested parameter
//! selection and paired significance tests.

pub mod distance;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod kernel;
pub mod learn;
pub mod model;
pub mod parallel;

pub use error::{Error, Result};
