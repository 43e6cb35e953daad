//! Fixed classifier heads for neural networks.
//!
//! The final affine layer of a classifier is replaced by a fixed matrix,
//! either a random orthonormal projection or a truncated Sylvester Hadamard
//! matrix, applied to the L2-normalized representation. Only a single
//! softmax scale `α` and the bias remain trainable. The Hadamard head is
//! evaluated with a fast Walsh-Hadamard transform in `O(N log N)`.
//!
//! The crate bundles everything needed to check that claim at desk scale:
//! a small MLP with manual backprop, seeded data generators, an IDX loader,
//! training runs with CSV metrics, a finite-difference gradient checker and
//! a microbenchmark.

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod hadamard;
pub mod head;
pub mod net;
pub mod numerics;
pub mod projection;

pub use error::{Error, Result};
pub use head::{CosineReduction, Head, HeadMode, LossKind};
pub use net::{Mlp, SgdConfig};
pub use numerics::{Matrix, Rng};
