//! Measurement library for anisotropy in transformer hidden representations.
//!
//! The crate is organised around a small set of self-contained layers:
//!
//! * [`numerics`] — dense row-major tensors, a splittable counter-based RNG,
//!   a one-sided Jacobi SVD, and the statistics used by every experiment
//!   (cosine, entropy, Pearson/Spearman tests).
//! * [`model`] — a from-scratch BERT-style encoder whose forward pass can
//!   capture every per-head quantity (queries, keys, pre-softmax scores,
//!   attention probabilities).
//! * [`train`] — hand-derived exact gradients for that encoder, an Adam loop
//!   with masked-token corruption, and checkpoint emission.
//! * [`metrics`] — pairwise cosine estimation, drift/anisotropy correlation,
//!   and the analytic isotropic baseline.
//! * [`driftlab`] — bias-injection experiments on a single untrained block,
//!   including the input/output norm fixed point.
//! * [`qk`] — query/key drift dynamics across training checkpoints: mean
//!   alignment trajectories, SVD projections, attention-entropy decay.
//!
//! Everything is `no_std + alloc`; all floating-point transcendentals go
//! through `libm`, so results are bit-reproducible across platforms. File
//! formats, reports, and the CLI live in the companion `anisolab` crate.

#![no_std]
// Index-style loops are the clearer notation for the dense kernels here.
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod driftlab;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod qk;
pub mod train;

pub use numerics::rng::Rng;
pub use numerics::tensor::{Scalar, Tensor2D};
