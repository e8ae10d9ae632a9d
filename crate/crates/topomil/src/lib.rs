//! Multiple-instance learning with a topological regularizer.
//!
//! Each bag of instances is treated as a point cloud. The 0-dimensional
//! persistent homology of its Vietoris-Rips filtration — concretely, the
//! minimum-spanning-tree edges of the pairwise distance matrix — is computed
//! in both the input space and the encoder's latent space, and the training
//! objective penalizes mismatch between the distances selected by either
//! pairing. The crate provides:
//!
//! - [`autodiff`]: a small reverse-mode differentiation tape (f64 only),
//! - [`persistence`]: distance matrices and exact 0-dim persistence pairings,
//! - [`toporeg`]: the differentiable topological regularization loss,
//! - [`milcore`]: encoders, the five aggregation functions, heads and losses,
//! - [`datasets`]: synthetic bag generators and file ingestion (bag CSV, IDX),
//! - [`training`]: Adam, the per-bag training loop, cross-validation,
//!   macro-averaged metrics and the data-scarcity sweep harness,
//! - [`checkpoint`]: a versioned binary model container.

pub mod autodiff;
pub mod checkpoint;
pub mod datasets;
pub mod milcore;
pub mod persistence;
pub mod tensor;
pub mod toporeg;
pub mod training;

pub use tensor::Tensor;
