//! Sparse-weight convolution kernels with an analytical performance model
//! and a guided-pruning controller.
//!
//! The crate is organized around one loop: measure a machine
//! ([`bench::calibrate`]), project which layers and densities can beat the
//! dense kernel ([`model`]), prune a network toward exactly that range
//! ([`gsl`], driven live by [`train`]), and execute the result with the
//! direct sparse kernel ([`conv::conv_sparse_direct`]), which streams CSR
//! non-zeros over a padded input using precomputed layout offsets instead
//! of materializing a lowered matrix.

pub mod bench;
pub mod conv;
pub mod error;
pub mod gsl;
pub mod io;
pub mod model;
pub mod sparse;
pub mod tensor;
pub mod train;

#[doc(hidden)]
pub mod test_util;

pub use error::{Error, Result};
pub use model::{LayerCost, PlatformProfile, SparsityWindow, TimeProjection};
pub use sparse::SparseKernelMatrix;
pub use tensor::{LayerSpec, Tensor3, Tensor4};
