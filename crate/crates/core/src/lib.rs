//! Joint RIS phase-shift optimization and 5G NR Type-I precoder selection
//! for a cascaded gNodeB → RIS → UE MIMO link.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense complex matrices, SVD, Kronecker products and small
//!   Hermitian solves.
//! - [`channel`]: clustered stochastic channels `H`, `G`, the cascade
//!   `F = G Φ H` and the far-field RIS path loss.
//! - [`ris`]: quantized phase grids and reflection matrices.
//! - [`codebook`]: Type-I single-panel beam grids and precoder assembly.
//! - [`selector`]: SVD-based and exhaustive rate-based PMI selection.
//! - [`risopt`]: optimization parameters and the maximum cross-swapping search.
//! - [`link`]: zero-forcing equalization, per-layer SNR and achievable rate.
//! - [`harness`]: seeded Monte-Carlo sweeps over the joint pipeline.

pub mod channel;
pub mod codebook;
pub mod error;
pub mod harness;
pub mod link;
pub mod linalg;
pub mod ris;
pub mod risopt;
pub mod seed;
pub mod selector;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64};
