//! Triplet Markov chain (TMC) sequence models trained by semi-supervised
//! variational inference, and the binary-image segmentation pipeline built
//! on them.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: tape-based reverse-mode differentiation over vectors
//! - [`nn`]: dense nets, recurrent cells, Adam
//! - [`distributions`]: reparameterized Gaussians and relaxed labels
//! - [`models`]: d-mTMC, VSL and SVRNN transition / variational pairs
//! - [`inference`]: Monte-Carlo ELBOs, training, label decoding
//! - [`data`]: Hilbert serialization, noise, masking, bitmaps, archives
//! - [`oracle`]: exact references on small or degenerate instances
//! - [`eval`]: error rates, rendered segmentations, result tables
//! - [`experiment`]: the image-segmentation scenarios end to end

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod inference;
pub mod models;
pub mod nn;
pub mod oracle;

pub use error::{Error, Result};
pub use models::{ModelKind, TmcConfig, TmcModel};
