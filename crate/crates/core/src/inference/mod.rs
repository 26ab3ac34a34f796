//! Monte-Carlo bounds, training and posterior decoding.

pub mod decode;
pub mod elbo;
pub mod train;

pub use decode::{decode_labels, posterior_labels, LabelPosterior};
pub use elbo::{build_elbo, elbo_generic, elbo_svrnn, elbo_vsl, estimate, ElboEstimate, ElboNodes, ElboOptions, ElboTerms, LabelSampling};
pub use train::{train, train_with, EpochRecord, TrainConfig, TrainTrace};
