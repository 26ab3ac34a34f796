//! Image I/O, curve serialization, noise synthesis and label masking.

pub mod hilbert;
pub mod image;
pub mod mask;
pub mod noise;
pub mod sequence;

pub use hilbert::HilbertMap;
pub use image::{generate_shape, BinaryImage, GrayImage, ShapeKind};
pub use mask::mask_labels;
pub use noise::{synthesize_noise, NoiseKind, NoiseSpec};
pub use sequence::{LabeledSequence, Provenance, Standardization};

use crate::error::Result;

/// Serializes `img` along the Hilbert curve, adds noise, standardizes the
/// observations and hides `round(fraction * n)` labels.
pub fn build_sequence(img: &BinaryImage, noise: &NoiseSpec, fraction: f64, mask_seed: u64) -> Result<LabeledSequence> {
    let map = HilbertMap::for_side(img.side())?;
    let truth = img.to_sequence(&map)?;
    let raw = synthesize_noise(&truth, noise)?;
    let mut xs: Vec<Vec<f64>> = raw.into_iter().map(|v| vec![v]).collect();
    let standardization = Standardization::fit_apply(&mut xs);
    let hidden = mask_labels(truth.len(), fraction, mask_seed)?;
    let mut seq = LabeledSequence::from_truth(xs, truth, &hidden, noise.classes().max(2))?;
    seq.provenance = Provenance {
        shape: None,
        side: Some(img.side()),
        order: Some(map.order()),
        noise: Some(noise.clone()),
        fraction,
        mask_seed,
        standardization: Some(standardization),
    };
    Ok(seq)
}
