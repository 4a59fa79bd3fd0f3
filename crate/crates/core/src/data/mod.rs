//! Image/mask pairs: loading, augmentation and synthetic cracks.

mod augment;
mod io;
mod synth;

pub use augment::{
    augment, augment_indexed, draw_params, draw_rng, expand, expansion_plan, interior_rect, transform, AugmentConfig,
    AugmentParams,
};
pub use io::{
    binarize, list_images, load_pairs, pair_stems, read_gray, read_image, read_mask, write_gray_png, write_rgb_png,
};
pub use synth::synth_crack;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;
use crate::train::GroundTruth;

/// One training pair: RGB image in [0, 1] and its binary crack mask.
#[derive(Clone, PartialEq, Debug)]
pub struct Sample {
    pub image: Tensor4<f32>,
    pub mask: GroundTruth,
}

impl Sample {
    pub fn new(image: Tensor4<f32>, mask: GroundTruth) -> Result<Self> {
        let (i, m) = (image.shape(), mask.shape());
        if i.n != 1 || i.c != 3 || m.n != 1 || m.c != 1 || (i.h, i.w) != (m.h, m.w) {
            return Err(Error::Shape(format!("image {i} does not pair with mask {m}")));
        }
        Ok(Sample { image, mask })
    }

    pub fn height(&self) -> usize {
        self.image.shape().h
    }

    pub fn width(&self) -> usize {
        self.image.shape().w
    }

    /// Luma on the [0, 255] scale, row-major.
    pub fn grayscale(&self) -> Vec<f64> {
        let (r, g, b) = (self.image.plane(0, 0), self.image.plane(0, 1), self.image.plane(0, 2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((&r, &g), &b)| 255.0 * (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64))
            .collect()
    }
}
