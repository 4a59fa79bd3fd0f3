use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Sample;
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};
use crate::train::GroundTruth;

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct AugmentConfig {
    /// Rotation angles are drawn uniformly from `[0, max_angle_deg]`.
    pub max_angle_deg: f64,
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    /// `(height, width)` of the final random crop; `None` keeps the
    /// rotated interior whole.
    pub crop: Option<(usize, usize)>,
    pub factor: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_angle_deg: 90.0,
            horizontal_flip: true,
            vertical_flip: true,
            crop: Some((256, 256)),
            factor: 100,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=90.0).contains(&self.max_angle_deg) {
            return Err(Error::Config(format!("rotation range {} outside [0, 90]", self.max_angle_deg)));
        }
        if let Some((h, w)) = self.crop {
            if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
                return Err(Error::Config(format!("crop {h}x{w} must be a positive multiple of 32")));
            }
        }
        Ok(())
    }
}

/// One concrete draw of the augmentation pipeline.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct AugmentParams {
    pub angle_deg: f64,
    pub flip_h: bool,
    pub flip_v: bool,
    /// `(y, x, height, width)` of the crop window after rotation and flips.
    pub crop: Option<(usize, usize, usize, usize)>,
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            angle_deg: 0.0,
            flip_h: false,
            flip_v: false,
            crop: None,
        }
    }
}

/// Size `(height, width)` of the largest axis-aligned rectangle inside an
/// `h x w` image rotated by `angle_deg` about its centre.
pub fn interior_rect(h: usize, w: usize, angle_deg: f64) -> (usize, usize) {
    let a = angle_deg.to_radians();
    let (sin, cos) = (a.sin().abs(), a.cos().abs());
    let (wf, hf) = (w as f64, h as f64);
    let wide = wf >= hf;
    let (long, short) = if wide { (wf, hf) } else { (hf, wf) };
    let (rw, rh) = if short <= 2.0 * sin * cos * long || (sin - cos).abs() < 1e-10 {
        let x = 0.5 * short;
        if wide {
            (x / sin, x / cos)
        } else {
            (x / cos, x / sin)
        }
    } else {
        let cos2 = cos * cos - sin * sin;
        ((wf * cos - hf * sin) / cos2, (hf * cos - wf * sin) / cos2)
    };
    let snap = |v: f64| (v + 1e-6).floor().max(0.0) as usize;
    (snap(rh), snap(rw))
}

/// Draws rotation, flips and crop window for an `h x w` source.
pub fn draw_params(config: &AugmentConfig, h: usize, w: usize, rng: &mut impl Rng) -> Result<AugmentParams> {
    config.validate()?;
    let angle_deg = if config.max_angle_deg > 0.0 {
        rng.random_range(0.0..=config.max_angle_deg)
    } else {
        0.0
    };
    let flip_h = config.horizontal_flip && rng.random_bool(0.5);
    let flip_v = config.vertical_flip && rng.random_bool(0.5);
    let (rh, rw) = interior_rect(h, w, angle_deg);
    let crop = match config.crop {
        None => None,
        Some((ch, cw)) => {
            if ch > rh || cw > rw {
                return Err(Error::Size(format!(
                    "{h}x{w} source leaves a {rh}x{rw} interior at {angle_deg:.2} degrees, smaller than the {ch}x{cw} crop"
                )));
            }
            Some((rng.random_range(0..=rh - ch), rng.random_range(0..=rw - cw), ch, cw))
        }
    };
    Ok(AugmentParams {
        angle_deg,
        flip_h,
        flip_v,
        crop,
    })
}

/// Source coordinate (row, col) in pixel-centre units for output pixel
/// `(oy, ox)` of an `out_h x out_w` interior of an `h x w` plane.
fn source_coord(h: usize, w: usize, out_h: usize, out_w: usize, sin: f64, cos: f64, oy: usize, ox: usize) -> (f64, f64) {
    let dx = ox as f64 + 0.5 - out_w as f64 / 2.0;
    let dy = oy as f64 + 0.5 - out_h as f64 / 2.0;
    let sx = w as f64 / 2.0 + cos * dx + sin * dy - 0.5;
    let sy = h as f64 / 2.0 - sin * dx + cos * dy - 0.5;
    (sy, sx)
}

fn rotate_bilinear(plane: &[f32], h: usize, w: usize, angle_deg: f64) -> (usize, usize, Vec<f32>) {
    let (oh, ow) = interior_rect(h, w, angle_deg);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let (sy, sx) = source_coord(h, w, oh, ow, sin, cos, oy, ox);
            let sy = sy.clamp(0.0, (h - 1) as f64);
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            let p = |y: usize, x: usize| plane[y * w + x] as f64;
            let v = (1.0 - fy) * ((1.0 - fx) * p(y0, x0) + fx * p(y0, x1)) + fy * ((1.0 - fx) * p(y1, x0) + fx * p(y1, x1));
            out.push(v as f32);
        }
    }
    (oh, ow, out)
}

fn rotate_nearest(plane: &[u8], h: usize, w: usize, angle_deg: f64) -> (usize, usize, Vec<u8>) {
    let (oh, ow) = interior_rect(h, w, angle_deg);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let (sy, sx) = source_coord(h, w, oh, ow, sin, cos, oy, ox);
            let y = (sy.round().max(0.0) as usize).min(h - 1);
            let x = (sx.round().max(0.0) as usize).min(w - 1);
            out.push(plane[y * w + x]);
        }
    }
    (oh, ow, out)
}

fn flip_crop<V: Copy>(plane: &[V], h: usize, w: usize, p: &AugmentParams) -> (usize, usize, Vec<V>) {
    let (y0, x0, ch, cw) = p.crop.unwrap_or((0, 0, h, w));
    let mut out = Vec::with_capacity(ch * cw);
    for y in y0..y0 + ch {
        let sy = if p.flip_v { h - 1 - y } else { y };
        for x in x0..x0 + cw {
            let sx = if p.flip_h { w - 1 - x } else { x };
            out.push(plane[sy * w + sx]);
        }
    }
    (ch, cw, out)
}

/// Applies rotation, then flips, then the crop. The image is resampled
/// bilinearly and the mask by nearest neighbour, so it stays binary.
pub fn transform(sample: &Sample, p: &AugmentParams) -> Result<Sample> {
    let (h, w) = (sample.height(), sample.width());
    let rotate = p.angle_deg != 0.0;
    let (rh, rw) = if rotate { interior_rect(h, w, p.angle_deg) } else { (h, w) };
    if let Some((y, x, ch, cw)) = p.crop {
        if y + ch > rh || x + cw > rw {
            return Err(Error::Size(format!("crop window {ch}x{cw} at ({y}, {x}) exceeds the {rh}x{rw} interior")));
        }
    }
    let mut channels = Vec::with_capacity(3);
    let mut out_hw = (0, 0);
    for c in 0..3 {
        let src = sample.image.plane(0, c);
        let rotated;
        let plane = if rotate {
            rotated = rotate_bilinear(src, h, w, p.angle_deg).2;
            &rotated[..]
        } else {
            src
        };
        let (oh, ow, v) = flip_crop(plane, rh, rw, p);
        out_hw = (oh, ow);
        channels.extend(v);
    }
    let rotated;
    let mask_plane = if rotate {
        rotated = rotate_nearest(sample.mask.data(), h, w, p.angle_deg).2;
        &rotated[..]
    } else {
        sample.mask.data()
    };
    let (oh, ow, mask) = flip_crop(mask_plane, rh, rw, p);
    debug_assert_eq!((oh, ow), out_hw);
    Sample::new(
        Tensor4::from_vec(Shape4::new(1, 3, oh, ow), channels)?,
        GroundTruth::new(Shape4::new(1, 1, oh, ow), mask)?,
    )
}

/// One random draw of the pipeline.
pub fn augment(sample: &Sample, config: &AugmentConfig, rng: &mut impl Rng) -> Result<Sample> {
    let p = draw_params(config, sample.height(), sample.width(), rng)?;
    transform(sample, &p)
}

/// Independent stream for copy `copy` of source `source`.
pub fn draw_rng(seed: u64, source: usize, copy: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(source as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(copy as u64).to_le_bytes());
    key[24..].copy_from_slice(b"augment\0");
    ChaCha8Rng::from_seed(key)
}

pub fn augment_indexed(sample: &Sample, config: &AugmentConfig, seed: u64, source: usize, copy: usize) -> Result<Sample> {
    augment(sample, config, &mut draw_rng(seed, source, copy))
}

/// `(source, copy)` pairs of a full expansion, source-major.
pub fn expansion_plan(sources: usize, factor: usize) -> Vec<(usize, usize)> {
    (0..sources).flat_map(|s| (0..factor).map(move |c| (s, c))).collect()
}

/// Expands every source `config.factor` times, in plan order.
pub fn expand(sources: &[Sample], config: &AugmentConfig, seed: u64) -> Result<Vec<Sample>> {
    expansion_plan(sources.len(), config.factor)
        .into_par_iter()
        .map(|(s, c)| augment_indexed(&sources[s], config, seed, s, c))
        .collect()
}
