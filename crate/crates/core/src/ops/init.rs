use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::conv::ConvParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// Zero-mean normal weights with variance `2 / fan_in`, where
/// `fan_in = in_c * kh * kw` for a `(out_c, in_c, kh, kw)` weight shape.
pub fn he_normal_init<T: Scalar, R: Rng + ?Sized>(shape: Shape4, rng: &mut R) -> Result<Tensor4<T>> {
    let fan_in = shape.c * shape.h * shape.w;
    if fan_in == 0 {
        return Err(Error::Config(format!("He-normal init needs fan_in > 0, weight shape {shape}")));
    }
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
        .map_err(|e| Error::Config(format!("He-normal init: {e}")))?;
    let data = (0..shape.len()).map(|_| T::from_acc(normal.sample(rng))).collect();
    Tensor4::from_vec(shape, data)
}

/// One axis of the bilinear upsampling kernel of size `2 * factor`.
pub fn bilinear_profile(factor: usize) -> Vec<f64> {
    let f = factor as f64;
    let center = (2 * factor / 2) as f64 / f;
    (0..2 * factor)
        .map(|t| 1.0 - ((t as f64 + 0.5) / f - center).abs())
        .collect()
}

/// Bilinear deconvolution filler for `channels -> channels`.
///
/// Each channel maps to itself through the outer product of
/// [`bilinear_profile`]; cross-channel taps are zero. Factor 1 is the 2x2
/// delta kernel, an exact identity after cropping.
pub fn bilinear_kernel<T: Scalar>(channels: usize, factor: usize) -> ConvParams<T> {
    let factor = factor.max(1);
    let k = 2 * factor;
    let mut params = ConvParams::zeros(channels, channels, k, k);
    let profile = if factor == 1 {
        vec![1.0, 0.0]
    } else {
        bilinear_profile(factor)
    };
    for c in 0..channels {
        for t in 0..k {
            for u in 0..k {
                params.weights.set(c, c, t, u, T::from_acc(profile[t] * profile[u]));
            }
        }
    }
    params
}
