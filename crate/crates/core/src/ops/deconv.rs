use rayon::prelude::*;

use super::conv::ConvParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// Upsampling factors accepted by [`deconv`].
pub const SUPPORTED_FACTORS: [usize; 5] = [1, 2, 4, 8, 16];

/// Cells cropped from the leading border of the full transposed-convolution
/// output. The trailing border is cropped by whatever remains past `factor * len`.
pub fn deconv_padding(factor: usize) -> usize {
    factor / 2
}

fn check(input: &Tensor4<impl Scalar>, params: &ConvParams<impl Scalar>, factor: usize) -> Result<()> {
    if !SUPPORTED_FACTORS.contains(&factor) {
        return Err(Error::Config(format!(
            "deconv factor {factor} unsupported (expected one of {SUPPORTED_FACTORS:?})"
        )));
    }
    input.shape().require_positive("deconv input")?;
    let (kh, kw) = params.kernel();
    if kh != 2 * factor || kw != 2 * factor {
        return Err(Error::Shape(format!(
            "deconv factor {factor} needs a {k}x{k} kernel, got {kh}x{kw}",
            k = 2 * factor
        )));
    }
    if input.shape().c != params.in_channels() {
        return Err(Error::Shape(format!(
            "deconv: input has {} channels, kernel expects {}",
            input.shape().c,
            params.in_channels()
        )));
    }
    Ok(())
}

/// Output positions `y * factor + t - pad` inside `0..out_len`, as the
/// tap range `t0..t1` for input row `y`.
#[inline]
fn taps(y: usize, factor: usize, pad: usize, k: usize, out_len: usize) -> (usize, usize) {
    let origin = y * factor;
    let t0 = pad.saturating_sub(origin);
    let t1 = (out_len + pad).saturating_sub(origin).min(k);
    (t0, t1.max(t0))
}

/// Transposed convolution with kernel `2 * factor`, stride `factor`, cropped
/// so the output is exactly `factor` times the input in each spatial axis.
///
/// Weights use the same `(out_c, in_c, kh, kw)` layout as [`super::conv2d`].
pub fn deconv<T: Scalar>(input: &Tensor4<T>, params: &ConvParams<T>, factor: usize) -> Result<Tensor4<T>> {
    check(input, params, factor)?;
    let s = input.shape();
    let k = 2 * factor;
    let pad = deconv_padding(factor);
    let (ho, wo) = (s.h * factor, s.w * factor);
    let oc = params.out_channels();
    let mut out = Tensor4::zeros(Shape4::new(s.n, oc, ho, wo));
    out.data_mut()
        .par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(plane_idx, out_plane)| {
            let (n, o) = (plane_idx / oc, plane_idx % oc);
            let mut acc = vec![params.bias[o].acc(); ho * wo];
            for i in 0..s.c {
                let src = input.plane(n, i);
                let kern = &params.weights.data()[(o * s.c + i) * k * k..(o * s.c + i + 1) * k * k];
                for y in 0..s.h {
                    let (t0, t1) = taps(y, factor, pad, k, ho);
                    for x in 0..s.w {
                        let v = src[y * s.w + x].acc();
                        if v == 0.0 {
                            continue;
                        }
                        let (u0, u1) = taps(x, factor, pad, k, wo);
                        for t in t0..t1 {
                            let oy = y * factor + t - pad;
                            let row = &mut acc[oy * wo + x * factor + u0 - pad..oy * wo + x * factor + u1 - pad];
                            for (a, &kv) in row.iter_mut().zip(&kern[t * k + u0..t * k + u1]) {
                                *a += v * kv.acc();
                            }
                        }
                    }
                }
            }
            for (d, a) in out_plane.iter_mut().zip(acc) {
                *d = T::from_acc(a);
            }
        });
    Ok(out)
}

/// Reverse mode of [`deconv`].
pub fn deconv_backward<T: Scalar>(
    input: &Tensor4<T>,
    params: &ConvParams<T>,
    factor: usize,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, ConvParams<T>)> {
    check(input, params, factor)?;
    let s = input.shape();
    let k = 2 * factor;
    let pad = deconv_padding(factor);
    let (ho, wo) = (s.h * factor, s.w * factor);
    let oc = params.out_channels();
    let expected = Shape4::new(s.n, oc, ho, wo);
    if grad_out.shape() != expected {
        return Err(Error::Shape(format!(
            "deconv backward: gradient {} does not match output {expected}",
            grad_out.shape()
        )));
    }

    // d input(n,i,y,x) = sum over o and taps of g(n,o,Y,X) * w(o,i,t,u)
    let mut grad_in = Tensor4::zeros(s);
    grad_in
        .data_mut()
        .par_chunks_mut(s.plane())
        .enumerate()
        .for_each(|(plane_idx, gin)| {
            let (n, i) = (plane_idx / s.c, plane_idx % s.c);
            for y in 0..s.h {
                let (t0, t1) = taps(y, factor, pad, k, ho);
                for x in 0..s.w {
                    let (u0, u1) = taps(x, factor, pad, k, wo);
                    let mut acc = 0.0f64;
                    for o in 0..oc {
                        let g = grad_out.plane(n, o);
                        let kern = &params.weights.data()[(o * s.c + i) * k * k..(o * s.c + i + 1) * k * k];
                        for t in t0..t1 {
                            let oy = y * factor + t - pad;
                            let row = &g[oy * wo + x * factor + u0 - pad..oy * wo + x * factor + u1 - pad];
                            for (&gv, &kv) in row.iter().zip(&kern[t * k + u0..t * k + u1]) {
                                acc += gv.acc() * kv.acc();
                            }
                        }
                    }
                    gin[y * s.w + x] = T::from_acc(acc);
                }
            }
        });

    let mut grad_w = Tensor4::zeros(params.weights.shape());
    grad_w
        .data_mut()
        .par_chunks_mut(k * k)
        .enumerate()
        .for_each(|(pair, gw)| {
            let (o, i) = (pair / s.c, pair % s.c);
            let mut acc = vec![0.0f64; k * k];
            for n in 0..s.n {
                let src = input.plane(n, i);
                let g = grad_out.plane(n, o);
                for y in 0..s.h {
                    let (t0, t1) = taps(y, factor, pad, k, ho);
                    for x in 0..s.w {
                        let v = src[y * s.w + x].acc();
                        let (u0, u1) = taps(x, factor, pad, k, wo);
                        for t in t0..t1 {
                            let oy = y * factor + t - pad;
                            let row = &g[oy * wo + x * factor + u0 - pad..oy * wo + x * factor + u1 - pad];
                            for (a, &gv) in acc[t * k + u0..t * k + u1].iter_mut().zip(row) {
                                *a += v * gv.acc();
                            }
                        }
                    }
                }
            }
            for (d, a) in gw.iter_mut().zip(acc) {
                *d = T::from_acc(a);
            }
        });

    let grad_b = (0..oc)
        .map(|o| T::from_acc((0..s.n).flat_map(|n| grad_out.plane(n, o).iter()).map(|v| v.acc()).sum()))
        .collect();

    Ok((grad_in, ConvParams { weights: grad_w, bias: grad_b }))
}
