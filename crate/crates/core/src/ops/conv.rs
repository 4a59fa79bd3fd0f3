use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// Weights `(out_c, in_c, kh, kw)` and one bias per output channel.
///
/// Shared by ordinary and transposed convolutions.
#[derive(Clone, PartialEq, Debug)]
pub struct ConvParams<T> {
    pub weights: Tensor4<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weights: Tensor4<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.shape().n {
            return Err(Error::Shape(format!(
                "{} biases for {} output channels",
                bias.len(),
                weights.shape().n
            )));
        }
        Ok(ConvParams { weights, bias })
    }

    pub fn zeros(out_c: usize, in_c: usize, kh: usize, kw: usize) -> Self {
        ConvParams {
            weights: Tensor4::zeros(Shape4::new(out_c, in_c, kh, kw)),
            bias: vec![T::zero(); out_c],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape().c
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape().h, self.weights.shape().w)
    }

    pub fn num_values(&self) -> usize {
        self.weights.shape().len() + self.bias.len()
    }

    pub fn zeroed_like(&self) -> Self {
        ConvParams {
            weights: Tensor4::zeros(self.weights.shape()),
            bias: vec![T::zero(); self.bias.len()],
        }
    }

    /// Flat view index `i` over weights followed by biases.
    pub fn value(&self, i: usize) -> T {
        let nw = self.weights.shape().len();
        if i < nw {
            self.weights.data()[i]
        } else {
            self.bias[i - nw]
        }
    }

    pub fn value_mut(&mut self, i: usize) -> &mut T {
        let nw = self.weights.shape().len();
        if i < nw {
            &mut self.weights.data_mut()[i]
        } else {
            &mut self.bias[i - nw]
        }
    }
}

/// Padding that keeps the spatial size for an odd kernel at stride 1.
pub fn same_padding(kernel: usize) -> usize {
    (kernel - 1) / 2
}

fn out_extent(len: usize, kernel: usize, padding: usize) -> Result<usize> {
    (len + 2 * padding)
        .checked_sub(kernel)
        .map(|v| v + 1)
        .ok_or_else(|| Error::Shape(format!("kernel {kernel} larger than padded extent {len}+2*{padding}")))
}

/// Output rows `y` for which `y + d - padding` lands inside `0..len`.
#[inline]
fn valid_range(out_len: usize, len: usize, d: usize, padding: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(d);
    let hi = (len + padding).saturating_sub(d).min(out_len);
    (lo, hi.max(lo))
}

fn check_conv(input: &Tensor4<impl Scalar>, params: &ConvParams<impl Scalar>) -> Result<()> {
    input.shape().require_positive("conv2d input")?;
    params.weights.shape().require_positive("conv2d weights")?;
    if input.shape().c != params.in_channels() {
        return Err(Error::Shape(format!(
            "conv2d: input has {} channels, kernel expects {}",
            input.shape().c,
            params.in_channels()
        )));
    }
    if params.bias.len() != params.out_channels() {
        return Err(Error::Shape("conv2d: bias length differs from output channels".into()));
    }
    Ok(())
}

/// Stride-1 cross-correlation with zero padding.
pub fn conv2d<T: Scalar>(input: &Tensor4<T>, params: &ConvParams<T>, padding: usize) -> Result<Tensor4<T>> {
    check_conv(input, params)?;
    let s = input.shape();
    let (kh, kw) = params.kernel();
    let (ho, wo) = (out_extent(s.h, kh, padding)?, out_extent(s.w, kw, padding)?);
    let oc = params.out_channels();
    let out_shape = Shape4::new(s.n, oc, ho, wo);
    let mut out = Tensor4::zeros(out_shape);
    out.data_mut()
        .par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(plane_idx, out_plane)| {
            let (n, o) = (plane_idx / oc, plane_idx % oc);
            let mut acc = vec![params.bias[o].acc(); ho * wo];
            for i in 0..s.c {
                let src = input.plane(n, i);
                for dy in 0..kh {
                    let (y0, y1) = valid_range(ho, s.h, dy, padding);
                    for dx in 0..kw {
                        let wv = params.weights.get(o, i, dy, dx).acc();
                        if wv == 0.0 {
                            continue;
                        }
                        let (x0, x1) = valid_range(wo, s.w, dx, padding);
                        for y in y0..y1 {
                            let sy = y + dy - padding;
                            let src_row = &src[sy * s.w + x0 + dx - padding..sy * s.w + x1 + dx - padding];
                            let acc_row = &mut acc[y * wo + x0..y * wo + x1];
                            for (a, &v) in acc_row.iter_mut().zip(src_row) {
                                *a += wv * v.acc();
                            }
                        }
                    }
                }
            }
            for (o, a) in out_plane.iter_mut().zip(acc) {
                *o = T::from_acc(a);
            }
        });
    Ok(out)
}

/// Reverse mode of [`conv2d`]: returns the gradient with respect to the input
/// and the parameter gradients (same layout as `params`).
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    params: &ConvParams<T>,
    padding: usize,
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, ConvParams<T>)> {
    check_conv(input, params)?;
    let s = input.shape();
    let (kh, kw) = params.kernel();
    let (ho, wo) = (out_extent(s.h, kh, padding)?, out_extent(s.w, kw, padding)?);
    let oc = params.out_channels();
    let expected = Shape4::new(s.n, oc, ho, wo);
    if grad_out.shape() != expected {
        return Err(Error::Shape(format!(
            "conv2d backward: gradient {} does not match output {expected}",
            grad_out.shape()
        )));
    }

    let mut grad_in = Tensor4::zeros(s);
    grad_in
        .data_mut()
        .par_chunks_mut(s.plane())
        .enumerate()
        .for_each(|(plane_idx, gin_plane)| {
            let (n, i) = (plane_idx / s.c, plane_idx % s.c);
            let mut acc = vec![0.0f64; s.plane()];
            for o in 0..oc {
                let g = grad_out.plane(n, o);
                for dy in 0..kh {
                    let (y0, y1) = valid_range(ho, s.h, dy, padding);
                    for dx in 0..kw {
                        let wv = params.weights.get(o, i, dy, dx).acc();
                        if wv == 0.0 {
                            continue;
                        }
                        let (x0, x1) = valid_range(wo, s.w, dx, padding);
                        for y in y0..y1 {
                            let sy = y + dy - padding;
                            let dst = &mut acc[sy * s.w + x0 + dx - padding..sy * s.w + x1 + dx - padding];
                            for (d, &gv) in dst.iter_mut().zip(&g[y * wo + x0..y * wo + x1]) {
                                *d += wv * gv.acc();
                            }
                        }
                    }
                }
            }
            for (d, a) in gin_plane.iter_mut().zip(acc) {
                *d = T::from_acc(a);
            }
        });

    let per_out = s.c * kh * kw;
    let mut grad_w = Tensor4::zeros(params.weights.shape());
    grad_w
        .data_mut()
        .par_chunks_mut(per_out)
        .enumerate()
        .for_each(|(o, gw)| {
            for i in 0..s.c {
                for dy in 0..kh {
                    let (y0, y1) = valid_range(ho, s.h, dy, padding);
                    for dx in 0..kw {
                        let (x0, x1) = valid_range(wo, s.w, dx, padding);
                        let mut acc = 0.0f64;
                        for n in 0..s.n {
                            let src = input.plane(n, i);
                            let g = grad_out.plane(n, o);
                            for y in y0..y1 {
                                let sy = y + dy - padding;
                                let src_row = &src[sy * s.w + x0 + dx - padding..sy * s.w + x1 + dx - padding];
                                for (&v, &gv) in src_row.iter().zip(&g[y * wo + x0..y * wo + x1]) {
                                    acc += v.acc() * gv.acc();
                                }
                            }
                        }
                        gw[(i * kh + dy) * kw + dx] = T::from_acc(acc);
                    }
                }
            }
        });

    let grad_b = (0..oc)
        .map(|o| {
            let acc: f64 = (0..s.n)
                .flat_map(|n| grad_out.plane(n, o).iter())
                .map(|v| v.acc())
                .sum();
            T::from_acc(acc)
        })
        .collect();

    Ok((grad_in, ConvParams { weights: grad_w, bias: grad_b }))
}
