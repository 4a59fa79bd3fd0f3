use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// Argmax positions recorded by [`maxpool2x2`].
///
/// One entry per pooled cell, holding the flat `y * src_w + x` offset of the
/// selected element inside the pre-pool plane.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PoolIndices {
    shape: Shape4,
    src_h: usize,
    src_w: usize,
    idx: Vec<u32>,
}

impl PoolIndices {
    /// Wraps raw indices without validation; [`max_unpool2x2`] validates.
    pub fn from_raw(shape: Shape4, src_h: usize, src_w: usize, idx: Vec<u32>) -> Result<Self> {
        if idx.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} pool indices for pooled shape {shape}",
                idx.len()
            )));
        }
        Ok(PoolIndices { shape, src_h, src_w, idx })
    }

    /// Shape of the pooled tensor these indices belong to.
    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn source_shape(&self) -> Shape4 {
        Shape4::new(self.shape.n, self.shape.c, self.src_h, self.src_w)
    }

    pub fn raw(&self) -> &[u32] {
        &self.idx
    }

    /// Checks that every index lies inside its own 2x2 source window.
    pub fn validate(&self) -> Result<()> {
        if self.src_h != 2 * self.shape.h || self.src_w != 2 * self.shape.w {
            return Err(Error::Corruption(format!(
                "source plane {}x{} is not twice pooled plane {}x{}",
                self.src_h, self.src_w, self.shape.h, self.shape.w
            )));
        }
        let (ph, pw) = (self.shape.h, self.shape.w);
        for (k, &flat) in self.idx.iter().enumerate() {
            let cell = k % (ph * pw);
            let (py, px) = (cell / pw, cell % pw);
            let flat = flat as usize;
            let (sy, sx) = (flat / self.src_w, flat % self.src_w);
            if flat >= self.src_h * self.src_w || sy / 2 != py || sx / 2 != px {
                return Err(Error::Corruption(format!(
                    "index {flat} of pooled cell ({py}, {px}) is outside its 2x2 window in a {}x{} plane",
                    self.src_h, self.src_w
                )));
            }
        }
        Ok(())
    }
}

/// Non-overlapping 2x2 max pooling. Ties resolve to the first maximum in
/// row-major window order.
pub fn maxpool2x2<T: Scalar>(input: &Tensor4<T>) -> Result<(Tensor4<T>, PoolIndices)> {
    let s = input.shape();
    s.require_positive("maxpool2x2 input")?;
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::Shape(format!("maxpool2x2 needs even height and width, got {s}")));
    }
    let out_shape = Shape4::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut idx = Vec::with_capacity(out_shape.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = input.plane(n, c);
            for py in 0..out_shape.h {
                for px in 0..out_shape.w {
                    let mut best = (2 * py) * s.w + 2 * px;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let j = (2 * py + dy) * s.w + 2 * px + dx;
                        if plane[j] > plane[best] {
                            best = j;
                        }
                    }
                    out.push(plane[best]);
                    idx.push(best as u32);
                }
            }
        }
    }
    Ok((
        Tensor4::from_vec(out_shape, out)?,
        PoolIndices {
            shape: out_shape,
            src_h: s.h,
            src_w: s.w,
            idx,
        },
    ))
}

/// Routes each pooled-cell gradient back to its recorded argmax.
pub fn maxpool2x2_backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    if grad_out.shape() != indices.shape {
        return Err(Error::Shape(format!(
            "maxpool backward: gradient {} vs pooled {}",
            grad_out.shape(),
            indices.shape
        )));
    }
    scatter(grad_out, indices)
}

fn scatter<T: Scalar>(values: &Tensor4<T>, indices: &PoolIndices) -> Result<Tensor4<T>> {
    let src = indices.source_shape();
    let pooled = indices.shape.plane();
    let mut out = Tensor4::zeros(src);
    for n in 0..src.n {
        for c in 0..src.c {
            let vals = values.plane(n, c);
            let base = (n * src.c + c) * pooled;
            let ids = &indices.idx[base..base + pooled];
            let dst = out.plane_mut(n, c);
            for (&i, &v) in ids.iter().zip(vals) {
                dst[i as usize] += v;
            }
        }
    }
    Ok(out)
}

/// Places each input value at its recorded position in a zero tensor of
/// `out_shape`.
pub fn max_unpool2x2<T: Scalar>(
    input: &Tensor4<T>,
    indices: &PoolIndices,
    out_shape: Shape4,
) -> Result<Tensor4<T>> {
    if input.shape() != indices.shape {
        return Err(Error::Shape(format!(
            "max_unpool2x2: input {} does not match indices {}",
            input.shape(),
            indices.shape
        )));
    }
    let s = input.shape();
    if out_shape.n != s.n || out_shape.c != s.c || out_shape.h != 2 * s.h || out_shape.w != 2 * s.w {
        return Err(Error::Shape(format!(
            "max_unpool2x2: output {out_shape} is not the 2x upsampling of {s}"
        )));
    }
    if indices.source_shape() != out_shape {
        return Err(Error::Corruption(format!(
            "indices were recorded on {} but unpooling into {out_shape}",
            indices.source_shape()
        )));
    }
    indices.validate()?;
    scatter(input, indices)
}

/// Gathers the output gradient at the recorded positions.
pub fn max_unpool2x2_backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    if grad_out.shape() != indices.source_shape() {
        return Err(Error::Shape(format!(
            "max_unpool backward: gradient {} vs unpooled {}",
            grad_out.shape(),
            indices.source_shape()
        )));
    }
    let s = indices.shape;
    let mut out = Tensor4::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * s.plane();
            let g = grad_out.plane(n, c);
            let ids = &indices.idx[base..base + s.plane()];
            for (d, &i) in out.plane_mut(n, c).iter_mut().zip(ids) {
                *d = g[i as usize];
            }
        }
    }
    Ok(out)
}
