use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// Stacks `b`'s channels after `a`'s.
pub fn concat_channels<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::Shape(format!("cannot concatenate {sa} with {sb}")));
    }
    let out = Shape4::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let (la, lb) = (sa.c * sa.plane(), sb.c * sb.plane());
    let mut data = Vec::with_capacity(out.len());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * la..(n + 1) * la]);
        data.extend_from_slice(&b.data()[n * lb..(n + 1) * lb]);
    }
    Tensor4::from_vec(out, data)
}

/// Inverse of [`concat_channels`]; also its backward pass.
pub fn split_channels<T: Scalar>(t: &Tensor4<T>, first: usize) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let c = t.shape().c;
    Ok((t.slice_channels(0, first)?, t.slice_channels(first, c)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_channel_order() {
        let a = Tensor4::from_fn(Shape4::new(1, 2, 4, 4), |_, c, y, x| (c * 100 + y * 4 + x) as f64);
        let b = Tensor4::from_fn(Shape4::new(1, 3, 4, 4), |_, c, y, x| -((c * 100 + y * 4 + x) as f64));
        let cat = concat_channels(&a, &b).unwrap();
        assert_eq!(cat.shape(), Shape4::new(1, 5, 4, 4));
        assert_eq!(cat.plane(0, 0), a.plane(0, 0));
        assert_eq!(cat.plane(0, 2), b.plane(0, 0));
        let (ga, gb) = split_channels(&cat, 2).unwrap();
        assert_eq!(ga, a);
        assert_eq!(gb, b);
    }

    #[test]
    fn spatial_mismatch_is_rejected() {
        let a = Tensor4::<f32>::zeros(Shape4::new(1, 1, 4, 4));
        let b = Tensor4::<f32>::zeros(Shape4::new(1, 1, 4, 2));
        assert!(matches!(concat_channels(&a, &b), Err(Error::Shape(_))));
    }
}
