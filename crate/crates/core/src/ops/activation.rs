use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_map<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(sigmoid)
}

pub fn relu<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`]. `reference` may be either the ReLU input or its
/// output: both are positive at exactly the same cells. Zero passes no
/// gradient.
pub fn relu_backward<T: Scalar>(reference: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    if reference.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "relu backward: gradient {} vs activation {}",
            grad_out.shape(),
            reference.shape()
        )));
    }
    let data = reference
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&a, &g)| if a > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::from_vec(reference.shape(), data)
}
