//! Finite-difference helpers shared by unit tests.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{Shape4, Tensor4};

pub fn random_tensor<R: Rng>(shape: Shape4, rng: &mut R) -> Tensor4<f64> {
    Tensor4::from_fn(shape, |_, _, _, _| StandardNormal.sample(rng))
}

/// Central differences of `f` around `x`, one coordinate at a time.
pub fn central_difference(x: &[f64], eps: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut v = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + eps;
            let up = f(&v);
            v[i] = orig - eps;
            let down = f(&v);
            v[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| crate::train::relative_error(a, n))
        .fold(0.0, f64::max)
}
