use rand::Rng;

use super::loss::{image_loss_with_grad, pixel_bce, GroundTruth};
use crate::error::Result;
use crate::net::{Network, ParamRef, SideOutputs};
use crate::tensor::Tensor4;

/// Below this magnitude on both sides the absolute difference is used.
const ABSOLUTE_FLOOR: f64 = 1e-8;

/// `|a - n| / max(|a|, |n|)`, or `|a - n|` when both are below 1e-8.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < ABSOLUTE_FLOOR {
        diff
    } else {
        diff / scale
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst: Option<ParamRef>,
    pub checked: usize,
    /// `(param, analytic, numeric)` for every checked parameter.
    pub entries: Vec<(ParamRef, f64, f64)>,
}

fn pixel_losses(outputs: &SideOutputs<f64>, gt: &GroundTruth) -> Vec<f64> {
    outputs
        .maps()
        .flat_map(|m| m.data().iter().zip(gt.data()).map(|(&f, &y)| pixel_bce(f, y)))
        .collect()
}

/// Compares backpropagated loss gradients with central differences on a
/// uniformly drawn subset of parameters. The two perturbed losses are
/// differenced pixel by pixel before summing, which keeps the rounding error
/// of the large total out of the small difference.
pub fn grad_check<R: Rng + ?Sized>(
    net: &Network<f64>,
    image: &Tensor4<f64>,
    gt: &GroundTruth,
    sample_size: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let (outputs, cache) = net.forward(image)?;
    let (_, g) = image_loss_with_grad(&outputs, gt)?;
    let analytic = net.backward(&cache, &g)?.params;

    let refs = net.param_refs();
    let picks = rand::seq::index::sample(rng, refs.len(), sample_size.min(refs.len()));
    let chosen: Vec<ParamRef> = picks.into_iter().map(|i| refs[i]).collect();

    let mut probe = net.clone();
    let mut entries = Vec::with_capacity(chosen.len());
    for p in chosen {
        let orig = probe.param(p);
        *probe.param_mut(p) = orig + epsilon;
        let up = pixel_losses(&probe.forward(image)?.0, gt);
        *probe.param_mut(p) = orig - epsilon;
        let down = pixel_losses(&probe.forward(image)?.0, gt);
        *probe.param_mut(p) = orig;
        let diff: f64 = up.iter().zip(&down).map(|(u, d)| u - d).sum();
        entries.push((p, analytic.get(p), diff / (2.0 * epsilon)));
    }

    let (mut max_err, mut worst) = (0.0, None);
    for &(p, a, n) in &entries {
        let e = relative_error(a, n);
        if e > max_err || worst.is_none() {
            max_err = e;
            worst = Some(p);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: max_err,
        worst,
        checked: entries.len(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{conv2d, conv2d_backward, sigmoid, ConvParams};
    use crate::train::pixel_bce;
    use crate::tensor::Shape4;
    use crate::testutil::{central_difference, max_rel_error, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn absolute_fallback_for_vanishing_gradients() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(0.0, 5e-9), 5e-9);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
    }

    #[test]
    fn single_conv_sigmoid_bce() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = random_tensor(Shape4::new(1, 1, 4, 4), &mut rng);
        let p = ConvParams::new(random_tensor(Shape4::new(1, 1, 3, 3), &mut rng), vec![0.1]).unwrap();
        let labels: Vec<u8> = (0..16).map(|i| (i % 3 == 0) as u8).collect();
        let loss = |p: &ConvParams<f64>| -> f64 {
            let y = conv2d(&x, p, 1).unwrap();
            y.data().iter().zip(&labels).map(|(&f, &l)| pixel_bce(f, l)).sum()
        };
        let y = conv2d(&x, &p, 1).unwrap();
        let g = Tensor4::from_vec(
            y.shape(),
            y.data().iter().zip(&labels).map(|(&f, &l)| sigmoid(f) - l as f64).collect(),
        )
        .unwrap();
        let (_, gp) = conv2d_backward(&x, &p, 1, &g).unwrap();
        let fd = central_difference(p.weights.data(), 1e-5, |v| {
            let mut q = p.clone();
            q.weights.data_mut().copy_from_slice(v);
            loss(&q)
        });
        assert!(max_rel_error(gp.weights.data(), &fd) < 1e-6);
    }
}
