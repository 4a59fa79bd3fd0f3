use crate::error::{Error, Result};
use crate::net::{BinaryMask, SideOutputs};
use crate::ops::sigmoid;
use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// Binary crack mask `(n, 1, h, w)`; 1 marks a crack pixel.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GroundTruth {
    shape: Shape4,
    data: Vec<u8>,
}

impl GroundTruth {
    pub fn new(shape: Shape4, data: Vec<u8>) -> Result<Self> {
        if shape.c != 1 {
            return Err(Error::Shape(format!("ground truth must have one channel, got {shape}")));
        }
        if data.len() != shape.len() {
            return Err(Error::Shape(format!("{} mask values for shape {shape}", data.len())));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Shape(format!("ground truth value {v} is not binary")));
        }
        Ok(GroundTruth { shape, data })
    }

    pub fn from_mask(mask: BinaryMask) -> Result<Self> {
        Self::new(mask.shape, mask.data)
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Stacks single-image masks along the batch axis.
    pub fn stack(items: &[&GroundTruth]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero masks".into()))?
            .shape;
        let mut data = Vec::with_capacity(first.len() * items.len());
        let mut n = 0;
        for g in items {
            if (g.shape.h, g.shape.w) != (first.h, first.w) {
                return Err(Error::Shape(format!("cannot stack masks {} and {first}", g.shape)));
            }
            n += g.shape.n;
            data.extend_from_slice(&g.data);
        }
        Self::new(Shape4::new(n, 1, first.h, first.w), data)
    }

    pub fn as_tensor<T: Scalar>(&self) -> Tensor4<T> {
        Tensor4::from_vec(self.shape, self.data.iter().map(|&v| T::from_acc(v as f64)).collect())
            .expect("shape already validated")
    }
}

/// Binary cross-entropy of one logit against a 0/1 label, evaluated as
/// `max(f, 0) - f*y + ln(1 + e^{-|f|})` so large logits neither overflow nor
/// lose the small tail.
#[inline]
pub fn pixel_bce<T: Scalar>(logit: T, label: u8) -> f64 {
    let f = logit.acc();
    let y = label as f64;
    f.max(0.0) - f * y + (-f.abs()).exp().ln_1p()
}

fn check_shapes<T: Scalar>(outputs: &SideOutputs<T>, gt: &GroundTruth) -> Result<()> {
    for m in outputs.maps() {
        if m.shape() != gt.shape {
            return Err(Error::Shape(format!(
                "output map {} does not match ground truth {}",
                m.shape(),
                gt.shape
            )));
        }
    }
    Ok(())
}

/// Unnormalized sum of pixel losses over every side map, the fused map, and
/// every image in the batch.
pub fn image_loss<T: Scalar>(outputs: &SideOutputs<T>, gt: &GroundTruth) -> Result<f64> {
    check_shapes(outputs, gt)?;
    Ok(outputs
        .maps()
        .map(|m| m.data().iter().zip(&gt.data).map(|(&f, &y)| pixel_bce(f, y)).sum::<f64>())
        .sum())
}

/// [`image_loss`] plus its gradient with respect to each map, which is
/// `sigmoid(f) - y` elementwise.
pub fn image_loss_with_grad<T: Scalar>(outputs: &SideOutputs<T>, gt: &GroundTruth) -> Result<(f64, SideOutputs<T>)> {
    let loss = image_loss(outputs, gt)?;
    let grad_of = |m: &Tensor4<T>| -> Tensor4<T> {
        let data = m
            .data()
            .iter()
            .zip(&gt.data)
            .map(|(&f, &y)| sigmoid(f) - T::from_acc(y as f64))
            .collect();
        Tensor4::from_vec(m.shape(), data).expect("same shape")
    };
    Ok((
        loss,
        SideOutputs {
            side: outputs.side.iter().map(grad_of).collect(),
            fused: grad_of(&outputs.fused),
        },
    ))
}
