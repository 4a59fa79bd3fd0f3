use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::ConvParams;
use crate::scalar::Scalar;

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-5,
            momentum: 0.9,
            weight_decay: 0.0005,
        }
    }
}

/// Hyperparameters plus one velocity buffer per parameter tensor.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    velocity: Vec<ConvParams<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: OptimizerConfig, params: &[ConvParams<T>]) -> Self {
        OptimizerState {
            config,
            velocity: params.iter().map(ConvParams::zeroed_like).collect(),
        }
    }

    pub fn velocity(&self) -> &[ConvParams<T>] {
        &self.velocity
    }
}

/// Classical momentum SGD with L2 weight decay folded into the gradient:
///
/// `g' = g + wd*w;  v = momentum*v + g';  w = w - lr*v`
pub fn sgd_step<T: Scalar>(params: &mut [ConvParams<T>], grads: &[ConvParams<T>], state: &mut OptimizerState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Shape(format!(
            "sgd_step: {} parameter tensors, {} gradients, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    let OptimizerConfig {
        learning_rate: lr,
        momentum,
        weight_decay: wd,
    } = state.config;
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        if p.weights.shape() != g.weights.shape() || p.bias.len() != g.bias.len() || p.weights.shape() != v.weights.shape() {
            return Err(Error::Shape("sgd_step: gradient or velocity shape differs from parameter".into()));
        }
        let update = |w: &mut T, g: T, v: &mut T| {
            let gw = g.acc() + wd * w.acc();
            let nv = momentum * v.acc() + gw;
            *v = T::from_acc(nv);
            *w = T::from_acc(w.acc() - lr * nv);
        };
        for ((w, &gv), vv) in p.weights.data_mut().iter_mut().zip(g.weights.data()).zip(v.weights.data_mut()) {
            update(w, gv, vv);
        }
        for ((w, &gv), vv) in p.bias.iter_mut().zip(&g.bias).zip(v.bias.iter_mut()) {
            update(w, gv, vv);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape4, Tensor4};

    fn scalar_param(v: f64) -> Vec<ConvParams<f64>> {
        vec![ConvParams::new(Tensor4::full(Shape4::new(1, 1, 1, 1), v), vec![0.0]).unwrap()]
    }

    #[test]
    fn vanilla_descent() {
        let mut p = scalar_param(2.0);
        let g = scalar_param(0.5);
        let cfg = OptimizerConfig { learning_rate: 0.1, momentum: 0.0, weight_decay: 0.0 };
        let mut st = OptimizerState::new(cfg, &p);
        sgd_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p[0].weights.data()[0], 2.0 - 0.1 * 0.5);
    }

    #[test]
    fn momentum_hand_iteration() {
        let mut p = scalar_param(1.0);
        let g = scalar_param(1.0);
        let cfg = OptimizerConfig { learning_rate: 0.1, momentum: 0.9, weight_decay: 0.0 };
        let mut st = OptimizerState::new(cfg, &p);
        sgd_step(&mut p, &g, &mut st).unwrap();
        assert!((st.velocity()[0].weights.data()[0] - 1.0).abs() < 1e-15);
        assert!((p[0].weights.data()[0] - 0.9).abs() < 1e-15);
        sgd_step(&mut p, &g, &mut st).unwrap();
        assert!((st.velocity()[0].weights.data()[0] - 1.9).abs() < 1e-15);
        assert!((p[0].weights.data()[0] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn decay_only_step() {
        let mut p = scalar_param(1.0);
        let g = scalar_param(0.0);
        let mut st = OptimizerState::new(OptimizerConfig::default(), &p);
        sgd_step(&mut p, &g, &mut st).unwrap();
        assert!((p[0].weights.data()[0] - (1.0 - 5e-9)).abs() < 1e-18);
    }

    #[test]
    fn zero_learning_rate_is_bit_exact_noop() {
        let mut p = vec![ConvParams::new(
            Tensor4::from_vec(Shape4::new(2, 1, 1, 2), vec![0.1f32, -3.7, 1e-7, 12345.678]).unwrap(),
            vec![0.3, -0.9],
        )
        .unwrap()];
        let before = p.clone();
        let g = vec![ConvParams::new(Tensor4::full(Shape4::new(2, 1, 1, 2), 7.5f32), vec![1.0, -1.0]).unwrap()];
        let cfg = OptimizerConfig { learning_rate: 0.0, ..Default::default() };
        let mut st = OptimizerState::new(cfg, &p);
        sgd_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p, before);
    }
}
