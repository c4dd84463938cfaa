//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::nn::{Gradients, Network};
use crate::tensor::Tensor;

/// Optimizer state for one network: step count plus first/second moment
/// tensors mirroring every parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<Tensor>>,
    v: Vec<Vec<Tensor>>,
}

impl Adam {
    /// The training-recipe defaults: lr 0.0002, momentum (beta1) 0.5,
    /// beta2 0.999, eps 1e-8.
    pub fn dcgan(net: &Network) -> Adam {
        Adam::new(net, 0.0002, 0.5, 0.999, 1e-8)
    }

    pub fn new(net: &Network, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Adam {
        let zeros = |net: &Network| -> Vec<Vec<Tensor>> {
            net.layers()
                .iter()
                .map(|l| {
                    l.params
                        .iter()
                        .map(|p| Tensor::zeros(p.shape().to_vec()))
                        .collect()
                })
                .collect()
        };
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(net),
            v: zeros(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: standard Adam recurrence with bias correction, applied
    /// in place to the network's parameters.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.per_layer.len() != self.m.len() {
            return Err(Error::InvalidConfig(
                "adam: gradient layout does not match optimizer state".into(),
            ));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            for (pi, param) in layer.params.iter_mut().enumerate() {
                let g = &grads.per_layer[li][pi];
                if g.shape() != param.shape() {
                    return Err(Error::ShapeMismatch {
                        context: "adam gradient",
                        expected: param.shape().to_vec(),
                        actual: g.shape().to_vec(),
                    });
                }
                let m = self.m[li][pi].values_mut();
                let v = self.v[li][pi].values_mut();
                let p = param.values_mut();
                for i in 0..p.len() {
                    let gi = g.values()[i];
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}
