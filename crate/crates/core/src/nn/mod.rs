//! Minimal sequential neural-network engine.
//!
//! Supports exactly what the codec's networks need: dense, conv2d,
//! deconv2d (transposed conv), relu/leaky-relu/tanh/sigmoid, and batch
//! norm, with reverse-mode gradients recorded on a per-forward tape and an
//! Adam optimizer. All activations flow as batched `[N, ...]` tensors in
//! 64-bit; parameters serialize as 32-bit through the container module.
//!
//! Conventions (DCGAN-style): conv/deconv kernel 4, stride 2, padding 1;
//! weights N(0, 0.02); biases zero; batch-norm epsilon 1e-5 with running
//! -stat momentum 0.9.

mod adam;
pub mod gradcheck;
mod layers;

pub use adam::Adam;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;
/// Running statistics update: new = MOMENTUM*old + (1-MOMENTUM)*batch.
pub const BN_MOMENTUM: f64 = 0.9;
/// DCGAN weight initialization sigma.
pub const INIT_SIGMA: f64 = 0.02;

/// Layer descriptor. Shapes below are per-sample (no batch dimension).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Flattens the input to `in_dim`, maps to `out_shape` via W x + b.
    Dense { in_dim: usize, out_shape: Vec<usize> },
    /// 2-D convolution over [C, H, W].
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    /// Transposed convolution (fractionally-strided), the upsampling dual.
    Deconv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    LeakyRelu { alpha: f64 },
    Tanh,
    Sigmoid,
    /// Per-channel normalization over (N, H, W) with learned scale/shift.
    BatchNorm { channels: usize },
}

impl LayerSpec {
    /// DCGAN-convention conv: kernel 4, stride 2, pad 1 (halves H and W).
    pub fn conv(in_ch: usize, out_ch: usize) -> LayerSpec {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel: 4,
            stride: 2,
            pad: 1,
        }
    }

    /// DCGAN-convention deconv: kernel 4, stride 2, pad 1 (doubles H and W).
    pub fn deconv(in_ch: usize, out_ch: usize) -> LayerSpec {
        LayerSpec::Deconv2d {
            in_ch,
            out_ch,
            kernel: 4,
            stride: 2,
            pad: 1,
        }
    }

    /// Output shape for a given per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let fail = |detail: String| Error::InvalidConfig(detail);
        match self {
            LayerSpec::Dense { in_dim, out_shape } => {
                let flat: usize = input.iter().product();
                if flat != *in_dim {
                    return Err(fail(format!(
                        "dense expects {in_dim} inputs, shape {input:?} has {flat}"
                    )));
                }
                Ok(out_shape.clone())
            }
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let [c, h, w] = three_d(input)?;
                if c != *in_ch {
                    return Err(fail(format!("conv2d expects {in_ch} channels, got {c}")));
                }
                if h + 2 * pad < *kernel || w + 2 * pad < *kernel {
                    return Err(fail(format!("conv2d kernel {kernel} exceeds padded input")));
                }
                let oh = (h + 2 * pad - kernel) / stride + 1;
                let ow = (w + 2 * pad - kernel) / stride + 1;
                Ok(vec![*out_ch, oh, ow])
            }
            LayerSpec::Deconv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let [c, h, w] = three_d(input)?;
                if c != *in_ch {
                    return Err(fail(format!("deconv2d expects {in_ch} channels, got {c}")));
                }
                let oh = (h - 1) * stride + kernel;
                let ow = (w - 1) * stride + kernel;
                if oh < 2 * pad || ow < 2 * pad {
                    return Err(fail("deconv2d output smaller than padding".into()));
                }
                Ok(vec![*out_ch, oh - 2 * pad, ow - 2 * pad])
            }
            LayerSpec::BatchNorm { channels } => {
                let [c, _, _] = three_d(input)?;
                if c != *channels {
                    return Err(fail(format!(
                        "batch_norm expects {channels} channels, got {c}"
                    )));
                }
                Ok(input.to_vec())
            }
            _ => Ok(input.to_vec()),
        }
    }

    /// Shapes of this layer's trainable parameters.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            LayerSpec::Dense { in_dim, out_shape } => {
                let out: usize = out_shape.iter().product();
                vec![vec![out, *in_dim], vec![out]]
            }
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![vec![*out_ch, *in_ch, *kernel, *kernel], vec![*out_ch]],
            LayerSpec::Deconv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![vec![*in_ch, *out_ch, *kernel, *kernel], vec![*out_ch]],
            LayerSpec::BatchNorm { channels } => vec![vec![*channels], vec![*channels]],
            _ => vec![],
        }
    }

    /// Shapes of non-trainable buffers (batch-norm running stats).
    pub fn buffer_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            LayerSpec::BatchNorm { channels } => vec![vec![*channels], vec![*channels]],
            _ => vec![],
        }
    }
}

fn three_d(shape: &[usize]) -> Result<[usize; 3]> {
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch {
            context: "spatial layer input",
            expected: vec![0, 0, 0],
            actual: shape.to_vec(),
        });
    }
    Ok([shape[0], shape[1], shape[2]])
}

/// Weight initialization families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// N(0, 0.02) weights, zero bias, batch-norm scale N(1, 0.02) — the
    /// DCGAN recipe; used for all trained networks.
    Dcgan,
    /// He/Kaiming normal, sigma = sqrt(2 / fan_in) — used for the fixed
    /// random feature extractor, whose activations must not vanish layer
    /// over layer.
    He,
}

/// One layer: spec, trainable parameters, and (for batch norm) running
/// statistics buffers `[mean, var]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<Tensor>,
    pub buffers: Vec<Tensor>,
}

/// Forward mode: training uses batch statistics in batch norm (updating the
/// running buffers); inference uses the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// An ordered layer stack with a declared per-sample input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
}

/// Per-layer context saved by a forward pass for the backward pass.
pub struct Tape {
    /// Input to each layer, batched.
    inputs: Vec<Tensor>,
    /// Batch-norm cache per layer when run in train mode.
    bn: Vec<Option<layers::BnCache>>,
    mode: Mode,
    output: Tensor,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Parameter gradients aligned with `Network::layers`, plus the gradient at
/// the network input.
pub struct Gradients {
    pub per_layer: Vec<Vec<Tensor>>,
    pub input_grad: Tensor,
}

impl Network {
    /// Builds and initializes a network. Verifies the specs compose over
    /// the declared input shape.
    pub fn init(specs: Vec<LayerSpec>, input_shape: Vec<usize>, seed: u64, init: Init) -> Result<Network> {
        if specs.is_empty() {
            return Err(Error::InvalidConfig("network needs >= 1 layer".into()));
        }
        let mut rng = SplitMix64::new(seed);
        let mut shape = input_shape.clone();
        let mut layers_v = Vec::with_capacity(specs.len());
        for spec in specs {
            shape = spec.output_shape(&shape)?;
            let mut params = Vec::new();
            for (i, pshape) in spec.param_shapes().into_iter().enumerate() {
                let n: usize = pshape.iter().product();
                let is_bias = i == 1;
                let values: Vec<f64> = match (&spec, is_bias, init) {
                    (_, true, _) => vec![0.0; n],
                    (LayerSpec::BatchNorm { .. }, false, _) => {
                        // Scale around 1, DCGAN convention.
                        (0..n).map(|_| 1.0 + INIT_SIGMA * rng.next_normal()).collect()
                    }
                    (_, false, Init::Dcgan) => {
                        (0..n).map(|_| INIT_SIGMA * rng.next_normal()).collect()
                    }
                    (_, false, Init::He) => {
                        let fan_in = match &spec {
                            LayerSpec::Dense { in_dim, .. } => *in_dim,
                            LayerSpec::Conv2d {
                                in_ch, kernel, ..
                            } => in_ch * kernel * kernel,
                            LayerSpec::Deconv2d {
                                in_ch, kernel, ..
                            } => in_ch * kernel * kernel,
                            _ => n,
                        };
                        let sigma = (2.0 / fan_in as f64).sqrt();
                        (0..n).map(|_| sigma * rng.next_normal()).collect()
                    }
                };
                params.push(Tensor::new(pshape, values)?);
            }
            let buffers = spec
                .buffer_shapes()
                .into_iter()
                .enumerate()
                .map(|(i, bshape)| {
                    let n: usize = bshape.iter().product();
                    // Running mean 0, running var 1.
                    let fill = if i == 0 { 0.0 } else { 1.0 };
                    Tensor::new(bshape, vec![fill; n]).unwrap()
                })
                .collect();
            layers_v.push(Layer {
                spec,
                params,
                buffers,
            });
        }
        Ok(Network {
            layers: layers_v,
            input_shape,
            output_shape: shape,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    /// Flat views over all trainable parameters, in declaration order.
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter()).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let shape = x.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(Error::ShapeMismatch {
                context: "network input",
                expected: self.input_shape.clone(),
                actual: shape.to_vec(),
            });
        }
        Ok(shape[0])
    }

    /// Forward pass recording a tape. Train mode updates batch-norm running
    /// statistics (hence `&mut self`).
    pub fn forward_tape(&mut self, x: &Tensor, mode: Mode) -> Result<Tape> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut bn = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in self.layers.iter_mut() {
            let (out, cache) = layers::forward(layer, &cur, mode)?;
            out.check_finite("layer output")?;
            inputs.push(cur);
            bn.push(cache);
            cur = out;
        }
        Ok(Tape {
            inputs,
            bn,
            mode,
            output: cur,
        })
    }

    /// Inference forward: eval mode, no tape, immutable.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        // Eval mode never mutates buffers, so the mutable path is not
        // needed; clone-free dispatch would complicate the kernels for no
        // measurable win at these sizes.
        for layer in self.layers.iter() {
            let (out, _) = layers::forward_immutable(layer, &cur, Mode::Eval)?;
            out.check_finite("layer output")?;
            cur = out;
        }
        Ok(cur)
    }

    /// Full backward pass from a gradient at the network output.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor) -> Result<Gradients> {
        self.backward_from(tape, grad_out, self.layers.len())
    }

    /// Backward from the input boundary of layer `upto` (i.e. `grad` is
    /// dLoss/d(input of layer `upto`)). `upto == len` means from the output.
    /// Layers at or above `upto` get zero parameter gradients.
    ///
    /// The boundary form exists so losses can inject gradients below an
    /// output nonlinearity — e.g. binary cross-entropy expressed at the
    /// logit of a final sigmoid layer, which is both cheaper and numerically
    /// safer than differentiating through the sigmoid itself.
    pub fn backward_from(&self, tape: &Tape, grad: &Tensor, upto: usize) -> Result<Gradients> {
        if upto > self.layers.len() || tape.inputs.len() != self.layers.len() {
            return Err(Error::InvalidConfig(
                "backward_from: tape/boundary mismatch".into(),
            ));
        }
        let expected = if upto == self.layers.len() {
            tape.output.shape().to_vec()
        } else {
            tape.inputs[upto].shape().to_vec()
        };
        if grad.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "backward seed gradient",
                expected,
                actual: grad.shape().to_vec(),
            });
        }
        let mut per_layer: Vec<Vec<Tensor>> = self
            .layers
            .iter()
            .map(|l| {
                l.spec
                    .param_shapes()
                    .into_iter()
                    .map(Tensor::zeros)
                    .collect()
            })
            .collect();
        let mut cur = grad.clone();
        for i in (0..upto).rev() {
            let layer = &self.layers[i];
            let (input_grad, param_grads) =
                layers::backward(layer, &tape.inputs[i], &tape.bn[i], &cur, tape.mode)?;
            per_layer[i] = param_grads;
            cur = input_grad;
        }
        Ok(Gradients {
            per_layer,
            input_grad: cur,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], values: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn dense_identity_passes_through() {
        let mut net = Network::init(
            vec![LayerSpec::Dense {
                in_dim: 3,
                out_shape: vec![3],
            }],
            vec![3],
            0,
            Init::Dcgan,
        )
        .unwrap();
        // Overwrite with identity weights.
        net.layers_mut()[0].params[0] =
            t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let y = net.forward(&t(&[1, 3], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn dense_hand_example() {
        // W=[[2,0],[0,3]], b=[1,-1], x=[1,1] -> [3,2]
        let mut net = Network::init(
            vec![LayerSpec::Dense {
                in_dim: 2,
                out_shape: vec![2],
            }],
            vec![2],
            0,
            Init::Dcgan,
        )
        .unwrap();
        net.layers_mut()[0].params[0] = t(&[2, 2], &[2.0, 0.0, 0.0, 3.0]);
        net.layers_mut()[0].params[1] = t(&[2], &[1.0, -1.0]);
        let y = net.forward(&t(&[1, 2], &[1.0, 1.0])).unwrap();
        assert_eq!(y.values(), &[3.0, 2.0]);
    }

    #[test]
    fn dense_weight_gradient_hand_example() {
        // y = Wx, loss = y0, x = [1, 0] -> dW = [[1,0],[0,0]]
        let mut net = Network::init(
            vec![LayerSpec::Dense {
                in_dim: 2,
                out_shape: vec![2],
            }],
            vec![2],
            0,
            Init::Dcgan,
        )
        .unwrap();
        net.layers_mut()[0].params[0] = t(&[2, 2], &[2.0, 5.0, -1.0, 4.0]);
        let tape = net
            .forward_tape(&t(&[1, 2], &[1.0, 0.0]), Mode::Train)
            .unwrap();
        let grads = net.backward(&tape, &t(&[1, 2], &[1.0, 0.0])).unwrap();
        assert_eq!(grads.per_layer[0][0].values(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(grads.per_layer[0][1].values(), &[1.0, 0.0]);
        // Input grad = W^T g = first row of W.
        assert_eq!(grads.input_grad.values(), &[2.0, 5.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut net = Network::init(
            vec![LayerSpec::Conv2d {
                in_ch: 1,
                out_ch: 1,
                kernel: 1,
                stride: 1,
                pad: 0,
            }],
            vec![1, 3, 3],
            0,
            Init::Dcgan,
        )
        .unwrap();
        net.layers_mut()[0].params[0] = t(&[1, 1, 1, 1], &[1.0]);
        let img: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let y = net.forward(&t(&[1, 1, 3, 3], &img)).unwrap();
        assert_eq!(y.values(), img.as_slice());
    }

    #[test]
    fn relu_and_tanh_gradients_at_known_points() {
        let mut net = Network::init(vec![LayerSpec::Relu], vec![1], 0, Init::Dcgan).unwrap();
        let tape = net.forward_tape(&t(&[1, 1], &[-0.5]), Mode::Train).unwrap();
        let g = net.backward(&tape, &t(&[1, 1], &[1.0])).unwrap();
        assert_eq!(g.input_grad.values(), &[0.0], "relu dead region");

        let mut net = Network::init(vec![LayerSpec::Tanh], vec![1], 0, Init::Dcgan).unwrap();
        let tape = net.forward_tape(&t(&[1, 1], &[0.0]), Mode::Train).unwrap();
        let g = net.backward(&tape, &t(&[1, 1], &[1.0])).unwrap();
        assert_eq!(g.input_grad.values(), &[1.0], "tanh'(0) = 1");
    }

    #[test]
    fn conv_dcgan_shapes_compose() {
        let net = Network::init(
            vec![
                LayerSpec::conv(1, 8),
                LayerSpec::LeakyRelu { alpha: 0.2 },
                LayerSpec::conv(8, 16),
                LayerSpec::BatchNorm { channels: 16 },
                LayerSpec::LeakyRelu { alpha: 0.2 },
                LayerSpec::Dense {
                    in_dim: 16 * 8 * 8,
                    out_shape: vec![1],
                },
                LayerSpec::Sigmoid,
            ],
            vec![1, 32, 32],
            3,
            Init::Dcgan,
        )
        .unwrap();
        assert_eq!(net.output_shape(), &[1]);
    }

    #[test]
    fn deconv_doubles_spatial_dims() {
        let net = Network::init(
            vec![LayerSpec::deconv(4, 2)],
            vec![4, 8, 8],
            1,
            Init::Dcgan,
        )
        .unwrap();
        assert_eq!(net.output_shape(), &[2, 16, 16]);
    }

    #[test]
    fn init_deterministic_and_seed_sensitive() {
        let specs = || vec![LayerSpec::conv(1, 4), LayerSpec::Relu];
        let a = Network::init(specs(), vec![1, 16, 16], 9, Init::Dcgan).unwrap();
        let b = Network::init(specs(), vec![1, 16, 16], 9, Init::Dcgan).unwrap();
        let c = Network::init(specs(), vec![1, 16, 16], 10, Init::Dcgan).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_weight_magnitudes_match_sigma() {
        // With sigma 0.02, essentially all weights are below 0.2 (10 sigma)
        // and the empirical sigma is near 0.02.
        let net = Network::init(
            vec![LayerSpec::Dense {
                in_dim: 200,
                out_shape: vec![200],
            }],
            vec![200],
            0,
            Init::Dcgan,
        )
        .unwrap();
        let w = net.layers()[0].params[0].values();
        assert!(w.iter().all(|v| v.abs() < 0.2));
        let var: f64 = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var.sqrt() - 0.02).abs() < 0.002);
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let net = Network::init(
            vec![LayerSpec::Relu],
            vec![2, 4, 4],
            0,
            Init::Dcgan,
        )
        .unwrap();
        assert!(net.forward(&Tensor::zeros(vec![1, 2, 4, 5])).is_err());
        assert!(net.forward(&Tensor::zeros(vec![2, 4, 4])).is_err());
    }

    #[test]
    fn incomposable_specs_rejected() {
        assert!(Network::init(
            vec![LayerSpec::conv(3, 8)],
            vec![1, 32, 32],
            0,
            Init::Dcgan
        )
        .is_err());
        assert!(Network::init(
            vec![LayerSpec::Dense {
                in_dim: 10,
                out_shape: vec![4]
            }],
            vec![11],
            0,
            Init::Dcgan
        )
        .is_err());
    }

    #[test]
    fn batch_norm_train_normalizes_batch() {
        // High-variance input so the normalized batch sits well inside the
        // epsilon floor: |mean| <= 1e-6, |var - 1| <= 1e-6.
        let mut net = Network::init(
            vec![LayerSpec::BatchNorm { channels: 2 }],
            vec![2, 4, 4],
            0,
            Init::Dcgan,
        )
        .unwrap();
        // Neutralize the learned affine so we observe the normalized values.
        net.layers_mut()[0].params[0] = Tensor::new(vec![2], vec![1.0, 1.0]).unwrap();
        let mut rng = SplitMix64::new(44);
        let values: Vec<f64> = (0..2 * 2 * 16).map(|_| 8.0 * rng.next_normal() + 3.0).collect();
        let x = Tensor::new(vec![2, 2, 4, 4], values).unwrap();
        let tape = net.forward_tape(&x, Mode::Train).unwrap();
        let y = tape.output();
        for c in 0..2 {
            let mut vals = Vec::new();
            for n in 0..2 {
                for i in 0..16 {
                    vals.push(y.values()[(n * 2 + c) * 16 + i]);
                }
            }
            let m: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let v: f64 = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() <= 1e-6, "channel {c} mean {m}");
            assert!((v - 1.0).abs() <= 1e-6, "channel {c} var {v}");
        }
    }

    #[test]
    fn batch_norm_eval_is_affine_in_running_stats() {
        let mut net = Network::init(
            vec![LayerSpec::BatchNorm { channels: 1 }],
            vec![1, 2, 2],
            0,
            Init::Dcgan,
        )
        .unwrap();
        net.layers_mut()[0].params[0] = Tensor::new(vec![1], vec![2.0]).unwrap();
        net.layers_mut()[0].params[1] = Tensor::new(vec![1], vec![0.5]).unwrap();
        net.layers_mut()[0].buffers[0] = Tensor::new(vec![1], vec![1.0]).unwrap();
        net.layers_mut()[0].buffers[1] = Tensor::new(vec![1], vec![4.0]).unwrap();
        let x = t(&[1, 1, 2, 2], &[1.0, 3.0, 5.0, -1.0]);
        let y = net.forward(&x).unwrap();
        // y = 2*(x-1)/sqrt(4+eps) + 0.5
        for (xi, yi) in x.values().iter().zip(y.values()) {
            let want = 2.0 * (xi - 1.0) / (4.0f64 + BN_EPS).sqrt() + 0.5;
            assert!((yi - want).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_norm_updates_running_stats_in_train_only() {
        let mut net = Network::init(
            vec![LayerSpec::BatchNorm { channels: 1 }],
            vec![1, 1, 2],
            0,
            Init::Dcgan,
        )
        .unwrap();
        let x = t(&[2, 1, 1, 2], &[1.0, 2.0, 3.0, 4.0]); // mean 2.5, var 1.25
        net.forward_tape(&x, Mode::Train).unwrap();
        let mean = net.layers()[0].buffers[0].values()[0];
        let var = net.layers()[0].buffers[1].values()[0];
        assert!((mean - (0.9 * 0.0 + 0.1 * 2.5)).abs() < 1e-12);
        assert!((var - (0.9 * 1.0 + 0.1 * 1.25)).abs() < 1e-12);
        // Eval forward must not move them.
        net.forward(&x).unwrap();
        assert_eq!(net.layers()[0].buffers[0].values()[0], mean);
        assert_eq!(net.layers()[0].buffers[1].values()[0], var);
    }

    #[test]
    fn forward_deterministic() {
        let mut rng = SplitMix64::new(77);
        let net = Network::init(
            vec![
                LayerSpec::conv(1, 4),
                LayerSpec::LeakyRelu { alpha: 0.2 },
                LayerSpec::Dense {
                    in_dim: 4 * 8 * 8,
                    out_shape: vec![5],
                },
                LayerSpec::Tanh,
            ],
            vec![1, 16, 16],
            5,
            Init::Dcgan,
        )
        .unwrap();
        let x = Tensor::new(
            vec![2, 1, 16, 16],
            (0..512).map(|_| rng.range_f64(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn non_finite_output_is_divergence_signal() {
        let mut net = Network::init(
            vec![LayerSpec::Dense {
                in_dim: 1,
                out_shape: vec![1],
            }],
            vec![1],
            0,
            Init::Dcgan,
        )
        .unwrap();
        net.layers_mut()[0].params[0] = t(&[1, 1], &[f64::MAX]);
        let r = net.forward(&t(&[1, 1], &[f64::MAX]));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
