//! Central finite-difference gradient checking.
//!
//! The engine's correctness contract: for every layer kind, analytic input
//! and parameter gradients match central differences (step 1e-5) with
//! relative error <= 1e-4 on random small tensors. The comparison uses
//! |a - d| <= tol * max(1, |a|, |d|), i.e. absolute near zero and relative
//! away from it.

use crate::error::Result;
use crate::nn::{Mode, Network};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

/// A differentiable scalar head for gradcheck: maps the network output to a
/// loss and the gradient of that loss w.r.t. the output.
pub type LossFn<'a> = &'a dyn Fn(&Tensor) -> (f64, Tensor);

/// A weighted-sum loss: L = sum_i c_i * y_i with fixed random coefficients.
/// Exercises every output coordinate without introducing its own
/// nonlinearity error.
pub fn weighted_sum_loss(coeffs: Vec<f64>) -> impl Fn(&Tensor) -> (f64, Tensor) {
    move |y: &Tensor| {
        let loss = y.values().iter().zip(&coeffs).map(|(a, b)| a * b).sum();
        let grad = Tensor::new(y.shape().to_vec(), coeffs.clone()).unwrap();
        (loss, grad)
    }
}

fn agree(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= REL_TOL * analytic.abs().max(numeric.abs()).max(1.0)
}

/// Checks all parameter gradients and the input gradient of `net` at `x`
/// against central finite differences of `loss`. Returns the worst
/// violation as Err text, or Ok(max observed error).
pub fn check_network(
    net: &mut Network,
    x: &Tensor,
    mode: Mode,
    loss: LossFn<'_>,
) -> std::result::Result<f64, String> {
    let eval = |net: &mut Network, x: &Tensor| -> Result<f64> {
        let tape = net.forward_tape(x, mode)?;
        Ok(loss(tape.output()).0)
    };

    let tape = net.forward_tape(x, mode).map_err(|e| e.to_string())?;
    let (_, grad_out) = loss(tape.output());
    let grads = net.backward(&tape, &grad_out).map_err(|e| e.to_string())?;

    let mut max_err = 0.0f64;
    // Parameter gradients.
    for li in 0..net.layers().len() {
        for pi in 0..net.layers()[li].params.len() {
            let count = net.layers()[li].params[pi].len();
            for i in 0..count {
                let orig = net.layers()[li].params[pi].values()[i];
                net.layers_mut()[li].params[pi].values_mut()[i] = orig + FD_STEP;
                let up = eval(net, x).map_err(|e| e.to_string())?;
                net.layers_mut()[li].params[pi].values_mut()[i] = orig - FD_STEP;
                let down = eval(net, x).map_err(|e| e.to_string())?;
                net.layers_mut()[li].params[pi].values_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let analytic = grads.per_layer[li][pi].values()[i];
                let err = (analytic - numeric).abs()
                    / analytic.abs().max(numeric.abs()).max(1.0);
                max_err = max_err.max(err);
                if !agree(analytic, numeric) {
                    return Err(format!(
                        "layer {li} param {pi}[{i}]: analytic {analytic:.8e} vs numeric {numeric:.8e}"
                    ));
                }
            }
        }
    }
    // Input gradient.
    let mut xv = x.clone();
    for i in 0..x.len() {
        let orig = xv.values()[i];
        xv.values_mut()[i] = orig + FD_STEP;
        let up = eval(net, &xv).map_err(|e| e.to_string())?;
        xv.values_mut()[i] = orig - FD_STEP;
        let down = eval(net, &xv).map_err(|e| e.to_string())?;
        xv.values_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = grads.input_grad.values()[i];
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
        max_err = max_err.max(err);
        if !agree(analytic, numeric) {
            return Err(format!(
                "input[{i}]: analytic {analytic:.8e} vs numeric {numeric:.8e}"
            ));
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Init, LayerSpec};
    use crate::rng::SplitMix64;

    fn random_input(rng: &mut SplitMix64, shape: Vec<usize>) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.range_f64(-1.5, 1.5)).collect()).unwrap()
    }

    fn check(specs: Vec<LayerSpec>, input_shape: Vec<usize>, batch: usize, seed: u64, mode: Mode) {
        let mut rng = SplitMix64::new(seed ^ 0x5EED);
        let mut net = Network::init(specs, input_shape.clone(), seed, Init::Dcgan).unwrap();
        // Randomize parameters beyond the tiny DCGAN sigma so gradients are
        // well-scaled for finite differences.
        for layer in net.layers_mut() {
            for (pi, p) in layer.params.iter_mut().enumerate() {
                if pi == 0 {
                    for v in p.values_mut() {
                        *v = rng.range_f64(-0.8, 0.8);
                    }
                } else {
                    for v in p.values_mut() {
                        *v = rng.range_f64(-0.3, 0.3);
                    }
                }
            }
            for (bi, b) in layer.buffers.iter_mut().enumerate() {
                for v in b.values_mut() {
                    // Running mean anywhere, running var positive.
                    *v = if bi == 0 {
                        rng.range_f64(-0.5, 0.5)
                    } else {
                        rng.range_f64(0.3, 2.0)
                    };
                }
            }
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&input_shape);
        let x = random_input(&mut rng, shape);
        let out_len: usize = {
            let tape = net.forward_tape(&x, mode).unwrap();
            tape.output().len()
        };
        let coeffs: Vec<f64> = (0..out_len).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let loss = weighted_sum_loss(coeffs);
        if let Err(msg) = check_network(&mut net, &x, mode, &loss) {
            panic!("gradcheck failed (seed {seed}): {msg}");
        }
    }

    #[test]
    fn dense_gradcheck() {
        for seed in 0..3 {
            check(
                vec![LayerSpec::Dense {
                    in_dim: 6,
                    out_shape: vec![4],
                }],
                vec![6],
                3,
                seed,
                Mode::Train,
            );
        }
    }

    #[test]
    fn conv2d_gradcheck() {
        for seed in 0..3 {
            check(
                vec![LayerSpec::Conv2d {
                    in_ch: 2,
                    out_ch: 3,
                    kernel: 4,
                    stride: 2,
                    pad: 1,
                }],
                vec![2, 6, 6],
                2,
                seed,
                Mode::Train,
            );
        }
    }

    #[test]
    fn deconv2d_gradcheck() {
        for seed in 0..3 {
            check(
                vec![LayerSpec::Deconv2d {
                    in_ch: 3,
                    out_ch: 2,
                    kernel: 4,
                    stride: 2,
                    pad: 1,
                }],
                vec![3, 3, 3],
                2,
                seed,
                Mode::Train,
            );
        }
    }

    #[test]
    fn activation_gradchecks() {
        for (i, spec) in [
            LayerSpec::Relu,
            LayerSpec::LeakyRelu { alpha: 0.2 },
            LayerSpec::Tanh,
            LayerSpec::Sigmoid,
        ]
        .into_iter()
        .enumerate()
        {
            check(vec![spec], vec![5], 3, i as u64 + 10, Mode::Train);
        }
    }

    #[test]
    fn batch_norm_gradcheck_train_and_eval() {
        for seed in 0..2 {
            check(
                vec![LayerSpec::BatchNorm { channels: 2 }],
                vec![2, 3, 3],
                3,
                seed,
                Mode::Train,
            );
            check(
                vec![LayerSpec::BatchNorm { channels: 2 }],
                vec![2, 3, 3],
                3,
                seed + 50,
                Mode::Eval,
            );
        }
    }

    #[test]
    fn stacked_network_gradcheck() {
        // A miniature of the real discriminator: conv, BN, leaky-relu,
        // dense, sigmoid.
        check(
            vec![
                LayerSpec::Conv2d {
                    in_ch: 1,
                    out_ch: 2,
                    kernel: 4,
                    stride: 2,
                    pad: 1,
                },
                LayerSpec::BatchNorm { channels: 2 },
                LayerSpec::LeakyRelu { alpha: 0.2 },
                LayerSpec::Dense {
                    in_dim: 2 * 4 * 4,
                    out_shape: vec![1],
                },
                LayerSpec::Sigmoid,
            ],
            vec![1, 8, 8],
            2,
            42,
            Mode::Train,
        );
    }

    #[test]
    fn generator_style_stack_gradcheck() {
        check(
            vec![
                LayerSpec::Dense {
                    in_dim: 5,
                    out_shape: vec![3, 2, 2],
                },
                LayerSpec::BatchNorm { channels: 3 },
                LayerSpec::Relu,
                LayerSpec::Deconv2d {
                    in_ch: 3,
                    out_ch: 1,
                    kernel: 4,
                    stride: 2,
                    pad: 1,
                },
                LayerSpec::Tanh,
            ],
            vec![5],
            2,
            4242,
            Mode::Train,
        );
    }
}
