//! Per-layer forward/backward kernels. Plain loops over flat `f64` slices;
//! at the network sizes this crate trains, straightforward code beats clever
//! code.

use super::{Layer, LayerSpec, Mode, BN_EPS, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Values batch norm must remember from a train-mode forward pass.
pub(super) struct BnCache {
    var: Vec<f64>,
    xhat: Vec<f64>,
}

/// Forward through one layer, updating batch-norm running statistics when
/// in train mode.
pub(super) fn forward(
    layer: &mut Layer,
    x: &Tensor,
    mode: Mode,
) -> Result<(Tensor, Option<BnCache>)> {
    let (out, cache, stats) = compute_forward(layer, x, mode)?;
    if let Some((mean, var)) = stats {
        for (r, &b) in layer.buffers[0].values_mut().iter_mut().zip(&mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        for (r, &b) in layer.buffers[1].values_mut().iter_mut().zip(&var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
    }
    Ok((out, cache))
}

/// Forward without buffer updates (eval paths).
pub(super) fn forward_immutable(
    layer: &Layer,
    x: &Tensor,
    mode: Mode,
) -> Result<(Tensor, Option<BnCache>)> {
    let (out, cache, _) = compute_forward(layer, x, mode)?;
    Ok((out, cache))
}

type ForwardOut = (Tensor, Option<BnCache>, Option<(Vec<f64>, Vec<f64>)>);

fn compute_forward(layer: &Layer, x: &Tensor, mode: Mode) -> Result<ForwardOut> {
    let n = x.shape()[0];
    let per_sample = &x.shape()[1..];
    let out_sample = layer.spec.output_shape(per_sample)?;
    let mut out_shape = vec![n];
    out_shape.extend_from_slice(&out_sample);

    match &layer.spec {
        LayerSpec::Dense { in_dim, out_shape: os } => {
            let out_dim: usize = os.iter().product();
            let w = layer.params[0].values();
            let b = layer.params[1].values();
            let xin = x.values();
            let mut out = vec![0.0; n * out_dim];
            for ni in 0..n {
                let xrow = &xin[ni * in_dim..(ni + 1) * in_dim];
                let orow = &mut out[ni * out_dim..(ni + 1) * out_dim];
                for (o, ov) in orow.iter_mut().enumerate() {
                    let wrow = &w[o * in_dim..(o + 1) * in_dim];
                    let mut acc = b[o];
                    for (wi, xi) in wrow.iter().zip(xrow) {
                        acc += wi * xi;
                    }
                    *ov = acc;
                }
            }
            Ok((Tensor::new(out_shape, out)?, None, None))
        }
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let (h, w_) = (per_sample[1], per_sample[2]);
            let (oh, ow) = (out_sample[1], out_sample[2]);
            let (k, s, p) = (*kernel, *stride, *pad);
            let wt = layer.params[0].values();
            let bias = layer.params[1].values();
            let xin = x.values();
            let mut out = vec![0.0; n * out_ch * oh * ow];
            for ni in 0..n {
                for oc in 0..*out_ch {
                    let obase = (ni * out_ch + oc) * oh * ow;
                    for v in &mut out[obase..obase + oh * ow] {
                        *v = bias[oc];
                    }
                    for ic in 0..*in_ch {
                        let xbase = (ni * in_ch + ic) * h * w_;
                        let wbase = (oc * in_ch + ic) * k * k;
                        for oy in 0..oh {
                            for ky in 0..k {
                                let iy = oy * s + ky;
                                if iy < p || iy - p >= h {
                                    continue;
                                }
                                let iy = iy - p;
                                for ox in 0..ow {
                                    let mut acc = 0.0;
                                    for kx in 0..k {
                                        let ix = ox * s + kx;
                                        if ix < p || ix - p >= w_ {
                                            continue;
                                        }
                                        acc += wt[wbase + ky * k + kx]
                                            * xin[xbase + iy * w_ + (ix - p)];
                                    }
                                    out[obase + oy * ow + ox] += acc;
                                }
                            }
                        }
                    }
                }
            }
            Ok((Tensor::new(out_shape, out)?, None, None))
        }
        LayerSpec::Deconv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let (h, w_) = (per_sample[1], per_sample[2]);
            let (oh, ow) = (out_sample[1], out_sample[2]);
            let (k, s, p) = (*kernel, *stride, *pad);
            let wt = layer.params[0].values();
            let bias = layer.params[1].values();
            let xin = x.values();
            let mut out = vec![0.0; n * out_ch * oh * ow];
            for ni in 0..n {
                for oc in 0..*out_ch {
                    let obase = (ni * out_ch + oc) * oh * ow;
                    for v in &mut out[obase..obase + oh * ow] {
                        *v = bias[oc];
                    }
                }
                for ic in 0..*in_ch {
                    let xbase = (ni * in_ch + ic) * h * w_;
                    for oc in 0..*out_ch {
                        let obase = (ni * out_ch + oc) * oh * ow;
                        let wbase = (ic * out_ch + oc) * k * k;
                        for iy in 0..h {
                            for ky in 0..k {
                                let oy = iy * s + ky;
                                if oy < p || oy - p >= oh {
                                    continue;
                                }
                                let oy = oy - p;
                                for ix in 0..w_ {
                                    let xv = xin[xbase + iy * w_ + ix];
                                    for kx in 0..k {
                                        let ox = ix * s + kx;
                                        if ox < p || ox - p >= ow {
                                            continue;
                                        }
                                        out[obase + oy * ow + (ox - p)] +=
                                            xv * wt[wbase + ky * k + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok((Tensor::new(out_shape, out)?, None, None))
        }
        LayerSpec::Relu => {
            let out = x.values().iter().map(|&v| v.max(0.0)).collect();
            Ok((Tensor::new(out_shape, out)?, None, None))
        }
        LayerSpec::LeakyRelu { alpha } => {
            let out = x
                .values()
                .iter()
                .map(|&v| if v > 0.0 { v } else { alpha * v })
                .collect();
            Ok((Tensor::new(out_shape, out)?, None, None))
        }
        LayerSpec::Tanh => {
            let out = x.values().iter().map(|&v| v.tanh()).collect();
            Ok((Tensor::new(out_shape, out)?, None, None))
        }
        LayerSpec::Sigmoid => {
            let out = x.values().iter().map(|&v| sigmoid(v)).collect();
            Ok((Tensor::new(out_shape, out)?, None, None))
        }
        LayerSpec::BatchNorm { channels } => {
            if per_sample.len() != 3 {
                return Err(Error::ShapeMismatch {
                    context: "batch_norm input",
                    expected: vec![0, 0, 0],
                    actual: per_sample.to_vec(),
                });
            }
            let c = *channels;
            let hw = per_sample[1] * per_sample[2];
            let gamma = layer.params[0].values();
            let beta = layer.params[1].values();
            let xin = x.values();
            match mode {
                Mode::Train => {
                    let m = (n * hw) as f64;
                    let mut mean = vec![0.0; c];
                    let mut var = vec![0.0; c];
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * hw;
                            for &v in &xin[base..base + hw] {
                                mean[ci] += v;
                            }
                        }
                    }
                    for v in mean.iter_mut() {
                        *v /= m;
                    }
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * hw;
                            for &v in &xin[base..base + hw] {
                                let d = v - mean[ci];
                                var[ci] += d * d;
                            }
                        }
                    }
                    for v in var.iter_mut() {
                        *v /= m;
                    }
                    let mut xhat = vec![0.0; xin.len()];
                    let mut out = vec![0.0; xin.len()];
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * hw;
                            let inv = 1.0 / (var[ci] + BN_EPS).sqrt();
                            for i in base..base + hw {
                                let xh = (xin[i] - mean[ci]) * inv;
                                xhat[i] = xh;
                                out[i] = gamma[ci] * xh + beta[ci];
                            }
                        }
                    }
                    Ok((
                        Tensor::new(out_shape, out)?,
                        Some(BnCache { var: var.clone(), xhat }),
                        Some((mean, var)),
                    ))
                }
                Mode::Eval => {
                    let rm = layer.buffers[0].values();
                    let rv = layer.buffers[1].values();
                    let mut out = vec![0.0; xin.len()];
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * hw;
                            let inv = 1.0 / (rv[ci] + BN_EPS).sqrt();
                            for i in base..base + hw {
                                out[i] = gamma[ci] * (xin[i] - rm[ci]) * inv + beta[ci];
                            }
                        }
                    }
                    Ok((Tensor::new(out_shape, out)?, None, None))
                }
            }
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Backward through one layer: gradient w.r.t. the layer input plus
/// gradients w.r.t. its parameters.
pub(super) fn backward(
    layer: &Layer,
    input: &Tensor,
    bn: &Option<BnCache>,
    grad_out: &Tensor,
    mode: Mode,
) -> Result<(Tensor, Vec<Tensor>)> {
    let n = input.shape()[0];
    let per_sample = &input.shape()[1..];
    let g = grad_out.values();
    let xin = input.values();

    match &layer.spec {
        LayerSpec::Dense { in_dim, out_shape: os } => {
            let out_dim: usize = os.iter().product();
            let w = layer.params[0].values();
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; out_dim];
            let mut dx = vec![0.0; xin.len()];
            for ni in 0..n {
                let xrow = &xin[ni * in_dim..(ni + 1) * in_dim];
                let grow = &g[ni * out_dim..(ni + 1) * out_dim];
                let dxrow = &mut dx[ni * in_dim..(ni + 1) * in_dim];
                for (o, &go) in grow.iter().enumerate() {
                    db[o] += go;
                    let wrow = &w[o * in_dim..(o + 1) * in_dim];
                    let dwrow = &mut dw[o * in_dim..(o + 1) * in_dim];
                    for i in 0..*in_dim {
                        dwrow[i] += go * xrow[i];
                        dxrow[i] += go * wrow[i];
                    }
                }
            }
            Ok((
                Tensor::new(input.shape().to_vec(), dx)?,
                vec![
                    Tensor::new(vec![out_dim, *in_dim], dw)?,
                    Tensor::new(vec![out_dim], db)?,
                ],
            ))
        }
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let (h, w_) = (per_sample[1], per_sample[2]);
            let out_sample = layer.spec.output_shape(per_sample)?;
            let (oh, ow) = (out_sample[1], out_sample[2]);
            let (k, s, p) = (*kernel, *stride, *pad);
            let wt = layer.params[0].values();
            let mut dw = vec![0.0; wt.len()];
            let mut db = vec![0.0; *out_ch];
            let mut dx = vec![0.0; xin.len()];
            for ni in 0..n {
                for oc in 0..*out_ch {
                    let obase = (ni * out_ch + oc) * oh * ow;
                    for v in &g[obase..obase + oh * ow] {
                        db[oc] += v;
                    }
                    for ic in 0..*in_ch {
                        let xbase = (ni * in_ch + ic) * h * w_;
                        let wbase = (oc * in_ch + ic) * k * k;
                        for oy in 0..oh {
                            for ky in 0..k {
                                let iy = oy * s + ky;
                                if iy < p || iy - p >= h {
                                    continue;
                                }
                                let iy = iy - p;
                                for ox in 0..ow {
                                    let go = g[obase + oy * ow + ox];
                                    if go == 0.0 {
                                        continue;
                                    }
                                    for kx in 0..k {
                                        let ix = ox * s + kx;
                                        if ix < p || ix - p >= w_ {
                                            continue;
                                        }
                                        let xi = xbase + iy * w_ + (ix - p);
                                        dw[wbase + ky * k + kx] += go * xin[xi];
                                        dx[xi] += go * wt[wbase + ky * k + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok((
                Tensor::new(input.shape().to_vec(), dx)?,
                vec![
                    Tensor::new(vec![*out_ch, *in_ch, k, k], dw)?,
                    Tensor::new(vec![*out_ch], db)?,
                ],
            ))
        }
        LayerSpec::Deconv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let (h, w_) = (per_sample[1], per_sample[2]);
            let out_sample = layer.spec.output_shape(per_sample)?;
            let (oh, ow) = (out_sample[1], out_sample[2]);
            let (k, s, p) = (*kernel, *stride, *pad);
            let wt = layer.params[0].values();
            let mut dw = vec![0.0; wt.len()];
            let mut db = vec![0.0; *out_ch];
            let mut dx = vec![0.0; xin.len()];
            for (oc, dbv) in db.iter_mut().enumerate() {
                for ni in 0..n {
                    let obase = (ni * out_ch + oc) * oh * ow;
                    for v in &g[obase..obase + oh * ow] {
                        *dbv += v;
                    }
                }
            }
            for ni in 0..n {
                for ic in 0..*in_ch {
                    let xbase = (ni * in_ch + ic) * h * w_;
                    for oc in 0..*out_ch {
                        let obase = (ni * out_ch + oc) * oh * ow;
                        let wbase = (ic * out_ch + oc) * k * k;
                        for iy in 0..h {
                            for ky in 0..k {
                                let oy = iy * s + ky;
                                if oy < p || oy - p >= oh {
                                    continue;
                                }
                                let oy = oy - p;
                                for ix in 0..w_ {
                                    let xi = xbase + iy * w_ + ix;
                                    let xv = xin[xi];
                                    let mut acc = 0.0;
                                    for kx in 0..k {
                                        let ox = ix * s + kx;
                                        if ox < p || ox - p >= ow {
                                            continue;
                                        }
                                        let go = g[obase + oy * ow + (ox - p)];
                                        dw[wbase + ky * k + kx] += xv * go;
                                        acc += wt[wbase + ky * k + kx] * go;
                                    }
                                    dx[xi] += acc;
                                }
                            }
                        }
                    }
                }
            }
            Ok((
                Tensor::new(input.shape().to_vec(), dx)?,
                vec![
                    Tensor::new(vec![*in_ch, *out_ch, k, k], dw)?,
                    Tensor::new(vec![*out_ch], db)?,
                ],
            ))
        }
        LayerSpec::Relu => {
            let dx = xin
                .iter()
                .zip(g)
                .map(|(&x, &go)| if x > 0.0 { go } else { 0.0 })
                .collect();
            Ok((Tensor::new(input.shape().to_vec(), dx)?, vec![]))
        }
        LayerSpec::LeakyRelu { alpha } => {
            let dx = xin
                .iter()
                .zip(g)
                .map(|(&x, &go)| if x > 0.0 { go } else { alpha * go })
                .collect();
            Ok((Tensor::new(input.shape().to_vec(), dx)?, vec![]))
        }
        LayerSpec::Tanh => {
            let dx = xin
                .iter()
                .zip(g)
                .map(|(&x, &go)| {
                    let t = x.tanh();
                    go * (1.0 - t * t)
                })
                .collect();
            Ok((Tensor::new(input.shape().to_vec(), dx)?, vec![]))
        }
        LayerSpec::Sigmoid => {
            let dx = xin
                .iter()
                .zip(g)
                .map(|(&x, &go)| {
                    let s = sigmoid(x);
                    go * s * (1.0 - s)
                })
                .collect();
            Ok((Tensor::new(input.shape().to_vec(), dx)?, vec![]))
        }
        LayerSpec::BatchNorm { channels } => {
            let c = *channels;
            let hw = per_sample[1] * per_sample[2];
            let gamma = layer.params[0].values();
            match mode {
                Mode::Train => {
                    let cache = bn.as_ref().ok_or_else(|| {
                        Error::InvalidConfig("batch_norm backward without train cache".into())
                    })?;
                    let m = (n * hw) as f64;
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    let mut sum_dxhat = vec![0.0; c];
                    let mut sum_dxhat_xhat = vec![0.0; c];
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * hw;
                            for i in base..base + hw {
                                let dxh = g[i] * gamma[ci];
                                dgamma[ci] += g[i] * cache.xhat[i];
                                dbeta[ci] += g[i];
                                sum_dxhat[ci] += dxh;
                                sum_dxhat_xhat[ci] += dxh * cache.xhat[i];
                            }
                        }
                    }
                    let mut dx = vec![0.0; xin.len()];
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * hw;
                            let inv = 1.0 / (cache.var[ci] + BN_EPS).sqrt();
                            for i in base..base + hw {
                                let dxh = g[i] * gamma[ci];
                                dx[i] = inv / m
                                    * (m * dxh
                                        - sum_dxhat[ci]
                                        - cache.xhat[i] * sum_dxhat_xhat[ci]);
                            }
                        }
                    }
                    Ok((
                        Tensor::new(input.shape().to_vec(), dx)?,
                        vec![
                            Tensor::new(vec![c], dgamma)?,
                            Tensor::new(vec![c], dbeta)?,
                        ],
                    ))
                }
                Mode::Eval => {
                    // Affine map in the running stats.
                    let rm = layer.buffers[0].values();
                    let rv = layer.buffers[1].values();
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    let mut dx = vec![0.0; xin.len()];
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * hw;
                            let inv = 1.0 / (rv[ci] + BN_EPS).sqrt();
                            for i in base..base + hw {
                                dgamma[ci] += g[i] * (xin[i] - rm[ci]) * inv;
                                dbeta[ci] += g[i];
                                dx[i] = g[i] * gamma[ci] * inv;
                            }
                        }
                    }
                    Ok((
                        Tensor::new(input.shape().to_vec(), dx)?,
                        vec![
                            Tensor::new(vec![c], dgamma)?,
                            Tensor::new(vec![c], dbeta)?,
                        ],
                    ))
                }
            }
        }
    }
}
