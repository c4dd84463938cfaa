//! The codec's networks and their training stages.
//!
//! Stage 1 pre-trains a decoder (generator) adversarially against a
//! discriminator; stage 2 freezes the decoder and trains an encoder to
//! minimize a hybrid pixel + perceptual distortion through it. A separate
//! classifier supports the accuracy probe. Everything is deterministic
//! given the config seeds.

use crate::container::{read_bundle, write_bundle, Nb01Bundle};
use crate::error::{Error, Result};
use crate::latent::LatentVector;
use crate::nn::{Adam, Gradients, Init, LayerSpec, Mode, Network};
use crate::rng::{mix_seed, SplitMix64};
use crate::tensor::Tensor;

/// Architecture + GAN training parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    /// Latent length M.
    pub latent_dim: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub batch_size: usize,
    /// Adversarial pre-training iterations (stage 1).
    pub gan_iters: usize,
    /// Encoder training iterations (stage 2).
    pub encoder_iters: usize,
    /// Discriminator updates per adversarial iteration.
    pub disc_steps: usize,
    /// Generator updates per adversarial iteration.
    pub gen_steps: usize,
    pub seed: u64,
    /// Narrowest conv width; doubles at each halving of resolution.
    pub base_channels: usize,
    /// Non-saturating generator loss (maximize ln d(g(z))) when true;
    /// the literal minimax term (minimize ln(1 - d(g(z)))) when false.
    pub non_saturating: bool,
}

impl GanConfig {
    pub fn new(latent_dim: usize, height: usize, width: usize, channels: usize) -> GanConfig {
        GanConfig {
            latent_dim,
            height,
            width,
            channels,
            batch_size: 16,
            gan_iters: 2000,
            encoder_iters: 1500,
            disc_steps: 1,
            gen_steps: 1,
            seed: 1,
            base_channels: 8,
            non_saturating: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be >= 1".into()));
        }
        for (name, d) in [("height", self.height), ("width", self.width)] {
            if d < 16 || !d.is_power_of_two() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a power of two >= 16, got {d}"
                )));
            }
        }
        if !(self.channels == 1 || self.channels == 3) {
            return Err(Error::InvalidConfig("channels must be 1 or 3".into()));
        }
        if self.disc_steps == 0 || self.gen_steps == 0 {
            return Err(Error::InvalidConfig(
                "disc_steps and gen_steps must be >= 1".into(),
            ));
        }
        if self.batch_size == 0 || self.base_channels == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and base_channels must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of stride-2 stages between full resolution and the 4x4 core.
    fn depth(&self) -> usize {
        let min_side = self.height.min(self.width);
        (min_side / 4).trailing_zeros() as usize
    }

    /// Spatial dims at the 4x4 core (rectangular images keep their ratio).
    fn core_dims(&self) -> (usize, usize) {
        let d = self.depth();
        (self.height >> d, self.width >> d)
    }
}

/// Distortion-loss weights; the feature seed freezes the surrogate
/// perceptual network.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub feature_seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda1: 1.0,
            lambda2: 0.002,
            feature_seed: 9001,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::InvalidConfig("lambda weights must be >= 0".into()));
        }
        if self.lambda1 == 0.0 && self.lambda2 == 0.0 {
            return Err(Error::InvalidConfig(
                "at least one of lambda1, lambda2 must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Decoder g: latent -> image. Dense to the 4x4 core, then stride-2
/// deconvs up to full resolution, tanh output. No batch norm on the output
/// layer.
pub fn decoder_specs(cfg: &GanConfig) -> Vec<LayerSpec> {
    let depth = cfg.depth();
    let (ch, cw) = cfg.core_dims();
    let core_ch = cfg.base_channels << (depth - 1);
    let mut specs = vec![
        LayerSpec::Dense {
            in_dim: cfg.latent_dim,
            out_shape: vec![core_ch, ch, cw],
        },
        LayerSpec::BatchNorm { channels: core_ch },
        LayerSpec::Relu,
    ];
    let mut c = core_ch;
    for stage in 1..depth {
        let next = core_ch >> stage;
        specs.push(LayerSpec::deconv(c, next));
        specs.push(LayerSpec::BatchNorm { channels: next });
        specs.push(LayerSpec::Relu);
        c = next;
    }
    specs.push(LayerSpec::deconv(c, cfg.channels));
    specs.push(LayerSpec::Tanh);
    specs
}

/// Shared downsampling trunk of discriminator/encoder/classifier: stride-2
/// convs with leaky-ReLU, batch norm everywhere except the input layer.
/// Returns the specs and the flattened core dimension.
fn trunk_specs(cfg: &GanConfig) -> (Vec<LayerSpec>, usize) {
    let depth = cfg.depth();
    let (ch, cw) = cfg.core_dims();
    let mut specs = vec![
        LayerSpec::conv(cfg.channels, cfg.base_channels),
        LayerSpec::LeakyRelu { alpha: 0.2 },
    ];
    let mut c = cfg.base_channels;
    for _ in 1..depth {
        specs.push(LayerSpec::conv(c, c * 2));
        c *= 2;
        specs.push(LayerSpec::BatchNorm { channels: c });
        specs.push(LayerSpec::LeakyRelu { alpha: 0.2 });
    }
    (specs, c * ch * cw)
}

/// Discriminator d: image -> probability of being real.
pub fn discriminator_specs(cfg: &GanConfig) -> Vec<LayerSpec> {
    let (mut specs, flat) = trunk_specs(cfg);
    specs.push(LayerSpec::Dense {
        in_dim: flat,
        out_shape: vec![1],
    });
    specs.push(LayerSpec::Sigmoid);
    specs
}

/// Encoder f: image -> latent in [-1,1]^M. Identical to the discriminator
/// except for the output layer (length-M tanh).
pub fn encoder_specs(cfg: &GanConfig) -> Vec<LayerSpec> {
    let (mut specs, flat) = trunk_specs(cfg);
    specs.push(LayerSpec::Dense {
        in_dim: flat,
        out_shape: vec![cfg.latent_dim],
    });
    specs.push(LayerSpec::Tanh);
    specs
}

/// Classifier: trunk plus a logit head (softmax applied in the loss).
pub fn classifier_specs(cfg: &GanConfig, classes: usize) -> Vec<LayerSpec> {
    let (mut specs, flat) = trunk_specs(cfg);
    specs.push(LayerSpec::Dense {
        in_dim: flat,
        out_shape: vec![classes],
    });
    specs
}

/// Fixed random convolutional feature network, the stand-in for a
/// pretrained fourth-conv-layer extractor. Four stride-2 convs with
/// leaky-ReLU, He-initialized from the seed so activations neither vanish
/// nor explode, then frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    net: Network,
    pub seed: u64,
}

impl FeatureExtractor {
    pub fn new(height: usize, width: usize, channels: usize, seed: u64) -> Result<FeatureExtractor> {
        if height < 16 || width < 16 {
            return Err(Error::InvalidConfig(
                "feature extractor needs images >= 16x16".into(),
            ));
        }
        let widths = [8usize, 16, 32, 64];
        let mut specs = Vec::new();
        let mut c = channels;
        for (i, &w) in widths.iter().enumerate() {
            specs.push(LayerSpec::conv(c, w));
            if i + 1 < widths.len() {
                specs.push(LayerSpec::LeakyRelu { alpha: 0.2 });
            }
            c = w;
        }
        let net = Network::init(specs, vec![channels, height, width], seed, Init::He)?;
        Ok(FeatureExtractor { net, seed })
    }

    /// Feature map of the fourth convolutional layer, batched.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.net.forward(x)
    }

    /// Forward with tape, for backpropagating the perceptual term into the
    /// reconstruction. Parameters stay frozen; only the tape is consumed.
    fn features_tape(&self, x: &Tensor) -> Result<(crate::nn::Tape, Tensor)> {
        let mut scratch = self.net.clone();
        let tape = scratch.forward_tape(x, Mode::Eval)?;
        let out = tape.output().clone();
        Ok((tape, out))
    }

    fn backward_input(&self, tape: &crate::nn::Tape, grad: &Tensor) -> Result<Tensor> {
        Ok(self.net.backward(tape, grad)?.input_grad)
    }
}

/// Hybrid distortion: lambda1 * ||x - xhat||_2 + lambda2 * ||F(x) -
/// F(xhat)||_2, Euclidean (not squared) norms, averaged over the batch.
/// Returns the loss and its gradient w.r.t. xhat. The gradient at the
/// non-differentiable point x == xhat is defined as zero.
pub fn distortion_loss(
    x: &Tensor,
    xhat: &Tensor,
    cfg: &LossConfig,
    feat: &FeatureExtractor,
) -> Result<(f64, Tensor)> {
    cfg.validate()?;
    if x.shape() != xhat.shape() {
        return Err(Error::ShapeMismatch {
            context: "distortion_loss",
            expected: x.shape().to_vec(),
            actual: xhat.shape().to_vec(),
        });
    }
    let n = x.shape()[0];
    let per = x.len() / n;
    let mut loss = 0.0;
    let mut grad = vec![0.0; x.len()];

    if cfg.lambda1 > 0.0 {
        for s in 0..n {
            let xs = &x.values()[s * per..(s + 1) * per];
            let hs = &xhat.values()[s * per..(s + 1) * per];
            let norm: f64 = xs
                .iter()
                .zip(hs)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            loss += cfg.lambda1 * norm / n as f64;
            if norm > 1e-12 {
                let scale = cfg.lambda1 / (n as f64 * norm);
                for i in 0..per {
                    grad[s * per + i] += scale * (hs[i] - xs[i]);
                }
            }
        }
    }

    if cfg.lambda2 > 0.0 {
        let fx = feat.features(x)?;
        let (tape, fh) = feat.features_tape(xhat)?;
        let fper = fx.len() / n;
        let mut grad_feat = vec![0.0; fx.len()];
        for s in 0..n {
            let a = &fx.values()[s * fper..(s + 1) * fper];
            let b = &fh.values()[s * fper..(s + 1) * fper];
            let norm: f64 = a
                .iter()
                .zip(b)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            loss += cfg.lambda2 * norm / n as f64;
            if norm > 1e-12 {
                let scale = cfg.lambda2 / (n as f64 * norm);
                for i in 0..fper {
                    grad_feat[s * fper + i] = scale * (b[i] - a[i]);
                }
            }
        }
        let gf = Tensor::new(fh.shape().to_vec(), grad_feat)?;
        let gin = feat.backward_input(&tape, &gf)?;
        for (g, gi) in grad.iter_mut().zip(gin.values()) {
            *g += gi;
        }
    }

    Ok((loss, Tensor::new(x.shape().to_vec(), grad)?))
}

/// Stacks per-sample tensors into one batched tensor.
pub fn stack(samples: &[&Tensor]) -> Result<Tensor> {
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let mut shape = vec![samples.len()];
    shape.extend_from_slice(first.shape());
    let mut values = Vec::with_capacity(samples.len() * first.len());
    for s in samples {
        if s.shape() != first.shape() {
            return Err(Error::ShapeMismatch {
                context: "stack",
                expected: first.shape().to_vec(),
                actual: s.shape().to_vec(),
            });
        }
        values.extend_from_slice(s.values());
    }
    Tensor::new(shape, values)
}

/// z ~ U[-1,1]^{B x M}, the latent prior.
pub fn sample_latent(rng: &mut SplitMix64, batch: usize, m: usize) -> Tensor {
    let values = (0..batch * m).map(|_| rng.range_f64(-1.0, 1.0)).collect();
    Tensor::new(vec![batch, m], values).unwrap()
}

/// End-of-training GAN health indicators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanTelemetry {
    /// Mean discriminator score on a real batch after the last update.
    pub real_score: f64,
    /// Mean discriminator score on fresh generator samples.
    pub fake_score: f64,
    pub final_disc_loss: f64,
    pub final_gen_loss: f64,
}

fn add_gradients(mut a: Gradients, b: &Gradients) -> Gradients {
    for (la, lb) in a.per_layer.iter_mut().zip(&b.per_layer) {
        for (pa, pb) in la.iter_mut().zip(lb) {
            for (va, vb) in pa.values_mut().iter_mut().zip(pb.values()) {
                *va += vb;
            }
        }
    }
    a
}

/// Shuffled-epoch batch cursor over a dataset.
struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    fn new(n: usize) -> BatchCursor {
        BatchCursor {
            order: (0..n).collect(),
            pos: n, // force an initial shuffle
        }
    }

    fn next_batch(&mut self, rng: &mut SplitMix64, batch: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            if self.pos >= self.order.len() {
                rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Mean discriminator score over a batch; the tape output is [B, 1].
fn mean_score(t: &Tensor) -> f64 {
    t.values().iter().sum::<f64>() / t.len() as f64
}

/// Binary cross-entropy of scores against a constant label, the evaluated
/// form -[y ln d + (1-y) ln(1-d)] averaged over the batch.
pub fn bce_loss(scores: &Tensor, label: f64) -> f64 {
    let eps = 1e-12;
    scores
        .values()
        .iter()
        .map(|&d| {
            -(label * (d + eps).ln() + (1.0 - label) * (1.0 - d + eps).ln())
        })
        .sum::<f64>()
        / scores.len() as f64
}

/// Adversarial pre-training (stage 1). Returns the trained decoder
/// (generator), discriminator, and telemetry. `data` holds per-sample
/// [C, H, W] tensors with values in [-1, 1].
pub fn train_gan(cfg: &GanConfig, data: &[Tensor]) -> Result<(Network, Network, GanTelemetry)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sample_shape = vec![cfg.channels, cfg.height, cfg.width];
    for t in data {
        if t.shape() != sample_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "train_gan data",
                expected: sample_shape,
                actual: t.shape().to_vec(),
            });
        }
    }
    let batch = cfg.batch_size.min(data.len());
    let mut gen = Network::init(
        decoder_specs(cfg),
        vec![cfg.latent_dim],
        mix_seed(cfg.seed, 1),
        Init::Dcgan,
    )?;
    let mut disc = Network::init(
        discriminator_specs(cfg),
        vec![cfg.channels, cfg.height, cfg.width],
        mix_seed(cfg.seed, 2),
        Init::Dcgan,
    )?;
    let mut adam_g = Adam::dcgan(&gen);
    let mut adam_d = Adam::dcgan(&disc);
    let mut rng = SplitMix64::new(mix_seed(cfg.seed, 3));
    let mut cursor = BatchCursor::new(data.len());
    // Gradient enters below the final sigmoid: dLoss/dlogit for BCE.
    let disc_logit_boundary = disc.layers().len() - 1;

    let mut final_disc_loss = 0.0;
    let mut final_gen_loss = 0.0;
    for iter in 0..cfg.gan_iters {
        let diverged = |what: &str| Error::Divergence {
            iteration: iter,
            reason: format!("non-finite {what}"),
        };

        // ---- Discriminator updates: ascend ln d(x) + ln(1 - d(g(z))) ----
        for _ in 0..cfg.disc_steps {
            let idx = cursor.next_batch(&mut rng, batch);
            let real_refs: Vec<&Tensor> = idx.iter().map(|&i| &data[i]).collect();
            let real = stack(&real_refs)?;
            let z = sample_latent(&mut rng, batch, cfg.latent_dim);
            let fake = gen.forward_tape(&z, Mode::Train)?.output().clone();

            let tape_r = disc.forward_tape(&real, Mode::Train)?;
            let d_real = tape_r.output().clone();
            let grad_r = Tensor::new(
                d_real.shape().to_vec(),
                d_real.values().iter().map(|&d| (d - 1.0) / batch as f64).collect(),
            )?;
            let grads_real = disc.backward_from(&tape_r, &grad_r, disc_logit_boundary)?;

            let tape_f = disc.forward_tape(&fake, Mode::Train)?;
            let d_fake = tape_f.output().clone();
            let grad_f = Tensor::new(
                d_fake.shape().to_vec(),
                d_fake.values().iter().map(|&d| d / batch as f64).collect(),
            )?;
            let grads_fake = disc.backward_from(&tape_f, &grad_f, disc_logit_boundary)?;

            final_disc_loss = bce_loss(&d_real, 1.0) + bce_loss(&d_fake, 0.0);
            if !final_disc_loss.is_finite() {
                return Err(diverged("discriminator loss"));
            }
            adam_d.step(&mut disc, &add_gradients(grads_real, &grads_fake))?;
        }

        // ---- Generator updates ----
        for _ in 0..cfg.gen_steps {
            let z2 = sample_latent(&mut rng, batch, cfg.latent_dim);
            let tape_g = gen.forward_tape(&z2, Mode::Train)?;
            let fake2 = tape_g.output().clone();
            let tape_d = disc.forward_tape(&fake2, Mode::Train)?;
            let d_g = tape_d.output().clone();
            final_gen_loss = if cfg.non_saturating {
                bce_loss(&d_g, 1.0)
            } else {
                -bce_loss(&d_g, 0.0)
            };
            if !final_gen_loss.is_finite() {
                return Err(diverged("generator loss"));
            }
            let grad_logit = Tensor::new(
                d_g.shape().to_vec(),
                d_g.values()
                    .iter()
                    .map(|&d| {
                        if cfg.non_saturating {
                            (d - 1.0) / batch as f64
                        } else {
                            -d / batch as f64
                        }
                    })
                    .collect(),
            )?;
            let through_disc = disc.backward_from(&tape_d, &grad_logit, disc_logit_boundary)?;
            let grads_gen = gen.backward(&tape_g, &through_disc.input_grad)?;
            adam_g.step(&mut gen, &grads_gen)?;
        }
    }

    // Telemetry: train-mode scores on a fresh probe batch, matching the
    // statistics regime the networks were optimized in.
    let idx = cursor.next_batch(&mut rng, batch);
    let probe_refs: Vec<&Tensor> = idx.iter().map(|&i| &data[i]).collect();
    let probe = stack(&probe_refs)?;
    let real_score = mean_score(disc.forward_tape(&probe, Mode::Train)?.output());
    let z = sample_latent(&mut rng, batch, cfg.latent_dim);
    let fake = gen.forward_tape(&z, Mode::Train)?.output().clone();
    let fake_score = mean_score(disc.forward_tape(&fake, Mode::Train)?.output());

    Ok((
        gen,
        disc,
        GanTelemetry {
            real_score,
            fake_score,
            final_disc_loss,
            final_gen_loss,
        },
    ))
}

/// Encoder training (stage 2): minimizes the hybrid distortion through the
/// frozen decoder. The decoder runs in eval mode (its running statistics
/// define the deployed synthesis transform) and its parameters are never
/// touched.
pub fn train_encoder(
    cfg: &GanConfig,
    loss_cfg: &LossConfig,
    decoder: &Network,
    data: &[Tensor],
) -> Result<Network> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let feat = FeatureExtractor::new(cfg.height, cfg.width, cfg.channels, loss_cfg.feature_seed)?;
    let mut encoder = Network::init(
        encoder_specs(cfg),
        vec![cfg.channels, cfg.height, cfg.width],
        mix_seed(cfg.seed, 4),
        Init::Dcgan,
    )?;
    let mut adam = Adam::dcgan(&encoder);
    let mut rng = SplitMix64::new(mix_seed(cfg.seed, 5));
    let mut cursor = BatchCursor::new(data.len());
    let batch = cfg.batch_size.min(data.len());
    // A decoder clone provides tapes; eval mode leaves its buffers (and of
    // course parameters) untouched, preserving the frozen contract.
    let mut dec = decoder.clone();

    for iter in 0..cfg.encoder_iters {
        let idx = cursor.next_batch(&mut rng, batch);
        let refs: Vec<&Tensor> = idx.iter().map(|&i| &data[i]).collect();
        let x = stack(&refs)?;
        let tape_e = encoder.forward_tape(&x, Mode::Train)?;
        let z = tape_e.output().clone();
        let tape_d = dec.forward_tape(&z, Mode::Eval)?;
        let xhat = tape_d.output().clone();
        let (loss, grad_xhat) = distortion_loss(&x, &xhat, loss_cfg, &feat)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                reason: "non-finite distortion loss".into(),
            });
        }
        let through_dec = dec.backward(&tape_d, &grad_xhat)?;
        let grads_enc = encoder.backward(&tape_e, &through_dec.input_grad)?;
        adam.step(&mut encoder, &grads_enc)?;
    }
    debug_assert_eq!(decoder, &dec, "frozen decoder must not change");
    Ok(encoder)
}

/// Classifier training parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub classes: usize,
    pub iters: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub base_channels: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            classes: 3,
            iters: 600,
            batch_size: 16,
            seed: 11,
            base_channels: 8,
        }
    }
}

/// Softmax probabilities from a logit row.
fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Trains a softmax classifier over labeled [C, H, W] tensors with
/// cross-entropy. Labels must cover >= 2 distinct classes.
pub fn train_classifier(
    cfg: &ClassifierConfig,
    gan_cfg: &GanConfig,
    data: &[(Tensor, u8)],
) -> Result<Network> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let distinct: std::collections::BTreeSet<u8> = data.iter().map(|(_, l)| *l).collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidConfig(
            "classifier training needs >= 2 classes".into(),
        ));
    }
    if let Some(&max) = distinct.iter().next_back() {
        if max as usize >= cfg.classes {
            return Err(Error::InvalidConfig(format!(
                "label {max} outside {} classes",
                cfg.classes
            )));
        }
    }
    let mut arch_cfg = gan_cfg.clone();
    arch_cfg.base_channels = cfg.base_channels;
    let mut net = Network::init(
        classifier_specs(&arch_cfg, cfg.classes),
        vec![gan_cfg.channels, gan_cfg.height, gan_cfg.width],
        mix_seed(cfg.seed, 6),
        Init::Dcgan,
    )?;
    let mut adam = Adam::new(&net, 0.0005, 0.9, 0.999, 1e-8);
    let mut rng = SplitMix64::new(mix_seed(cfg.seed, 7));
    let mut cursor = BatchCursor::new(data.len());
    let batch = cfg.batch_size.min(data.len());

    for iter in 0..cfg.iters {
        let idx = cursor.next_batch(&mut rng, batch);
        let refs: Vec<&Tensor> = idx.iter().map(|&i| &data[i].0).collect();
        let x = stack(&refs)?;
        let tape = net.forward_tape(&x, Mode::Train)?;
        let logits = tape.output();
        let k = cfg.classes;
        let mut grad = vec![0.0; logits.len()];
        let mut loss = 0.0;
        for (s, &i) in idx.iter().enumerate() {
            let row = &logits.values()[s * k..(s + 1) * k];
            let p = softmax(row);
            let label = data[i].1 as usize;
            loss -= (p[label] + 1e-12).ln() / batch as f64;
            for j in 0..k {
                let target = if j == label { 1.0 } else { 0.0 };
                grad[s * k + j] = (p[j] - target) / batch as f64;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                reason: "non-finite classifier loss".into(),
            });
        }
        let grads = net.backward(&tape, &Tensor::new(logits.shape().to_vec(), grad)?)?;
        adam.step(&mut net, &grads)?;
    }
    Ok(net)
}

/// Predicted class index (argmax of logits) for one [C, H, W] sample.
pub fn classify(net: &Network, x: &Tensor) -> Result<usize> {
    let batched = Tensor::new(
        {
            let mut s = vec![1];
            s.extend_from_slice(x.shape());
            s
        },
        x.values().to_vec(),
    )?;
    let logits = net.forward(&batched)?;
    let mut best = 0usize;
    for (i, &v) in logits.values().iter().enumerate() {
        if v > logits.values()[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Fraction of samples the classifier labels correctly.
pub fn classifier_accuracy(net: &Network, data: &[(Tensor, u8)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for (x, label) in data {
        if classify(net, x)? == *label as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// A trained codec: encoder, frozen decoder, discriminator, and the configs
/// that shaped them. Parameters are stored rounded to f32 so the in-memory
/// model, the serialized NB01 bytes, and the content hash always agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub encoder: Network,
    pub decoder: Network,
    pub discriminator: Network,
    pub gan: GanConfig,
    pub loss: LossConfig,
    pub dataset_id: String,
    hash: u64,
}

fn round_network(net: &mut Network) {
    for layer in net.layers_mut() {
        for p in layer.params.iter_mut() {
            p.round_to_f32();
        }
        for b in layer.buffers.iter_mut() {
            b.round_to_f32();
        }
    }
}

fn push_network_tensors(out: &mut Vec<(Vec<usize>, Vec<f32>)>, net: &Network) {
    for layer in net.layers() {
        for t in layer.params.iter().chain(layer.buffers.iter()) {
            out.push((
                t.shape().to_vec(),
                t.values().iter().map(|&v| v as f32).collect(),
            ));
        }
    }
}

fn load_network_tensors(
    net: &mut Network,
    tensors: &[(Vec<usize>, Vec<f32>)],
    cursor: &mut usize,
) -> Result<()> {
    for layer in net.layers_mut() {
        for t in layer.params.iter_mut().chain(layer.buffers.iter_mut()) {
            let (shape, values) = tensors.get(*cursor).ok_or(Error::Truncated {
                needed: *cursor + 1,
                available: tensors.len(),
            })?;
            if shape != t.shape() {
                return Err(Error::ShapeMismatch {
                    context: "bundle tensor",
                    expected: t.shape().to_vec(),
                    actual: shape.clone(),
                });
            }
            for (dst, &src) in t.values_mut().iter_mut().zip(values) {
                *dst = src as f64;
            }
            *cursor += 1;
        }
    }
    Ok(())
}

impl ModelBundle {
    pub fn new(
        mut encoder: Network,
        mut decoder: Network,
        mut discriminator: Network,
        gan: GanConfig,
        loss: LossConfig,
        dataset_id: String,
    ) -> Result<ModelBundle> {
        round_network(&mut encoder);
        round_network(&mut decoder);
        round_network(&mut discriminator);
        let mut bundle = ModelBundle {
            encoder,
            decoder,
            discriminator,
            gan,
            loss,
            dataset_id,
            hash: 0,
        };
        bundle.hash = bundle.to_nb01().content_hash();
        Ok(bundle)
    }

    /// Content hash of the serialized bundle; carried in NC01/MC01 headers.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn latent_dim(&self) -> usize {
        self.gan.latent_dim
    }

    fn to_nb01(&self) -> Nb01Bundle {
        let g = &self.gan;
        let l = &self.loss;
        let metadata = format!(
            "kind=ncode-model\nlatent_dim={}\nheight={}\nwidth={}\nchannels={}\n\
             batch_size={}\ngan_iters={}\nencoder_iters={}\ndisc_steps={}\n\
             gen_steps={}\nseed={}\n\
             base_channels={}\nnon_saturating={}\nlambda1={}\nlambda2={}\n\
             feature_seed={}\ndataset={}\n",
            g.latent_dim,
            g.height,
            g.width,
            g.channels,
            g.batch_size,
            g.gan_iters,
            g.encoder_iters,
            g.disc_steps,
            g.gen_steps,
            g.seed,
            g.base_channels,
            if g.non_saturating { 1 } else { 0 },
            l.lambda1,
            l.lambda2,
            l.feature_seed,
            self.dataset_id,
        );
        let mut tensors = Vec::new();
        push_network_tensors(&mut tensors, &self.encoder);
        push_network_tensors(&mut tensors, &self.decoder);
        push_network_tensors(&mut tensors, &self.discriminator);
        Nb01Bundle { metadata, tensors }
    }

    pub fn serialize(&self) -> Vec<u8> {
        write_bundle(&self.to_nb01())
    }

    pub fn deserialize(bytes: &[u8]) -> Result<ModelBundle> {
        let nb = read_bundle(bytes)?;
        let get = |key: &str| -> Result<&str> {
            nb.meta(key).ok_or_else(|| Error::Format {
                format: "NB01",
                detail: format!("missing metadata key {key}"),
            })
        };
        if get("kind")? != "ncode-model" {
            return Err(Error::Format {
                format: "NB01",
                detail: format!("expected kind=ncode-model, got {}", get("kind")?),
            });
        }
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| Error::Format {
                format: "NB01",
                detail: format!("bad integer for {key}"),
            })
        };
        let parse_u64 = |key: &str| -> Result<u64> {
            get(key)?.parse().map_err(|_| Error::Format {
                format: "NB01",
                detail: format!("bad integer for {key}"),
            })
        };
        let parse_f64 = |key: &str| -> Result<f64> {
            get(key)?.parse().map_err(|_| Error::Format {
                format: "NB01",
                detail: format!("bad real for {key}"),
            })
        };
        let gan = GanConfig {
            latent_dim: parse_usize("latent_dim")?,
            height: parse_usize("height")?,
            width: parse_usize("width")?,
            channels: parse_usize("channels")?,
            batch_size: parse_usize("batch_size")?,
            gan_iters: parse_usize("gan_iters")?,
            encoder_iters: parse_usize("encoder_iters")?,
            disc_steps: parse_usize("disc_steps")?,
            gen_steps: parse_usize("gen_steps")?,
            seed: parse_u64("seed")?,
            base_channels: parse_usize("base_channels")?,
            non_saturating: get("non_saturating")? == "1",
        };
        gan.validate()?;
        let loss = LossConfig {
            lambda1: parse_f64("lambda1")?,
            lambda2: parse_f64("lambda2")?,
            feature_seed: parse_u64("feature_seed")?,
        };
        let dataset_id = get("dataset")?.to_string();

        let mut encoder = Network::init(
            encoder_specs(&gan),
            vec![gan.channels, gan.height, gan.width],
            0,
            Init::Dcgan,
        )?;
        let mut decoder = Network::init(
            decoder_specs(&gan),
            vec![gan.latent_dim],
            0,
            Init::Dcgan,
        )?;
        let mut discriminator = Network::init(
            discriminator_specs(&gan),
            vec![gan.channels, gan.height, gan.width],
            0,
            Init::Dcgan,
        )?;
        let mut cursor = 0usize;
        load_network_tensors(&mut encoder, &nb.tensors, &mut cursor)?;
        load_network_tensors(&mut decoder, &nb.tensors, &mut cursor)?;
        load_network_tensors(&mut discriminator, &nb.tensors, &mut cursor)?;
        if cursor != nb.tensors.len() {
            return Err(Error::Format {
                format: "NB01",
                detail: format!("{} unused tensors", nb.tensors.len() - cursor),
            });
        }
        ModelBundle::new(encoder, decoder, discriminator, gan, loss, dataset_id)
    }

    /// Encodes one [C, H, W] image tensor (values in [-1, 1]) to a latent.
    pub fn encode(&self, x: &Tensor) -> Result<LatentVector> {
        let expected = vec![self.gan.channels, self.gan.height, self.gan.width];
        if x.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "encode input",
                expected,
                actual: x.shape().to_vec(),
            });
        }
        let batched = Tensor::new(
            {
                let mut s = vec![1];
                s.extend_from_slice(x.shape());
                s
            },
            x.values().to_vec(),
        )?;
        let z = self.encoder.forward(&batched)?;
        // tanh keeps |z| < 1 mathematically; clamp away any f32 rounding.
        let values = z.values().iter().map(|&v| v.clamp(-1.0, 1.0)).collect();
        LatentVector::new(values)
    }

    /// Decodes a latent of length M back to a [C, H, W] tensor in [-1, 1].
    pub fn decode(&self, z: &LatentVector) -> Result<Tensor> {
        if z.len() != self.gan.latent_dim {
            return Err(Error::LengthMismatch {
                context: "decode latent",
                expected: self.gan.latent_dim,
                actual: z.len(),
            });
        }
        let batched = Tensor::new(vec![1, z.len()], z.values().to_vec())?;
        let out = self.decoder.forward(&batched)?;
        let shape = out.shape()[1..].to_vec();
        out.reshape(shape)
    }
}

/// A trained classifier plus the geometry it expects, NB01-serializable.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierBundle {
    pub net: Network,
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ClassifierBundle {
    pub fn new(mut net: Network, classes: usize, height: usize, width: usize, channels: usize) -> ClassifierBundle {
        round_network(&mut net);
        ClassifierBundle {
            net,
            classes,
            height,
            width,
            channels,
        }
    }

    pub fn serialize(&self, base_channels: usize) -> Vec<u8> {
        let metadata = format!(
            "kind=classifier\nclasses={}\nheight={}\nwidth={}\nchannels={}\nbase_channels={base_channels}\n",
            self.classes, self.height, self.width, self.channels
        );
        let mut tensors = Vec::new();
        push_network_tensors(&mut tensors, &self.net);
        write_bundle(&Nb01Bundle { metadata, tensors })
    }

    pub fn deserialize(bytes: &[u8]) -> Result<ClassifierBundle> {
        let nb = read_bundle(bytes)?;
        let get = |key: &str| -> Result<&str> {
            nb.meta(key).ok_or_else(|| Error::Format {
                format: "NB01",
                detail: format!("missing metadata key {key}"),
            })
        };
        if get("kind")? != "classifier" {
            return Err(Error::Format {
                format: "NB01",
                detail: "not a classifier bundle".into(),
            });
        }
        let parse = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| Error::Format {
                format: "NB01",
                detail: format!("bad integer for {key}"),
            })
        };
        let (classes, height, width, channels, base_channels) = (
            parse("classes")?,
            parse("height")?,
            parse("width")?,
            parse("channels")?,
            parse("base_channels")?,
        );
        let mut arch = GanConfig::new(1, height, width, channels);
        arch.base_channels = base_channels;
        let mut net = Network::init(
            classifier_specs(&arch, classes),
            vec![channels, height, width],
            0,
            Init::Dcgan,
        )?;
        let mut cursor = 0usize;
        load_network_tensors(&mut net, &nb.tensors, &mut cursor)?;
        if cursor != nb.tensors.len() {
            return Err(Error::Format {
                format: "NB01",
                detail: format!("{} unused tensors", nb.tensors.len() - cursor),
            });
        }
        Ok(ClassifierBundle::new(net, classes, height, width, channels))
    }
}
