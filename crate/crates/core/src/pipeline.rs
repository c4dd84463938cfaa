//! End-to-end NCode (image) and MCode (video) pipelines, plus the
//! experiment drivers: rate/quality evaluation, the bit-error robustness
//! sweep with its Huffman-fragility contrast, and the classifier probe.

use crate::channel::{corrupt_payload, ChannelModel};
use crate::container::{
    build_mc, mc_keyframes, read_mc, read_nc, write_mc, write_nc, McBitstream, NcBitstream,
    MC_HEADER_BYTES, NC_HEADER_BYTES,
};
use crate::data::{Image, VideoSequence};
use crate::error::{Error, Result};
use crate::latent::{dequantize, quantize, LatentVector, QuantSpec, QuantizedLatent};
use crate::metrics::{self, QualityReport};
use crate::models::{classify, ModelBundle};
use crate::nn::Network;
use crate::rng::mix_seed;

/// One (M', b) operating point: transmit the first `latent_dim` latent
/// coordinates at `bits` each. `latent_dim` may be below the bundle's M;
/// the receiver zero-fills the untransmitted tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalSpec {
    pub latent_dim: usize,
    pub bits: u8,
}

/// Parses the CLI spec-list syntax, e.g. `100:5,25:4,25:2`.
pub fn parse_specs(s: &str) -> Result<Vec<EvalSpec>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let (m, b) = part.split_once(':').ok_or_else(|| Error::InvalidConfig(
            format!("spec '{part}' is not of the form M:b"),
        ))?;
        let latent_dim: usize = m.trim().parse().map_err(|_| {
            Error::InvalidConfig(format!("bad latent dim in spec '{part}'"))
        })?;
        let bits: u8 = b.trim().parse().map_err(|_| {
            Error::InvalidConfig(format!("bad bit depth in spec '{part}'"))
        })?;
        out.push(EvalSpec { latent_dim, bits });
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("empty spec list".into()));
    }
    Ok(out)
}

fn check_dims(bundle: &ModelBundle, image: &Image) -> Result<()> {
    let g = &bundle.gan;
    if image.height() != g.height || image.width() != g.width || image.channels() != g.channels {
        return Err(Error::ShapeMismatch {
            context: "bundle image dims",
            expected: vec![g.channels, g.height, g.width],
            actual: vec![image.channels(), image.height(), image.width()],
        });
    }
    Ok(())
}

/// Encoder-side quantized latent for an image, truncated to `spec`'s length
/// when it is below the bundle's latent dimension.
pub fn quantized_latent(
    bundle: &ModelBundle,
    image: &Image,
    spec: QuantSpec,
) -> Result<QuantizedLatent> {
    check_dims(bundle, image)?;
    if spec.latent_dim() > bundle.latent_dim() {
        return Err(Error::LengthMismatch {
            context: "eval spec latent dim",
            expected: bundle.latent_dim(),
            actual: spec.latent_dim(),
        });
    }
    let z = bundle.encode(&image.to_tensor())?;
    let kept = LatentVector::new(z.values()[..spec.latent_dim()].to_vec())?;
    quantize(&kept, spec)
}

/// encode -> quantize -> pack: the full NCode transmit side.
pub fn ncode_encode(bundle: &ModelBundle, image: &Image, spec: QuantSpec) -> Result<NcBitstream> {
    let q = quantized_latent(bundle, image, spec)?;
    Ok(NcBitstream::from_latent(
        &q,
        image.height() as u16,
        image.width() as u16,
        image.channels() as u8,
        bundle.hash(),
    ))
}

/// Reconstructs the full-length latent from transmitted symbols,
/// zero-filling coordinates beyond a truncated spec.
fn received_latent(bundle: &ModelBundle, q: &QuantizedLatent) -> Result<LatentVector> {
    if q.spec().latent_dim() > bundle.latent_dim() {
        return Err(Error::LengthMismatch {
            context: "stream latent dim",
            expected: bundle.latent_dim(),
            actual: q.spec().latent_dim(),
        });
    }
    let mut values = dequantize(q).into_values();
    values.resize(bundle.latent_dim(), 0.0);
    LatentVector::new(values)
}

/// unpack -> dequantize -> decode: the full NCode receive side. The stream's
/// model hash must match the bundle unless `force` is set.
pub fn ncode_decode(bundle: &ModelBundle, stream: &NcBitstream, force: bool) -> Result<Image> {
    if !force && stream.model_hash != bundle.hash() {
        return Err(Error::ModelHashMismatch {
            stream: stream.model_hash,
            bundle: bundle.hash(),
        });
    }
    let g = &bundle.gan;
    if stream.height as usize != g.height
        || stream.width as usize != g.width
        || stream.channels as usize != g.channels
    {
        return Err(Error::ShapeMismatch {
            context: "stream image dims",
            expected: vec![g.channels, g.height, g.width],
            actual: vec![
                stream.channels as usize,
                stream.height as usize,
                stream.width as usize,
            ],
        });
    }
    let z = received_latent(bundle, &stream.latent()?)?;
    Image::from_tensor(&bundle.decode(&z)?)
}

/// (1 - k/N) * z_a + (k/N) * z_b, the receiver-side latent interpolation.
/// Endpoints are exact: k=0 returns z_a, k=N returns z_b.
pub fn latent_interpolate(
    z_a: &LatentVector,
    z_b: &LatentVector,
    k: usize,
    n: usize,
) -> Result<LatentVector> {
    if n == 0 || k > n {
        return Err(Error::InvalidConfig(format!(
            "interpolation step k={k} outside 0..={n}"
        )));
    }
    if z_a.len() != z_b.len() {
        return Err(Error::LengthMismatch {
            context: "latent_interpolate",
            expected: z_a.len(),
            actual: z_b.len(),
        });
    }
    let t = k as f64 / n as f64;
    let values = z_a
        .values()
        .iter()
        .zip(z_b.values())
        .map(|(&a, &b)| (1.0 - t) * a + t * b)
        .collect();
    LatentVector::new(values)
}

/// MCode transmit side: NCode every N-th frame, delta-code keyframe symbols,
/// optionally Huffman. The frame count must satisfy F = (K-1)*N + 1 (callers
/// pad the sequence otherwise).
pub fn mcode_encode(
    bundle: &ModelBundle,
    video: &VideoSequence,
    spec: QuantSpec,
    stride: u8,
    huffman: bool,
) -> Result<McBitstream> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    let f = video.frames().len();
    if (f - 1) % stride as usize != 0 {
        return Err(Error::InvalidConfig(format!(
            "{f} frames do not satisfy F=(K-1)*{stride}+1; pad the sequence"
        )));
    }
    let mut keyframes = Vec::new();
    for idx in (0..f).step_by(stride as usize) {
        keyframes.push(quantized_latent(bundle, &video.frames()[idx], spec)?);
    }
    build_mc(&keyframes, stride, huffman, bundle.hash())
}

/// MCode receive side: exact keyframe latents from the entropy path, linear
/// latent interpolation for the N-1 frames between consecutive keyframes.
pub fn mcode_decode(
    bundle: &ModelBundle,
    stream: &McBitstream,
    force: bool,
) -> Result<VideoSequence> {
    if !force && stream.model_hash != bundle.hash() {
        return Err(Error::ModelHashMismatch {
            stream: stream.model_hash,
            bundle: bundle.hash(),
        });
    }
    let keyframes = mc_keyframes(stream)?;
    let latents: Vec<LatentVector> = keyframes
        .iter()
        .map(|q| received_latent(bundle, q))
        .collect::<Result<_>>()?;
    let n = stream.stride as usize;
    let mut frames = Vec::with_capacity(stream.total_frames as usize);
    for (i, z) in latents.iter().enumerate() {
        frames.push(Image::from_tensor(&bundle.decode(z)?)?);
        if i + 1 < latents.len() {
            for k in 1..n {
                let zi = latent_interpolate(z, &latents[i + 1], k, n)?;
                frames.push(Image::from_tensor(&bundle.decode(&zi)?)?);
            }
        }
    }
    debug_assert_eq!(frames.len(), stream.total_frames as usize);
    VideoSequence::new(frames, 25.0)
}

/// One row of the rate/quality table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub spec: EvalSpec,
    pub report: QualityReport,
}

/// Mean PSNR/SSIM plus rate columns per operating point, over an eval set.
/// `original_bpp` feeds the compression factor (8 * channels for raw 8-bit
/// input; the paper's table uses the source format's figure).
pub fn eval_run(
    bundle: &ModelBundle,
    images: &[Image],
    specs: &[EvalSpec],
    original_bpp: f64,
) -> Result<Vec<EvalRow>> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows = Vec::with_capacity(specs.len());
    for &es in specs {
        let qspec = QuantSpec::new(es.bits, es.latent_dim)?;
        let mut psnr_sum = 0.0;
        let mut ssim_sum = 0.0;
        let mut payload_bits = 0;
        for img in images {
            let stream = ncode_encode(bundle, img, qspec)?;
            payload_bits = stream.compressed_size_bits();
            let decoded = ncode_decode(bundle, &stream, false)?;
            psnr_sum += metrics::psnr(img, &decoded)?;
            ssim_sum += metrics::ssim(img, &decoded)?;
        }
        let (bpp, eta) = metrics::rate(
            payload_bits,
            images[0].height(),
            images[0].width(),
            original_bpp,
        )?;
        rows.push(EvalRow {
            spec: es,
            report: QualityReport {
                psnr_db: psnr_sum / images.len() as f64,
                ssim: ssim_sum / images.len() as f64,
                bpp,
                eta,
                samples: images.len(),
            },
        });
    }
    Ok(rows)
}

/// CSV rendering of an eval table (header + one row per spec).
pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("latent_dim,bits,psnr_db,ssim,bpp,eta,samples\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.6},{:.4},{},{}\n",
            r.spec.latent_dim,
            r.spec.bits,
            r.report.psnr_db,
            r.report.ssim,
            r.report.bpp,
            r.report.eta,
            r.report.samples
        ));
    }
    out
}

/// One bit-error-rate operating point of the robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessPoint {
    pub epsilon: f64,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    /// images x trials behind the means.
    pub image_trials: usize,
}

/// The §-4.2-style sweep: encode, corrupt the NC01 payload at each epsilon,
/// decode, and average PSNR/SSIM against the originals over images x trials.
/// Fully deterministic: the channel seed for (epsilon index, image, trial)
/// is mixed from `seed`.
pub fn robustness_sweep(
    bundle: &ModelBundle,
    images: &[Image],
    spec: QuantSpec,
    epsilons: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<RobustnessPoint>> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let mut points = Vec::with_capacity(epsilons.len());
    let streams: Vec<Vec<u8>> = images
        .iter()
        .map(|img| Ok(write_nc(&ncode_encode(bundle, img, spec)?)))
        .collect::<Result<_>>()?;
    for (ei, &eps) in epsilons.iter().enumerate() {
        let mut psnr_sum = 0.0;
        let mut ssim_sum = 0.0;
        for (ii, (img, bytes)) in images.iter().zip(&streams).enumerate() {
            for t in 0..trials {
                let trial_tag = ((ei as u64) << 40) | ((ii as u64) << 20) | t as u64;
                let model = ChannelModel::new(eps, mix_seed(seed, trial_tag))?;
                let noisy = corrupt_payload(bytes, NC_HEADER_BYTES, &model);
                let decoded = ncode_decode(bundle, &read_nc(&noisy)?, false)?;
                psnr_sum += metrics::psnr(img, &decoded)?;
                ssim_sum += metrics::ssim(img, &decoded)?;
            }
        }
        let n = (images.len() * trials) as f64;
        points.push(RobustnessPoint {
            epsilon: eps,
            mean_psnr_db: psnr_sum / n,
            mean_ssim: ssim_sum / n,
            image_trials: images.len() * trials,
        });
    }
    Ok(points)
}

/// CSV rendering of a robustness curve.
pub fn robustness_csv(points: &[RobustnessPoint]) -> String {
    let mut out = String::from("epsilon,mean_psnr_db,mean_ssim,image_trials\n");
    for p in points {
        out.push_str(&format!(
            "{:e},{:.4},{:.6},{}\n",
            p.epsilon, p.mean_psnr_db, p.mean_ssim, p.image_trials
        ));
    }
    out
}

/// Outcome counts of the Huffman-fragility contrast experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragilityReport {
    pub trials: usize,
    /// Trials where parsing/decoding returned an error (desynchronized
    /// stream, invalid table, out-of-range symbol, truncation...).
    pub hard_failures: usize,
}

impl FragilityReport {
    pub fn failure_fraction(&self) -> f64 {
        self.hard_failures as f64 / self.trials as f64
    }
}

/// Corrupts an MC01 body (everything after the fixed header: table block,
/// base keyframe, delta records) at rate `epsilon` and counts trials where
/// the stream no longer decodes. Variable-length coding desynchronizes
/// under bit errors; fixed-width records do not.
pub fn mc_fragility(
    bundle: &ModelBundle,
    stream: &McBitstream,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<FragilityReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let bytes = write_mc(stream)?;
    let mut hard_failures = 0;
    for t in 0..trials {
        let model = ChannelModel::new(epsilon, mix_seed(seed, t as u64))?;
        let noisy = corrupt_payload(&bytes, MC_HEADER_BYTES, &model);
        let outcome = read_mc(&noisy).and_then(|s| mcode_decode(bundle, &s, false));
        if outcome.is_err() {
            hard_failures += 1;
        }
    }
    Ok(FragilityReport {
        trials,
        hard_failures,
    })
}

/// Classifier accuracy over a labeled image set, each image first pushed
/// through the lossy pipeline at `spec` (or left untouched when `spec` is
/// `None` — the uncompressed baseline).
pub fn classifier_probe(
    classifier: &Network,
    bundle: &ModelBundle,
    spec: Option<QuantSpec>,
    data: &[(Image, u8)],
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for (img, label) in data {
        check_dims(bundle, img)?;
        let x = match spec {
            None => img.to_tensor(),
            Some(s) => {
                let q = quantized_latent(bundle, img, s)?;
                let z = received_latent(bundle, &q)?;
                // Classify what the receiver displays: the decoded image
                // after its round trip through the 8-bit pixel domain.
                Image::from_tensor(&bundle.decode(&z)?)?.to_tensor()
            }
        };
        if classify(classifier, &x)? == *label as usize {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
