//! `gencomp` — command-line frontend for the generative compression codec.
//!
//! Subcommands cover the full paper workflow: synthetic data generation,
//! two-stage training, image (NC01) and video (MC01) coding, a seeded
//! bit-flip channel, rate/quality evaluation, the robustness sweep, and the
//! classifier probe. Every command is deterministic given its seeds; errors
//! exit nonzero with a single `error: ...` line on stderr.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use gencomp_core::channel::{corrupt, corrupt_payload, ChannelModel, Scope};
use gencomp_core::container::{
    read_bundle, read_mc, read_nc, write_mc, write_nc, MC_HEADER_BYTES, MC_MAGIC, NB_MAGIC,
    NC_HEADER_BYTES, NC_MAGIC,
};
use gencomp_core::data::netpbm::{read_image, read_video_dir, write_image, write_video_dir};
use gencomp_core::data::{gen_motion_video, gen_shapes, Image};
use gencomp_core::models::{
    train_classifier, train_encoder, train_gan, ClassifierBundle, ClassifierConfig, GanConfig,
    LossConfig, ModelBundle,
};
use gencomp_core::pipeline::{
    classifier_probe, eval_csv, eval_run, mcode_decode, mcode_encode, ncode_decode, ncode_encode,
    parse_specs, robustness_csv, robustness_sweep,
};
use gencomp_core::{Error, QuantSpec};

#[derive(Parser)]
#[command(
    name = "gencomp",
    about = "Generative compression codec: NCode images, MCode video",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Shapes,
    Motion,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (labeled shapes, or motion videos).
    GenData {
        #[arg(long, value_enum)]
        kind: DataKind,
        /// Number of images (shapes) or video clips (motion).
        #[arg(long)]
        count: usize,
        /// Square image side in pixels (power of two >= 16 for training).
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the two-stage codec (GAN pre-training, then the encoder).
    Train {
        /// Directory of PGM/PPM training images.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        latent_dim: usize,
        /// Iterations for each training stage.
        #[arg(long)]
        iters: usize,
        #[arg(long)]
        batch: usize,
        #[arg(long)]
        seed: u64,
        /// Pixel-loss weight.
        #[arg(long)]
        lambda1: f64,
        /// Perceptual-loss weight.
        #[arg(long)]
        lambda2: f64,
        /// Discriminator updates per adversarial iteration.
        #[arg(long, default_value_t = 1)]
        disc_steps: usize,
        /// Generator updates per adversarial iteration.
        #[arg(long, default_value_t = 1)]
        gen_steps: usize,
        /// Output NB01 model bundle.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the independent classifier used by `probe`.
    TrainClassifier {
        /// Directory with images and a labels.csv file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        iters: usize,
        #[arg(long)]
        batch: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode one image to an NC01 bitstream.
    Encode {
        #[arg(long)]
        model: PathBuf,
        /// Bits per latent entry (1..=8).
        #[arg(long)]
        bits: u8,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode an NC01 bitstream back to an image.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Decode even if the stream's model hash does not match.
        #[arg(long)]
        force: bool,
    },
    /// Encode a directory of frames to an MC01 bitstream.
    EncodeVideo {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bits: u8,
        /// Keyframe stride N (frame count must satisfy F = (K-1)*N + 1).
        #[arg(long)]
        stride: u8,
        /// Huffman-code the delta records.
        #[arg(long)]
        huffman: bool,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode an MC01 bitstream to a directory of frames.
    DecodeVideo {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Rate/quality table over a directory of eval images.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Operating points as M:b pairs, e.g. 100:5,25:4,25:2.
        #[arg(long)]
        specs: String,
        /// Output CSV path; a .json twin is written alongside.
        #[arg(long)]
        out: PathBuf,
    },
    /// Flip payload bits of an NC01/MC01 file at a given error rate.
    Channel {
        /// Per-bit flip probability in [0, 1].
        #[arg(long)]
        ber: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Corrupt the header too, not just the payload.
        #[arg(long)]
        whole_file: bool,
    },
    /// PSNR/SSIM vs bit error rate curve on an eval set.
    Robustness {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        bits: u8,
        /// Comma-separated error rates, e.g. 0,1e-4,1e-3,1e-2.
        #[arg(long)]
        bers: String,
        /// Trials per image per rate.
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classifier accuracy on originals vs pipeline reconstructions.
    Probe {
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bits: u8,
        /// Directory with images and a labels.csv file.
        #[arg(long)]
        data: PathBuf,
    },
    /// Print the parsed header of an NC01/MC01/NB01 file.
    Info {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

/// Channel seed used by `robustness` (the subcommand takes no seed flag;
/// the value is fixed so curves are reproducible).
const ROBUSTNESS_SEED: u64 = 7;
/// Frames per generated motion clip: (25-1) divides by strides 1,2,3,4,6,8.
const MOTION_FRAMES: usize = 25;

fn main() {
    // Die quietly on a closed pipe (`gencomp info | head`) instead of
    // panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

/// All images in a directory (by extension .pgm/.ppm), sorted by file name.
fn load_images(dir: &Path) -> Result<Vec<(String, Image)>, Error> {
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".pgm") || name.ends_with(".ppm") {
            names.push(name);
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::EmptyDataset);
    }
    names
        .into_iter()
        .map(|n| Ok((n.clone(), read_image(dir.join(n))?)))
        .collect()
}

/// Reads `labels.csv` (`file,label` header plus one row per image) and the
/// images it names.
fn load_labeled(dir: &Path) -> Result<Vec<(Image, u8)>, Error> {
    let csv = fs::read_to_string(dir.join("labels.csv"))?;
    let mut out = Vec::new();
    for (i, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "file,label") {
            continue;
        }
        let (file, label) = line.split_once(',').ok_or_else(|| Error::Format {
            format: "labels.csv",
            detail: format!("line {}: expected file,label", i + 1),
        })?;
        let label: u8 = label.trim().parse().map_err(|_| Error::Format {
            format: "labels.csv",
            detail: format!("line {}: bad label {label:?}", i + 1),
        })?;
        out.push((read_image(dir.join(file.trim()))?, label));
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

fn load_bundle(path: &Path) -> Result<ModelBundle, Error> {
    ModelBundle::deserialize(&fs::read(path)?)
}

fn quant_spec(bundle: &ModelBundle, bits: u8) -> Result<QuantSpec, Error> {
    QuantSpec::new(bits, bundle.latent_dim())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData {
            kind,
            count,
            size,
            seed,
            out,
        } => {
            fs::create_dir_all(&out)?;
            match kind {
                DataKind::Shapes => {
                    let samples = gen_shapes(count, size, 1, seed)?;
                    let mut labels = String::from("file,label\n");
                    for (i, s) in samples.iter().enumerate() {
                        let name = format!("shape_{:06}.pgm", i + 1);
                        write_image(out.join(&name), &s.image)?;
                        labels.push_str(&format!("{name},{}\n", s.label));
                    }
                    fs::write(out.join("labels.csv"), labels)?;
                    println!("wrote {count} shape images + labels.csv to {}", out.display());
                }
                DataKind::Motion => {
                    for i in 0..count {
                        let clip = gen_motion_video(
                            MOTION_FRAMES,
                            size,
                            1,
                            seed.wrapping_add(i as u64),
                        )?;
                        let dir = out.join(format!("video_{:03}", i + 1));
                        fs::create_dir_all(&dir)?;
                        write_video_dir(&dir, &clip)?;
                    }
                    println!(
                        "wrote {count} motion clips of {MOTION_FRAMES} frames to {}",
                        out.display()
                    );
                }
            }
            Ok(())
        }

        Command::Train {
            data,
            latent_dim,
            iters,
            batch,
            seed,
            lambda1,
            lambda2,
            disc_steps,
            gen_steps,
            out,
        } => {
            let images = load_images(&data)?;
            let first = &images[0].1;
            let mut cfg = GanConfig::new(latent_dim, first.height(), first.width(), first.channels());
            cfg.batch_size = batch;
            cfg.gan_iters = iters;
            cfg.encoder_iters = iters;
            cfg.disc_steps = disc_steps;
            cfg.gen_steps = gen_steps;
            cfg.seed = seed;
            let loss = LossConfig {
                lambda1,
                lambda2,
                ..LossConfig::default()
            };
            let tensors: Vec<_> = images.iter().map(|(_, img)| img.to_tensor()).collect();
            eprintln!(
                "training: {} images {}x{}x{}, M={latent_dim}, {iters}+{iters} iters ({disc_steps} disc : {gen_steps} gen)",
                tensors.len(),
                first.channels(),
                first.height(),
                first.width()
            );
            let (decoder, disc, telemetry) = train_gan(&cfg, &tensors)?;
            eprintln!(
                "gan done: d(real)={:.3} d(fake)={:.3}",
                telemetry.real_score, telemetry.fake_score
            );
            let encoder = train_encoder(&cfg, &loss, &decoder, &tensors)?;
            let dataset_id = data
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "unnamed".into());
            let bundle = ModelBundle::new(encoder, decoder, disc, cfg, loss, dataset_id)?;
            fs::write(&out, bundle.serialize())?;
            println!(
                "model written to {} (hash 0x{:016x})",
                out.display(),
                bundle.hash()
            );
            Ok(())
        }

        Command::TrainClassifier {
            data,
            classes,
            iters,
            batch,
            seed,
            out,
        } => {
            let labeled = load_labeled(&data)?;
            let first = &labeled[0].0;
            let gan_cfg = GanConfig::new(1, first.height(), first.width(), first.channels());
            let cfg = ClassifierConfig {
                classes,
                iters,
                batch_size: batch,
                seed,
                ..ClassifierConfig::default()
            };
            let tensors: Vec<_> = labeled.iter().map(|(i, l)| (i.to_tensor(), *l)).collect();
            let net = train_classifier(&cfg, &gan_cfg, &tensors)?;
            let bundle = ClassifierBundle::new(
                net,
                classes,
                first.height(),
                first.width(),
                first.channels(),
            );
            let acc = classifier_probe_accuracy(&bundle, &labeled)?;
            fs::write(&out, bundle.serialize(cfg.base_channels))?;
            println!(
                "classifier written to {} (train accuracy {acc:.4})",
                out.display()
            );
            Ok(())
        }

        Command::Encode {
            model,
            bits,
            input,
            out,
        } => {
            let bundle = load_bundle(&model)?;
            let image = read_image(&input)?;
            let stream = ncode_encode(&bundle, &image, quant_spec(&bundle, bits)?)?;
            let bytes = write_nc(&stream);
            fs::write(&out, &bytes)?;
            println!(
                "{} -> {} ({} payload bits, {} bytes on disk)",
                input.display(),
                out.display(),
                stream.compressed_size_bits(),
                bytes.len()
            );
            Ok(())
        }

        Command::Decode {
            model,
            input,
            out,
            force,
        } => {
            let bundle = load_bundle(&model)?;
            let stream = read_nc(&fs::read(&input)?)?;
            let image = ncode_decode(&bundle, &stream, force)?;
            write_image(&out, &image)?;
            println!("{} -> {}", input.display(), out.display());
            Ok(())
        }

        Command::EncodeVideo {
            model,
            bits,
            stride,
            huffman,
            input,
            out,
        } => {
            let bundle = load_bundle(&model)?;
            let video = read_video_dir(&input)?;
            let stream = mcode_encode(&bundle, &video, quant_spec(&bundle, bits)?, stride, huffman)?;
            let bytes = write_mc(&stream)?;
            fs::write(&out, &bytes)?;
            println!(
                "{} frames -> {} ({} keyframes, huffman {}, {} body bits)",
                video.frames().len(),
                out.display(),
                stream.keyframe_count(),
                if huffman { "on" } else { "off" },
                stream.compressed_size_bits()
            );
            Ok(())
        }

        Command::DecodeVideo {
            model,
            input,
            out,
            force,
        } => {
            let bundle = load_bundle(&model)?;
            let stream = read_mc(&fs::read(&input)?)?;
            let video = mcode_decode(&bundle, &stream, force)?;
            fs::create_dir_all(&out)?;
            write_video_dir(&out, &video)?;
            println!("{} -> {} frames in {}", input.display(), video.frames().len(), out.display());
            Ok(())
        }

        Command::Eval {
            model,
            data,
            specs,
            out,
        } => {
            let bundle = load_bundle(&model)?;
            let images: Vec<Image> = load_images(&data)?.into_iter().map(|(_, i)| i).collect();
            let specs = parse_specs(&specs)?;
            let original_bpp = 8.0 * bundle.gan.channels as f64;
            let rows = eval_run(&bundle, &images, &specs, original_bpp)?;
            let csv = eval_csv(&rows);
            fs::write(&out, &csv)?;
            let json = serde_json::Value::Array(
                rows.iter()
                    .map(|r| {
                        serde_json::json!({
                            "latent_dim": r.spec.latent_dim,
                            "bits": r.spec.bits,
                            "psnr_db": r.report.psnr_db,
                            "ssim": r.report.ssim,
                            "bpp": r.report.bpp,
                            "eta": r.report.eta,
                            "samples": r.report.samples,
                        })
                    })
                    .collect(),
            );
            let json_path = out.with_extension("json");
            let pretty = serde_json::to_string_pretty(&json).map_err(|e| Error::Format {
                format: "json",
                detail: e.to_string(),
            })?;
            fs::write(&json_path, pretty)?;
            print!("{csv}");
            println!("written to {} and {}", out.display(), json_path.display());
            Ok(())
        }

        Command::Channel {
            ber,
            seed,
            input,
            out,
            whole_file,
        } => {
            let bytes = fs::read(&input)?;
            let mut model = ChannelModel::new(ber, seed)?;
            let noisy = if whole_file {
                model.scope = Scope::WholeFile;
                corrupt(&bytes, &model)
            } else {
                let offset = match bytes.get(..4) {
                    Some(m) if m == NC_MAGIC => NC_HEADER_BYTES,
                    Some(m) if m == MC_MAGIC => MC_HEADER_BYTES,
                    _ => {
                        return Err(Error::Format {
                            format: "channel",
                            detail: "input is neither NC01 nor MC01 (use --whole-file for raw bytes)"
                                .into(),
                        })
                    }
                };
                corrupt_payload(&bytes, offset, &model)
            };
            fs::write(&out, &noisy)?;
            let flipped = bytes
                .iter()
                .zip(&noisy)
                .map(|(a, b)| (a ^ b).count_ones() as u64)
                .sum::<u64>();
            println!(
                "{} -> {} ({} of {} bits flipped at ber {ber:e})",
                input.display(),
                out.display(),
                flipped,
                8 * bytes.len()
            );
            Ok(())
        }

        Command::Robustness {
            model,
            data,
            bits,
            bers,
            trials,
            out,
        } => {
            let bundle = load_bundle(&model)?;
            let images: Vec<Image> = load_images(&data)?.into_iter().map(|(_, i)| i).collect();
            let mut epsilons = Vec::new();
            for part in bers.split(',') {
                epsilons.push(part.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("bad error rate '{part}'"))
                })?);
            }
            let points = robustness_sweep(
                &bundle,
                &images,
                quant_spec(&bundle, bits)?,
                &epsilons,
                trials,
                ROBUSTNESS_SEED,
            )?;
            let csv = robustness_csv(&points);
            fs::write(&out, &csv)?;
            print!("{csv}");
            println!("written to {}", out.display());
            Ok(())
        }

        Command::Probe {
            classifier,
            model,
            bits,
            data,
        } => {
            let clf = ClassifierBundle::deserialize(&fs::read(&classifier)?)?;
            let bundle = load_bundle(&model)?;
            let labeled = load_labeled(&data)?;
            let clean = classifier_probe(&clf.net, &bundle, None, &labeled)?;
            let lossy = classifier_probe(
                &clf.net,
                &bundle,
                Some(quant_spec(&bundle, bits)?),
                &labeled,
            )?;
            println!("accuracy uncompressed = {clean:.4}");
            println!("accuracy ncode(M={},b={bits}) = {lossy:.4}", bundle.latent_dim());
            Ok(())
        }

        Command::Info { input } => {
            let bytes = fs::read(&input)?;
            match bytes.get(..4) {
                Some(m) if m == NC_MAGIC => {
                    let s = read_nc(&bytes)?;
                    println!("format: NC01");
                    println!("latent_dim: {}", s.spec.latent_dim());
                    println!("bits: {}", s.spec.bits());
                    println!("height: {}", s.height);
                    println!("width: {}", s.width);
                    println!("channels: {}", s.channels);
                    println!("model_hash: 0x{:016x}", s.model_hash);
                    println!("payload_bytes: {}", s.payload.len());
                    println!("compressed_bits: {}", s.compressed_size_bits());
                }
                Some(m) if m == MC_MAGIC => {
                    let s = read_mc(&bytes)?;
                    println!("format: MC01");
                    println!("latent_dim: {}", s.spec.latent_dim());
                    println!("bits: {}", s.spec.bits());
                    println!("stride: {}", s.stride);
                    println!("keyframes: {}", s.keyframe_count());
                    println!("total_frames: {}", s.total_frames);
                    println!("huffman: {}", s.huffman);
                    println!("model_hash: 0x{:016x}", s.model_hash);
                    println!("body_bits: {}", s.compressed_size_bits());
                }
                Some(m) if m == NB_MAGIC => {
                    let b = read_bundle(&bytes)?;
                    println!("format: NB01");
                    for line in b.metadata.lines() {
                        println!("meta.{line}");
                    }
                    println!("tensors: {}", b.tensors.len());
                    println!("content_hash: 0x{:016x}", b.content_hash());
                }
                _ => {
                    return Err(Error::Format {
                        format: "info",
                        detail: "unrecognized magic (expected NC01, MC01 or NB01)".into(),
                    })
                }
            }
            Ok(())
        }
    }
}

/// Plain accuracy of a classifier bundle over labeled images.
fn classifier_probe_accuracy(
    bundle: &ClassifierBundle,
    data: &[(Image, u8)],
) -> Result<f64, Error> {
    let tensors: Vec<_> = data.iter().map(|(i, l)| (i.to_tensor(), *l)).collect();
    gencomp_core::models::classifier_accuracy(&bundle.net, &tensors)
}
