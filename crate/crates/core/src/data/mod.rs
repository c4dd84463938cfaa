//! Datasets: the in-memory image/video types, deterministic synthetic
//! generators, netpbm and CIFAR-10 readers, and train/eval splitting.

pub mod cifar;
pub mod netpbm;
pub mod shapes;

pub use cifar::read_cifar10;
pub use netpbm::{read_pgm, read_ppm, read_video_dir, write_pgm, write_ppm, write_video_dir};
pub use shapes::{gen_motion_video, gen_shapes, ShapeClass, ShapeParams, ShapeSample};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// 8-bit image, planar layout: `pixels[c * H * W + y * W + x]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Image> {
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidConfig(format!(
                "bad image geometry {height}x{width}x{channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::LengthMismatch {
                context: "image pixels",
                expected: height * width * channels,
                actual: pixels.len(),
            });
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn blank(height: usize, width: usize, channels: usize) -> Result<Image> {
        Image::new(height, width, channels, vec![0; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> u8 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: u8) {
        self.pixels[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
    }

    /// [0,255] bytes to a [C,H,W] tensor in [-1,1]: v = 2p/255 - 1.
    pub fn to_tensor(&self) -> Tensor {
        let values = self
            .pixels
            .iter()
            .map(|&p| 2.0 * p as f64 / 255.0 - 1.0)
            .collect();
        Tensor::new(vec![self.channels, self.height, self.width], values).unwrap()
    }

    /// [-1,1] tensor back to bytes: p = round((v+1)/2 * 255), clamped.
    /// Accepts [C,H,W] shape.
    pub fn from_tensor(t: &Tensor) -> Result<Image> {
        let shape = t.shape();
        if shape.len() != 3 {
            return Err(Error::ShapeMismatch {
                context: "image from tensor",
                expected: vec![0, 0, 0],
                actual: shape.to_vec(),
            });
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let pixels = t
            .values()
            .iter()
            .map(|&v| {
                let p = ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0).round();
                p.clamp(0.0, 255.0) as u8
            })
            .collect();
        Image::new(h, w, c, pixels)
    }
}

/// Ordered frames with uniform dimensions. The frame rate is a metadata tag
/// only; nothing in the codec depends on it.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Image>,
    pub frame_rate: f64,
}

impl VideoSequence {
    pub fn new(frames: Vec<Image>, frame_rate: f64) -> Result<VideoSequence> {
        let first = frames.first().ok_or(Error::EmptyDataset)?;
        let (h, w, c) = (first.height(), first.width(), first.channels());
        for f in &frames {
            if f.height() != h || f.width() != w || f.channels() != c {
                return Err(Error::ShapeMismatch {
                    context: "video frame dims",
                    expected: vec![c, h, w],
                    actual: vec![f.channels(), f.height(), f.width()],
                });
            }
        }
        Ok(VideoSequence { frames, frame_rate })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Deterministic 90/10 image split by seeded shuffle. Needs >= 4 items so
/// both partitions are non-empty.
pub fn split_images<T: Clone>(items: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 4 {
        return Err(Error::InvalidConfig(format!(
            "image split needs >= 4 items, got {}",
            items.len()
        )));
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut idx);
    let n_train = items.len() * 9 / 10;
    let n_train = n_train.max(1).min(items.len() - 1);
    let train = idx[..n_train].iter().map(|&i| items[i].clone()).collect();
    let eval = idx[n_train..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, eval))
}

/// The video split rule: whole duration of the first 75% of videos for
/// training; of the remaining 25%, the first half of each video's frames
/// (odd count 2k+1 gives the first half k+1 frames) also trains, and the
/// second half is held out for evaluation. Videos are taken in input order.
pub fn split_videos(
    videos: &[VideoSequence],
) -> Result<(Vec<VideoSequence>, Vec<VideoSequence>)> {
    if videos.len() < 4 {
        return Err(Error::InvalidConfig(format!(
            "video split needs >= 4 sequences, got {}",
            videos.len()
        )));
    }
    let n_whole = videos.len() * 3 / 4;
    let mut train: Vec<VideoSequence> = videos[..n_whole].to_vec();
    let mut eval = Vec::new();
    for v in &videos[n_whole..] {
        let half = (v.len() + 1) / 2; // first half gets the extra frame
        if half == v.len() {
            // 1-frame video: nothing left to hold out; train on it whole.
            train.push(v.clone());
            continue;
        }
        train.push(VideoSequence::new(v.frames()[..half].to_vec(), v.frame_rate)?);
        eval.push(VideoSequence::new(v.frames()[half..].to_vec(), v.frame_rate)?);
    }
    if eval.is_empty() {
        return Err(Error::InvalidConfig(
            "video split produced an empty eval set (videos too short)".into(),
        ));
    }
    Ok((train, eval))
}
