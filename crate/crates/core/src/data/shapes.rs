//! Deterministic synthetic shape images and motion videos.
//!
//! Three shape classes (ellipse, rectangle, cross) rendered with rotation,
//! anti-aliased by 3x3 supersampling. The generative manifold is tiny
//! (~7 parameters), which is the point: a small decoder can actually learn
//! it, and "the latent captures semantics" is directly checkable.

use crate::data::{Image, VideoSequence};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Shape class labels, also the classifier's target indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Ellipse = 0,
    Rectangle = 1,
    Cross = 2,
}

impl ShapeClass {
    pub const COUNT: usize = 3;

    pub fn from_index(i: usize) -> ShapeClass {
        match i % 3 {
            0 => ShapeClass::Ellipse,
            1 => ShapeClass::Rectangle,
            _ => ShapeClass::Cross,
        }
    }
}

/// Generative parameters of one rendered shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams {
    pub class: ShapeClass,
    /// Center in pixel coordinates.
    pub cx: f64,
    pub cy: f64,
    /// Half-extents along the shape's local axes, in pixels.
    pub rx: f64,
    pub ry: f64,
    /// Rotation in radians, [0, pi).
    pub rotation: f64,
    /// Foreground / background intensities in [0, 255].
    pub fg: f64,
    pub bg: f64,
}

/// A labeled synthetic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSample {
    pub image: Image,
    pub label: u8,
    pub params: ShapeParams,
}

/// Is local point (u, v) inside the unit form of the class?
fn inside(class: ShapeClass, u: f64, v: f64, rx: f64, ry: f64) -> bool {
    match class {
        ShapeClass::Ellipse => (u / rx).powi(2) + (v / ry).powi(2) <= 1.0,
        ShapeClass::Rectangle => u.abs() <= rx && v.abs() <= ry,
        ShapeClass::Cross => {
            // A plus sign: two overlapping bars at 35% arm thickness.
            (u.abs() <= 0.35 * rx && v.abs() <= ry) || (u.abs() <= rx && v.abs() <= 0.35 * ry)
        }
    }
}

/// Renders one shape into a fresh image. 3x3 supersampled coverage blends
/// foreground over background, so edges are smooth enough for PSNR to be a
/// meaningful distortion axis.
pub fn render_shape(size: usize, channels: usize, p: &ShapeParams) -> Result<Image> {
    let mut img = Image::blank(size, size, channels)?;
    let (sin, cos) = p.rotation.sin_cos();
    for y in 0..size {
        for x in 0..size {
            let mut cover = 0.0;
            for sy in 0..3 {
                for sx in 0..3 {
                    let px = x as f64 + (sx as f64 + 0.5) / 3.0 - p.cx;
                    let py = y as f64 + (sy as f64 + 0.5) / 3.0 - p.cy;
                    // Rotate into the shape's local frame.
                    let u = cos * px + sin * py;
                    let v = -sin * px + cos * py;
                    if inside(p.class, u, v, p.rx, p.ry) {
                        cover += 1.0;
                    }
                }
            }
            cover /= 9.0;
            let val = p.bg + cover * (p.fg - p.bg);
            let byte = val.round().clamp(0.0, 255.0) as u8;
            for c in 0..channels {
                // Slight per-channel tint keeps RGB images non-degenerate.
                let tinted = if channels == 3 {
                    (val * (1.0 - 0.08 * c as f64)).round().clamp(0.0, 255.0) as u8
                } else {
                    byte
                };
                img.set(c, y, x, tinted);
            }
        }
    }
    Ok(img)
}

/// Draws shape parameters from the documented ranges. The center range is
/// derived from the sampled radii so the whole shape (including rotation)
/// stays inside the frame.
fn sample_params(rng: &mut SplitMix64, class: ShapeClass, size: usize) -> ShapeParams {
    let s = size as f64;
    let rx = rng.range_f64(0.12 * s, 0.24 * s);
    let ry = rng.range_f64(0.12 * s, 0.24 * s);
    // Half-diagonal bounds the rotated footprint for every class.
    let margin = (rx * rx + ry * ry).sqrt() + 1.5;
    let cx = rng.range_f64(margin, s - margin);
    let cy = rng.range_f64(margin, s - margin);
    let rotation = rng.range_f64(0.0, std::f64::consts::PI);
    let fg = rng.range_f64(150.0, 255.0);
    let bg = rng.range_f64(0.0, 50.0);
    ShapeParams {
        class,
        cx,
        cy,
        rx,
        ry,
        rotation,
        fg,
        bg,
    }
}

/// Deterministic labeled dataset, class-balanced to within one sample
/// (labels cycle 0,1,2,...).
pub fn gen_shapes(count: usize, size: usize, channels: usize, seed: u64) -> Result<Vec<ShapeSample>> {
    if count == 0 {
        return Err(Error::InvalidConfig("count must be >= 1".into()));
    }
    if size < 16 {
        return Err(Error::InvalidConfig(format!(
            "image size must be >= 16, got {size}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let class = ShapeClass::from_index(i);
        let params = sample_params(&mut rng, class, size);
        let image = render_shape(size, channels, &params)?;
        out.push(ShapeSample {
            image,
            label: class as u8,
            params,
        });
    }
    Ok(out)
}

/// One shape drifting along a smooth Lissajous path with slowly pulsing
/// radii — latent content changes a little per frame, so keyframe
/// interpolation (and small inter-frame deltas) are meaningful.
pub fn gen_motion_video(
    frame_count: usize,
    size: usize,
    channels: usize,
    seed: u64,
) -> Result<VideoSequence> {
    if frame_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "motion video needs >= 2 frames, got {frame_count}"
        )));
    }
    if size < 16 {
        return Err(Error::InvalidConfig(format!(
            "image size must be >= 16, got {size}"
        )));
    }
    let s = size as f64;
    let mut rng = SplitMix64::new(seed);
    let class = ShapeClass::from_index(rng.below(3));
    let rx0 = rng.range_f64(0.13 * s, 0.18 * s);
    let ry0 = rng.range_f64(0.13 * s, 0.18 * s);
    let fg = rng.range_f64(170.0, 255.0);
    let bg = rng.range_f64(0.0, 40.0);
    let rot0 = rng.range_f64(0.0, std::f64::consts::PI);
    // Path amplitude leaves room for the worst-case footprint.
    let max_r = rx0.max(ry0) * 1.1;
    let margin = max_r * std::f64::consts::SQRT_2 + 1.5;
    let amp = (s / 2.0 - margin).max(1.0);
    let phase_x = rng.range_f64(0.0, std::f64::consts::TAU);
    let phase_y = rng.range_f64(0.0, std::f64::consts::TAU);
    // Angular speed ~0.05 rad/frame: a few percent of the path per frame.
    let wx = 0.05;
    let wy = 0.035;

    let mut frames = Vec::with_capacity(frame_count);
    for t in 0..frame_count {
        let tf = t as f64;
        let params = ShapeParams {
            class,
            cx: s / 2.0 + amp * (wx * tf + phase_x).sin(),
            cy: s / 2.0 + amp * (wy * tf + phase_y).sin(),
            rx: rx0 * (1.0 + 0.1 * (0.02 * tf).sin()),
            ry: ry0 * (1.0 + 0.1 * (0.025 * tf).cos()),
            rotation: rot0 + 0.01 * tf,
            fg,
            bg,
        };
        frames.push(render_shape(size, channels, &params)?);
    }
    VideoSequence::new(frames, 25.0)
}
