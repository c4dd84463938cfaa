//! Binary netpbm I/O: PGM (P5) and PPM (P6), 8-bit, maxval 255.
//!
//! Header comments (`#` to end of line) are tolerated on read and never
//! emitted. ASCII variants (P2/P3) are rejected. Videos are directories of
//! zero-padded numbered frames (`frame_000001.pgm`, ...).

use crate::data::{Image, VideoSequence};
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format {
        format: "netpbm",
        detail: detail.into(),
    }
}

/// Reads the next whitespace-delimited header token, skipping comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return Err(format_err("header ended early"));
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn parse_dim(token: &[u8]) -> Result<usize> {
    let s = std::str::from_utf8(token).map_err(|_| format_err("non-ASCII header token"))?;
    let v: usize = s
        .parse()
        .map_err(|_| format_err(format!("bad header number {s:?}")))?;
    if v == 0 {
        return Err(format_err("zero dimension"));
    }
    Ok(v)
}

fn parse_netpbm(bytes: &[u8], magic: &[u8; 2], channels: usize) -> Result<Image> {
    let mut pos = 0usize;
    let found = next_token(bytes, &mut pos)?;
    if found != magic {
        return Err(format_err(format!(
            "expected {} file, found magic {:?}",
            std::str::from_utf8(magic).unwrap(),
            String::from_utf8_lossy(found)
        )));
    }
    let width = parse_dim(next_token(bytes, &mut pos)?)?;
    let height = parse_dim(next_token(bytes, &mut pos)?)?;
    let maxval = parse_dim(next_token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(format_err(format!("maxval {maxval} unsupported, need 255")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(format_err("missing raster separator"));
    }
    pos += 1;
    let need = width * height * channels;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or(Error::Truncated {
            needed: pos + need,
            available: bytes.len(),
        })?;
    if pos + need != bytes.len() {
        return Err(format_err(format!(
            "{} trailing bytes after raster",
            bytes.len() - (pos + need)
        )));
    }
    // Raster is interleaved (RGB RGB ...); internal layout is planar.
    let mut pixels = vec![0u8; need];
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                pixels[(c * height + y) * width + x] = raster[(y * width + x) * channels + c];
            }
        }
    }
    Image::new(height, width, channels, pixels)
}

fn serialize_netpbm(img: &Image, magic: &str, channels: usize) -> Result<Vec<u8>> {
    if img.channels() != channels {
        return Err(format_err(format!(
            "{magic} needs {channels}-channel image, got {}",
            img.channels()
        )));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for y in 0..img.height() {
        for x in 0..img.width() {
            for c in 0..channels {
                out.push(img.get(c, y, x));
            }
        }
    }
    Ok(out)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    parse_netpbm(bytes, b"P5", 1)
}

pub fn parse_ppm(bytes: &[u8]) -> Result<Image> {
    parse_netpbm(bytes, b"P6", 3)
}

pub fn serialize_pgm(img: &Image) -> Result<Vec<u8>> {
    serialize_netpbm(img, "P5", 1)
}

pub fn serialize_ppm(img: &Image) -> Result<Vec<u8>> {
    serialize_netpbm(img, "P6", 3)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    parse_pgm(&fs::read(path)?)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    parse_ppm(&fs::read(path)?)
}

/// Reads either format, dispatching on the magic bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path)?;
    match bytes.get(..2) {
        Some(b"P5") => parse_pgm(&bytes),
        Some(b"P6") => parse_ppm(&bytes),
        _ => Err(format_err("not a binary PGM/PPM file")),
    }
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, serialize_pgm(img)?)?;
    Ok(())
}

pub fn write_ppm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, serialize_ppm(img)?)?;
    Ok(())
}

/// Writes an image in the format matching its channel count.
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    if img.channels() == 1 {
        write_pgm(path, img)
    } else {
        write_ppm(path, img)
    }
}

/// Loads `frame_000001.pgm` (or `.ppm`), `frame_000002...` until the
/// numbering stops.
pub fn read_video_dir(dir: impl AsRef<Path>) -> Result<VideoSequence> {
    let dir = dir.as_ref();
    let mut frames = Vec::new();
    for i in 1.. {
        let pgm = dir.join(format!("frame_{i:06}.pgm"));
        let ppm = dir.join(format!("frame_{i:06}.ppm"));
        if pgm.exists() {
            frames.push(read_pgm(&pgm)?);
        } else if ppm.exists() {
            frames.push(read_ppm(&ppm)?);
        } else {
            break;
        }
    }
    if frames.is_empty() {
        return Err(format_err(format!(
            "no frame_000001.pgm/.ppm under {}",
            dir.display()
        )));
    }
    VideoSequence::new(frames, 25.0)
}

/// Writes frames as `frame_000001.*` onward, PGM for grayscale and PPM for
/// RGB.
pub fn write_video_dir(dir: impl AsRef<Path>, video: &VideoSequence) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, frame) in video.frames().iter().enumerate() {
        let ext = if frame.channels() == 1 { "pgm" } else { "ppm" };
        write_image(dir.join(format!("frame_{:06}.{ext}", i + 1)), frame)?;
    }
    Ok(())
}
