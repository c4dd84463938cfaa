//! CIFAR-10 binary record reader.
//!
//! The published layout: consecutive 3073-byte records, one label byte
//! (0..=9) followed by 3072 pixel bytes stored channel-planar — 1024 red,
//! 1024 green, 1024 blue, each a row-major 32x32 plane.

use crate::data::Image;
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

pub const RECORD_BYTES: usize = 3073;
#[cfg(test)]
const PLANE: usize = 32 * 32;

pub fn parse_cifar10(bytes: &[u8]) -> Result<Vec<(Image, u8)>> {
    if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::Format {
            format: "CIFAR-10",
            detail: format!(
                "file size {} is not a positive multiple of {RECORD_BYTES}",
                bytes.len()
            ),
        });
    }
    let mut out = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    for record in bytes.chunks_exact(RECORD_BYTES) {
        let label = record[0];
        if label > 9 {
            return Err(Error::Format {
                format: "CIFAR-10",
                detail: format!("label {label} out of range"),
            });
        }
        // Planar source, planar destination: a straight copy.
        let image = Image::new(32, 32, 3, record[1..].to_vec())?;
        out.push((image, label));
    }
    Ok(out)
}

pub fn read_cifar10(path: impl AsRef<Path>) -> Result<Vec<(Image, u8)>> {
    parse_cifar10(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..3072).map(fill));
        r
    }

    #[test]
    fn two_record_fixture() {
        let mut bytes = record(3, |i| (i % 251) as u8);
        bytes.extend(record(9, |i| (i % 7) as u8));
        let images = parse_cifar10(&bytes).unwrap();
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].1, 3);
        assert_eq!(images[1].1, 9);
    }

    #[test]
    fn first_pixel_red_channel_is_record_byte_one() {
        let mut bytes = record(0, |_| 0);
        bytes[1] = 0xCD; // R plane, pixel (0,0)
        bytes[1 + PLANE] = 0x11; // G plane, pixel (0,0)
        let images = parse_cifar10(&bytes).unwrap();
        assert_eq!(images[0].0.get(0, 0, 0), 0xCD);
        assert_eq!(images[0].0.get(1, 0, 0), 0x11);
        assert_eq!(images[0].0.get(2, 0, 0), 0);
    }

    #[test]
    fn rejects_truncated_file() {
        let bytes = record(1, |_| 0);
        assert!(parse_cifar10(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_cifar10(&[]).is_err());
    }

    #[test]
    fn rejects_bad_label() {
        let bytes = record(10, |_| 0);
        assert!(parse_cifar10(&bytes).is_err());
    }
}
