//! Binary symmetric channel: independent bit flips at rate epsilon.
//!
//! Fixed-width latent payloads survive this gracefully — a flipped bit moves
//! one coordinate by a bounded amount — while variable-length entropy-coded
//! records desynchronize. The sweep utilities measure both effects.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Which bytes the channel may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scope {
    /// Corrupt payload bytes only; container headers pass through clean.
    #[default]
    PayloadOnly,
    /// Corrupt every byte.
    WholeFile,
}

/// Channel parameters. `epsilon` is the per-bit flip probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub epsilon: f64,
    pub seed: u64,
    pub scope: Scope,
}

impl ChannelModel {
    pub fn new(epsilon: f64, seed: u64) -> Result<ChannelModel> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!(
                "bit error rate {epsilon} outside [0, 1]"
            )));
        }
        Ok(ChannelModel {
            epsilon,
            seed,
            scope: Scope::PayloadOnly,
        })
    }
}

/// Flips each bit of `bytes` independently with probability epsilon.
///
/// Bits are visited in byte order, LSB first within each byte, one uniform
/// draw per bit — the traversal order is part of the determinism contract.
pub fn corrupt(bytes: &[u8], model: &ChannelModel) -> Vec<u8> {
    let mut rng = SplitMix64::new(model.seed);
    let mut out = bytes.to_vec();
    if model.epsilon == 0.0 {
        return out;
    }
    for byte in out.iter_mut() {
        for bit in 0..8 {
            if rng.next_f64() < model.epsilon {
                *byte ^= 1 << bit;
            }
        }
    }
    out
}

/// Corrupts only `bytes[payload_start..]`, leaving the header intact.
pub fn corrupt_payload(bytes: &[u8], payload_start: usize, model: &ChannelModel) -> Vec<u8> {
    let mut out = bytes.to_vec();
    if payload_start >= bytes.len() {
        return out;
    }
    let corrupted = corrupt(&bytes[payload_start..], model);
    out[payload_start..].copy_from_slice(&corrupted);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{dequantize, QuantSpec, QuantizedLatent};

    #[test]
    fn zero_rate_is_identity() {
        let model = ChannelModel::new(0.0, 123).unwrap();
        let data: Vec<u8> = (0..=255).collect();
        assert_eq!(corrupt(&data, &model), data);
    }

    #[test]
    fn unit_rate_is_complement() {
        let model = ChannelModel::new(1.0, 9).unwrap();
        let data: Vec<u8> = (0..=255).collect();
        let out = corrupt(&data, &model);
        let complement: Vec<u8> = data.iter().map(|&b| !b).collect();
        assert_eq!(out, complement);
    }

    #[test]
    fn half_rate_flip_count_within_three_sigma() {
        // 10^6 bits at eps = 0.5: mean 5e5, sigma = 500.
        let model = ChannelModel::new(0.5, 20260814).unwrap();
        let data = vec![0u8; 125_000];
        let out = corrupt(&data, &model);
        let flipped: u32 = out.iter().map(|b| b.count_ones()).sum();
        let mean = 500_000.0;
        let sigma = 500.0;
        assert!(
            (flipped as f64 - mean).abs() <= 3.0 * sigma,
            "flipped {flipped} outside 3 sigma"
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let model = ChannelModel::new(0.01, 77).unwrap();
        let data = vec![0xA5u8; 1000];
        assert_eq!(corrupt(&data, &model), corrupt(&data, &model));
        let other = ChannelModel::new(0.01, 78).unwrap();
        assert_ne!(corrupt(&data, &model), corrupt(&data, &other));
    }

    #[test]
    fn length_preserved() {
        let model = ChannelModel::new(0.3, 5).unwrap();
        for n in [0usize, 1, 7, 63, 1000] {
            assert_eq!(corrupt(&vec![0u8; n], &model).len(), n);
        }
    }

    #[test]
    fn payload_scope_leaves_header_untouched() {
        let model = ChannelModel::new(1.0, 3).unwrap();
        let data: Vec<u8> = (0..32).collect();
        let out = corrupt_payload(&data, 20, &model);
        assert_eq!(&out[..20], &data[..20]);
        assert_ne!(&out[20..], &data[20..]);
    }

    #[test]
    fn single_bit_flip_moves_coordinate_by_power_of_two_step() {
        // Flipping bit j of a symbol changes the dequantized value by
        // exactly 2^j * 2/(2^b - 1) when no clamp engages.
        let b = 5u8;
        let spec = QuantSpec::new(b, 1).unwrap();
        let denom = ((1u16 << b) - 1) as f64;
        for sym in 0..(1u8 << b) {
            for j in 0..b {
                let flipped = sym ^ (1 << j);
                if flipped >= (1 << b) {
                    continue;
                }
                let z0 = dequantize(&QuantizedLatent::new(spec, vec![sym]).unwrap());
                let z1 = dequantize(&QuantizedLatent::new(spec, vec![flipped]).unwrap());
                let expect = (1u32 << j) as f64 * 2.0 / denom;
                assert!(
                    ((z1.values()[0] - z0.values()[0]).abs() - expect).abs() < 1e-12,
                    "sym={sym} j={j}"
                );
            }
        }
    }
}
