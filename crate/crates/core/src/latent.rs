//! Latent vectors and lossy uniform quantization.
//!
//! A latent coordinate lives in [-1, 1] and is mapped onto a uniform
//! mid-tread grid with 2^b levels, so -1 and +1 are exactly representable
//! (matching tanh saturation). Quantized symbols are packed LSB-first at b
//! bits each; that layout is part of the NC01/MC01 wire format and frozen.

use crate::error::{Error, Result};

/// Real latent code z of length M, each entry in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    values: Vec<f64>,
}

impl LatentVector {
    /// Accepts entries within [-1 - 1e-6, 1 + 1e-6]; rejects non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite("latent vector".into()));
            }
            if v.abs() > 1.0 + 1e-6 {
                return Err(Error::InvalidConfig(format!(
                    "latent entry {v} outside [-1, 1]"
                )));
            }
        }
        Ok(LatentVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Quantization grid parameters: b bits per entry over an M-length latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantSpec {
    bits: u8,
    latent_dim: usize,
}

impl QuantSpec {
    pub fn new(bits: u8, latent_dim: usize) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(Error::InvalidConfig(format!(
                "bits per entry must be in [1, 8], got {bits}"
            )));
        }
        if latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be >= 1".into()));
        }
        Ok(QuantSpec { bits, latent_dim })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Largest representable symbol, 2^b - 1.
    pub fn max_symbol(&self) -> u8 {
        (((1u16 << self.bits) - 1) & 0xFF) as u8
    }

    /// Packed payload size in bytes: ceil(M * b / 8).
    pub fn payload_bytes(&self) -> usize {
        (self.latent_dim * self.bits as usize + 7) / 8
    }

    /// Payload size in bits (the meaningful bits, before byte padding).
    pub fn payload_bits(&self) -> u64 {
        self.latent_dim as u64 * self.bits as u64
    }
}

/// Integer symbols for one latent vector plus the grid that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedLatent {
    spec: QuantSpec,
    symbols: Vec<u8>,
}

impl QuantizedLatent {
    pub fn new(spec: QuantSpec, symbols: Vec<u8>) -> Result<Self> {
        if symbols.len() != spec.latent_dim() {
            return Err(Error::LengthMismatch {
                context: "quantized symbols",
                expected: spec.latent_dim(),
                actual: symbols.len(),
            });
        }
        let max = spec.max_symbol();
        for &s in &symbols {
            if s > max {
                return Err(Error::SymbolRange {
                    symbol: s as i64,
                    bits: spec.bits(),
                });
            }
        }
        Ok(QuantizedLatent { spec, symbols })
    }

    pub fn spec(&self) -> QuantSpec {
        self.spec
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }
}

/// Round half away from zero, the platform-independent rule used throughout.
fn round_half_away(x: f64) -> f64 {
    // f64::round already rounds half away from zero.
    x.round()
}

/// Maps each entry onto the uniform grid: q = round((z+1)/2 * (2^b - 1)),
/// clamped to [0, 2^b - 1]. The input is clamped to [-1, 1] first.
pub fn quantize(z: &LatentVector, spec: QuantSpec) -> Result<QuantizedLatent> {
    if z.len() != spec.latent_dim() {
        return Err(Error::LengthMismatch {
            context: "quantize input",
            expected: spec.latent_dim(),
            actual: z.len(),
        });
    }
    let levels = (spec.max_symbol()) as f64;
    let symbols = z
        .values()
        .iter()
        .map(|&v| {
            let clamped = v.clamp(-1.0, 1.0);
            let q = round_half_away((clamped + 1.0) / 2.0 * levels);
            q.clamp(0.0, levels) as u8
        })
        .collect();
    QuantizedLatent::new(spec, symbols)
}

/// Inverse grid mapping: z = 2 q / (2^b - 1) - 1.
pub fn dequantize(q: &QuantizedLatent) -> LatentVector {
    let levels = q.spec().max_symbol() as f64;
    let values = q
        .symbols()
        .iter()
        .map(|&s| 2.0 * s as f64 / levels - 1.0)
        .collect();
    LatentVector { values }
}

/// Packs symbols LSB-first in index order, b bits each, zero-padded to a
/// byte boundary. Output length is exactly ceil(M * b / 8).
pub fn pack(q: &QuantizedLatent) -> Vec<u8> {
    let spec = q.spec();
    let b = spec.bits() as usize;
    let mut bytes = vec![0u8; spec.payload_bytes()];
    let mut bit_pos = 0usize;
    for &sym in q.symbols() {
        for j in 0..b {
            if (sym >> j) & 1 != 0 {
                bytes[bit_pos >> 3] |= 1 << (bit_pos & 7);
            }
            bit_pos += 1;
        }
    }
    bytes
}

/// Inverse of [`pack`]. The byte slice must be exactly ceil(M * b / 8) long.
pub fn unpack(bytes: &[u8], spec: QuantSpec) -> Result<QuantizedLatent> {
    let expected = spec.payload_bytes();
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            context: "packed payload",
            expected,
            actual: bytes.len(),
        });
    }
    let b = spec.bits() as usize;
    let mut symbols = Vec::with_capacity(spec.latent_dim());
    let mut bit_pos = 0usize;
    for _ in 0..spec.latent_dim() {
        let mut sym = 0u8;
        for j in 0..b {
            if bytes[bit_pos >> 3] >> (bit_pos & 7) & 1 != 0 {
                sym |= 1 << j;
            }
            bit_pos += 1;
        }
        symbols.push(sym);
    }
    QuantizedLatent::new(spec, symbols)
}
