//! Bit-exact container formats.
//!
//! Three little-endian formats, frozen for wire compatibility:
//!
//! * `NC01` — one image's quantized latent: header + packed symbols.
//! * `MC01` — a video's keyframe latents: base frame raw, later keyframes as
//!   delta records, optionally Huffman-coded.
//! * `NB01` — a model bundle: text metadata, parameter tensors as f32 LE,
//!   and a trailing FNV-1a 64-bit hash.
//!
//! Compression accounting (`compressed_size_bits`) counts payload only —
//! headers are excluded, mirroring how file-format overhead is usually left
//! out of bits-per-pixel comparisons.

use crate::entropy::{delta_alphabet_size, DeltaStream, HuffmanTable};
use crate::error::{Error, Result};
use crate::latent::{pack, unpack, QuantSpec, QuantizedLatent};

pub const NC_MAGIC: [u8; 4] = *b"NC01";
pub const MC_MAGIC: [u8; 4] = *b"MC01";
pub const NB_MAGIC: [u8; 4] = *b"NB01";

/// Fixed NC01 header length; the payload (and channel-corruptible region)
/// starts here.
pub const NC_HEADER_BYTES: usize = 20;
/// Fixed MC01 header length; table/base/records follow.
pub const MC_HEADER_BYTES: usize = 25;

/// Single-image latent bitstream.
///
/// Layout: magic (4) | M u16 | b u8 | height u16 | width u16 | channels u8 |
/// model hash u64 | payload ceil(M*b/8) bytes. Header is 20 bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcBitstream {
    pub spec: QuantSpec,
    pub height: u16,
    pub width: u16,
    pub channels: u8,
    pub model_hash: u64,
    /// Packed symbols, exactly `spec.payload_bytes()` long.
    pub payload: Vec<u8>,
}

impl NcBitstream {
    /// Builds a stream from quantized symbols plus image geometry.
    pub fn from_latent(
        q: &QuantizedLatent,
        height: u16,
        width: u16,
        channels: u8,
        model_hash: u64,
    ) -> NcBitstream {
        NcBitstream {
            spec: q.spec(),
            height,
            width,
            channels,
            model_hash,
            payload: pack(q),
        }
    }

    /// Unpacks the payload back into symbols.
    pub fn latent(&self) -> Result<QuantizedLatent> {
        unpack(&self.payload, self.spec)
    }

    /// Payload-only bit count M*b (header excluded).
    pub fn compressed_size_bits(&self) -> u64 {
        self.spec.payload_bits()
    }
}

/// Reads `n` bytes or reports how many were missing.
fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    if *pos + n > bytes.len() {
        return Err(Error::Truncated {
            needed: *pos + n,
            available: bytes.len(),
        });
    }
    let out = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(out)
}

fn take_u8(bytes: &[u8], pos: &mut usize) -> Result<u8> {
    Ok(take(bytes, pos, 1)?[0])
}

fn take_u16(bytes: &[u8], pos: &mut usize) -> Result<u16> {
    let b = take(bytes, pos, 2)?;
    Ok(u16::from_le_bytes([b[0], b[1]]))
}

fn take_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let b = take(bytes, pos, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn take_u64(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let b = take(bytes, pos, 8)?;
    Ok(u64::from_le_bytes(b.try_into().unwrap()))
}

fn check_magic(bytes: &[u8], pos: &mut usize, expected: [u8; 4]) -> Result<()> {
    let got = take(bytes, pos, 4)?;
    if got != expected {
        return Err(Error::BadMagic {
            expected,
            actual: [got[0], got[1], got[2], got[3]],
        });
    }
    Ok(())
}

pub fn write_nc(stream: &NcBitstream) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + stream.payload.len());
    out.extend_from_slice(&NC_MAGIC);
    out.extend_from_slice(&(stream.spec.latent_dim() as u16).to_le_bytes());
    out.push(stream.spec.bits());
    out.extend_from_slice(&stream.height.to_le_bytes());
    out.extend_from_slice(&stream.width.to_le_bytes());
    out.push(stream.channels);
    out.extend_from_slice(&stream.model_hash.to_le_bytes());
    out.extend_from_slice(&stream.payload);
    out
}

pub fn read_nc(bytes: &[u8]) -> Result<NcBitstream> {
    let mut pos = 0usize;
    check_magic(bytes, &mut pos, NC_MAGIC)?;
    let m = take_u16(bytes, &mut pos)? as usize;
    let b = take_u8(bytes, &mut pos)?;
    let height = take_u16(bytes, &mut pos)?;
    let width = take_u16(bytes, &mut pos)?;
    let channels = take_u8(bytes, &mut pos)?;
    let model_hash = take_u64(bytes, &mut pos)?;
    let spec = QuantSpec::new(b, m)?;
    let payload = take(bytes, &mut pos, spec.payload_bytes())?.to_vec();
    if pos != bytes.len() {
        return Err(Error::Format {
            format: "NC01",
            detail: format!("{} trailing bytes", bytes.len() - pos),
        });
    }
    let stream = NcBitstream {
        spec,
        height,
        width,
        channels,
        model_hash,
        payload,
    };
    Ok(stream)
}

/// Video keyframe-latent bitstream.
///
/// Layout: magic (4) | M u16 | b u8 | stride N u8 | keyframes K u32 |
/// total frames F u32 | flags u8 (bit 0 = Huffman) | model hash u64 |
/// [if Huffman: code-length table, 2^(b+1)-1 bytes] | base keyframe packed
/// raw (ceil(M*b/8) bytes) | K-1 records. Each record is prefixed by its bit
/// length (u16 LE). With Huffman off, a record holds the next keyframe's
/// symbols packed raw (M*b bits); with Huffman on it holds the Huffman-coded
/// delta from the previous keyframe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McBitstream {
    pub spec: QuantSpec,
    pub stride: u8,
    pub total_frames: u32,
    pub huffman: bool,
    pub model_hash: u64,
    /// Code-length table when `huffman` is set.
    pub table: Option<HuffmanTable>,
    /// Base keyframe, packed raw.
    pub base: Vec<u8>,
    /// Per-record (bit length, payload bytes).
    pub records: Vec<(u16, Vec<u8>)>,
}

impl McBitstream {
    pub fn keyframe_count(&self) -> u32 {
        self.records.len() as u32 + 1
    }

    /// F = (K-1)*N + 1: streams end on a keyframe.
    fn check_frame_law(&self) -> Result<()> {
        let expect = (self.keyframe_count() as u64 - 1) * self.stride as u64 + 1;
        if self.total_frames as u64 != expect {
            return Err(Error::Format {
                format: "MC01",
                detail: format!(
                    "total frames {} violates F=(K-1)*N+1 (K={}, N={})",
                    self.total_frames,
                    self.keyframe_count(),
                    self.stride
                ),
            });
        }
        Ok(())
    }

    /// Body bits: base frame + record length prefixes + record payloads +
    /// Huffman table block when present. Fixed header excluded.
    pub fn compressed_size_bits(&self) -> u64 {
        let mut bits = self.spec.payload_bits();
        if self.table.is_some() {
            bits += 8 * delta_alphabet_size(self.spec.bits()) as u64;
        }
        for (bit_len, _) in &self.records {
            bits += 16 + *bit_len as u64;
        }
        bits
    }
}

/// Assembles an MC01 stream from keyframe latents.
///
/// With Huffman off, every keyframe after the base is stored as raw packed
/// symbols — bit errors stay local, which is the point of the fixed-width
/// path. With Huffman on, later keyframes become Huffman-coded delta records
/// over a table built from this sequence's deltas.
pub fn build_mc(
    keyframes: &[QuantizedLatent],
    stride: u8,
    huffman: bool,
    model_hash: u64,
) -> Result<McBitstream> {
    if keyframes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    let spec = keyframes[0].spec();
    for k in keyframes {
        if k.spec() != spec {
            return Err(Error::InvalidConfig(
                "keyframes must share one quantization spec".into(),
            ));
        }
    }
    let total_frames = (keyframes.len() as u32 - 1) * stride as u32 + 1;
    let base = pack(&keyframes[0]);
    let mut table = None;
    let mut records = Vec::with_capacity(keyframes.len() - 1);
    if huffman {
        let stream = crate::entropy::delta_encode(keyframes)?;
        let all: Vec<i16> = stream.deltas.iter().flatten().copied().collect();
        let t = HuffmanTable::build(spec.bits(), &all)?;
        for d in &stream.deltas {
            let (bytes, bits) = t.encode(d)?;
            if bits > u16::MAX as u64 {
                return Err(Error::Format {
                    format: "MC01",
                    detail: format!("record of {bits} bits exceeds u16 length prefix"),
                });
            }
            records.push((bits as u16, bytes));
        }
        table = Some(t);
    } else {
        for k in &keyframes[1..] {
            let bits = spec.payload_bits();
            if bits > u16::MAX as u64 {
                return Err(Error::Format {
                    format: "MC01",
                    detail: format!("record of {bits} bits exceeds u16 length prefix"),
                });
            }
            records.push((bits as u16, pack(k)));
        }
    }
    Ok(McBitstream {
        spec,
        stride,
        total_frames,
        huffman,
        model_hash,
        table,
        base,
        records,
    })
}

/// Recovers the keyframe latents; exact inverse of [`build_mc`].
pub fn mc_keyframes(stream: &McBitstream) -> Result<Vec<QuantizedLatent>> {
    let spec = stream.spec;
    let mut frames = Vec::with_capacity(stream.records.len() + 1);
    frames.push(unpack(&stream.base, spec)?);
    if stream.huffman {
        let table = stream.table.as_ref().ok_or_else(|| Error::Format {
            format: "MC01",
            detail: "huffman flag set but no table".into(),
        })?;
        let mut deltas = Vec::with_capacity(stream.records.len());
        for (bit_len, bytes) in &stream.records {
            deltas.push(table.decode(bytes, *bit_len as u64, spec.latent_dim())?);
        }
        let ds = DeltaStream {
            base: frames[0].clone(),
            deltas,
        };
        frames = crate::entropy::delta_decode(&ds)?;
    } else {
        for (bit_len, bytes) in &stream.records {
            if *bit_len as u64 != spec.payload_bits() {
                return Err(Error::Format {
                    format: "MC01",
                    detail: format!(
                        "raw record bit length {bit_len} != M*b = {}",
                        spec.payload_bits()
                    ),
                });
            }
            frames.push(unpack(bytes, spec)?);
        }
    }
    Ok(frames)
}

pub fn write_mc(stream: &McBitstream) -> Result<Vec<u8>> {
    stream.check_frame_law()?;
    let mut out = Vec::new();
    out.extend_from_slice(&MC_MAGIC);
    out.extend_from_slice(&(stream.spec.latent_dim() as u16).to_le_bytes());
    out.push(stream.spec.bits());
    out.push(stream.stride);
    out.extend_from_slice(&stream.keyframe_count().to_le_bytes());
    out.extend_from_slice(&stream.total_frames.to_le_bytes());
    out.push(if stream.huffman { 1 } else { 0 });
    out.extend_from_slice(&stream.model_hash.to_le_bytes());
    if stream.huffman {
        let table = stream.table.as_ref().ok_or_else(|| Error::Format {
            format: "MC01",
            detail: "huffman flag set but no table".into(),
        })?;
        out.extend_from_slice(table.lengths());
    }
    out.extend_from_slice(&stream.base);
    for (bit_len, bytes) in &stream.records {
        out.extend_from_slice(&bit_len.to_le_bytes());
        let expect = (*bit_len as usize + 7) / 8;
        if bytes.len() != expect {
            return Err(Error::LengthMismatch {
                context: "MC01 record payload",
                expected: expect,
                actual: bytes.len(),
            });
        }
        out.extend_from_slice(bytes);
    }
    Ok(out)
}

pub fn read_mc(bytes: &[u8]) -> Result<McBitstream> {
    let mut pos = 0usize;
    check_magic(bytes, &mut pos, MC_MAGIC)?;
    let m = take_u16(bytes, &mut pos)? as usize;
    let b = take_u8(bytes, &mut pos)?;
    let stride = take_u8(bytes, &mut pos)?;
    let keyframes = take_u32(bytes, &mut pos)?;
    let total_frames = take_u32(bytes, &mut pos)?;
    let flags = take_u8(bytes, &mut pos)?;
    let model_hash = take_u64(bytes, &mut pos)?;
    if flags & !1 != 0 {
        return Err(Error::Format {
            format: "MC01",
            detail: format!("unknown flag bits 0x{flags:02x}"),
        });
    }
    if stride == 0 {
        return Err(Error::Format {
            format: "MC01",
            detail: "stride 0".into(),
        });
    }
    if keyframes == 0 {
        return Err(Error::Format {
            format: "MC01",
            detail: "keyframe count 0".into(),
        });
    }
    let spec = QuantSpec::new(b, m)?;
    let huffman = flags & 1 != 0;
    let table = if huffman {
        let lens = take(bytes, &mut pos, delta_alphabet_size(b))?.to_vec();
        Some(HuffmanTable::from_lengths(b, lens)?)
    } else {
        None
    };
    let base = take(bytes, &mut pos, spec.payload_bytes())?.to_vec();
    let mut records = Vec::with_capacity(keyframes as usize - 1);
    for _ in 0..keyframes - 1 {
        let bit_len = take_u16(bytes, &mut pos)?;
        let payload = take(bytes, &mut pos, (bit_len as usize + 7) / 8)?.to_vec();
        records.push((bit_len, payload));
    }
    if pos != bytes.len() {
        return Err(Error::Format {
            format: "MC01",
            detail: format!("{} trailing bytes", bytes.len() - pos),
        });
    }
    let stream = McBitstream {
        spec,
        stride,
        total_frames,
        huffman,
        model_hash,
        table,
        base,
        records,
    };
    stream.check_frame_law()?;
    Ok(stream)
}

/// FNV-1a 64-bit, the bundle integrity hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Model-bundle container: metadata text plus parameter tensors.
///
/// Layout: magic (4) | version u8 (=1) | metadata length u32 | metadata
/// UTF-8 (key=value lines) | tensor count u32 | tensors | FNV-1a 64-bit hash
/// (u64 LE) over all preceding bytes. Each tensor: rank u8 | dims (u32 each)
/// | values as f32 LE in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Nb01Bundle {
    /// key=value lines; order preserved.
    pub metadata: String,
    /// Tensors in declaration order as (shape, f32 values).
    pub tensors: Vec<(Vec<usize>, Vec<f32>)>,
}

impl Nb01Bundle {
    /// The content hash: FNV-1a over the serialized bytes before the hash
    /// field. Doubles as the model hash carried by NC01/MC01 headers.
    pub fn content_hash(&self) -> u64 {
        let bytes = write_bundle_body(self);
        fnv1a64(&bytes)
    }

    /// Metadata lookup by key; first match wins.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.lines().find_map(|line| {
            let (k, v) = line.split_once('=')?;
            (k == key).then_some(v)
        })
    }
}

fn write_bundle_body(bundle: &Nb01Bundle) -> Vec<u8> {
    let meta = bundle.metadata.as_bytes();
    let mut out = Vec::new();
    out.extend_from_slice(&NB_MAGIC);
    out.push(1u8);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta);
    out.extend_from_slice(&(bundle.tensors.len() as u32).to_le_bytes());
    for (shape, values) in &bundle.tensors {
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_bundle(bundle: &Nb01Bundle) -> Vec<u8> {
    let mut out = write_bundle_body(bundle);
    let hash = fnv1a64(&out);
    out.extend_from_slice(&hash.to_le_bytes());
    out
}

pub fn read_bundle(bytes: &[u8]) -> Result<Nb01Bundle> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            needed: 8,
            available: bytes.len(),
        });
    }
    let body = &bytes[..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(Error::HashMismatch { stored, computed });
    }
    let mut pos = 0usize;
    check_magic(body, &mut pos, NB_MAGIC)?;
    let version = take_u8(body, &mut pos)?;
    if version != 1 {
        return Err(Error::Format {
            format: "NB01",
            detail: format!("unsupported version {version}"),
        });
    }
    let meta_len = take_u32(body, &mut pos)? as usize;
    let metadata = String::from_utf8(take(body, &mut pos, meta_len)?.to_vec())
        .map_err(|e| Error::Format {
            format: "NB01",
            detail: format!("metadata not UTF-8: {e}"),
        })?;
    let tensor_count = take_u32(body, &mut pos)? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let rank = take_u8(body, &mut pos)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(take_u32(body, &mut pos)? as usize);
        }
        let count: usize = shape.iter().product();
        let raw = take(body, &mut pos, count * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((shape, values));
    }
    if pos != body.len() {
        return Err(Error::Format {
            format: "NB01",
            detail: format!("{} trailing bytes before hash", body.len() - pos),
        });
    }
    Ok(Nb01Bundle { metadata, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn random_latent(rng: &mut SplitMix64, bits: u8, m: usize) -> QuantizedLatent {
        let spec = QuantSpec::new(bits, m).unwrap();
        let max = spec.max_symbol() as usize + 1;
        let symbols = (0..m).map(|_| rng.below(max) as u8).collect();
        QuantizedLatent::new(spec, symbols).unwrap()
    }

    #[test]
    fn nc_file_size_hand_arithmetic() {
        // M=100, b=5 -> 20-byte header + ceil(500/8)=63 -> 83 bytes
        let mut rng = SplitMix64::new(1);
        let q = random_latent(&mut rng, 5, 100);
        let stream = NcBitstream::from_latent(&q, 32, 32, 1, 0xDEAD_BEEF);
        let bytes = write_nc(&stream);
        assert_eq!(bytes.len(), 83);
        assert_eq!(stream.compressed_size_bits(), 500);
    }

    #[test]
    fn nc_round_trip_bitwise() {
        let mut rng = SplitMix64::new(2);
        for bits in 1..=8u8 {
            let q = random_latent(&mut rng, bits, 37);
            let stream = NcBitstream::from_latent(&q, 64, 48, 3, rng.next_u64());
            let bytes = write_nc(&stream);
            let back = read_nc(&bytes).unwrap();
            assert_eq!(back, stream);
            assert_eq!(write_nc(&back), bytes);
            assert_eq!(back.latent().unwrap(), q);
        }
    }

    #[test]
    fn nc_rejects_bad_magic() {
        let mut rng = SplitMix64::new(3);
        let q = random_latent(&mut rng, 2, 25);
        let mut bytes = write_nc(&NcBitstream::from_latent(&q, 32, 32, 1, 7));
        bytes[0] = b'X';
        bytes[1] = b'X';
        match read_nc(&bytes) {
            Err(Error::BadMagic { actual, .. }) => assert_eq!(&actual, b"XX01"),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn nc_rejects_truncation_and_trailing() {
        let mut rng = SplitMix64::new(4);
        let q = random_latent(&mut rng, 5, 100);
        let bytes = write_nc(&NcBitstream::from_latent(&q, 32, 32, 1, 7));
        assert!(read_nc(&bytes[..bytes.len() - 1]).is_err());
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(read_nc(&extended).is_err());
    }

    #[test]
    fn nc_compressed_bits_match_figure_values() {
        let mut rng = SplitMix64::new(5);
        let q = random_latent(&mut rng, 5, 100);
        assert_eq!(
            NcBitstream::from_latent(&q, 32, 32, 1, 0).compressed_size_bits(),
            500
        );
        let q = random_latent(&mut rng, 2, 25);
        assert_eq!(
            NcBitstream::from_latent(&q, 32, 32, 1, 0).compressed_size_bits(),
            50
        );
    }

    #[test]
    fn mc_round_trip_raw_and_huffman() {
        let mut rng = SplitMix64::new(6);
        let spec = QuantSpec::new(4, 20).unwrap();
        // Slowly varying keyframes so deltas stay small.
        let mut frames = vec![random_latent(&mut rng, 4, 20)];
        for _ in 0..5 {
            let prev = frames.last().unwrap();
            let symbols: Vec<u8> = prev
                .symbols()
                .iter()
                .map(|&s| {
                    let step = rng.below(3) as i16 - 1;
                    (s as i16 + step).clamp(0, 15) as u8
                })
                .collect();
            frames.push(QuantizedLatent::new(spec, symbols).unwrap());
        }
        for huffman in [false, true] {
            let stream = build_mc(&frames, 4, huffman, 42).unwrap();
            let bytes = write_mc(&stream).unwrap();
            let back = read_mc(&bytes).unwrap();
            assert_eq!(back, stream);
            assert_eq!(write_mc(&back).unwrap(), bytes);
            assert_eq!(mc_keyframes(&back).unwrap(), frames);
        }
    }

    #[test]
    fn mc_single_keyframe_body_is_base_only() {
        let mut rng = SplitMix64::new(7);
        let frames = vec![random_latent(&mut rng, 5, 100)];
        let stream = build_mc(&frames, 4, false, 0).unwrap();
        assert_eq!(stream.total_frames, 1);
        assert_eq!(stream.compressed_size_bits(), 500);
    }

    #[test]
    fn mc_rejects_frame_law_violation() {
        let mut rng = SplitMix64::new(8);
        let frames = vec![
            random_latent(&mut rng, 3, 10),
            {
                let spec = QuantSpec::new(3, 10).unwrap();
                QuantizedLatent::new(spec, vec![0; 10]).unwrap()
            },
        ];
        let mut stream = build_mc(&frames, 2, false, 0).unwrap();
        stream.total_frames = 5; // should be (2-1)*2+1 = 3
        assert!(write_mc(&stream).is_err());
    }

    #[test]
    fn mc_huffman_corruption_detected_or_decodes_differently() {
        // Flipping bits in a Huffman record must never silently round-trip
        // to the original frames.
        let mut rng = SplitMix64::new(9);
        let spec = QuantSpec::new(4, 16).unwrap();
        let mut frames = vec![random_latent(&mut rng, 4, 16)];
        for _ in 0..3 {
            let prev = frames.last().unwrap();
            let symbols: Vec<u8> = prev
                .symbols()
                .iter()
                .map(|&s| ((s as i16 + rng.below(3) as i16 - 1).clamp(0, 15)) as u8)
                .collect();
            frames.push(QuantizedLatent::new(spec, symbols).unwrap());
        }
        let stream = build_mc(&frames, 2, true, 0).unwrap();
        let bytes = write_mc(&stream).unwrap();
        let record_start = bytes.len() - 1;
        let mut corrupted = bytes.clone();
        // MSB of the final record byte is always a live payload bit
        // (Huffman records are MSB-first).
        corrupted[record_start] ^= 0x80;
        match read_mc(&corrupted).and_then(|s| mc_keyframes(&s)) {
            Ok(decoded) => assert_ne!(decoded, frames),
            Err(_) => {}
        }
    }

    #[test]
    fn bundle_round_trip() {
        let bundle = Nb01Bundle {
            metadata: "arch=dcgan\nlatent_dim=100\nseed=7\n".into(),
            tensors: vec![
                (vec![2, 3], vec![1.0, -0.5, 0.25, 0.0, 3.5, -2.0]),
                (vec![4], vec![0.1, 0.2, 0.3, 0.4]),
            ],
        };
        let bytes = write_bundle(&bundle);
        let back = read_bundle(&bytes).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(write_bundle(&back), bytes);
    }

    #[test]
    fn bundle_detects_corruption() {
        let bundle = Nb01Bundle {
            metadata: "k=v\n".into(),
            tensors: vec![(vec![1], vec![1.5])],
        };
        let mut bytes = write_bundle(&bundle);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        match read_bundle(&bytes) {
            Err(Error::HashMismatch { .. }) => {}
            other => panic!("expected HashMismatch, got {other:?}"),
        }
    }

    #[test]
    fn bundle_meta_lookup() {
        let bundle = Nb01Bundle {
            metadata: "a=1\nb=two\n".into(),
            tensors: vec![],
        };
        assert_eq!(bundle.meta("a"), Some("1"));
        assert_eq!(bundle.meta("b"), Some("two"));
        assert_eq!(bundle.meta("c"), None);
    }

    #[test]
    fn fnv1a_known_vectors() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a64(b""), 0xCBF2_9CE4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xAF63_DC4C_8601_EC8C);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171F73967E8);
    }

    /// Golden bytes: the NC01 layout is frozen; any byte change is a wire
    /// format break.
    #[test]
    fn nc_golden_bytes() {
        let spec = QuantSpec::new(2, 4).unwrap();
        let q = QuantizedLatent::new(spec, vec![3, 0, 1, 2]).unwrap();
        let stream = NcBitstream::from_latent(&q, 32, 48, 1, 0x0102030405060708);
        assert_eq!(
            write_nc(&stream),
            vec![
                b'N', b'C', b'0', b'1', // magic
                4, 0, // M = 4
                2, // b = 2
                32, 0, // height
                48, 0, // width
                1, // channels
                8, 7, 6, 5, 4, 3, 2, 1, // model hash LE
                0x93, // payload
            ]
        );
    }

    /// MC01 golden bytes for a two-keyframe raw stream.
    #[test]
    fn mc_golden_bytes() {
        let spec = QuantSpec::new(2, 4).unwrap();
        let frames = vec![
            QuantizedLatent::new(spec, vec![3, 0, 1, 2]).unwrap(),
            QuantizedLatent::new(spec, vec![0, 1, 2, 3]).unwrap(),
        ];
        let stream = build_mc(&frames, 3, false, 0x1122334455667788).unwrap();
        assert_eq!(
            write_mc(&stream).unwrap(),
            vec![
                b'M', b'C', b'0', b'1', // magic
                4, 0, // M
                2, // b
                3, // stride
                2, 0, 0, 0, // K
                4, 0, 0, 0, // F = (2-1)*3+1
                0, // flags: huffman off
                0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11, // hash LE
                0x93, // base [3,0,1,2]
                8, 0, // record bit length
                0xE4, // [0,1,2,3] -> 00 01 10 11 LSB-first
            ]
        );
    }

    proptest! {
        #[test]
        fn nc_round_trip_property(seed in any::<u64>(), bits in 1u8..=8, m in 1usize..200) {
            let mut rng = SplitMix64::new(seed);
            let q = random_latent(&mut rng, bits, m);
            let stream = NcBitstream::from_latent(
                &q,
                (rng.below(512) + 16) as u16,
                (rng.below(512) + 16) as u16,
                if rng.below(2) == 0 { 1 } else { 3 },
                rng.next_u64(),
            );
            let back = read_nc(&write_nc(&stream)).unwrap();
            prop_assert_eq!(back, stream);
        }

        #[test]
        fn mc_round_trip_property(seed in any::<u64>(), bits in 1u8..=6, m in 1usize..40,
                                  k in 1usize..8, huffman in any::<bool>()) {
            let mut rng = SplitMix64::new(seed);
            let frames: Vec<QuantizedLatent> =
                (0..k).map(|_| random_latent(&mut rng, bits, m)).collect();
            let stream = build_mc(&frames, 2, huffman, rng.next_u64()).unwrap();
            let bytes = write_mc(&stream).unwrap();
            let back = read_mc(&bytes).unwrap();
            prop_assert_eq!(&back, &stream);
            prop_assert_eq!(mc_keyframes(&back).unwrap(), frames);
        }

        #[test]
        fn bundle_round_trip_property(seed in any::<u64>(), n in 0usize..5) {
            let mut rng = SplitMix64::new(seed);
            let tensors: Vec<(Vec<usize>, Vec<f32>)> = (0..n)
                .map(|_| {
                    let rank = rng.below(3) + 1;
                    let shape: Vec<usize> = (0..rank).map(|_| rng.below(4) + 1).collect();
                    let count: usize = shape.iter().product();
                    let values = (0..count)
                        .map(|_| rng.range_f64(-2.0, 2.0) as f32)
                        .collect();
                    (shape, values)
                })
                .collect();
            let bundle = Nb01Bundle { metadata: format!("seed={seed}\n"), tensors };
            let back = read_bundle(&write_bundle(&bundle)).unwrap();
            prop_assert_eq!(back, bundle);
        }
    }
}
