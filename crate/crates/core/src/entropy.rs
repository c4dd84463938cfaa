//! Lossless entropy coding for inter-frame latent deltas.
//!
//! The video path transmits, for each frame after the first, the difference
//! between consecutive quantized symbol vectors. Deltas over b-bit symbols
//! live in [-(2^b - 1), +(2^b - 1)], an alphabet of 2^(b+1) - 1 symbols.
//! A canonical Huffman code built from the sequence's own delta histogram
//! compresses them; the code is canonical so only the code-length table
//! needs to be stored.

use crate::error::{Error, Result};
use crate::latent::QuantizedLatent;

/// A keyframe sequence in delta form: the first frame raw, every later frame
/// as an element-wise symbol difference from its predecessor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaStream {
    pub base: QuantizedLatent,
    pub deltas: Vec<Vec<i16>>,
}

/// Converts a frame sequence to base + per-frame deltas. Lossless: deltas are
/// computed on the integer symbols, never the real latents.
pub fn delta_encode(frames: &[QuantizedLatent]) -> Result<DeltaStream> {
    let base = frames.first().ok_or(Error::EmptyDataset)?.clone();
    let mut deltas = Vec::with_capacity(frames.len().saturating_sub(1));
    for pair in frames.windows(2) {
        deltas.push(delta_between(&pair[0], &pair[1])?);
    }
    Ok(DeltaStream { base, deltas })
}

/// Inverse of [`delta_encode`]; exact for any valid stream.
pub fn delta_decode(stream: &DeltaStream) -> Result<Vec<QuantizedLatent>> {
    let mut frames = Vec::with_capacity(stream.deltas.len() + 1);
    frames.push(stream.base.clone());
    for d in &stream.deltas {
        let next = apply_delta(frames.last().unwrap(), d)?;
        frames.push(next);
    }
    Ok(frames)
}

/// Element-wise difference `current - previous` as signed deltas.
pub fn delta_between(prev: &QuantizedLatent, curr: &QuantizedLatent) -> Result<Vec<i16>> {
    if prev.spec() != curr.spec() {
        return Err(Error::InvalidConfig(
            "delta coding: mismatched quantization specs".into(),
        ));
    }
    Ok(prev
        .symbols()
        .iter()
        .zip(curr.symbols())
        .map(|(&p, &c)| c as i16 - p as i16)
        .collect())
}

/// Reconstructs `current` from `previous` and the deltas. Errors if any
/// reconstructed symbol leaves [0, 2^b - 1].
pub fn apply_delta(prev: &QuantizedLatent, deltas: &[i16]) -> Result<QuantizedLatent> {
    let spec = prev.spec();
    if deltas.len() != spec.latent_dim() {
        return Err(Error::LengthMismatch {
            context: "delta record",
            expected: spec.latent_dim(),
            actual: deltas.len(),
        });
    }
    let max = spec.max_symbol() as i16;
    let mut symbols = Vec::with_capacity(deltas.len());
    for (&p, &d) in prev.symbols().iter().zip(deltas) {
        let s = p as i16 + d;
        if !(0..=max).contains(&s) {
            return Err(Error::SymbolRange {
                symbol: s as i64,
                bits: spec.bits(),
            });
        }
        symbols.push(s as u8);
    }
    QuantizedLatent::new(spec, symbols)
}

/// Canonical Huffman code over the delta alphabet for b-bit symbols.
///
/// `lengths[i]` is the code length for delta `i - (2^b - 1)`; zero means the
/// symbol never occurs and has no code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    bits: u8,
    lengths: Vec<u8>,
    /// Codewords aligned with `lengths`, MSB-first value in the low bits.
    codes: Vec<u32>,
}

/// Alphabet size for deltas over b-bit symbols: 2^(b+1) - 1.
pub fn delta_alphabet_size(bits: u8) -> usize {
    (1usize << (bits + 1)) - 1
}

/// Offset added to a delta to index the alphabet: 2^b - 1.
fn delta_offset(bits: u8) -> i16 {
    ((1i32 << bits) - 1) as i16
}

impl HuffmanTable {
    /// Builds optimal code lengths from delta frequencies, then assigns
    /// canonical codes.
    ///
    /// Tie-breaking is fixed so the table is reproducible: the two lowest
    /// -weight nodes are chosen by (count, first-symbol-index) ascending,
    /// with merged nodes ordered after leaves of equal count by creation
    /// order. A single-symbol alphabet gets code length 1.
    pub fn build(bits: u8, deltas: &[i16]) -> Result<HuffmanTable> {
        let alphabet = delta_alphabet_size(bits);
        let offset = delta_offset(bits);
        let mut counts = vec![0u64; alphabet];
        for &d in deltas {
            let idx = d + offset;
            if !(0..alphabet as i16).contains(&idx) {
                return Err(Error::SymbolRange {
                    symbol: d as i64,
                    bits,
                });
            }
            counts[idx as usize] += 1;
        }
        Self::from_counts(bits, &counts)
    }

    /// Builds from a pre-tallied frequency table indexed by alphabet position.
    pub fn from_counts(bits: u8, counts: &[u64]) -> Result<HuffmanTable> {
        let alphabet = delta_alphabet_size(bits);
        if counts.len() != alphabet {
            return Err(Error::LengthMismatch {
                context: "huffman frequency table",
                expected: alphabet,
                actual: counts.len(),
            });
        }
        let lengths = code_lengths(counts);
        Self::from_lengths(bits, lengths)
    }

    /// Reconstructs the table (including codewords) from stored lengths.
    pub fn from_lengths(bits: u8, lengths: Vec<u8>) -> Result<HuffmanTable> {
        let alphabet = delta_alphabet_size(bits);
        if lengths.len() != alphabet {
            return Err(Error::LengthMismatch {
                context: "huffman length table",
                expected: alphabet,
                actual: lengths.len(),
            });
        }
        // Kraft inequality: sum 2^-len <= 1 guarantees decodability.
        let mut kraft = 0.0f64;
        for &l in &lengths {
            if l > 32 {
                return Err(Error::Huffman(format!("code length {l} exceeds 32")));
            }
            if l > 0 {
                kraft += (0.5f64).powi(l as i32);
            }
        }
        if kraft > 1.0 + 1e-12 {
            return Err(Error::Huffman(format!(
                "length table violates Kraft inequality (sum = {kraft})"
            )));
        }
        let codes = canonical_codes(&lengths);
        Ok(HuffmanTable {
            bits,
            lengths,
            codes,
        })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    /// Codeword for a delta, as (value, length). None if the delta has no code.
    pub fn code_for(&self, delta: i16) -> Option<(u32, u8)> {
        let idx = (delta + delta_offset(self.bits)) as usize;
        let len = *self.lengths.get(idx)?;
        if len == 0 {
            return None;
        }
        Some((self.codes[idx], len))
    }

    /// Encodes deltas MSB-first into a fresh bit buffer. Returns the packed
    /// bytes and the exact bit count before padding.
    pub fn encode(&self, deltas: &[i16]) -> Result<(Vec<u8>, u64)> {
        let mut writer = BitWriter::new();
        for &d in deltas {
            let (code, len) = self.code_for(d).ok_or_else(|| {
                Error::Huffman(format!("delta {d} has no codeword"))
            })?;
            writer.put(code, len);
        }
        Ok(writer.finish())
    }

    /// Decodes exactly `count` deltas from the bit stream.
    pub fn decode(&self, bytes: &[u8], bit_len: u64, count: usize) -> Result<Vec<i16>> {
        let offset = delta_offset(self.bits);
        let mut reader = BitReader::new(bytes, bit_len);
        // Walk the canonical code space: extend the candidate code one bit at
        // a time, and at each length check whether it falls in that length's
        // codeword range. Linear in bit_len; fine at these alphabet sizes.
        let max_len = self.lengths.iter().copied().max().unwrap_or(0);
        if max_len == 0 && count > 0 {
            return Err(Error::Huffman("empty code cannot decode symbols".into()));
        }
        // first_code[l], first_index[l]: canonical start of codes at length l,
        // and symbols ordered by (length, index) for lookup.
        let mut sym_by_order: Vec<usize> = (0..self.lengths.len())
            .filter(|&i| self.lengths[i] > 0)
            .collect();
        sym_by_order.sort_by_key(|&i| (self.lengths[i], i));
        let mut first_code = vec![0u32; max_len as usize + 2];
        let mut first_order = vec![0usize; max_len as usize + 2];
        {
            let mut code = 0u32;
            let mut order = 0usize;
            for l in 1..=max_len {
                first_code[l as usize] = code;
                first_order[l as usize] = order;
                let n = sym_by_order[order..]
                    .iter()
                    .take_while(|&&i| self.lengths[i] == l)
                    .count();
                order += n;
                code = (code + n as u32) << 1;
            }
            // Sentinel row: cumulative count past max_len, so the
            // count-at-length read below is uniform for every l.
            first_order[max_len as usize + 1] = order;
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut code = 0u32;
            let mut len = 0u8;
            loop {
                code = (code << 1) | reader.next_bit()? as u32;
                len += 1;
                if len > max_len {
                    return Err(Error::Huffman("invalid codeword in stream".into()));
                }
                let l = len as usize;
                let count_at_len = first_order[l + 1] - first_order[l];
                let rel = code.wrapping_sub(first_code[l]);
                if code >= first_code[l] && (rel as usize) < count_at_len {
                    let idx = sym_by_order[first_order[l] + rel as usize];
                    out.push(idx as i16 - offset);
                    break;
                }
            }
        }
        Ok(out)
    }

    /// Total encoded size in bits for the given deltas (no table overhead).
    pub fn encoded_bits(&self, deltas: &[i16]) -> Result<u64> {
        let mut total = 0u64;
        for &d in deltas {
            let (_, len) = self.code_for(d).ok_or_else(|| {
                Error::Huffman(format!("delta {d} has no codeword"))
            })?;
            total += len as u64;
        }
        Ok(total)
    }
}

/// Optimal prefix-code lengths via Huffman's algorithm with deterministic
/// tie-breaking. Symbols with zero count get length 0. A lone symbol gets
/// length 1.
fn code_lengths(counts: &[u64]) -> Vec<u8> {
    #[derive(Clone)]
    struct Node {
        count: u64,
        /// Lowest symbol index underneath, for tie-breaking.
        symbol: usize,
        /// Creation order among merged nodes (leaves first, then merges).
        order: usize,
        kind: NodeKind,
    }
    #[derive(Clone)]
    enum NodeKind {
        Leaf,
        Internal(usize, usize), // indices into the arena
    }

    let mut lengths = vec![0u8; counts.len()];
    let mut arena: Vec<Node> = Vec::new();
    let mut queue: Vec<usize> = Vec::new(); // indices into arena, kept sorted
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            arena.push(Node {
                count: c,
                symbol: i,
                order: arena.len(),
                kind: NodeKind::Leaf,
            });
            queue.push(arena.len() - 1);
        }
    }
    match queue.len() {
        0 => return lengths,
        1 => {
            lengths[arena[queue[0]].symbol] = 1;
            return lengths;
        }
        _ => {}
    }

    // Selection by (count, symbol, order) ascending. Counts are small here
    // (alphabet <= 511), so a sort-and-pop queue is plenty.
    while queue.len() > 1 {
        queue.sort_by(|&a, &b| {
            let (na, nb) = (&arena[a], &arena[b]);
            (na.count, na.symbol, na.order).cmp(&(nb.count, nb.symbol, nb.order))
        });
        let left = queue.remove(0);
        let right = queue.remove(0);
        let merged = Node {
            count: arena[left].count + arena[right].count,
            symbol: arena[left].symbol.min(arena[right].symbol),
            order: arena.len(),
            kind: NodeKind::Internal(left, right),
        };
        arena.push(merged);
        queue.push(arena.len() - 1);
    }

    // Depth-first walk assigning depths as code lengths.
    let mut stack = vec![(queue[0], 0u8)];
    while let Some((idx, depth)) = stack.pop() {
        match arena[idx].kind {
            NodeKind::Leaf => lengths[arena[idx].symbol] = depth.max(1),
            NodeKind::Internal(l, r) => {
                stack.push((l, depth + 1));
                stack.push((r, depth + 1));
            }
        }
    }
    lengths
}

/// Canonical code assignment: symbols sorted by (length, index) receive
/// consecutive codewords, shifting left at each length increase.
fn canonical_codes(lengths: &[u8]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..lengths.len()).filter(|&i| lengths[i] > 0).collect();
    order.sort_by_key(|&i| (lengths[i], i));
    let mut codes = vec![0u32; lengths.len()];
    let mut code = 0u32;
    let mut prev_len = 0u8;
    for &i in &order {
        code <<= lengths[i] - prev_len;
        codes[i] = code;
        code += 1;
        prev_len = lengths[i];
    }
    codes
}

/// MSB-first bit writer used for Huffman streams.
struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            bit_len: 0,
        }
    }

    fn put(&mut self, code: u32, len: u8) {
        for i in (0..len).rev() {
            let bit = (code >> i) & 1;
            if self.bit_len % 8 == 0 {
                self.bytes.push(0);
            }
            if bit != 0 {
                let last = self.bytes.len() - 1;
                self.bytes[last] |= 1 << (7 - (self.bit_len % 8));
            }
            self.bit_len += 1;
        }
    }

    fn finish(self) -> (Vec<u8>, u64) {
        (self.bytes, self.bit_len)
    }
}

/// MSB-first bit reader; errors on reads past `bit_len`.
struct BitReader<'a> {
    bytes: &'a [u8],
    bit_len: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8], bit_len: u64) -> Self {
        BitReader {
            bytes,
            bit_len,
            pos: 0,
        }
    }

    fn next_bit(&mut self) -> Result<u8> {
        if self.pos >= self.bit_len {
            return Err(Error::Truncated {
                needed: (self.pos + 1) as usize,
                available: self.bit_len as usize,
            });
        }
        let byte = self.bytes[(self.pos >> 3) as usize];
        let bit = (byte >> (7 - (self.pos & 7))) & 1;
        self.pos += 1;
        Ok(bit)
    }
}
