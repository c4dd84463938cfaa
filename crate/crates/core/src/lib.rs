//! Generative-compression codec toolkit.
//!
//! Implements the full pipeline: a small dense/convolutional neural-network
//! engine with backprop and Adam, adversarial pre-training of a decoder,
//! encoder training against the frozen decoder, latent uniform quantization
//! with bit packing, delta + canonical Huffman coding for video, bit-exact
//! container formats, a bit-flip channel simulator, and quality metrics.

pub mod channel;
pub mod container;
pub mod data;
pub mod entropy;
pub mod error;
pub mod latent;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use latent::{LatentVector, QuantSpec, QuantizedLatent};
pub use rng::SplitMix64;
pub use tensor::Tensor;
