//! Next-frequency image generation at desk scale.
//!
//! An image is patchified into a latent grid, split into radial frequency
//! bands, and each band is residual-quantized at its own resolution into
//! codebook indices. A block-causal transformer then models the token
//! matrices lowest band first.

pub mod bands;
pub mod error;
pub mod generator;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod quantizer;
pub mod spectral;
pub mod synth;

pub use bands::{BandSchedule, FrequencyMask, Interp};
pub use error::{Error, Result};
pub use grid::{FeatureMap, Image};
pub use pipeline::{TokenSequence, Tokenizer};
pub use quantizer::Codebook;
