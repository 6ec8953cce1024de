//! Next-frequency autoregressive generation over band token matrices.

mod model;
mod plan;
mod sample;
mod train;

pub use model::{Forward, ModelConfig, ModelParams, ParamSpec};
pub use plan::AttentionPlan;
pub use sample::{guide_logits, sample, score, top_k_filter, GenConfig, SampleOutput, DEFAULT_CFG_SCALE, DEFAULT_TOP_K};
pub use train::{
    cross_entropy, cross_entropy_grad, loss_and_grad, sequence_log_prob, train, Example, Optimizer, TrainConfig, TrainReport,
};

use crate::bands::{interpolate, BandSchedule, Interp};
use crate::error::Result;
use crate::grid::FeatureMap;
use crate::pipeline::quantized_maps;
use crate::quantizer::Codebook;

/// Per-position input vectors for every band token.
///
/// Band `i > 1` rows hold `I(sum_{j<i} I(v_j^q, H', W'), h_i, w_i)`; first
/// band rows are zero (those positions read the class embedding). Only the
/// bands present in `bands` contribute, so a prefix of bands yields the
/// inputs needed for the next band.
pub fn teacher_inputs(schedule: &BandSchedule, bands: &[Vec<usize>], codebook: &Codebook, interp: Interp) -> Result<Vec<f64>> {
    let c = codebook.dim();
    let (gh, gw) = schedule.grid();
    let maps = quantized_maps(schedule, bands, codebook)?;
    let mut out = vec![0.0; schedule.total_tokens() * c];
    let offsets = schedule.offsets();
    let mut acc = FeatureMap::zeros(gh, gw, c);
    for (i, &(h, w)) in schedule.scales().iter().enumerate().skip(1) {
        let Some(prev) = maps.get(i - 1) else { break };
        acc.add_assign(&interpolate(prev, gh, gw, interp)?)?;
        let resampled = interpolate(&acc, h, w, interp)?;
        out[offsets[i] * c..(offsets[i] + h * w) * c].copy_from_slice(resampled.as_slice());
    }
    Ok(out)
}
