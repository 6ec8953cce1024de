use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{softmax_in_place, ModelParams};
use super::teacher_inputs;
use crate::error::{Error, Result};
use crate::pipeline::TokenSequence;
use crate::quantizer::Codebook;

pub const DEFAULT_CFG_SCALE: f64 = 4.5;
pub const DEFAULT_TOP_K: usize = 990;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub cfg_scale: f64,
    pub top_k: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl GenConfig {
    /// Reference settings with `top_k` capped at the codebook size.
    pub fn for_codebook(k: usize) -> Self {
        Self {
            cfg_scale: DEFAULT_CFG_SCALE,
            top_k: DEFAULT_TOP_K.min(k),
            temperature: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.cfg_scale >= 0.0 && self.cfg_scale.is_finite()) {
            return Err(Error::param(format!("cfg scale must be >= 0, got {}", self.cfg_scale)));
        }
        if self.top_k == 0 || self.top_k > k {
            return Err(Error::param(format!("top_k must be in 1..={k}, got {}", self.top_k)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::param(format!("temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Classifier-free guidance in logit space: `l_u + s (l_c - l_u)`,
/// evaluated as `(1 - s) l_u + s l_c` so that `s = 1` and `s = 0` return the
/// conditional and unconditional logits exactly.
pub fn guide_logits(cond: &[f64], uncond: &[f64], scale: f64) -> Vec<f64> {
    cond.iter()
        .zip(uncond)
        .map(|(&c, &u)| (1.0 - scale) * u + scale * c)
        .collect()
}

/// Indices of the `k` largest entries (ties to the lower index), in
/// descending order of value.
pub fn top_k_filter(logits: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Samples one index from a guided logit row; returns the index and its
/// log-probability under the truncated, renormalized distribution.
fn sample_row(row: &[f64], cfg: &GenConfig, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let (kept, probs) = truncated_distribution(row, cfg);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut choice = kept.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            choice = i;
            break;
        }
    }
    (kept[choice], probs[choice].ln())
}

fn truncated_distribution(row: &[f64], cfg: &GenConfig) -> (Vec<usize>, Vec<f64>) {
    let kept = top_k_filter(row, cfg.top_k);
    let mut probs: Vec<f64> = kept.iter().map(|&j| row[j] / cfg.temperature).collect();
    softmax_in_place(&mut probs);
    (kept, probs)
}

/// Log-probability of `token` under the sampler's truncated distribution,
/// or `-inf` when it falls outside the top-k set.
pub(crate) fn truncated_log_prob(row: &[f64], token: usize, cfg: &GenConfig) -> f64 {
    let (kept, probs) = truncated_distribution(row, cfg);
    kept.iter()
        .position(|&j| j == token)
        .map_or(f64::NEG_INFINITY, |i| probs[i].ln())
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub tokens: TokenSequence,
    /// Log-probability of each band's tokens under the sampler.
    pub band_log_probs: Vec<f64>,
}

impl SampleOutput {
    pub fn joint_log_prob(&self) -> f64 {
        self.band_log_probs.iter().sum()
    }
}

/// Guided logits for band positions `1..len` given `inputs`.
pub(crate) fn guided_logits(params: &ModelParams, class: usize, inputs: &[f64], len: usize, cfg: &GenConfig) -> Result<Vec<f64>> {
    let cond = params.logits(class, inputs, len)?;
    let uncond = params.logits(params.config().uncond_id(), inputs, len)?;
    Ok(guide_logits(&cond, &uncond, cfg.cfg_scale))
}

/// Generates bands lowest frequency first; all tokens of one band are drawn
/// in a single step from that band's guided logits.
pub fn sample(params: &ModelParams, codebook: &Codebook, class: usize, cfg: &GenConfig) -> Result<SampleOutput> {
    let mc = params.config();
    if codebook.len() != mc.codebook_size || codebook.dim() != mc.code_dim {
        return Err(Error::dim(format!(
            "codebook is {}x{} but model expects {}x{}",
            codebook.len(),
            codebook.dim(),
            mc.codebook_size,
            mc.code_dim
        )));
    }
    if class >= mc.num_classes {
        return Err(Error::ClassOutOfRange {
            class,
            classes: mc.num_classes,
        });
    }
    cfg.validate(mc.codebook_size)?;
    let k = mc.codebook_size;
    let plan = params.plan();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bands: Vec<Vec<usize>> = Vec::with_capacity(mc.schedule.len());
    let mut band_log_probs = Vec::with_capacity(mc.schedule.len());
    for band in 1..plan.blocks() {
        let inputs = teacher_inputs(&mc.schedule, &bands, codebook, mc.interp)?;
        let len = plan.block_end(band);
        let logits = guided_logits(params, class, &inputs, len, cfg)?;
        let start = plan.block_start(band) - 1;
        let mut tokens = Vec::with_capacity(len - 1 - start);
        let mut logp = 0.0;
        for row in logits[start * k..].chunks_exact(k) {
            let (t, lp) = sample_row(row, cfg, &mut rng);
            tokens.push(t);
            logp += lp;
        }
        bands.push(tokens);
        band_log_probs.push(logp);
    }
    Ok(SampleOutput {
        tokens: TokenSequence::new(mc.schedule.clone(), bands, Some(class as u32), codebook)?,
        band_log_probs,
    })
}

/// Re-scores a full token sequence with one teacher-forced pass using the
/// sampler's guidance and truncation; returns per-band log-probabilities.
pub fn score(params: &ModelParams, codebook: &Codebook, class: usize, tokens: &TokenSequence, cfg: &GenConfig) -> Result<Vec<f64>> {
    let mc = params.config();
    let k = mc.codebook_size;
    let inputs = teacher_inputs(&mc.schedule, &tokens.bands, codebook, mc.interp)?;
    let plan = params.plan();
    let logits = guided_logits(params, class, &inputs, plan.total_len(), cfg)?;
    let mut per_band = vec![0.0; plan.blocks() - 1];
    for (pos, (row, &t)) in logits.chunks_exact(k).zip(tokens.flat().iter()).enumerate() {
        per_band[plan.block_of(pos + 1) - 1] += truncated_log_prob(row, t, cfg);
    }
    Ok(per_band)
}
