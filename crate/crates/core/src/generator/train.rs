use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::teacher_inputs;
use crate::error::{Error, Result};
use crate::pipeline::TokenSequence;
use crate::quantizer::Codebook;

/// Mean over rows of `-log softmax(row)[target]`.
pub fn cross_entropy(logits: &[f64], targets: &[usize], k: usize) -> Result<f64> {
    check_targets(logits, targets, k)?;
    let total: f64 = logits
        .chunks_exact(k)
        .zip(targets)
        .map(|(row, &t)| log_sum_exp(row) - row[t])
        .sum();
    Ok(total / targets.len() as f64)
}

/// Gradient of [`cross_entropy`] with respect to the logits.
pub fn cross_entropy_grad(logits: &[f64], targets: &[usize], k: usize) -> Result<Vec<f64>> {
    check_targets(logits, targets, k)?;
    let n = targets.len() as f64;
    let mut g = Vec::with_capacity(logits.len());
    for (row, &t) in logits.chunks_exact(k).zip(targets) {
        let lse = log_sum_exp(row);
        for (j, &l) in row.iter().enumerate() {
            let p = (l - lse).exp();
            g.push((p - if j == t { 1.0 } else { 0.0 }) / n);
        }
    }
    Ok(g)
}

fn check_targets(logits: &[f64], targets: &[usize], k: usize) -> Result<()> {
    if k == 0 || logits.len() != targets.len() * k || targets.is_empty() {
        return Err(Error::dim(format!(
            "{} logits for {} targets over {k} classes",
            logits.len(),
            targets.len()
        )));
    }
    if let Some((position, &index)) = targets.iter().enumerate().find(|(_, &t)| t >= k) {
        return Err(Error::CorruptToken { position, index, k });
    }
    Ok(())
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// One teacher-forced training sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub class: usize,
    /// Band-position inputs, `total_tokens x C`.
    pub inputs: Vec<f64>,
    pub targets: Vec<usize>,
}

impl Example {
    pub fn from_tokens(tokens: &TokenSequence, codebook: &Codebook, params: &ModelParams) -> Result<Self> {
        let cfg = params.config();
        if tokens.schedule != cfg.schedule {
            return Err(Error::dim("token schedule differs from model schedule"));
        }
        let class = tokens
            .class_label
            .map(|c| c as usize)
            .ok_or_else(|| Error::param("training sequences need a class label"))?;
        if class >= cfg.num_classes {
            return Err(Error::ClassOutOfRange {
                class,
                classes: cfg.num_classes,
            });
        }
        Ok(Self {
            class,
            inputs: teacher_inputs(&cfg.schedule, &tokens.bands, codebook, cfg.interp)?,
            targets: tokens.flat(),
        })
    }
}

/// Cross-entropy of one example and its parameter gradient.
pub fn loss_and_grad(params: &ModelParams, class: usize, inputs: &[f64], targets: &[usize]) -> Result<(f64, Vec<f64>)> {
    let len = params.plan().total_len();
    let fwd = params.forward(class, inputs, len)?;
    let k = params.config().codebook_size;
    let loss = cross_entropy(&fwd.logits, targets, k)?;
    let dlogits = cross_entropy_grad(&fwd.logits, targets, k)?;
    Ok((loss, params.backward(&fwd, inputs, &dlogits)))
}

/// Log-probability of `targets` under the model, summed per band.
pub fn sequence_log_prob(params: &ModelParams, class: usize, inputs: &[f64], targets: &[usize]) -> Result<Vec<f64>> {
    let len = params.plan().total_len();
    let k = params.config().codebook_size;
    let logits = params.logits(class, inputs, len)?;
    check_targets(&logits, targets, k)?;
    let plan = params.plan();
    let mut per_band = vec![0.0; plan.blocks() - 1];
    for (pos, (row, &t)) in logits.chunks_exact(k).zip(targets).enumerate() {
        per_band[plan.block_of(pos + 1) - 1] += row[t] - log_sum_exp(row);
    }
    Ok(per_band)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Heavy-ball SGD; `momentum = 0` gives plain SGD.
    #[default]
    Momentum,
    /// Adam with beta1 = `momentum`, beta2 = 0.999, eps = 1e-8.
    Adam,
}

const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Probability of replacing the class with the unconditional id.
    pub cond_dropout: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            optimizer: Optimizer::Momentum,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 8,
            cond_dropout: 0.1,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss of every step.
    pub step_losses: Vec<f64>,
    /// Mean loss over each full pass through the dataset.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch training over teacher-forced examples. Batch
/// gradients are summed in example order, so results are reproducible for
/// a fixed seed.
pub fn train(params: &mut ModelParams, data: &[Example], config: &TrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    let uncond = params.config().uncond_id();
    let batch = config.batch_size.clamp(1, data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity = vec![0.0; params.len()];
    let mut second = match config.optimizer {
        Optimizer::Adam => vec![0.0; params.len()],
        Optimizer::Momentum => Vec::new(),
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = data.len();
    let mut report = TrainReport::default();
    let mut epoch_sum = 0.0;
    let mut epoch_count = 0;

    for step in 0..config.steps {
        let mut grad = vec![0.0; params.len()];
        let mut batch_loss = 0.0;
        for _ in 0..batch {
            if cursor == data.len() {
                if epoch_count > 0 {
                    report.epoch_losses.push(epoch_sum / epoch_count as f64);
                    epoch_sum = 0.0;
                    epoch_count = 0;
                }
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let ex = &data[order[cursor]];
            cursor += 1;
            let class = if rng.random::<f64>() < config.cond_dropout {
                uncond
            } else {
                ex.class
            };
            let (loss, g) = loss_and_grad(params, class, &ex.inputs, &ex.targets)?;
            batch_loss += loss;
            epoch_sum += loss;
            epoch_count += 1;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let scale = 1.0 / batch as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        batch_loss *= scale;
        if !batch_loss.is_finite() {
            return Err(Error::Divergence {
                step,
                loss: batch_loss,
            });
        }
        if config.grad_clip > 0.0 {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > config.grad_clip {
                let s = config.grad_clip / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        match config.optimizer {
            Optimizer::Momentum => {
                for ((p, v), g) in params.as_mut_slice().iter_mut().zip(&mut velocity).zip(&grad) {
                    *v = config.momentum * *v + g;
                    *p -= config.learning_rate * *v;
                }
            }
            Optimizer::Adam => {
                let t = (step + 1) as i32;
                let c1 = 1.0 - config.momentum.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                let params = params.as_mut_slice();
                for i in 0..params.len() {
                    let g = grad[i];
                    velocity[i] = config.momentum * velocity[i] + (1.0 - config.momentum) * g;
                    second[i] = ADAM_BETA2 * second[i] + (1.0 - ADAM_BETA2) * g * g;
                    params[i] -= config.learning_rate * (velocity[i] / c1) / ((second[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
        report.step_losses.push(batch_loss);
    }
    if epoch_count > 0 {
        report.epoch_losses.push(epoch_sum / epoch_count as f64);
    }
    Ok(report)
}
