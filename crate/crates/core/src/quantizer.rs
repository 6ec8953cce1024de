//! Vector quantization against a shared codebook, frequency-guided residual
//! token extraction, and k-means codebook learning.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bands::{interpolate, BandSchedule, Interp};
use crate::error::{Error, Result};
use crate::grid::FeatureMap;

/// Size of the reference codebook.
pub const DEFAULT_CODEBOOK_SIZE: usize = 4096;

/// `K x C` table of code vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl Codebook {
    pub fn new(k: usize, dim: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyCodebook);
        }
        if dim == 0 || entries.len() != k * dim {
            return Err(Error::dim(format!(
                "codebook buffer of length {} does not match {k}x{dim}",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("codebook entries must be finite"));
        }
        Ok(Self { k, dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyCodebook)?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::dim("codebook rows have different lengths"));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    /// Single all-zero entry; quantizes everything to zero.
    pub fn zeros(dim: usize) -> Self {
        Self {
            k: 1,
            dim,
            entries: vec![0.0; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.entries[index * self.dim..(index + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// Stable 64-bit identity of the table at storage (f32) precision.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(b"nfig-codebook");
        hasher.update((self.k as u64).to_le_bytes());
        hasher.update((self.dim as u64).to_le_bytes());
        for v in &self.entries {
            hasher.update((*v as f32).to_le_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Index of the nearest entry under squared Euclidean distance; ties
    /// go to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (j, row) in self.entries.chunks_exact(self.dim).enumerate() {
            let d = squared_distance(v, row);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Maps every spatial vector of `v` to its nearest codebook row.
pub fn vq_lookup(v: &FeatureMap, codebook: &Codebook) -> Result<(Vec<usize>, FeatureMap)> {
    if codebook.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    if v.channels() != codebook.dim() {
        return Err(Error::dim(format!(
            "feature dimension {} does not match codebook dimension {}",
            v.channels(),
            codebook.dim()
        )));
    }
    let mut tokens = Vec::with_capacity(v.height() * v.width());
    let mut quantized = FeatureMap::zeros(v.height(), v.width(), v.channels());
    for y in 0..v.height() {
        for x in 0..v.width() {
            let (j, _) = codebook.nearest(v.pixel(y, x));
            tokens.push(j);
            quantized.pixel_mut(y, x).copy_from_slice(codebook.row(j));
        }
    }
    Ok((tokens, quantized))
}

/// How each band's continuous solution is discretized.
#[derive(Debug, Clone, Copy)]
pub enum Quantize<'a> {
    Codebook(&'a Codebook),
    /// Pass continuous values through unchanged (analysis only).
    Disabled,
}

/// Per-band state of residual extraction.
#[derive(Debug, Clone)]
pub struct BandLevel {
    /// Full-resolution map the band is fitted to.
    pub target: FeatureMap,
    /// Continuous `h_i x w_i` solution.
    pub continuous: FeatureMap,
    /// Quantized `h_i x w_i` solution (equal to `continuous` when disabled).
    pub quantized: FeatureMap,
    /// Token indices, row-major; empty when quantization is disabled.
    pub tokens: Vec<usize>,
    /// Full-resolution residual left after this band.
    pub residual: FeatureMap,
}

#[derive(Debug, Clone)]
pub struct ResidualPyramid {
    pub levels: Vec<BandLevel>,
    pub interp: Interp,
}

impl ResidualPyramid {
    /// `sum_{j<=k} I(v_j^q)` at full resolution, for `k` in `1..=n`.
    pub fn partial_reconstruction(&self, bands: usize) -> Result<FeatureMap> {
        let first = self
            .levels
            .first()
            .ok_or_else(|| Error::param("empty pyramid"))?;
        let (h, w, c) = first.target.shape();
        let mut out = FeatureMap::zeros(h, w, c);
        for level in self.levels.iter().take(bands) {
            out.add_assign(&interpolate(&level.quantized, h, w, self.interp)?)?;
        }
        Ok(out)
    }

    pub fn reconstruction(&self) -> Result<FeatureMap> {
        self.partial_reconstruction(self.levels.len())
    }

    pub fn tokens(&self) -> Vec<Vec<usize>> {
        self.levels.iter().map(|l| l.tokens.clone()).collect()
    }
}

/// Fits each band to the accumulated signal left by lower bands.
///
/// Band `i`'s target is `R_{i-1} + f_i` (just `f_0` for the first band),
/// its continuous solution is the area-average downsample of the target to
/// the band scale, and the residual `R_i = target - I(v_i^q)` carries the
/// quantized value forward.
pub fn residual_extract(
    components: &[FeatureMap],
    schedule: &BandSchedule,
    quantize: Quantize<'_>,
    interp: Interp,
) -> Result<ResidualPyramid> {
    if components.len() != schedule.len() {
        return Err(Error::dim(format!(
            "{} components for a {}-band schedule",
            components.len(),
            schedule.len()
        )));
    }
    let (gh, gw) = schedule.grid();
    let mut levels: Vec<BandLevel> = Vec::with_capacity(components.len());
    for (component, &(h, w)) in components.iter().zip(schedule.scales()) {
        if (component.height(), component.width()) != (gh, gw) {
            return Err(Error::dim(format!(
                "component is {}x{}, schedule grid is {gh}x{gw}",
                component.height(),
                component.width()
            )));
        }
        let target = match levels.last() {
            None => component.clone(),
            Some(prev) => {
                let mut t = prev.residual.clone();
                t.add_assign(component)?;
                t
            }
        };
        let continuous = interpolate(&target, h, w, Interp::Bilinear)?;
        let (tokens, quantized) = match quantize {
            Quantize::Codebook(cb) => vq_lookup(&continuous, cb)?,
            Quantize::Disabled => (Vec::new(), continuous.clone()),
        };
        let mut residual = target.clone();
        residual.sub_assign(&interpolate(&quantized, gh, gw, interp)?)?;
        levels.push(BandLevel {
            target,
            continuous,
            quantized,
            tokens,
            residual,
        });
    }
    Ok(ResidualPyramid { levels, interp })
}

/// Linear map `v -> I(v, H, W)` as a dense `(H*W) x (h*w)` matrix for one
/// channel.
fn interpolation_matrix(h: usize, w: usize, out_h: usize, out_w: usize, interp: Interp) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(out_h * out_w, h * w);
    for j in 0..h * w {
        let mut basis = FeatureMap::zeros(h, w, 1);
        basis.as_mut_slice()[j] = 1.0;
        let col = interpolate(&basis, out_h, out_w, interp)?;
        for (i, &val) in col.as_slice().iter().enumerate() {
            a[(i, j)] = val;
        }
    }
    Ok(a)
}

/// Largest grid (cells) accepted by [`least_squares_fit`].
pub const LSQ_MAX_CELLS: usize = 64;

/// Exact `argmin_v ||target - I(v)||^2` via the normal equations, per
/// channel. Limited to targets of at most 8x8 cells.
pub fn least_squares_fit(target: &FeatureMap, h: usize, w: usize, interp: Interp) -> Result<FeatureMap> {
    let (th, tw, ch) = target.shape();
    if th * tw > LSQ_MAX_CELLS {
        return Err(Error::param(format!(
            "least-squares oracle limited to {LSQ_MAX_CELLS} cells, got {th}x{tw}"
        )));
    }
    let a = interpolation_matrix(h, w, th, tw, interp)?;
    let ata = a.transpose() * &a;
    let mut out = FeatureMap::zeros(h, w, ch);
    for c in 0..ch {
        let b = DVector::from_iterator(th * tw, (0..th * tw).map(|i| target.as_slice()[i * ch + c]));
        let atb = a.transpose() * b;
        let sol = ata
            .clone()
            .svd(true, true)
            .solve(&atb, 1e-14)
            .map_err(|e| Error::param(format!("normal equations: {e}")))?;
        for (i, v) in sol.iter().enumerate() {
            out.as_mut_slice()[i * ch + c] = *v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    /// Number of full passes over the samples.
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_CODEBOOK_SIZE,
            iterations: 20,
            batch_size: 1024,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub codebook: Codebook,
    /// Mean squared quantization error after initialization and after each
    /// pass; non-increasing.
    pub pass_errors: Vec<f64>,
}

impl KMeansResult {
    pub fn final_error(&self) -> f64 {
        *self.pass_errors.last().unwrap()
    }
}

struct Assignment {
    labels: Vec<usize>,
    dists: Vec<f64>,
}

impl Assignment {
    fn mean_error(&self) -> f64 {
        self.dists.iter().sum::<f64>() / self.dists.len() as f64
    }
}

fn assign(samples: &[f64], dim: usize, centers: &[f64]) -> Assignment {
    let n = samples.len() / dim;
    let mut labels = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for s in samples.chunks_exact(dim) {
        let mut best = (0, f64::INFINITY);
        for (j, c) in centers.chunks_exact(dim).enumerate() {
            let d = squared_distance(s, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        labels.push(best.0);
        dists.push(best.1);
    }
    Assignment { labels, dists }
}

/// Moves centers that own no samples onto the farthest samples.
fn reseed_empty(samples: &[f64], dim: usize, centers: &mut [f64], asg: &Assignment) -> bool {
    let k = centers.len() / dim;
    let mut owned = vec![false; k];
    for &l in &asg.labels {
        owned[l] = true;
    }
    let empty: Vec<usize> = (0..k).filter(|&j| !owned[j]).collect();
    if empty.is_empty() {
        return false;
    }
    let mut order: Vec<usize> = (0..asg.dists.len()).collect();
    order.sort_by(|&a, &b| asg.dists[b].total_cmp(&asg.dists[a]).then(a.cmp(&b)));
    for (&j, &s) in empty.iter().zip(&order) {
        centers[j * dim..(j + 1) * dim].copy_from_slice(&samples[s * dim..(s + 1) * dim]);
    }
    true
}

fn lloyd_step(samples: &[f64], dim: usize, centers: &mut [f64]) {
    let k = centers.len() / dim;
    let asg = assign(samples, dim, centers);
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (s, &l) in samples.chunks_exact(dim).zip(&asg.labels) {
        counts[l] += 1;
        for (acc, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(s) {
            *acc += v;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            for d in 0..dim {
                centers[j * dim + d] = sums[j * dim + d] / counts[j] as f64;
            }
        }
    }
    let asg = assign(samples, dim, centers);
    reseed_empty(samples, dim, centers, &asg);
}

fn kmeans_pp_init(samples: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = samples.len() / dim;
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(&samples[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = samples
        .chunks_exact(dim)
        .map(|s| squared_distance(s, &centers[..dim]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    chosen = Some(i);
                    if r < d {
                        break;
                    }
                    r -= d;
                }
            }
            chosen.unwrap()
        } else {
            rng.random_range(0..n)
        };
        let c = &samples[pick * dim..(pick + 1) * dim];
        for (dst, s) in d2.iter_mut().zip(samples.chunks_exact(dim)) {
            *dst = dst.min(squared_distance(s, c));
        }
        centers.extend_from_slice(c);
    }
    centers
}

fn distinct_count(samples: &[f64], dim: usize, cap: usize) -> usize {
    let mut seen = HashSet::new();
    for s in samples.chunks_exact(dim) {
        let key: Vec<u64> = s.iter().map(|v| (v + 0.0).to_bits()).collect();
        seen.insert(key);
        if seen.len() >= cap {
            break;
        }
    }
    seen.len()
}

/// Mini-batch k-means with k-means++ seeding.
///
/// `samples` holds `n` vectors of length `dim` back to back. Each pass runs
/// mini-batch center updates over a seeded shuffle; a pass that would raise
/// the full-data error is replaced by an exact Lloyd step from the previous
/// centers, so the recorded per-pass error never increases.
pub fn train_codebook(samples: &[f64], dim: usize, config: &KMeansConfig) -> Result<KMeansResult> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(Error::dim("sample buffer is not a whole number of vectors"));
    }
    if config.k == 0 {
        return Err(Error::EmptyCodebook);
    }
    let n = samples.len() / dim;
    if distinct_count(samples, dim, config.k) < config.k {
        return Err(Error::InsufficientData(format!(
            "need at least {} distinct samples, have fewer among {n}",
            config.k
        )));
    }
    let k = config.k;
    let batch = config.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut centers = kmeans_pp_init(samples, dim, k, &mut rng);
    let mut counts = vec![0u64; k];
    let asg = assign(samples, dim, &centers);
    let mut errors = vec![asg.mean_error()];
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..config.iterations {
        let previous = centers.clone();
        let previous_counts = counts.clone();
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let labels: Vec<usize> = chunk
                .iter()
                .map(|&i| {
                    let s = &samples[i * dim..(i + 1) * dim];
                    let mut best = (0, f64::INFINITY);
                    for (j, c) in centers.chunks_exact(dim).enumerate() {
                        let d = squared_distance(s, c);
                        if d < best.1 {
                            best = (j, d);
                        }
                    }
                    best.0
                })
                .collect();
            for (&i, &l) in chunk.iter().zip(&labels) {
                counts[l] += 1;
                let eta = 1.0 / counts[l] as f64;
                let s = &samples[i * dim..(i + 1) * dim];
                for (c, v) in centers[l * dim..(l + 1) * dim].iter_mut().zip(s) {
                    *c += eta * (v - *c);
                }
            }
        }
        let asg = assign(samples, dim, &centers);
        let mut err = if reseed_empty(samples, dim, &mut centers, &asg) {
            assign(samples, dim, &centers).mean_error()
        } else {
            asg.mean_error()
        };
        let last = *errors.last().unwrap();
        if err > last {
            centers = previous;
            counts = previous_counts;
            lloyd_step(samples, dim, &mut centers);
            err = assign(samples, dim, &centers).mean_error().min(last);
        }
        errors.push(err);
    }
    Ok(KMeansResult {
        codebook: Codebook::new(k, dim, centers)?,
        pass_errors: errors,
    })
}
