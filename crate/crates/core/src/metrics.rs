//! Frequency-fidelity metrics between images.

use serde::{Deserialize, Serialize};

use crate::bands::{build_masks_on_grid, sigma_max, BandSchedule, FrequencyMask};
use crate::error::{Error, Result};
use crate::grid::{FeatureMap, Image};
use crate::spectral::{dft2, idft2, power_spectrum, radial_profile};

pub const PSD_EPSILON: f64 = 1e-12;
pub const DEFAULT_PSD_BINS: usize = 64;

/// FKS weights in percent-points: low, mid, high.
const FKS_WEIGHTS: [f64; 3] = [57.0, 28.0, 15.0];

/// Band energy at or below this fraction of the image energy counts as
/// absent.
const ZERO_BAND_ENERGY: f64 = 1e-20;

fn check_same(a: &Image, b: &Image) -> Result<()> {
    if a.pixels().shape() != b.pixels().shape() {
        return Err(Error::dim(format!(
            "images differ in shape: {:?} vs {:?}",
            a.pixels().shape(),
            b.pixels().shape()
        )));
    }
    Ok(())
}

/// Mean absolute difference of log10 radial power over bins that are
/// populated in the grid.
pub fn psd_distance(a: &Image, b: &Image, bins: usize) -> Result<f64> {
    check_same(a, b)?;
    let pa = radial_profile(&power_spectrum(&dft2(a.pixels())?), bins)?;
    let pb = radial_profile(&power_spectrum(&dft2(b.pixels())?), bins)?;
    let (sum, n) = pa
        .bins
        .iter()
        .zip(&pb.bins)
        .filter(|(x, _)| !x.is_empty())
        .fold((0.0, 0usize), |(s, n), (x, y)| {
            let d = (x.mean_power + PSD_EPSILON).log10() - (y.mean_power + PSD_EPSILON).log10();
            (s + d.abs(), n + 1)
        });
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FksReport {
    pub low: f64,
    pub mid: f64,
    pub high: f64,
    pub weighted: f64,
    /// Normalized radial frequencies separating low/mid and mid/high.
    pub band_edges: [f64; 2],
}

/// Default low/mid and mid/high edges for an `h x w` grid.
pub fn default_fks_edges(h: usize, w: usize) -> [f64; 2] {
    let smax = sigma_max(h, w);
    [smax / 8.0, smax / 2.0]
}

fn fks_masks(h: usize, w: usize, edges: [f64; 2]) -> [FrequencyMask; 3] {
    let smax = sigma_max(h, w);
    [
        FrequencyMask::annulus(h, w, 0.0, edges[0], false),
        FrequencyMask::annulus(h, w, edges[0], edges[1], false),
        FrequencyMask::annulus(h, w, edges[1], smax, true),
    ]
}

fn band_limited(x: &FeatureMap, mask: &FrequencyMask) -> Result<FeatureMap> {
    let mut spec = dft2(x)?;
    spec.apply_gain(|u, v| if mask.get(u, v) { 1.0 } else { 0.0 });
    idft2(&spec)
}

/// Cosine similarity computed as `1 - |a/|a| - b/|b||^2 / 2`, which is
/// exactly 1 for identical inputs.
fn cosine(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    let dist2: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x / na - y / nb;
            d * d
        })
        .sum();
    1.0 - dist2 / 2.0
}

fn band_score(a: &[f64], b: &[f64], energy_a: f64, energy_b: f64) -> f64 {
    let ea: f64 = a.iter().map(|v| v * v).sum();
    let eb: f64 = b.iter().map(|v| v * v).sum();
    let zero_a = ea <= ZERO_BAND_ENERGY * energy_a;
    let zero_b = eb <= ZERO_BAND_ENERGY * energy_b;
    match (zero_a, zero_b) {
        (true, true) => 100.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => 100.0 * cosine(a, b, ea.sqrt(), eb.sqrt()).clamp(0.0, 1.0),
    }
}

/// Frequency Keep Score: per-band cosine similarity of band-limited images,
/// as percentages, combined with weights 0.57/0.28/0.15 (low/mid/high).
pub fn fks(a: &Image, b: &Image, band_edges: [f64; 2]) -> Result<FksReport> {
    check_same(a, b)?;
    if !(band_edges[0] > 0.0 && band_edges[0] < band_edges[1]) {
        return Err(Error::param(format!(
            "FKS edges must satisfy 0 < low < high, got {band_edges:?}"
        )));
    }
    let (h, w) = (a.height(), a.width());
    let energy_a = a.pixels().sum_squares();
    let energy_b = b.pixels().sum_squares();
    let mut scores = [0.0; 3];
    for (score, mask) in scores.iter_mut().zip(fks_masks(h, w, band_edges).iter()) {
        let la = band_limited(a.pixels(), mask)?;
        let lb = band_limited(b.pixels(), mask)?;
        *score = band_score(la.as_slice(), lb.as_slice(), energy_a, energy_b);
    }
    let weighted = scores
        .iter()
        .zip(FKS_WEIGHTS)
        .map(|(s, wgt)| s * wgt)
        .sum::<f64>()
        / 100.0;
    Ok(FksReport {
        low: scores[0],
        mid: scores[1],
        high: scores[2],
        weighted,
        band_edges,
    })
}

/// Weighted FKS for given per-band scores.
pub fn fks_weighted(low: f64, mid: f64, high: f64) -> f64 {
    (FKS_WEIGHTS[0] * low + FKS_WEIGHTS[1] * mid + FKS_WEIGHTS[2] * high) / 100.0
}

/// Share of spectral energy inside each schedule band, measured on the
/// image's own grid.
pub fn band_energy_report(x: &Image, schedule: &BandSchedule) -> Result<Vec<f64>> {
    band_energy_of_map(x.pixels(), schedule)
}

pub fn band_energy_of_map(x: &FeatureMap, schedule: &BandSchedule) -> Result<Vec<f64>> {
    let power = power_spectrum(&dft2(x)?);
    let masks = build_masks_on_grid(schedule, x.height(), x.width())?;
    let total: f64 = power.as_slice().iter().sum();
    if total <= 0.0 {
        return Err(Error::param("band energy fractions are undefined for an all-zero image"));
    }
    Ok(masks
        .iter()
        .map(|m| {
            let mut e = 0.0;
            for u in 0..x.height() {
                for v in 0..x.width() {
                    if m.get(u, v) {
                        e += power.get(u, v, 0);
                    }
                }
            }
            e / total
        })
        .collect())
}

/// Spectral energy at normalized radial frequency `>= threshold`, summed
/// over channels.
pub fn energy_above(x: &FeatureMap, threshold: f64) -> Result<f64> {
    let spec = dft2(x)?;
    let (h, w) = (x.height(), x.width());
    let mask = FrequencyMask::annulus(h, w, threshold, f64::INFINITY, true);
    let mut e = 0.0;
    for u in 0..h {
        for v in 0..w {
            if mask.get(u, v) {
                for c in 0..x.channels() {
                    e += spec.get(u, v, c).norm_sqr();
                }
            }
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FksScores {
    pub low: f64,
    pub mid: f64,
    pub high: f64,
    pub weighted: f64,
}

impl From<FksReport> for FksScores {
    fn from(r: FksReport) -> Self {
        Self {
            low: r.low,
            mid: r.mid,
            high: r.high,
            weighted: r.weighted,
        }
    }
}

/// Combined comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psd: f64,
    pub fks: FksScores,
    pub band_energy: Vec<f64>,
}

pub fn compare(a: &Image, b: &Image, schedule: &BandSchedule, edges: [f64; 2], bins: usize) -> Result<MetricsReport> {
    Ok(MetricsReport {
        psd: psd_distance(a, b, bins)?,
        fks: fks(a, b, edges)?.into(),
        band_energy: band_energy_report(b, schedule)?,
    })
}
