//! Frequency band schedules, radial masks, and the decompose/compose pair.
//!
//! Radial frequency is measured in normalized units on centered indices,
//! so a square grid spans `[0, sqrt(0.5)]`. A schedule of increasing
//! scales `(h_i, w_i)` splits that range into bands whose widths are
//! proportional to each scale's token count `h_i * w_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FeatureMap;
use crate::spectral::{dft2, idft2};

/// Scale schedule used by the reference configuration.
pub const DEFAULT_SIDES: [usize; 10] = [1, 2, 3, 4, 5, 6, 8, 10, 13, 16];

#[inline]
fn centered(i: usize, n: usize) -> i64 {
    let half = (n / 2) as i64;
    ((i as i64 + half) % n as i64) - half
}

/// Normalized radial frequency of DFT bin `(u, v)` on an `h x w` grid.
pub fn radial_frequency(u: usize, v: usize, h: usize, w: usize) -> Result<f64> {
    if u >= h || v >= w {
        return Err(Error::Index {
            row: u,
            col: v,
            height: h,
            width: w,
        });
    }
    Ok(radial_frequency_unchecked(u, v, h, w))
}

#[inline]
pub(crate) fn radial_frequency_unchecked(u: usize, v: usize, h: usize, w: usize) -> f64 {
    let a = centered(u, h) as f64 / h as f64;
    let b = centered(v, w) as f64 / w as f64;
    (a * a + b * b).sqrt()
}

/// Largest normalized radial frequency present on an `h x w` grid.
pub fn sigma_max(h: usize, w: usize) -> f64 {
    let a = (h / 2) as f64 / h as f64;
    let b = (w / 2) as f64 / w as f64;
    (a * a + b * b).sqrt()
}

/// Band upper bounds: each band's width is its share of the total token
/// count. The last bound is set to `sigma_max` rather than accumulated.
pub fn sigma_boundaries(scales: &[(usize, usize)], sigma_max: f64) -> Result<Vec<f64>> {
    if scales.is_empty() {
        return Err(Error::param("scale list is empty"));
    }
    let total: usize = scales.iter().map(|&(h, w)| h * w).sum();
    let mut sigma = Vec::with_capacity(scales.len());
    let mut acc = 0.0;
    for &(h, w) in scales {
        acc += (h * w) as f64 / total as f64 * sigma_max;
        sigma.push(acc);
    }
    *sigma.last_mut().unwrap() = sigma_max;
    Ok(sigma)
}

/// Ordered scales plus the derived frequency band bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct BandSchedule {
    scales: Vec<(usize, usize)>,
    sigma: Vec<f64>,
    sigma_max: f64,
}

impl TryFrom<Vec<(usize, usize)>> for BandSchedule {
    type Error = Error;

    fn try_from(scales: Vec<(usize, usize)>) -> Result<Self> {
        BandSchedule::new(scales)
    }
}

impl From<BandSchedule> for Vec<(usize, usize)> {
    fn from(s: BandSchedule) -> Self {
        s.scales
    }
}

impl Default for BandSchedule {
    fn default() -> Self {
        BandSchedule::square(&DEFAULT_SIDES).expect("default schedule is valid")
    }
}

impl BandSchedule {
    pub fn new(scales: Vec<(usize, usize)>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::param("schedule needs at least one scale"));
        }
        if scales.iter().any(|&(h, w)| h == 0 || w == 0) {
            return Err(Error::param("scales must be positive"));
        }
        for pair in scales.windows(2) {
            let ((h0, w0), (h1, w1)) = (pair[0], pair[1]);
            if h1 < h0 || w1 < w0 {
                return Err(Error::param(format!(
                    "scales must be nondecreasing, got ({h0},{w0}) then ({h1},{w1})"
                )));
            }
        }
        let &(hn, wn) = scales.last().unwrap();
        let sigma_max = sigma_max(hn, wn);
        let sigma = sigma_boundaries(&scales, sigma_max)?;
        Ok(Self {
            scales,
            sigma,
            sigma_max,
        })
    }

    /// Schedule of square scales `(s, s)`.
    pub fn square(sides: &[usize]) -> Result<Self> {
        Self::new(sides.iter().map(|&s| (s, s)).collect())
    }

    /// Parses `"1,2,4"` (square sides) or `"1x1,2x3"` (explicit pairs).
    pub fn parse(text: &str) -> Result<Self> {
        let mut scales = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::param(format!("bad scale '{item}'")))
            };
            let pair = match item.split_once(['x', 'X']) {
                Some((h, w)) => (parse(h)?, parse(w)?),
                None => {
                    let s = parse(item)?;
                    (s, s)
                }
            };
            scales.push(pair);
        }
        Self::new(scales)
    }

    pub fn scales(&self) -> &[(usize, usize)] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Band upper bounds on the final-scale grid.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// `sigma_i / sigma_max` for each band.
    pub fn fractions(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self.sigma.iter().map(|s| s / self.sigma_max).collect();
        *f.last_mut().unwrap() = 1.0;
        f
    }

    /// Final scale, which is the latent grid size.
    pub fn grid(&self) -> (usize, usize) {
        *self.scales.last().unwrap()
    }

    pub fn token_counts(&self) -> Vec<usize> {
        self.scales.iter().map(|&(h, w)| h * w).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.token_counts().iter().sum()
    }

    /// Offset of each band's first token in the flattened sequence.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.token_counts()
            .into_iter()
            .map(|n| {
                let o = acc;
                acc += n;
                o
            })
            .collect()
    }

    /// Band bounds rescaled to an arbitrary `h x w` grid.
    pub fn sigma_on_grid(&self, h: usize, w: usize) -> Vec<f64> {
        let smax = sigma_max(h, w);
        let mut s: Vec<f64> = self.fractions().iter().map(|f| f * smax).collect();
        *s.last_mut().unwrap() = smax;
        s
    }
}

/// Index of the band containing `fr` for upper bounds `sigma`; the last band
/// is closed on the right.
pub fn band_of(fr: f64, sigma: &[f64]) -> usize {
    sigma
        .iter()
        .position(|&s| fr < s)
        .unwrap_or(sigma.len() - 1)
}

/// Binary frequency-selection mask on an `h x w` DFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl FrequencyMask {
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for u in 0..height {
            for v in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Mask selecting normalized radial frequencies in `[lo, hi)`, or
    /// `[lo, hi]` when `closed` is set.
    pub fn annulus(height: usize, width: usize, lo: f64, hi: f64, closed: bool) -> Self {
        Self::from_fn(height, width, |u, v| {
            let fr = radial_frequency_unchecked(u, v, height, width);
            fr >= lo && (fr < hi || (closed && fr <= hi))
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[u * self.width + v]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_self_symmetric(&self) -> bool {
        let (h, w) = (self.height, self.width);
        (0..h).all(|u| (0..w).all(|v| self.get(u, v) == self.get((h - u) % h, (w - v) % w)))
    }
}

/// One mask per band on the schedule's own (final-scale) grid.
pub fn build_masks(schedule: &BandSchedule) -> Result<Vec<FrequencyMask>> {
    let (h, w) = schedule.grid();
    build_masks_on_grid(schedule, h, w)
}

/// One mask per band on an arbitrary `h x w` grid using the schedule's
/// boundary fractions. Every cell lands in exactly one mask.
pub fn build_masks_on_grid(schedule: &BandSchedule, h: usize, w: usize) -> Result<Vec<FrequencyMask>> {
    if h == 0 || w == 0 {
        return Err(Error::dim("mask grid has zero size"));
    }
    let sigma = schedule.sigma_on_grid(h, w);
    let assignment: Vec<usize> = (0..h)
        .flat_map(|u| (0..w).map(move |v| (u, v)))
        .map(|(u, v)| band_of(radial_frequency_unchecked(u, v, h, w), &sigma))
        .collect();
    Ok((0..sigma.len())
        .map(|band| FrequencyMask::from_fn(h, w, |u, v| assignment[u * w + v] == band))
        .collect())
}

/// Splits `f` into per-mask components `F^-1(F(f) * M_i)`, all at full
/// resolution.
pub fn decompose(f: &FeatureMap, masks: &[FrequencyMask]) -> Result<Vec<FeatureMap>> {
    let spectrum = dft2(f)?;
    masks
        .iter()
        .map(|mask| {
            if mask.height() != f.height() || mask.width() != f.width() {
                return Err(Error::dim(format!(
                    "mask is {}x{} but feature map is {}x{}",
                    mask.height(),
                    mask.width(),
                    f.height(),
                    f.width()
                )));
            }
            let mut band = spectrum.clone();
            band.apply_gain(|u, v| if mask.get(u, v) { 1.0 } else { 0.0 });
            idft2(&band)
        })
        .collect()
}

/// Kernel used when resizing a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    /// Half-pixel bilinear upsampling, area-average downsampling.
    #[default]
    Bilinear,
    /// Nearest-neighbour (block replication) upsampling, area-average
    /// downsampling.
    Box,
}

/// Sparse 1D resampling weights: for each output index, `(source, weight)`.
fn axis_weights(src: usize, dst: usize, mode: Interp) -> Vec<Vec<(usize, f64)>> {
    use std::cmp::Ordering;
    match dst.cmp(&src) {
        Ordering::Equal => (0..dst).map(|i| vec![(i, 1.0)]).collect(),
        Ordering::Greater => {
            let ratio = src as f64 / dst as f64;
            (0..dst)
                .map(|d| match mode {
                    Interp::Bilinear => {
                        let pos = ((d as f64 + 0.5) * ratio - 0.5).max(0.0);
                        let i0 = (pos.floor() as usize).min(src - 1);
                        let i1 = (i0 + 1).min(src - 1);
                        let t = pos - i0 as f64;
                        if i1 == i0 || t == 0.0 {
                            vec![(i0, 1.0)]
                        } else {
                            vec![(i0, 1.0 - t), (i1, t)]
                        }
                    }
                    Interp::Box => {
                        let i = (((d as f64 + 0.5) * ratio).floor() as usize).min(src - 1);
                        vec![(i, 1.0)]
                    }
                })
                .collect()
        }
        Ordering::Less => {
            // Output cell d covers source interval [d*r, (d+1)*r).
            let ratio = src as f64 / dst as f64;
            (0..dst)
                .map(|d| {
                    let lo = d as f64 * ratio;
                    let hi = (d + 1) as f64 * ratio;
                    let first = lo.floor() as usize;
                    let last = (hi.ceil() as usize).min(src);
                    (first..last)
                        .filter_map(|s| {
                            let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                            (overlap > 0.0).then_some((s, overlap / ratio))
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Resizes `v` to `out_h x out_w`. Upsampling uses the `mode` kernel,
/// downsampling always averages over covered area. Axes are handled
/// independently.
pub fn interpolate(v: &FeatureMap, out_h: usize, out_w: usize, mode: Interp) -> Result<FeatureMap> {
    let (h, w, ch) = v.shape();
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::dim(format!("cannot resize {h}x{w} to {out_h}x{out_w}")));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(v.clone());
    }
    let rows = axis_weights(h, out_h, mode);
    let cols = axis_weights(w, out_w, mode);

    let mut tmp = FeatureMap::zeros(out_h, w, ch);
    for (y, taps) in rows.iter().enumerate() {
        for x in 0..w {
            let dst = tmp.pixel_mut(y, x);
            for &(sy, wt) in taps {
                for (d, s) in dst.iter_mut().zip(v.pixel(sy, x)) {
                    *d += wt * s;
                }
            }
        }
    }
    let mut out = FeatureMap::zeros(out_h, out_w, ch);
    for y in 0..out_h {
        for (x, taps) in cols.iter().enumerate() {
            for &(sx, wt) in taps {
                let src: Vec<f64> = tmp.pixel(y, sx).to_vec();
                for (d, s) in out.pixel_mut(y, x).iter_mut().zip(&src) {
                    *d += wt * s;
                }
            }
        }
    }
    Ok(out)
}

/// Sums the components after resizing each to `out_h x out_w`.
pub fn compose(components: &[FeatureMap], out_h: usize, out_w: usize, mode: Interp) -> Result<FeatureMap> {
    let first = components
        .first()
        .ok_or_else(|| Error::param("compose needs at least one component"))?;
    let mut out = FeatureMap::zeros(out_h, out_w, first.channels());
    for c in components {
        out.add_assign(&interpolate(c, out_h, out_w, mode)?)?;
    }
    Ok(out)
}
