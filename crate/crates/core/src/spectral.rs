//! 2D discrete Fourier analysis over feature maps.
//!
//! Conventions: the forward transform is unnormalized,
//! `F(u,v) = sum_{x,y} f(x,y) exp(-2 pi i (ux/M + vy/N))`, and the inverse
//! carries the `1/(MN)` factor. Each channel is transformed independently.

pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::Serialize;
use std::sync::Arc;

use crate::bands::{radial_frequency, sigma_max};
use crate::error::{Error, Result};
use crate::grid::FeatureMap;

/// Imaginary residue (relative to `1 + max|re|`) above which an inverse
/// transform is rejected as not coming from a real signal.
pub const SYMMETRY_TOLERANCE: f64 = 1e-3;

/// Complex `height x width x channels` frequency grid, same layout as
/// [`FeatureMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl SpectralMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![Complex64::new(0.0, 0.0); height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn index(&self, u: usize, v: usize, c: usize) -> usize {
        (u * self.width + v) * self.channels + c
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> Complex64 {
        self.data[self.index(u, v, c)]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, c: usize, value: Complex64) {
        let i = self.index(u, v, c);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Multiplies every channel at `(u, v)` by `gain(u, v)`.
    pub fn apply_gain(&mut self, mut gain: impl FnMut(usize, usize) -> f64) {
        let channels = self.channels;
        for u in 0..self.height {
            for v in 0..self.width {
                let g = gain(u, v);
                let start = (u * self.width + v) * channels;
                for z in &mut self.data[start..start + channels] {
                    *z *= g;
                }
            }
        }
    }

    /// Largest `|F(u,v) - conj(F(-u,-v))|` over the grid.
    pub fn symmetry_defect(&self) -> f64 {
        let (h, w) = (self.height, self.width);
        let mut worst = 0.0_f64;
        for u in 0..h {
            for v in 0..w {
                for c in 0..self.channels {
                    let a = self.get(u, v, c);
                    let b = self.get((h - u) % h, (w - v) % w, c).conj();
                    worst = worst.max((a - b).norm());
                }
            }
        }
        worst
    }
}

struct Plan2d {
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
}

impl Plan2d {
    fn new(height: usize, width: usize, direction: FftDirection) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows: planner.plan_fft(width, direction),
            cols: planner.plan_fft(height, direction),
        }
    }

    /// In-place unnormalized 2D transform of one row-major plane.
    fn process(&self, plane: &mut [Complex64], height: usize, width: usize) {
        let mut scratch = vec![Complex64::default(); self.rows.get_inplace_scratch_len()];
        for row in plane.chunks_exact_mut(width) {
            self.rows.process_with_scratch(row, &mut scratch);
        }
        let mut column = vec![Complex64::default(); height];
        scratch.resize(self.cols.get_inplace_scratch_len(), Complex64::default());
        for x in 0..width {
            for y in 0..height {
                column[y] = plane[y * width + x];
            }
            self.cols.process_with_scratch(&mut column, &mut scratch);
            for y in 0..height {
                plane[y * width + x] = column[y];
            }
        }
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::dim(format!(
            "transform needs positive dimensions, got {height}x{width}x{channels}"
        )));
    }
    Ok(())
}

/// Forward 2D DFT of each channel.
pub fn dft2(f: &FeatureMap) -> Result<SpectralMap> {
    let (h, w, ch) = f.shape();
    check_dims(h, w, ch)?;
    let plan = Plan2d::new(h, w, FftDirection::Forward);
    let mut out = SpectralMap::zeros(h, w, ch);
    let mut plane = vec![Complex64::default(); h * w];
    for c in 0..ch {
        for (i, z) in plane.iter_mut().enumerate() {
            *z = Complex64::new(f.as_slice()[i * ch + c], 0.0);
        }
        plan.process(&mut plane, h, w);
        for (i, z) in plane.iter().enumerate() {
            out.data[i * ch + c] = *z;
        }
    }
    Ok(out)
}

/// Inverse 2D DFT returning complex values (with the `1/(MN)` factor).
pub fn idft2_complex(spectrum: &SpectralMap) -> Result<SpectralMap> {
    let (h, w, ch) = (spectrum.height, spectrum.width, spectrum.channels);
    check_dims(h, w, ch)?;
    let plan = Plan2d::new(h, w, FftDirection::Inverse);
    let norm = 1.0 / (h * w) as f64;
    let mut out = SpectralMap::zeros(h, w, ch);
    let mut plane = vec![Complex64::default(); h * w];
    for c in 0..ch {
        for (i, z) in plane.iter_mut().enumerate() {
            *z = spectrum.data[i * ch + c];
        }
        plan.process(&mut plane, h, w);
        for (i, z) in plane.iter().enumerate() {
            out.data[i * ch + c] = z * norm;
        }
    }
    Ok(out)
}

/// Inverse 2D DFT of a conjugate-symmetric spectrum, discarding the
/// (round-off sized) imaginary part.
pub fn idft2(spectrum: &SpectralMap) -> Result<FeatureMap> {
    let complex = idft2_complex(spectrum)?;
    let (max_re, max_im) = complex.data.iter().fold((0.0_f64, 0.0_f64), |(r, i), z| {
        (r.max(z.re.abs()), i.max(z.im.abs()))
    });
    if max_im > SYMMETRY_TOLERANCE * (1.0 + max_re) {
        return Err(Error::SymmetryViolation { residue: max_im });
    }
    FeatureMap::from_vec(
        spectrum.height,
        spectrum.width,
        spectrum.channels,
        complex.data.iter().map(|z| z.re).collect(),
    )
}

/// `|F(u,v)|^2` averaged over channels, as a single-channel grid.
pub fn power_spectrum(spectrum: &SpectralMap) -> FeatureMap {
    let ch = spectrum.channels;
    let data = spectrum
        .data
        .chunks_exact(ch)
        .map(|cell| cell.iter().map(|z| z.norm_sqr()).sum::<f64>() / ch as f64)
        .collect();
    FeatureMap::from_vec(spectrum.height, spectrum.width, 1, data)
        .expect("power grid has one value per cell")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileBin {
    /// Normalized radial frequency at the bin center.
    pub center: f64,
    pub mean_power: f64,
    /// Number of grid cells in the bin; zero marks an empty bin.
    pub count: usize,
}

impl ProfileBin {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Radially averaged power over uniform bins spanning `[0, sigma_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumProfile {
    pub sigma_max: f64,
    pub bins: Vec<ProfileBin>,
}

impl SpectrumProfile {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    /// CSV with header `radial_freq,mean_power,count`, 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("radial_freq,mean_power,count\n");
        for bin in &self.bins {
            out.push_str(&format!(
                "{},{},{}\n",
                sig9(bin.center),
                sig9(bin.mean_power),
                bin.count
            ));
        }
        out
    }
}

fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Bin index of normalized radial frequency `fr` among `bin_count` uniform
/// bins over `[0, sigma_max]`; the right edge belongs to the last bin.
pub fn radial_bin(fr: f64, sigma_max: f64, bin_count: usize) -> usize {
    let pos = fr / sigma_max * bin_count as f64;
    (pos.floor() as usize).min(bin_count - 1)
}

/// Arithmetic-mean radial profile of a single-channel power grid.
pub fn radial_profile(power: &FeatureMap, bin_count: usize) -> Result<SpectrumProfile> {
    if bin_count < 2 {
        return Err(Error::param(format!("bin_count must be >= 2, got {bin_count}")));
    }
    let (h, w, ch) = power.shape();
    if ch != 1 {
        return Err(Error::dim("radial_profile expects a single-channel power grid"));
    }
    check_dims(h, w, ch)?;
    let smax = sigma_max(h, w);
    let mut sums = vec![0.0; bin_count];
    let mut counts = vec![0usize; bin_count];
    for u in 0..h {
        for v in 0..w {
            let fr = radial_frequency(u, v, h, w)?;
            let b = radial_bin(fr, smax, bin_count);
            sums[b] += power.get(u, v, 0);
            counts[b] += 1;
        }
    }
    let width = smax / bin_count as f64;
    let bins = sums
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(i, (&s, &n))| ProfileBin {
            center: (i as f64 + 0.5) * width,
            mean_power: if n == 0 { 0.0 } else { s / n as f64 },
            count: n,
        })
        .collect();
    Ok(SpectrumProfile {
        sigma_max: smax,
        bins,
    })
}

/// Exponent `alpha` of a `power ~ f^-alpha` law: negated OLS slope of
/// log(power) against log(frequency). The DC bin, empty bins and bins
/// with zero power are skipped.
pub fn fit_one_over_f(profile: &SpectrumProfile) -> Result<f64> {
    let points: Vec<(f64, f64)> = profile
        .bins
        .iter()
        .skip(1)
        .filter(|b| !b.is_empty() && b.mean_power > 0.0 && b.center > 0.0)
        .map(|b| (b.center.ln(), b.mean_power.ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 usable bins for a slope fit, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), &(x, y)| {
        (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
    });
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all usable bins share one frequency".into()));
    }
    Ok(-(sxy / sxx))
}
