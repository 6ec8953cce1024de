//! Synthetic inputs with a controlled power spectrum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bands::radial_frequency_unchecked;
use crate::error::{Error, Result};
use crate::grid::{FeatureMap, Image};
use crate::spectral::{dft2, idft2};

/// Zero-mean, unit-variance field whose power spectrum falls as
/// `f_r^-alpha`: white Gaussian noise shaped by the amplitude gain
/// `f_r^(-alpha/2)` with the DC term removed.
pub fn power_law_field(height: usize, width: usize, channels: usize, alpha: f64, seed: u64) -> Result<FeatureMap> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::dim("power-law field needs a nonempty grid"));
    }
    if !alpha.is_finite() {
        return Err(Error::param("alpha must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..height * width * channels)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut spectrum = dft2(&FeatureMap::from_vec(height, width, channels, noise)?)?;
    spectrum.apply_gain(|u, v| {
        let fr = radial_frequency_unchecked(u, v, height, width);
        if fr == 0.0 {
            0.0
        } else {
            fr.powf(-alpha / 2.0)
        }
    });
    let mut field = idft2(&spectrum)?;
    let n = field.as_slice().len() as f64;
    let std = (field.sum_squares() / n).sqrt();
    if std > 0.0 {
        field.scale(1.0 / std);
    }
    Ok(field)
}

/// Natural-looking test image: mid-gray plus a shared `1/f^2` luminance
/// field and weaker per-channel color fields, clamped to `[0, 1]`.
pub fn synthetic_image(height: usize, width: usize, channels: usize, seed: u64) -> Result<Image> {
    let luma = power_law_field(height, width, 1, 2.0, seed)?;
    let chroma = power_law_field(height, width, channels, 2.0, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let img = Image::from_fn(height, width, channels, |y, x, c| {
        0.5 + 0.15 * luma.get(y, x, 0) + 0.05 * chroma.get(y, x, c)
    })?;
    Ok(img.clamped())
}
