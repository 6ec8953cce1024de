//! Browser bindings. Images cross the boundary as RGBA bytes; every
//! operation is a thin wrapper over a plain function so it can be tested
//! natively.

use nfig_core::bands::{build_masks_on_grid, decompose, BandSchedule, Interp};
use nfig_core::pipeline::{training_vectors, Tokenizer};
use nfig_core::quantizer::{train_codebook, KMeansConfig};
use nfig_core::spectral::{dft2, fit_one_over_f, power_spectrum, radial_profile};
use nfig_core::synth::synthetic_image;
use nfig_core::{FeatureMap, Image, Result};
use wasm_bindgen::prelude::*;

const PATCH: usize = 8;

fn to_js(e: nfig_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

pub fn from_rgba(rgba: &[u8], width: usize, height: usize) -> Result<Image> {
    if rgba.len() != width * height * 4 {
        return Err(nfig_core::Error::Dimension(format!(
            "expected {} RGBA bytes for {width}x{height}, got {}",
            width * height * 4,
            rgba.len()
        )));
    }
    Image::from_fn(height, width, 3, |y, x, c| rgba[(y * width + x) * 4 + c] as f64 / 255.0)
}

pub fn to_rgba(img: &Image) -> Vec<u8> {
    let p = img.pixels();
    let mut out = Vec::with_capacity(img.height() * img.width() * 4);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let px = p.pixel(y, x);
            for c in 0..3 {
                let v = px[c.min(px.len() - 1)];
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            out.push(255);
        }
    }
    out
}

/// Cumulative band sums of `img`, one frame per band, on the image's own grid.
pub fn band_frames(img: &Image, schedule: &BandSchedule) -> Result<Vec<Image>> {
    let (h, w) = (img.height(), img.width());
    let masks = build_masks_on_grid(schedule, h, w)?;
    let mut acc = FeatureMap::zeros(h, w, img.channels());
    let mut frames = Vec::with_capacity(masks.len());
    for band in decompose(img.pixels(), &masks)? {
        acc.add_assign(&band)?;
        frames.push(Image::new(acc.clone())?.clamped());
    }
    Ok(frames)
}

/// Radial power profile of the luminance followed by the fitted exponent.
pub fn luma_spectrum(img: &Image, bins: usize) -> Result<Vec<f64>> {
    let p = img.pixels();
    let luma = FeatureMap::from_fn(img.height(), img.width(), 1, |y, x, _| {
        let px = p.pixel(y, x);
        px.iter().sum::<f64>() / px.len() as f64
    });
    let profile = radial_profile(&power_spectrum(&dft2(&luma)?), bins)?;
    let alpha = fit_one_over_f(&profile)?;
    let mut out: Vec<f64> = profile.bins.iter().map(|b| b.mean_power).collect();
    out.push(alpha);
    Ok(out)
}

/// Tokenizes `img` with a K-entry codebook fitted to the image itself.
pub fn quantized_frames(img: &Image, schedule: &BandSchedule, k: usize, seed: u64) -> Result<(Vec<Image>, f64)> {
    let samples = training_vectors(img, schedule, PATCH, Interp::Bilinear)?;
    let dim = PATCH * PATCH * img.channels();
    let cfg = KMeansConfig {
        k,
        iterations: 10,
        batch_size: 256,
        seed,
    };
    let codebook = train_codebook(&samples, dim, &cfg)?.codebook;
    let tk = Tokenizer::new(schedule.clone(), codebook, PATCH)?;
    let tokens = tk.tokenize(img, None)?.tokens;
    let frames = tk.detokenize_steps(&tokens)?;
    let mae = frames.last().expect("schedule is non-empty").mean_abs_error(img)?;
    Ok((frames, mae))
}

fn concat(frames: &[Image]) -> Vec<u8> {
    frames.iter().flat_map(to_rgba).collect()
}

#[wasm_bindgen]
pub fn synthetic(size: usize, seed: u64) -> std::result::Result<Vec<u8>, JsError> {
    synthetic_image(size, size, 3, seed).map(|im| to_rgba(&im)).map_err(to_js)
}

/// RGBA frames, one per band, concatenated.
#[wasm_bindgen]
pub fn bands(rgba: &[u8], width: usize, height: usize, schedule: &str) -> std::result::Result<Vec<u8>, JsError> {
    let img = from_rgba(rgba, width, height).map_err(to_js)?;
    let s = BandSchedule::parse(schedule).map_err(to_js)?;
    band_frames(&img, &s).map(|f| concat(&f)).map_err(to_js)
}

/// `bins` mean powers, then the 1/f exponent.
#[wasm_bindgen]
pub fn spectrum(rgba: &[u8], width: usize, height: usize, bins: usize) -> std::result::Result<Vec<f64>, JsError> {
    let img = from_rgba(rgba, width, height).map_err(to_js)?;
    luma_spectrum(&img, bins).map_err(to_js)
}

#[wasm_bindgen]
pub struct Quantized {
    frames: Vec<u8>,
    mae: f64,
}

#[wasm_bindgen]
impl Quantized {
    #[wasm_bindgen(getter)]
    pub fn frames(&self) -> Vec<u8> {
        self.frames.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mae(&self) -> f64 {
        self.mae
    }
}

#[wasm_bindgen]
pub fn quantize(
    rgba: &[u8],
    width: usize,
    height: usize,
    schedule: &str,
    k: usize,
    seed: u64,
) -> std::result::Result<Quantized, JsError> {
    let img = from_rgba(rgba, width, height).map_err(to_js)?;
    let s = BandSchedule::parse(schedule).map_err(to_js)?;
    let (frames, mae) = quantized_frames(&img, &s, k, seed).map_err(to_js)?;
    Ok(Quantized {
        frames: concat(&frames),
        mae,
    })
}
