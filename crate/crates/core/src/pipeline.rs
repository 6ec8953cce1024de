//! Image -> tokens -> image.
//!
//! The encoder is an exact patchification: each `patch x patch` pixel block
//! becomes one latent vector, so the only lossy stage is residual
//! quantization.

use serde::Serialize;

use crate::bands::{build_masks, decompose, interpolate, BandSchedule, FrequencyMask, Interp};
use crate::error::{Error, Result};
use crate::grid::{FeatureMap, Image};
use crate::quantizer::{residual_extract, Codebook, Quantize, ResidualPyramid};

/// Patch size that maps 128x128 images onto the 16x16 default grid.
pub const DEFAULT_PATCH: usize = 8;

/// Rearranges pixel blocks into latent vectors (raster order within the
/// block, channels innermost).
pub fn encode(x: &Image, patch: usize) -> Result<FeatureMap> {
    if patch == 0 || x.height() % patch != 0 || x.width() % patch != 0 {
        return Err(Error::dim(format!(
            "{}x{} image is not divisible into {patch}x{patch} patches",
            x.height(),
            x.width()
        )));
    }
    let ch = x.channels();
    let px = x.pixels();
    let (h, w) = (x.height() / patch, x.width() / patch);
    let mut out = FeatureMap::zeros(h, w, patch * patch * ch);
    for y in 0..h {
        for xx in 0..w {
            let dst = out.pixel_mut(y, xx);
            let mut i = 0;
            for py in 0..patch {
                for pxl in 0..patch {
                    for c in 0..ch {
                        dst[i] = px.get(y * patch + py, xx * patch + pxl, c);
                        i += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`encode`] without clamping.
pub fn decode_unclamped(f: &FeatureMap, patch: usize) -> Result<Image> {
    let pp = patch * patch;
    if patch == 0 || f.channels() % pp != 0 || !matches!(f.channels() / pp, 1 | 3) {
        return Err(Error::dim(format!(
            "{} latent channels do not form {patch}x{patch} patches of 1 or 3 channels",
            f.channels()
        )));
    }
    let ch = f.channels() / pp;
    let mut img = FeatureMap::zeros(f.height() * patch, f.width() * patch, ch);
    for y in 0..f.height() {
        for x in 0..f.width() {
            let src = f.pixel(y, x);
            let mut i = 0;
            for py in 0..patch {
                for px in 0..patch {
                    for c in 0..ch {
                        img.set(y * patch + py, x * patch + px, c, src[i]);
                        i += 1;
                    }
                }
            }
        }
    }
    Image::new(img)
}

/// Inverse of [`encode`], clamped to the `[0, 1]` pixel range.
pub fn decode(f: &FeatureMap, patch: usize) -> Result<Image> {
    Ok(decode_unclamped(f, patch)?.clamped())
}

/// Per-band code indices for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub schedule: BandSchedule,
    /// One row-major `h_i * w_i` index list per band.
    pub bands: Vec<Vec<usize>>,
    pub class_label: Option<u32>,
    pub codebook_size: usize,
    pub codebook_fingerprint: u64,
}

impl TokenSequence {
    pub fn new(
        schedule: BandSchedule,
        bands: Vec<Vec<usize>>,
        class_label: Option<u32>,
        codebook: &Codebook,
    ) -> Result<Self> {
        let seq = Self {
            schedule,
            bands,
            class_label,
            codebook_size: codebook.len(),
            codebook_fingerprint: codebook.fingerprint(),
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Checks band lengths against the schedule and indices against `K`.
    pub fn validate(&self) -> Result<()> {
        if self.bands.len() != self.schedule.len() {
            return Err(Error::format(format!(
                "{} token bands for a {}-band schedule",
                self.bands.len(),
                self.schedule.len()
            )));
        }
        for (band, n) in self.bands.iter().zip(self.schedule.token_counts()) {
            if band.len() != n {
                return Err(Error::format(format!("band holds {} tokens, expected {n}", band.len())));
            }
        }
        if let Some((position, &index)) = self
            .flat()
            .iter()
            .enumerate()
            .find(|(_, &t)| t >= self.codebook_size)
        {
            return Err(Error::CorruptToken {
                position,
                index,
                k: self.codebook_size,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bands.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<usize> {
        self.bands.concat()
    }
}

/// Looks up `v_i^q` maps for each band from its indices.
pub fn quantized_maps(schedule: &BandSchedule, bands: &[Vec<usize>], codebook: &Codebook) -> Result<Vec<FeatureMap>> {
    let mut pos = 0;
    schedule
        .scales()
        .iter()
        .zip(bands)
        .map(|(&(h, w), band)| {
            let mut m = FeatureMap::zeros(h, w, codebook.dim());
            for (cell, &t) in band.iter().enumerate() {
                if t >= codebook.len() {
                    return Err(Error::CorruptToken {
                        position: pos + cell,
                        index: t,
                        k: codebook.len(),
                    });
                }
                m.pixel_mut(cell / w, cell % w).copy_from_slice(codebook.row(t));
            }
            pos += band.len();
            Ok(m)
        })
        .collect()
}

/// Tokenization result with the full analysis kept for inspection.
#[derive(Debug, Clone)]
pub struct Tokenized {
    pub tokens: TokenSequence,
    pub latent: FeatureMap,
    pub components: Vec<FeatureMap>,
    pub pyramid: ResidualPyramid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantizationLoss {
    /// `||f - sum_i I(v_i^q)||^2 / (H' W' C)`.
    pub feature_loss: f64,
    /// Same quantity measured on decoded images.
    pub recon_loss_proxy: f64,
}

/// Schedule + codebook + patch geometry bundled for repeated use.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    schedule: BandSchedule,
    codebook: Codebook,
    patch: usize,
    interp: Interp,
    masks: Vec<FrequencyMask>,
}

impl Tokenizer {
    pub fn new(schedule: BandSchedule, codebook: Codebook, patch: usize) -> Result<Self> {
        Self::with_interp(schedule, codebook, patch, Interp::Bilinear)
    }

    pub fn with_interp(schedule: BandSchedule, codebook: Codebook, patch: usize, interp: Interp) -> Result<Self> {
        if patch == 0 {
            return Err(Error::param("patch size must be positive"));
        }
        let masks = build_masks(&schedule)?;
        Ok(Self {
            schedule,
            codebook,
            patch,
            interp,
            masks,
        })
    }

    pub fn schedule(&self) -> &BandSchedule {
        &self.schedule
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn masks(&self) -> &[FrequencyMask] {
        &self.masks
    }

    /// Patch-encodes `x` and checks the latent grid against the schedule.
    pub fn encode(&self, x: &Image) -> Result<FeatureMap> {
        let f = encode(x, self.patch)?;
        let grid = self.schedule.grid();
        if (f.height(), f.width()) != grid {
            return Err(Error::dim(format!(
                "latent grid {}x{} does not match schedule grid {}x{}",
                f.height(),
                f.width(),
                grid.0,
                grid.1
            )));
        }
        if f.channels() != self.codebook.dim() {
            return Err(Error::dim(format!(
                "latent dimension {} does not match codebook dimension {}",
                f.channels(),
                self.codebook.dim()
            )));
        }
        Ok(f)
    }

    pub fn tokenize(&self, x: &Image, class_label: Option<u32>) -> Result<Tokenized> {
        let latent = self.encode(x)?;
        let components = decompose(&latent, &self.masks)?;
        let pyramid = residual_extract(&components, &self.schedule, Quantize::Codebook(&self.codebook), self.interp)?;
        let tokens = TokenSequence::new(self.schedule.clone(), pyramid.tokens(), class_label, &self.codebook)?;
        Ok(Tokenized {
            tokens,
            latent,
            components,
            pyramid,
        })
    }

    fn check_tokens(&self, t: &TokenSequence) -> Result<()> {
        let actual = self.codebook.fingerprint();
        if t.codebook_fingerprint != actual {
            return Err(Error::StaleCodebook {
                expected: t.codebook_fingerprint,
                actual,
            });
        }
        if t.schedule != self.schedule {
            return Err(Error::dim("token schedule differs from tokenizer schedule"));
        }
        t.validate()
    }

    /// Latent reconstructions after each band: element `k` sums bands `0..=k`.
    pub fn latent_steps(&self, t: &TokenSequence) -> Result<Vec<FeatureMap>> {
        self.check_tokens(t)?;
        let (h, w) = self.schedule.grid();
        let maps = quantized_maps(&self.schedule, &t.bands, &self.codebook)?;
        let mut acc = FeatureMap::zeros(h, w, self.codebook.dim());
        maps.iter()
            .map(|m| {
                acc.add_assign(&interpolate(m, h, w, self.interp)?)?;
                Ok(acc.clone())
            })
            .collect()
    }

    /// Decoded images after each band (coarse to fine).
    pub fn detokenize_steps(&self, t: &TokenSequence) -> Result<Vec<Image>> {
        self.latent_steps(t)?
            .iter()
            .map(|f| decode(f, self.patch))
            .collect()
    }

    pub fn detokenize(&self, t: &TokenSequence) -> Result<Image> {
        let latent = self.latent_steps(t)?.pop().expect("schedule is nonempty");
        decode(&latent, self.patch)
    }

    pub fn quantization_loss(&self, tokenized: &Tokenized) -> Result<QuantizationLoss> {
        let f = &tokenized.latent;
        let recon = tokenized.pyramid.reconstruction()?;
        let mut diff = f.clone();
        diff.sub_assign(&recon)?;
        let feature_loss = diff.sum_squares() / f.as_slice().len() as f64;
        let original = decode(f, self.patch)?;
        let decoded = decode(&recon, self.patch)?;
        Ok(QuantizationLoss {
            feature_loss,
            recon_loss_proxy: original.mean_squared_error(&decoded)?,
        })
    }
}

/// Continuous per-band vectors of an image's residual analysis (no
/// quantization), pooled as codebook training samples.
pub fn training_vectors(x: &Image, schedule: &BandSchedule, patch: usize, interp: Interp) -> Result<Vec<f64>> {
    let f = encode(x, patch)?;
    if (f.height(), f.width()) != schedule.grid() {
        return Err(Error::dim(format!(
            "latent grid {}x{} does not match schedule grid {:?}",
            f.height(),
            f.width(),
            schedule.grid()
        )));
    }
    let comps = decompose(&f, &build_masks(schedule)?)?;
    let pyr = residual_extract(&comps, schedule, Quantize::Disabled, interp)?;
    Ok(pyr
        .levels
        .into_iter()
        .flat_map(|l| l.continuous.into_vec())
        .collect())
}
