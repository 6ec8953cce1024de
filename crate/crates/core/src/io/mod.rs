//! Persistence: tensor and token files, 8-bit PNM images, codebooks with a
//! JSON sidecar, and model checkpoint directories.

mod tensor;
mod tokens;

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

pub use tensor::{read_tensor, write_tensor, Tensor, DTYPE_F32, TENSOR_MAGIC, TENSOR_VERSION};
pub use tokens::{read_tokens, write_tokens, TOKEN_MAGIC, TOKEN_VERSION};

use crate::bands::{BandSchedule, Interp};
use crate::error::{Error, Result};
use crate::generator::{ModelConfig, ModelParams};
use crate::grid::{FeatureMap, Image};
use crate::pipeline::TokenSequence;
use crate::quantizer::Codebook;

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write never leaves a truncated output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    if let Err(e) = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(with_path(path, e));
    }
    Ok(())
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// `fs::read` with the path in the error message.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| with_path(path, e))
}

pub fn save_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let mut buf = Vec::new();
    write_tensor(&mut buf, tensor)?;
    write_atomic(path, &buf)
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    read_tensor(&read_file(path)?[..])
}

pub fn save_tokens(path: &Path, t: &TokenSequence) -> Result<()> {
    let mut buf = Vec::new();
    write_tokens(&mut buf, t)?;
    write_atomic(path, &buf)
}

pub fn load_tokens(path: &Path) -> Result<TokenSequence> {
    read_tokens(&read_file(path)?[..])
}

/// Decodes an 8-bit P5 or P6 image into `[0, 1]` pixels.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| Error::format(format!("invalid PNM image: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = if img.color().has_color() {
        (3, img.into_rgb8().into_raw())
    } else {
        (1, img.into_luma8().into_raw())
    };
    let data = raw.into_iter().map(|b| b as f64 / 255.0).collect();
    Image::new(FeatureMap::from_vec(h, w, channels, data)?)
}

/// Encodes an image as binary P5 (gray) or P6 (RGB), clamping to `[0, 1]`
/// and rounding to the nearest 8-bit level.
pub fn encode_pnm(img: &Image) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let raw: Vec<u8> = img
        .pixels()
        .as_slice()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let (subtype, color) = match img.channels() {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        _ => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
    };
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(&raw, w, h, color)
        .map_err(|e| Error::format(format!("PNM encoding failed: {e}")))?;
    Ok(out)
}

/// Loads an image from a PNM file or, for lossless float input, an `NFTN`
/// tensor of shape `H x W x C` or `H x W`. The format is chosen by magic.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = read_file(path)?;
    if bytes.starts_with(TENSOR_MAGIC) {
        Image::new(read_tensor(&bytes[..])?.into_map()?)
    } else {
        decode_pnm(&bytes)
    }
}

/// Saves as a tensor when the extension is `nftn`, otherwise as PNM.
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    if path.extension().is_some_and(|e| e == "nftn") {
        save_tensor(path, &Tensor::from_map(img.pixels()))
    } else {
        write_atomic(path, &encode_pnm(img)?)
    }
}

/// JSON sidecar stored next to a codebook tensor as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookMeta {
    pub k: usize,
    pub c: usize,
    pub seed: u64,
    pub iterations: usize,
    pub training_error: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Stores entries as f32. Callers that need a stable fingerprint should
/// re-load the codebook, since the fingerprint covers the stored values.
pub fn save_codebook(path: &Path, codebook: &Codebook, meta: &CodebookMeta) -> Result<()> {
    let t = Tensor::new(vec![codebook.len(), codebook.dim()], codebook.as_slice().to_vec())?;
    save_tensor(path, &t)?;
    let json = serde_json::to_vec_pretty(meta).map_err(|e| Error::format(e.to_string()))?;
    write_atomic(&sidecar_path(path), &json)
}

/// Loads a rank-2 `K x C` codebook; the sidecar is optional.
pub fn load_codebook(path: &Path) -> Result<(Codebook, Option<CodebookMeta>)> {
    let t = load_tensor(path)?;
    let [k, c] = t.dims[..] else {
        return Err(Error::format(format!("codebook must be rank 2, got dims {:?}", t.dims)));
    };
    let cb = Codebook::new(k, c, t.data)?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let m: CodebookMeta =
            serde_json::from_slice(&read_file(&side)?).map_err(|e| Error::format(format!("bad codebook sidecar: {e}")))?;
        if m.k != k || m.c != c {
            return Err(Error::format(format!("sidecar says {}x{} but tensor is {k}x{c}", m.k, m.c)));
        }
        Some(m)
    } else {
        None
    };
    Ok((cb, meta))
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub code_dim: usize,
    pub schedule: BandSchedule,
    pub class_count: usize,
    pub uncond_id: usize,
    pub seed: u64,
    #[serde(default)]
    pub interp: Interp,
    /// Fingerprint of the codebook the model was trained against.
    pub codebook_fingerprint: u64,
}

impl Manifest {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.d,
            layers: self.layers,
            heads: self.heads,
            codebook_size: self.k,
            code_dim: self.code_dim,
            num_classes: self.class_count,
            schedule: self.schedule.clone(),
            interp: self.interp,
        }
    }
}

/// Writes `manifest.json` plus one `<name>.nftn` blob per parameter.
pub fn save_checkpoint(dir: &Path, params: &ModelParams, seed: u64, codebook_fingerprint: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| with_path(dir, e))?;
    let c = params.config();
    for spec in params.specs() {
        let t = Tensor::new(spec.shape.clone(), params.as_slice()[spec.range()].to_vec())?;
        save_tensor(&dir.join(format!("{}.nftn", spec.name)), &t)?;
    }
    let manifest = Manifest {
        d: c.dim,
        layers: c.layers,
        heads: c.heads,
        k: c.codebook_size,
        code_dim: c.code_dim,
        schedule: c.schedule.clone(),
        class_count: c.num_classes,
        uncond_id: c.uncond_id(),
        seed,
        interp: c.interp,
        codebook_fingerprint,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::format(e.to_string()))?;
    write_atomic(&dir.join(MANIFEST), &json)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams, Manifest)> {
    let manifest: Manifest = serde_json::from_slice(&read_file(&dir.join(MANIFEST))?)
        .map_err(|e| Error::format(format!("bad checkpoint manifest: {e}")))?;
    let config = manifest.config();
    if manifest.uncond_id != config.uncond_id() {
        return Err(Error::format("manifest uncond_id must equal class_count"));
    }
    let mut params = ModelParams::zeros(config)?;
    let specs = params.specs().to_vec();
    for spec in specs {
        let t = load_tensor(&dir.join(format!("{}.nftn", spec.name)))?;
        if t.dims != spec.shape {
            return Err(Error::format(format!(
                "parameter {} has shape {:?}, expected {:?}",
                spec.name, t.dims, spec.shape
            )));
        }
        params.as_mut_slice()[spec.range()].copy_from_slice(&t.data);
    }
    Ok((params, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_roundtrip_is_exact_on_8bit_levels() {
        for ch in [1, 3] {
            let img = Image::from_fn(5, 7, ch, |y, x, c| ((y * 31 + x * 7 + c * 50) % 256) as f64 / 255.0).unwrap();
            let bytes = encode_pnm(&img).unwrap();
            assert_eq!(&bytes[..2], if ch == 1 { b"P5" } else { b"P6" });
            let back = decode_pnm(&bytes).unwrap();
            assert_eq!(back.channels(), ch);
            assert!(back.pixels().max_abs_diff(img.pixels()) < 1e-12);
        }
    }

    #[test]
    fn garbage_is_a_format_error() {
        assert!(matches!(decode_pnm(b"P7 nonsense"), Err(Error::Format(_))));
    }

    #[test]
    fn image_dispatch_by_magic() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(4, 4, 3, |y, x, c| y as f64 * 0.1 - x as f64 * 0.37 + c as f64).unwrap();
        let p = dir.path().join("x.nftn");
        save_image(&p, &img).unwrap();
        let back = load_image(&p).unwrap();
        assert!(back.pixels().max_abs_diff(img.pixels()) < 1e-6);
        assert!(!dir.path().join("x.nftn.partial").exists());
    }

    #[test]
    fn codebook_roundtrip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let cb = Codebook::new(3, 2, vec![0.5, -1.0, 2.0, 0.25, 3.0, 4.0]).unwrap();
        let meta = CodebookMeta {
            k: 3,
            c: 2,
            seed: 9,
            iterations: 4,
            training_error: 0.125,
        };
        let p = dir.path().join("cb.nftn");
        save_codebook(&p, &cb, &meta).unwrap();
        let (back, m) = load_codebook(&p).unwrap();
        assert_eq!(back, cb);
        assert_eq!(m, Some(meta));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let config = ModelConfig {
            dim: 8,
            layers: 1,
            heads: 2,
            codebook_size: 5,
            code_dim: 3,
            num_classes: 2,
            schedule: BandSchedule::square(&[1, 2]).unwrap(),
            interp: Interp::Bilinear,
        };
        let params = ModelParams::init(config, 3).unwrap();
        save_checkpoint(dir.path(), &params, 3, 42).unwrap();
        let (back, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(manifest.uncond_id, 2);
        assert_eq!(manifest.codebook_fingerprint, 42);
        for (a, b) in back.as_slice().iter().zip(params.as_slice()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}
