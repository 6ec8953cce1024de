//! `NFTK` token files: magic, version u16, band count u8, `(h_i, w_i)` as
//! u16 pairs, K u32, codebook fingerprint u64, class label i32 (-1 for
//! none), then every index as u32 in band order, row-major. Little-endian.

use std::io::{Read, Write};

use super::tensor::read_exact;
use crate::bands::BandSchedule;
use crate::error::{Error, Result};
use crate::pipeline::TokenSequence;

pub const TOKEN_MAGIC: &[u8; 4] = b"NFTK";
pub const TOKEN_VERSION: u16 = 1;

pub fn write_tokens<W: Write>(mut out: W, t: &TokenSequence) -> Result<()> {
    t.validate()?;
    let n = u8::try_from(t.schedule.len()).map_err(|_| Error::format("more than 255 bands"))?;
    let mut buf = Vec::with_capacity(32 + 4 * t.len());
    buf.extend_from_slice(TOKEN_MAGIC);
    buf.extend_from_slice(&TOKEN_VERSION.to_le_bytes());
    buf.push(n);
    for &(h, w) in t.schedule.scales() {
        let h = u16::try_from(h).map_err(|_| Error::format("scale exceeds u16"))?;
        let w = u16::try_from(w).map_err(|_| Error::format("scale exceeds u16"))?;
        buf.extend_from_slice(&h.to_le_bytes());
        buf.extend_from_slice(&w.to_le_bytes());
    }
    let k = u32::try_from(t.codebook_size).map_err(|_| Error::format("codebook size exceeds u32"))?;
    buf.extend_from_slice(&k.to_le_bytes());
    buf.extend_from_slice(&t.codebook_fingerprint.to_le_bytes());
    let label: i32 = match t.class_label {
        Some(c) => i32::try_from(c).map_err(|_| Error::format("class label exceeds i32"))?,
        None => -1,
    };
    buf.extend_from_slice(&label.to_le_bytes());
    for idx in t.flat() {
        buf.extend_from_slice(&(idx as u32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_tokens<R: Read>(mut r: R) -> Result<TokenSequence> {
    let magic: [u8; 4] = read_exact(&mut r, "magic")?;
    if &magic != TOKEN_MAGIC {
        return Err(Error::format("not an NFTK token file"));
    }
    let version = u16::from_le_bytes(read_exact(&mut r, "version")?);
    if version != TOKEN_VERSION {
        return Err(Error::format(format!("unsupported token file version {version}")));
    }
    let [n] = read_exact::<_, 1>(&mut r, "band count")?;
    let mut scales = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let h = u16::from_le_bytes(read_exact(&mut r, "scale")?) as usize;
        let w = u16::from_le_bytes(read_exact(&mut r, "scale")?) as usize;
        scales.push((h, w));
    }
    let schedule = BandSchedule::new(scales).map_err(|e| Error::format(format!("bad schedule: {e}")))?;
    let k = u32::from_le_bytes(read_exact(&mut r, "codebook size")?) as usize;
    let fingerprint = u64::from_le_bytes(read_exact(&mut r, "fingerprint")?);
    let label = i32::from_le_bytes(read_exact(&mut r, "class label")?);
    let class_label = match label {
        -1 => None,
        c if c >= 0 => Some(c as u32),
        c => return Err(Error::format(format!("invalid class label {c}"))),
    };
    let mut bands = Vec::with_capacity(schedule.len());
    for count in schedule.token_counts() {
        let mut band = Vec::with_capacity(count);
        for _ in 0..count {
            band.push(u32::from_le_bytes(read_exact(&mut r, "token")?) as usize);
        }
        bands.push(band);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::format(format!("{} trailing bytes after tokens", rest.len())));
    }
    let seq = TokenSequence {
        schedule,
        bands,
        class_label,
        codebook_size: k,
        codebook_fingerprint: fingerprint,
    };
    seq.validate()?;
    Ok(seq)
}
