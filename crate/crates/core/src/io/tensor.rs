//! `NFTN` tensor files: magic, version u16, dtype u8 (0 = f32), rank u8,
//! dims as u32, then a little-endian row-major payload.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::FeatureMap;

pub const TENSOR_MAGIC: &[u8; 4] = b"NFTN";
pub const TENSOR_VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::dim(format!("dims {dims:?} do not match {} values", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn from_map(map: &FeatureMap) -> Self {
        let (h, w, c) = map.shape();
        Self {
            dims: vec![h, w, c],
            data: map.as_slice().to_vec(),
        }
    }

    /// Rank-3 tensors map directly; rank-2 tensors become one channel.
    pub fn into_map(self) -> Result<FeatureMap> {
        match self.dims[..] {
            [h, w, c] => FeatureMap::from_vec(h, w, c, self.data),
            [h, w] => FeatureMap::from_vec(h, w, 1, self.data),
            _ => Err(Error::format(format!("expected a rank-2 or rank-3 tensor, got dims {:?}", self.dims))),
        }
    }
}

pub fn write_tensor<W: Write>(mut out: W, tensor: &Tensor) -> Result<()> {
    if tensor.dims.len() > u8::MAX as usize {
        return Err(Error::format("tensor rank exceeds 255"));
    }
    let mut buf = Vec::with_capacity(8 + 4 * tensor.dims.len() + 4 * tensor.data.len());
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    buf.push(DTYPE_F32);
    buf.push(tensor.dims.len() as u8);
    for &d in &tensor.dims {
        let d = u32::try_from(d).map_err(|_| Error::format("tensor dimension exceeds u32"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in &tensor.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_exact<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let magic: [u8; 4] = read_exact(&mut r, "magic")?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::format("not an NFTN tensor file"));
    }
    let version = u16::from_le_bytes(read_exact(&mut r, "version")?);
    if version != TENSOR_VERSION {
        return Err(Error::format(format!("unsupported tensor version {version}")));
    }
    let [dtype] = read_exact::<_, 1>(&mut r, "dtype")?;
    if dtype != DTYPE_F32 {
        return Err(Error::format(format!("unsupported tensor dtype {dtype}")));
    }
    let [rank] = read_exact::<_, 1>(&mut r, "rank")?;
    let mut dims = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        dims.push(u32::from_le_bytes(read_exact(&mut r, "dims")?) as usize);
    }
    let n: usize = dims.iter().product();
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != 4 * n {
        return Err(Error::format(format!(
            "payload holds {} bytes, dims {dims:?} need {}",
            payload.len(),
            4 * n
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(Tensor { dims, data })
}
