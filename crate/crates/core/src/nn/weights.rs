//! Binary weight container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "TNN" <version as ASCII digit>      4 bytes, currently "TNN1"
//! layer count                         u32
//! per layer:
//!   rows (out), cols (in)             u32, u32
//!   activation tag                    u8 (0 linear, 1 relu)
//!   weights, row-major                rows * cols f32
//!   bias                              rows f32
//! ```

use std::fs;
use std::path::Path;

use super::{Activation, Dense, Mlp, NnError};

pub const WEIGHTS_VERSION: u8 = 1;
const MAGIC: &[u8; 3] = b"TNN";

pub fn weights_to_bytes(mlp: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + mlp.parameter_count() * 4 + mlp.layers().len() * 9);
    out.extend_from_slice(MAGIC);
    out.push(b'0' + WEIGHTS_VERSION);
    out.extend_from_slice(&(mlp.layers().len() as u32).to_le_bytes());
    for layer in mlp.layers() {
        out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        out.push(layer.activation().tag());
        for v in layer.weights().iter().chain(layer.bias()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NnError::Format(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f32>, NnError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| NnError::Format("size overflow".into()))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<Mlp, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    let header = r.take(4, "header")?;
    if &header[..3] != MAGIC || !header[3].is_ascii_digit() {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = header[3] - b'0';
    if version != WEIGHTS_VERSION {
        return Err(NnError::Version {
            found: version,
            expected: WEIGHTS_VERSION,
        });
    }
    let count = r.u32("layer count")? as usize;
    if count == 0 {
        return Err(NnError::NoLayers);
    }
    let mut layers = Vec::with_capacity(count.min(64));
    for i in 0..count {
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let tag = r.take(1, "activation")?[0];
        let activation =
            Activation::from_tag(tag).ok_or_else(|| NnError::Format(format!("layer {i}: unknown activation {tag}")))?;
        let weights = r.floats(rows.saturating_mul(cols), "weights")?;
        let bias = r.floats(rows, "bias")?;
        layers.push(Dense::new(rows, cols, weights, bias, activation)?);
    }
    if r.pos != bytes.len() {
        return Err(NnError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Mlp::from_layers(layers)
}

pub fn save_weights(mlp: &Mlp, path: impl AsRef<Path>) -> Result<(), NnError> {
    fs::write(path.as_ref(), weights_to_bytes(mlp)).map_err(|e| NnError::Io(format!("{}: {e}", path.as_ref().display())))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Mlp, NnError> {
    let bytes = fs::read(path.as_ref()).map_err(|e| NnError::Io(format!("{}: {e}", path.as_ref().display())))?;
    weights_from_bytes(&bytes)
}
