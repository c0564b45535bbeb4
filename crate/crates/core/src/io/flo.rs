//! Middlebury `.flo` optical flow files.
//!
//! Layout: `f32` magic `202021.25`, `i32` width, `i32` height, then
//! interleaved `f32` `(u, v)` pairs in row-major order, all little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::FlowField;

const FMT: &str = "flo";
pub const FLO_MAGIC: f32 = 202021.25;
/// Per-side bound, matching the reference Middlebury reader.
pub const MAX_SIDE: usize = 99_999;

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::format(FMT, "truncated header"));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(Error::format(FMT, format!("bad magic {magic}")));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 || width as usize > MAX_SIDE || height as usize > MAX_SIDE {
        return Err(Error::format(FMT, format!("bad dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width * height * 2 * 4;
    let raster = &bytes[12..];
    if raster.len() != expected {
        return Err(Error::format(
            FMT,
            format!("raster has {} bytes, expected {expected}", raster.len()),
        ));
    }
    let data = raster
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    FlowField::new(width, height, data)
}

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.data().len() * 4);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for v in flow.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    std::fs::read(path)
        .map_err(Error::from)
        .and_then(|b| decode_flo(&b))
        .map_err(|e| e.at(path))
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::from(e).at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let f = FlowField::new(2, 1, vec![1.0, -2.0, 0.5, 3.25]).unwrap();
        let bytes = encode_flo(&f);
        assert_eq!(bytes.len(), 12 + 16);
        assert_eq!(&bytes[..4], &[0x50, 0x49, 0x45, 0x48]); // "PIEH"
        assert_eq!(&bytes[4..8], &2i32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1i32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2f32).to_le_bytes());
        assert_eq!(decode_flo(&bytes).unwrap(), f);
    }

    #[test]
    fn malformed_inputs() {
        let good = encode_flo(&FlowField::zeros(3, 2));
        assert!(decode_flo(&good[..11]).is_err());
        assert!(decode_flo(&good[..good.len() - 1]).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] ^= 1;
        assert!(decode_flo(&bad_magic).is_err());
        let mut neg = good.clone();
        neg[4..8].copy_from_slice(&(-3i32).to_le_bytes());
        assert!(decode_flo(&neg).is_err());
        let mut nan = good;
        nan[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_flo(&nan).is_err());
    }
}
