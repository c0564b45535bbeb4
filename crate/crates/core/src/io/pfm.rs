//! Portable float map (PFM) reader and writer.
//!
//! Written files are always little-endian (scale `-1.0`), rows stored
//! bottom-to-top as the format requires. The reader accepts both byte
//! orders. Besides the standard `PF` (RGB) and `Pf` (gray) identifiers, the
//! multi-channel extension `PF<n>` (for example `PF4`) is used for motion
//! model exports.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

const FMT: &str = "PFM";

/// Upper bound on decoded samples so hostile headers cannot force huge
/// allocations.
pub const MAX_SAMPLES: usize = 1 << 28;

/// Raw float map with any channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, top row first.
    pub data: Vec<f32>,
}

fn identifier_channels(id: &[u8]) -> Result<usize> {
    match id {
        b"PF" => Ok(3),
        b"Pf" => Ok(1),
        [b'P', b'F', digits @ ..] if !digits.is_empty() && digits.len() <= 2 => {
            let s = std::str::from_utf8(digits).map_err(|_| Error::format(FMT, "bad identifier"))?;
            let n: usize = s
                .parse()
                .map_err(|_| Error::format(FMT, format!("bad identifier PF{s}")))?;
            if (1..=16).contains(&n) {
                Ok(n)
            } else {
                Err(Error::format(FMT, format!("unsupported channel count {n}")))
            }
        }
        _ => Err(Error::format(FMT, "missing PF/Pf identifier")),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn token(&mut self) -> Result<&'a [u8]> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(FMT, "truncated header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(FMT, format!("bad {what}")))
    }
}

pub fn decode_float_map(bytes: &[u8]) -> Result<FloatMap> {
    let mut cur = Cursor { bytes, pos: 0 };
    let channels = identifier_channels(cur.token()?)?;
    let width: usize = cur.parse("width")?;
    let height: usize = cur.parse("height")?;
    let scale: f32 = cur.parse("scale")?;
    if width == 0 || height == 0 {
        return Err(Error::format(FMT, "zero dimension"));
    }
    if !scale.is_finite() || scale == 0.0 {
        return Err(Error::format(FMT, "scale must be finite and non-zero"));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format(FMT, "missing raster separator")),
    }
    let samples = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .filter(|n| *n <= MAX_SAMPLES)
        .ok_or_else(|| Error::format(FMT, "image too large"))?;
    let raster = &bytes[cur.pos..];
    if raster.len() != samples * 4 {
        return Err(Error::format(
            FMT,
            format!("raster has {} bytes, expected {}", raster.len(), samples * 4),
        ));
    }
    let little = scale < 0.0;
    let row_len = width * channels;
    let mut data = vec![0f32; samples];
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        // file rows run bottom-to-top
        let file_row = i / row_len;
        let col = i % row_len;
        data[(height - 1 - file_row) * row_len + col] = v;
    }
    Ok(FloatMap {
        width,
        height,
        channels,
        data,
    })
}

pub fn encode_float_map(map: &FloatMap) -> Result<Vec<u8>> {
    let id = match map.channels {
        3 => "PF".to_string(),
        1 => "Pf".to_string(),
        n @ 1..=16 => format!("PF{n}"),
        n => return Err(Error::format(FMT, format!("unsupported channel count {n}"))),
    };
    if map.data.len() != map.width * map.height * map.channels {
        return Err(Error::format(FMT, "buffer length does not match dimensions"));
    }
    let mut out = Vec::with_capacity(32 + map.data.len() * 4);
    write!(out, "{id}\n{} {}\n-1.0\n", map.width, map.height)?;
    let row_len = map.width * map.channels;
    for row in (0..map.height).rev() {
        for v in &map.data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decode a 1- or 3-channel PFM into an [`Image`].
pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    let map = decode_float_map(bytes)?;
    if map.channels != 1 && map.channels != 3 {
        return Err(Error::format(FMT, "images must have 1 or 3 channels"));
    }
    let data = map.data.iter().map(|v| *v as f64).collect();
    Image::new(map.width, map.height, map.channels, data)
}

pub fn encode_pfm(img: &Image) -> Result<Vec<u8>> {
    encode_float_map(&FloatMap {
        width: img.width(),
        height: img.height(),
        channels: img.channels(),
        data: img.data().iter().map(|v| *v as f32).collect(),
    })
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    std::fs::read(path)
        .map_err(Error::from)
        .and_then(|b| decode_pfm(&b))
        .map_err(|e| e.at(path))
}

pub fn write_pfm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    encode_pfm(img)
        .and_then(|b| std::fs::write(path, b).map_err(Error::from))
        .map_err(|e| e.at(path))
}

pub fn write_float_map(path: impl AsRef<Path>, map: &FloatMap) -> Result<()> {
    let path = path.as_ref();
    encode_float_map(map)
        .and_then(|b| std::fs::write(path, b).map_err(Error::from))
        .map_err(|e| e.at(path))
}

pub fn read_float_map(path: impl AsRef<Path>) -> Result<FloatMap> {
    let path = path.as_ref();
    std::fs::read(path)
        .map_err(Error::from)
        .and_then(|b| decode_float_map(&b))
        .map_err(|e| e.at(path))
}
