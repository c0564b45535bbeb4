//! File formats: PFM for linear data, PNG for LDR frames, `.flo` for flows.

pub mod flo;
pub mod pfm;
pub mod png;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Image;

pub use flo::{decode_flo, encode_flo, read_flo, write_flo};
pub use pfm::{
    decode_float_map, decode_pfm, encode_float_map, encode_pfm, read_float_map, read_pfm,
    write_float_map, write_pfm, FloatMap,
};
pub use png::{decode_png, encode_png, read_png, write_png, BitDepth};

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

/// Read a PFM or PNG by extension. PNG data is sRGB-decoded unless `linear`.
pub fn read_image(path: impl AsRef<Path>, linear: bool) -> Result<Image> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("pfm") => read_pfm(path),
        Some("png") => read_png(path, linear),
        _ => Err(Error::InvalidParameter(format!(
            "{}: expected a .pfm or .png file",
            path.display()
        ))),
    }
}

/// Write a PFM or an 8-bit PNG by extension.
pub fn write_image(path: impl AsRef<Path>, img: &Image, linear: bool) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("pfm") => write_pfm(path, img),
        Some("png") => write_png(path, img, BitDepth::Eight, linear),
        _ => Err(Error::InvalidParameter(format!(
            "{}: expected a .pfm or .png file",
            path.display()
        ))),
    }
}

/// Files in `dir` with one of the given extensions, sorted by name.
pub fn list_files(dir: impl AsRef<Path>, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::from(e).at(dir))? {
        let path = entry?.path();
        if path.is_file()
            && extension(&path).is_some_and(|e| extensions.contains(&e.as_str()))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Sequentially numbered frames (PNG or PFM) in `dir`.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    list_files(dir, &["png", "pfm"])
}
