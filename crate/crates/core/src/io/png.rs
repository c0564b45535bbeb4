//! 8/16-bit PNG ingestion and export with sRGB transfer handling.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::Image;

#[inline]
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Decode PNG bytes to normalized intensities in `[0, 1]`. Gray inputs give
/// one channel, everything else three (alpha is dropped). Unless `linear`
/// is set the sRGB transfer curve is removed.
pub fn decode_png(bytes: &[u8], linear: bool) -> Result<Image> {
    let dynimg = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let gray = matches!(
        dynimg,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
    );
    let deep = matches!(
        dynimg,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let raw: Vec<f64> = match (gray, deep) {
        (true, false) => dynimg.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        (true, true) => dynimg.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        (false, false) => dynimg.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        (false, true) => dynimg.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
    };
    let data = if linear {
        raw
    } else {
        raw.into_iter().map(srgb_to_linear).collect()
    };
    Image::new(w, h, if gray { 1 } else { 3 }, data)
}

/// Encode an image, clamping to `[0, 1]`; applies the sRGB curve unless
/// `linear` is set.
pub fn encode_png(img: &Image, depth: BitDepth, linear: bool) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let encode = |v: f64| {
        let v = v.clamp(0.0, 1.0);
        if linear {
            v
        } else {
            linear_to_srgb(v)
        }
    };
    let dynimg = match (img.channels(), depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, quantize(img, encode, 255.0))
                .ok_or_else(|| Error::format("PNG", "buffer size"))?,
        ),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, quantize(img, encode, 65535.0))
                .ok_or_else(|| Error::format("PNG", "buffer size"))?,
        ),
        (_, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, quantize(img, encode, 255.0))
                .ok_or_else(|| Error::format("PNG", "buffer size"))?,
        ),
        (_, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, quantize(img, encode, 65535.0))
                .ok_or_else(|| Error::format("PNG", "buffer size"))?,
        ),
    };
    let mut out = std::io::Cursor::new(Vec::new());
    dynimg.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

fn quantize<T: TryFrom<u32>>(img: &Image, encode: impl Fn(f64) -> f64, max: f64) -> Vec<T> {
    img.data()
        .iter()
        .map(|v| {
            let q = (encode(*v) * max).round() as u32;
            T::try_from(q).ok().expect("quantized value fits the sample type")
        })
        .collect()
}

pub fn read_png(path: impl AsRef<Path>, linear: bool) -> Result<Image> {
    let path = path.as_ref();
    std::fs::read(path)
        .map_err(Error::from)
        .and_then(|b| decode_png(&b, linear))
        .map_err(|e| e.at(path))
}

pub fn write_png(path: impl AsRef<Path>, img: &Image, depth: BitDepth, linear: bool) -> Result<()> {
    let path = path.as_ref();
    encode_png(img, depth, linear)
        .and_then(|b| std::fs::write(path, b).map_err(Error::from))
        .map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_curve_round_trips() {
        for i in 0..=100 {
            let v = i as f64 / 100.0;
            assert!((srgb_to_linear(linear_to_srgb(v)) - v).abs() < 1e-12);
        }
        assert!((srgb_to_linear(0.5) - 0.214_041_140_5).abs() < 1e-9);
    }

    #[test]
    fn eight_bit_levels_survive_a_round_trip() {
        let img = Image::from_fn(16, 16, 1, |x, y, _| srgb_to_linear((y * 16 + x) as f64 / 255.0))
            .unwrap();
        let bytes = encode_png(&img, BitDepth::Eight, false).unwrap();
        let back = decode_png(&bytes, false).unwrap();
        assert_eq!(back.channels(), 1);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sixteen_bit_linear_rgb() {
        let img = Image::from_fn(4, 3, 3, |x, y, c| (x + y + c) as f64 / 10.0).unwrap();
        let bytes = encode_png(&img, BitDepth::Sixteen, true).unwrap();
        let back = decode_png(&bytes, true).unwrap();
        assert_eq!(back.channels(), 3);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode_png(b"\x89PNG\r\n\x1a\nnot really", false).is_err());
    }
}
