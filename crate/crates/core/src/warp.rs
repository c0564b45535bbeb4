//! Bilinear sampling with replicate-clamped borders and backward warping.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{FlowField, Image};

/// Bilinear lookup in an interleaved buffer. Coordinates are clamped to
/// `[0, w-1] x [0, h-1]`; integer coordinates return the stored value
/// exactly.
#[inline]
pub(crate) fn sample_interleaved(
    data: &[f64],
    width: usize,
    height: usize,
    stride: usize,
    channel: usize,
    x: f64,
    y: f64,
) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let at = |xx: usize, yy: usize| data[(yy * width + xx) * stride + channel];
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear sample of `img` at `(x, y)` in pixel coordinates.
pub fn bilinear_sample(img: &Image, x: f64, y: f64, channel: usize) -> Result<f64> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidCoordinate { x, y });
    }
    if channel >= img.channels() {
        return Err(Error::InvalidParameter(format!(
            "channel {channel} out of range for {}-channel image",
            img.channels()
        )));
    }
    Ok(sample_interleaved(
        img.data(),
        img.width(),
        img.height(),
        img.channels(),
        channel,
        x,
        y,
    ))
}

/// Bilinear sample of a flow field; returns `(u, v)`.
#[inline]
pub fn sample_flow(flow: &FlowField, x: f64, y: f64) -> [f64; 2] {
    let (w, h) = flow.dims();
    [
        sample_interleaved(flow.data(), w, h, 2, 0, x, y),
        sample_interleaved(flow.data(), w, h, 2, 1, x, y),
    ]
}

/// `out(x) = img(x + flow(x))` for every channel.
pub fn backward_warp(img: &Image, flow: &FlowField) -> Result<Image> {
    let (w, h) = img.dims();
    flow.ensure_dims(w, h, "backward_warp")?;
    let c = img.channels();
    let mut out = vec![0.0; w * h * c];
    out.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let [u, v] = flow.get(x, y);
            let sx = x as f64 + u;
            let sy = y as f64 + v;
            for ch in 0..c {
                row[x * c + ch] = sample_interleaved(img.data(), w, h, c, ch, sx, sy);
            }
        }
    });
    Ok(Image::from_parts(w, h, c, out))
}

/// Warp a flow field by another flow: `out(x) = field(x + by(x))`.
pub fn warp_flow(field: &FlowField, by: &FlowField) -> Result<FlowField> {
    let (w, h) = field.dims();
    by.ensure_dims(w, h, "warp_flow")?;
    let mut out = vec![0.0; w * h * 2];
    out.par_chunks_mut(w * 2).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let [u, v] = by.get(x, y);
            let s = sample_flow(field, x as f64 + u, y as f64 + v);
            row[2 * x] = s[0];
            row[2 * x + 1] = s[1];
        }
    });
    Ok(FlowField::from_parts(w, h, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 1, |x, y, _| {
            ((x * 7 + y * 13) % 17) as f64 / 17.0 + 0.1 * (x as f64 * 0.3).sin().abs()
        })
        .unwrap()
    }

    #[test]
    fn integer_coordinate_is_exact() {
        let img = textured(8, 8);
        assert_eq!(bilinear_sample(&img, 3.0, 5.0, 0).unwrap(), img.get(3, 5, 0));
    }

    #[test]
    fn centre_of_two_by_two_block() {
        let img = Image::new(2, 2, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(bilinear_sample(&img, 0.5, 0.5, 0).unwrap(), 0.5);
    }

    #[test]
    fn border_clamp() {
        let img = textured(6, 4);
        assert_eq!(bilinear_sample(&img, -2.7, 0.0, 0).unwrap(), img.get(0, 0, 0));
        assert_eq!(bilinear_sample(&img, 99.0, 99.0, 0).unwrap(), img.get(5, 3, 0));
    }

    #[test]
    fn non_finite_coordinate_is_an_error() {
        let img = textured(4, 4);
        assert!(matches!(
            bilinear_sample(&img, f64::NAN, 0.0, 0),
            Err(Error::InvalidCoordinate { .. })
        ));
        assert!(bilinear_sample(&img, 0.0, 0.0, 1).is_err());
    }

    #[test]
    fn zero_flow_is_bit_exact_identity() {
        let img = Image::from_fn(9, 7, 3, |x, y, c| (x * 3 + y + c) as f64 * 0.013).unwrap();
        let out = backward_warp(&img, &FlowField::zeros(9, 7)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn integer_flow_shifts_with_replicated_border() {
        let img = textured(12, 5);
        let out = backward_warp(&img, &FlowField::constant(12, 5, 3.0, 0.0)).unwrap();
        for y in 0..5 {
            for x in 0..12 {
                let src = (x + 3).min(11);
                assert_eq!(out.get(x, y, 0), img.get(src, y, 0));
            }
        }
    }

    #[test]
    fn ramp_half_pixel_shift() {
        let img = Image::from_fn(16, 4, 1, |x, _, _| x as f64).unwrap();
        let out = backward_warp(&img, &FlowField::constant(16, 4, 0.5, 0.0)).unwrap();
        for x in 0..15 {
            assert!((out.get(x, 2, 0) - (x as f64 + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_flow_is_rejected() {
        let img = textured(4, 4);
        assert!(backward_warp(&img, &FlowField::zeros(4, 5)).is_err());
    }
}
