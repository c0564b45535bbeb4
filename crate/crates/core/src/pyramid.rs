//! 2x box-filter pyramids for images and flow fields.
//!
//! Level `l` has dimensions `ceil(dim / 2^l)`. Flow pyramids halve the
//! displacement values together with the spatial size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{FlowField, Image};
use crate::warp::sample_interleaved;

/// Smallest side allowed on any pyramid level.
pub const MIN_LEVEL_DIM: usize = 8;

#[derive(Debug, Clone)]
pub struct Pyramid<T> {
    pub levels: Vec<T>,
}

impl<T> Pyramid<T> {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &T {
        &self.levels[l]
    }
}

fn box_downsample(data: &[f64], w: usize, h: usize, stride: usize) -> (Vec<f64>, usize, usize) {
    let ow = w.div_ceil(2);
    let oh = h.div_ceil(2);
    let mut out = vec![0.0; ow * oh * stride];
    out.par_chunks_mut(ow * stride)
        .enumerate()
        .for_each(|(oy, row)| {
            let ys = [2 * oy, 2 * oy + 1];
            for ox in 0..ow {
                let xs = [2 * ox, 2 * ox + 1];
                for c in 0..stride {
                    let mut sum = 0.0;
                    let mut n = 0usize;
                    for &y in ys.iter().filter(|y| **y < h) {
                        for &x in xs.iter().filter(|x| **x < w) {
                            sum += data[(y * w + x) * stride + c];
                            n += 1;
                        }
                    }
                    row[ox * stride + c] = sum / n as f64;
                }
            }
        });
    (out, ow, oh)
}

/// Mean of each 2x2 block; trailing odd rows/columns average what exists.
pub fn downsample2x(img: &Image) -> Image {
    let (data, w, h) = box_downsample(img.data(), img.width(), img.height(), img.channels());
    Image::from_parts(w, h, img.channels(), data)
}

/// Box-downsample a flow and halve its displacements.
pub fn downsample_flow2x(flow: &FlowField) -> FlowField {
    let (mut data, w, h) = box_downsample(flow.data(), flow.width(), flow.height(), 2);
    data.iter_mut().for_each(|v| *v *= 0.5);
    FlowField::from_parts(w, h, data)
}

/// Downsample a flow `levels` times (values scaled by `2^-levels`).
pub fn downsample_flow(flow: &FlowField, levels: usize) -> FlowField {
    (0..levels).fold(flow.clone(), |f, _| downsample_flow2x(&f))
}

/// Downsample an image `levels` times.
pub fn downsample(img: &Image, levels: usize) -> Image {
    (0..levels).fold(img.clone(), |i, _| downsample2x(&i))
}

fn check_depth(w: usize, h: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidParameter("pyramid needs at least one level".into()));
    }
    let shrink = |d: usize| (0..levels - 1).fold(d, |d, _| d.div_ceil(2));
    let (lw, lh) = (shrink(w), shrink(h));
    if lw.min(lh) < MIN_LEVEL_DIM {
        return Err(Error::TooSmall(format!(
            "{w}x{h} gives {lw}x{lh} at level {}, need at least {MIN_LEVEL_DIM}",
            levels - 1
        )));
    }
    Ok(())
}

/// Image pyramid with `levels` levels; level 0 is the input.
pub fn build_pyramid(img: &Image, levels: usize) -> Result<Pyramid<Image>> {
    check_depth(img.width(), img.height(), levels)?;
    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for l in 1..levels {
        let next = downsample2x(&out[l - 1]);
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

pub fn build_flow_pyramid(flow: &FlowField, levels: usize) -> Result<Pyramid<FlowField>> {
    check_depth(flow.width(), flow.height(), levels)?;
    let mut out = Vec::with_capacity(levels);
    out.push(flow.clone());
    for l in 1..levels {
        let next = downsample_flow2x(&out[l - 1]);
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

/// Largest depth (capped at `wanted`) whose coarsest level keeps
/// [`MIN_LEVEL_DIM`] pixels on the short side.
pub fn feasible_depth(w: usize, h: usize, wanted: usize) -> usize {
    let mut depth = 1;
    let (mut cw, mut ch) = (w, h);
    while depth < wanted {
        let (nw, nh) = (cw.div_ceil(2), ch.div_ceil(2));
        if nw.min(nh) < MIN_LEVEL_DIM {
            break;
        }
        cw = nw;
        ch = nh;
        depth += 1;
    }
    depth
}

fn check_upsample(sw: usize, sh: usize, tw: usize, th: usize) -> Result<()> {
    let ok = |s: usize, t: usize| t + 1 >= 2 * s && t <= 2 * s;
    if ok(sw, tw) && ok(sh, th) {
        Ok(())
    } else {
        Err(Error::dims(format!(
            "cannot upsample {sw}x{sh} to {tw}x{th}"
        )))
    }
}

/// Bilinear 2x upsampling with pixel-centre alignment: target pixel `x`
/// reads source coordinate `(x + 0.5) / 2 - 0.5`.
fn bilinear_upsample(
    data: &[f64],
    sw: usize,
    sh: usize,
    stride: usize,
    tw: usize,
    th: usize,
    gain: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; tw * th * stride];
    out.par_chunks_mut(tw * stride).enumerate().for_each(|(y, row)| {
        let sy = (y as f64 + 0.5) * 0.5 - 0.5;
        for x in 0..tw {
            let sx = (x as f64 + 0.5) * 0.5 - 0.5;
            for c in 0..stride {
                row[x * stride + c] = gain * sample_interleaved(data, sw, sh, stride, c, sx, sy);
            }
        }
    });
    out
}

/// Upsample a flow to `target_w x target_h` (each within `2*dim-1 ..= 2*dim`)
/// and double its displacements.
pub fn upsample_flow2x(flow: &FlowField, target_w: usize, target_h: usize) -> Result<FlowField> {
    check_upsample(flow.width(), flow.height(), target_w, target_h)?;
    let data = bilinear_upsample(
        flow.data(),
        flow.width(),
        flow.height(),
        2,
        target_w,
        target_h,
        2.0,
    );
    Ok(FlowField::from_parts(target_w, target_h, data))
}

/// Bilinear 2x upsampling of an image (values unchanged).
pub fn upsample_image2x(img: &Image, target_w: usize, target_h: usize) -> Result<Image> {
    check_upsample(img.width(), img.height(), target_w, target_h)?;
    let data = bilinear_upsample(
        img.data(),
        img.width(),
        img.height(),
        img.channels(),
        target_w,
        target_h,
        1.0,
    );
    Ok(Image::from_parts(target_w, target_h, img.channels(), data))
}
