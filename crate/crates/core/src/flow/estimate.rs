//! Dense pyramidal Lucas-Kanade flow.
//!
//! Coarse to fine, each level runs a fixed number of Gauss-Newton steps on
//! windowed brightness constancy. The 2x2 normal matrix gets Tikhonov
//! damping so flat regions relax towards zero motion. Levels are blurred
//! before differentiation and the flow is median filtered after each level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FlowField, Image};
use crate::pyramid::{downsample2x, feasible_depth, upsample_flow2x};
use crate::warp::sample_interleaved;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorParams {
    pub levels: usize,
    /// Odd window side.
    pub window: usize,
    pub iters: usize,
    pub damping: f64,
    /// Largest update per Gauss-Newton step, in pixels of the current level.
    pub max_step: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            levels: 4,
            window: 7,
            iters: 10,
            damping: 1e-3,
            max_step: 1.0,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.iters == 0 {
            return Err(Error::InvalidParameter("levels and iters must be positive".into()));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "window {} must be odd and at least 3",
                self.window
            )));
        }
        if !(self.damping > 0.0) || !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter("damping and max_step must be positive".into()));
        }
        Ok(())
    }
}

/// Separable `[1 4 6 4 1] / 16` blur with replicated borders.
fn binomial_blur(img: &Image) -> Image {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = img.dims();
    let src = img.data();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = K
                .iter()
                .enumerate()
                .map(|(k, c)| c * src[y * w + clampi(x as isize + k as isize - 2, w)])
                .sum();
        }
    }
    let out: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            K.iter()
                .enumerate()
                .map(|(k, c)| c * tmp[clampi(y as isize + k as isize - 2, h) * w + x])
                .sum()
        })
        .collect();
    Image::from_parts(w, h, 1, out)
}

/// Blurred levels, each decimated from the blurred level above it.
fn gaussian_pyramid(img: &Image, levels: usize) -> Vec<Image> {
    let mut out = vec![binomial_blur(img)];
    for _ in 1..levels {
        let next = binomial_blur(&downsample2x(out.last().unwrap()));
        out.push(next);
    }
    out
}

/// Component-wise median over a `(2r+1)^2` window, truncated at borders.
fn median_filter(flow: &FlowField, r: usize) -> FlowField {
    let (w, h) = flow.dims();
    let data: Vec<f64> = (0..w * h)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (x, y) = (i % w, i / w);
            let mut us = Vec::with_capacity((2 * r + 1) * (2 * r + 1));
            let mut vs = Vec::with_capacity(us.capacity());
            for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                    let [u, v] = flow.get(xx, yy);
                    us.push(u);
                    vs.push(v);
                }
            }
            [median(&mut us), median(&mut vs)]
        })
        .collect();
    FlowField::from_parts(w, h, data)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Central-difference gradients with replicated borders.
fn gradients(img: &Image) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = img.dims();
    let at = |x: usize, y: usize| img.get(x, y, 0);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gx[y * w + x] = if xr > xl { (at(xr, y) - at(xl, y)) / (xr - xl) as f64 } else { 0.0 };
            gy[y * w + x] = if yd > yu { (at(x, yd) - at(x, yu)) / (yd - yu) as f64 } else { 0.0 };
        }
    }
    (gx, gy)
}

/// Gauss-Newton on one level. Every pixel iterates on its own window,
/// warped by its own flow, so pixels never read each other's estimates.
fn refine_level(a: &Image, b: &Image, flow: &mut FlowField, params: &EstimatorParams) -> Result<()> {
    let (w, h) = a.dims();
    let r = params.window / 2;
    let (ax, ay) = gradients(a);
    let (bx, by) = gradients(b);
    let (ad, bd) = (a.data(), b.data());
    let sample = |d: &[f64], x: f64, y: f64| sample_interleaved(d, w, h, 1, 0, x, y);
    let prev = &*flow;
    let data: Vec<f64> = (0..w * h)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (px, py) = (i % w, i / w);
            let [mut u, mut v] = prev.get(px, py);
            let (x0, x1) = (px.saturating_sub(r), (px + r + 1).min(w));
            let (y0, y1) = (py.saturating_sub(r), (py + r + 1).min(h));
            for _ in 0..params.iters {
                let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for qy in y0..y1 {
                    for qx in x0..x1 {
                        let q = qy * w + qx;
                        let (sx, sy) = (qx as f64 + u, qy as f64 + v);
                        let gx = 0.5 * (ax[q] + sample(&bx, sx, sy));
                        let gy = 0.5 * (ay[q] + sample(&by, sx, sy));
                        let it = sample(bd, sx, sy) - ad[q];
                        sxx += gx * gx;
                        sxy += gx * gy;
                        syy += gy * gy;
                        sxt += gx * it;
                        syt += gy * it;
                    }
                }
                let (g11, g22) = (sxx + params.damping, syy + params.damping);
                let det = g11 * g22 - sxy * sxy;
                let mut du = (-g22 * sxt + sxy * syt) / det;
                let mut dv = (-g11 * syt + sxy * sxt) / det;
                let norm = du.hypot(dv);
                if !norm.is_finite() {
                    break;
                }
                if norm > params.max_step {
                    du *= params.max_step / norm;
                    dv *= params.max_step / norm;
                }
                u += du;
                v += dv;
                if norm < 1e-4 {
                    break;
                }
            }
            [u, v]
        })
        .collect();
    *flow = FlowField::new(w, h, data)
        .map_err(|e| Error::Numerical(format!("flow update diverged: {e}")))?;
    Ok(())
}

const MEDIAN_RADIUS: usize = 2;

/// Flow aligned with `a` such that `warp(b, F) ≈ a`.
pub fn estimate_flow(a: &Image, b: &Image, params: &EstimatorParams) -> Result<FlowField> {
    params.validate()?;
    a.ensure_same_shape(b, "estimate_flow")?;
    let (w, h) = a.dims();
    if feasible_depth(w, h, params.levels) < params.levels || w.min(h) < params.window {
        return Err(Error::TooSmall(format!(
            "{w}x{h} cannot hold {} pyramid levels",
            params.levels
        )));
    }
    let pa = gaussian_pyramid(&a.luminance(), params.levels);
    let pb = gaussian_pyramid(&b.luminance(), params.levels);
    let (cw, ch) = pa[params.levels - 1].dims();
    let mut flow = FlowField::zeros(cw, ch);
    for l in (0..params.levels).rev() {
        let (lw, lh) = pa[l].dims();
        if flow.dims() != (lw, lh) {
            flow = upsample_flow2x(&flow, lw, lh)?;
        }
        refine_level(&pa[l], &pb[l], &mut flow, params)?;
        flow = median_filter(&flow, MEDIAN_RADIUS);
    }
    Ok(flow)
}
