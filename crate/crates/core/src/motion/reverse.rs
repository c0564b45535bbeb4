//! Forward-to-backward flow reversal by Gaussian splatting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FlowField, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReverseParams {
    /// Splat kernel width in pixels; weight is `exp(-d²/σ²)`.
    pub sigma: f64,
    /// Targets whose total weight stays below this are holes.
    pub hole_threshold: f64,
    /// Clamp each normalized target into the range of the values splatted
    /// onto it, so uniform contributions come back bit-exact.
    pub clamp_to_contributions: bool,
    /// Correct each splatted value to first order for its offset from the
    /// landing point, using the local flow Jacobian. Exact for affine flows.
    pub first_order: bool,
    /// Largest first-order correction, in pixels.
    pub max_correction: f64,
}

impl Default for ReverseParams {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            hole_threshold: 1e-4,
            clamp_to_contributions: true,
            first_order: true,
            max_correction: 1.0,
        }
    }
}

struct Accum {
    weight: Vec<f64>,
    sum: Vec<[f64; 2]>,
    lo: Vec<[f64; 2]>,
    hi: Vec<[f64; 2]>,
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Slope-limited Jacobian of the flow at a pixel, `[[du/dx, du/dy], [dv/dx, dv/dy]]`.
/// Across a motion boundary one of the one-sided differences is usually
/// flat, so the limiter returns zero there.
fn jacobian(fwd: &FlowField, x: usize, y: usize) -> [[f64; 2]; 2] {
    let (w, h) = fwd.dims();
    let here = fwd.get(x, y);
    let mut j = [[0.0; 2]; 2];
    for c in 0..2 {
        let back = if x > 0 { here[c] - fwd.get(x - 1, y)[c] } else { 0.0 };
        let fwd_x = if x + 1 < w { fwd.get(x + 1, y)[c] - here[c] } else { 0.0 };
        let up = if y > 0 { here[c] - fwd.get(x, y - 1)[c] } else { 0.0 };
        let down = if y + 1 < h { fwd.get(x, y + 1)[c] - here[c] } else { 0.0 };
        j[c] = [minmod(back, fwd_x), minmod(up, down)];
    }
    j
}

/// `(I + J)⁻¹ - I`, or zero where the map folds or nearly does.
fn correction_matrix(j: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let (a, b, c, d) = (1.0 + j[0][0], j[0][1], j[1][0], 1.0 + j[1][1]);
    let det = a * d - b * c;
    if det < 0.1 {
        return [[0.0; 2]; 2];
    }
    [[d / det - 1.0, -b / det], [-c / det, a / det - 1.0]]
}

/// Splat in source row-major order. Sequential on purpose: the float sums
/// then never depend on scheduling.
fn splat(fwd: &FlowField, importance: Option<&[f64]>, params: &ReverseParams) -> Accum {
    let (w, h) = fwd.dims();
    let n = w * h;
    let mut acc = Accum {
        weight: vec![0.0; n],
        sum: vec![[0.0; 2]; n],
        lo: vec![[f64::INFINITY; 2]; n],
        hi: vec![[f64::NEG_INFINITY; 2]; n],
    };
    let inv_s2 = 1.0 / (params.sigma * params.sigma);
    for y in 0..h {
        for x in 0..w {
            let [u, v] = fwd.get(x, y);
            let m = if params.first_order {
                correction_matrix(jacobian(fwd, x, y))
            } else {
                [[0.0; 2]; 2]
            };
            let (tx, ty) = (x as f64 + u, y as f64 + v);
            let (fx, fy) = (tx.floor(), ty.floor());
            for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                let (nx, ny) = (fx + dx, fy + dy);
                if nx < 0.0 || ny < 0.0 || nx >= w as f64 || ny >= h as f64 {
                    continue;
                }
                let d2 = (tx - nx).powi(2) + (ty - ny).powi(2);
                let mut wt = (-d2 * inv_s2).exp();
                if let Some(imp) = importance {
                    wt *= imp[y * w + x];
                }
                let i = ny as usize * w + nx as usize;
                let (ox, oy) = (nx - tx, ny - ty);
                let mut corr = [m[0][0] * ox + m[0][1] * oy, m[1][0] * ox + m[1][1] * oy];
                let norm = corr[0].hypot(corr[1]);
                if norm > params.max_correction {
                    corr = corr.map(|k| k * params.max_correction / norm);
                }
                let val = [-u + corr[0], -v + corr[1]];
                acc.weight[i] += wt;
                for c in 0..2 {
                    acc.sum[i][c] += wt * val[c];
                    acc.lo[i][c] = acc.lo[i][c].min(val[c]);
                    acc.hi[i][c] = acc.hi[i][c].max(val[c]);
                }
            }
        }
    }
    acc
}

/// Jacobi passes of 3x3 averaging over filled neighbours until no hole is
/// left, bounded by `w + h` passes. Anything still empty is set to zero.
fn fill_holes(values: &mut [[f64; 2]], valid: &mut [bool], w: usize, h: usize) {
    for _ in 0..w + h {
        if valid.iter().all(|v| *v) {
            return;
        }
        let prev_vals: &[[f64; 2]] = values;
        let prev_valid: &[bool] = valid;
        let update: Vec<Option<[f64; 2]>> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                if prev_valid[i] {
                    return None;
                }
                let (x, y) = (i % w, i / w);
                let mut s = [0.0; 2];
                let mut k = 0usize;
                for ny in y.saturating_sub(1)..(y + 2).min(h) {
                    for nx in x.saturating_sub(1)..(x + 2).min(w) {
                        let j = ny * w + nx;
                        if prev_valid[j] {
                            s[0] += prev_vals[j][0];
                            s[1] += prev_vals[j][1];
                            k += 1;
                        }
                    }
                }
                (k > 0).then(|| [s[0] / k as f64, s[1] / k as f64])
            })
            .collect();
        let mut changed = false;
        for (i, u) in update.into_iter().enumerate() {
            if let Some(val) = u {
                values[i] = val;
                valid[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for (val, ok) in values.iter_mut().zip(valid.iter()) {
        if !ok {
            *val = [0.0, 0.0];
        }
    }
}

/// Reverse a forward flow (basis frame -> time t) into a backward flow
/// aligned with time t. Every source splats its negated flow onto the four
/// pixels around its landing point with Gaussian weights; holes are filled
/// from their neighbours. Returns the flow and the pre-normalization splat
/// weight per target pixel.
pub fn reverse_flow(fwd: &FlowField, params: &ReverseParams) -> (FlowField, Image) {
    reverse_impl(fwd, None, params)
}

/// [`reverse_flow`] with a per-source importance factor on the splat
/// weights, so that where several sources land on one target the more
/// reliable ones win.
pub fn reverse_flow_weighted(
    fwd: &FlowField,
    importance: &Image,
    params: &ReverseParams,
) -> Result<(FlowField, Image)> {
    if importance.channels() != 1 || importance.dims() != fwd.dims() {
        return Err(Error::dims("importance must be a single-channel map of the flow's size"));
    }
    if importance.data().iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidImage("importance must be finite and non-negative".into()));
    }
    Ok(reverse_impl(fwd, Some(importance.data()), params))
}

fn reverse_impl(fwd: &FlowField, importance: Option<&[f64]>, params: &ReverseParams) -> (FlowField, Image) {
    let (w, h) = fwd.dims();
    let acc = splat(fwd, importance, params);
    let mut valid: Vec<bool> = acc.weight.iter().map(|wt| *wt >= params.hole_threshold).collect();
    let mut values: Vec<[f64; 2]> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if !valid[i] {
                return [0.0; 2];
            }
            let mut out = [acc.sum[i][0] / acc.weight[i], acc.sum[i][1] / acc.weight[i]];
            if params.clamp_to_contributions {
                for c in 0..2 {
                    out[c] = out[c].clamp(acc.lo[i][c], acc.hi[i][c]);
                }
            }
            out
        })
        .collect();
    fill_holes(&mut values, &mut valid, w, h);
    let flow = FlowField::from_parts(w, h, values.into_iter().flatten().collect());
    let coverage = Image::from_parts(w, h, 1, acc.weight);
    (flow, coverage)
}
