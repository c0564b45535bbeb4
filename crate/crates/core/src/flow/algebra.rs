use rayon::prelude::*;

use crate::error::Result;
use crate::image::{FlowField, Mask};
use crate::warp::{sample_flow, warp_flow};

/// `F_ac(x) = F_ab(x) + F_bc(x + F_ab(x))`.
pub fn compose_flows(f_ab: &FlowField, f_bc: &FlowField) -> Result<FlowField> {
    let sampled = warp_flow(f_bc, f_ab)?;
    f_ab.add(&sampled)
}

/// Per-pixel forward-backward residual `|F_fwd(x) + F_bwd(x + F_fwd(x))|`.
pub fn fb_residual(f_fwd: &FlowField, f_bwd: &FlowField) -> Result<Vec<f64>> {
    let (w, h) = f_fwd.dims();
    f_bwd.ensure_dims(w, h, "fb_residual")?;
    Ok((0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let [u, v] = f_fwd.get(x, y);
            let [bu, bv] = sample_flow(f_bwd, x as f64 + u, y as f64 + v);
            (u + bu).hypot(v + bv)
        })
        .collect())
}

/// Valid where the forward-backward residual is at most `tol_px`.
pub fn fb_consistency_mask(f_fwd: &FlowField, f_bwd: &FlowField, tol_px: f64) -> Result<Mask> {
    let (w, h) = f_fwd.dims();
    let data = fb_residual(f_fwd, f_bwd)?
        .into_iter()
        .map(|r| r <= tol_px)
        .collect();
    Mask::new(w, h, data)
}

/// Zero every displacement whose Euclidean norm is below `min_px`.
pub fn clip_small_flows(flow: &FlowField, min_px: f64) -> FlowField {
    let data = flow
        .data()
        .chunks(2)
        .flat_map(|p| {
            if p[0].hypot(p[1]) < min_px {
                [0.0, 0.0]
            } else {
                [p[0], p[1]]
            }
        })
        .collect();
    FlowField::from_parts(flow.width(), flow.height(), data)
}
