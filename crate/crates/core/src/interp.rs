//! Frame synthesis at an arbitrary time between two keyframes.
//!
//! Per-pixel motion models are fitted once, evaluated at `t`, reversed into
//! backward flows and used to warp both keyframes. A coarse-to-fine loop
//! computes an occlusion weight per level and blends the two warps.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::PairFlows;
use crate::image::{FlowField, Image};
use crate::io::{write_flo, write_pfm};
use crate::motion::{
    derive_third_flow_consistent, eval_displacement, fit_cubic, fit_quadratic, fit_two_flow_quadratic,
    linear_model, reverse_flow, reverse_flow_weighted, Basis, FlowTriplet, MotionModel, ReverseParams,
};
use crate::pyramid::{downsample, downsample_flow, feasible_depth, upsample_image2x};
use crate::warp::backward_warp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Quadratic,
    Cubic,
    TwoFlow,
    Linear,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Quadratic, Variant::Cubic, Variant::TwoFlow, Variant::Linear];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Quadratic => "quadratic",
            Variant::Cubic => "cubic",
            Variant::TwoFlow => "two_flow",
            Variant::Linear => "linear",
        }
    }

    pub fn needs_intra(self) -> bool {
        self != Variant::Linear
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "quadratic" => Ok(Variant::Quadratic),
            "cubic" => Ok(Variant::Cubic),
            "two_flow" | "twoflow" => Ok(Variant::TwoFlow),
            "linear" => Ok(Variant::Linear),
            other => Err(Error::InvalidParameter(format!("unknown variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendConfig {
    /// Pyramid depth; reduced automatically for small inputs.
    pub levels: usize,
    /// Weight of the upsampled coarser α against the current estimate.
    pub alpha_mix: f64,
    pub eps: f64,
    pub coverage_gain: f64,
    pub residual_gain: f64,
    /// Forward-backward tolerance (px) for trusting a cross flow when
    /// deriving the third flow.
    pub consistency_tol: f64,
    /// Neighbours whose forward-backward error exceeds the best one by more
    /// than this (px) are taken to lie on another surface when sampling the
    /// other intra flow.
    pub surface_margin: f64,
    /// Sample the third flow only on the surface the cross flow lands on,
    /// falling back to the two-flow prediction where there is none.
    pub occlusion_aware_fit: bool,
    /// Sharpness of the splat importance `exp(-k * E)`, where `E` is a
    /// source pixel's photometric error against the other keyframe along
    /// the cross flow. Zero splats every source with equal importance.
    pub splat_sharpness: f64,
    /// Refit the motion model on downsampled flows at every level instead
    /// of downsampling full-resolution forward flows.
    pub per_level_fit: bool,
    pub reverse: ReverseParams,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            alpha_mix: 0.5,
            eps: 1e-6,
            coverage_gain: 2.0,
            residual_gain: 1.0,
            consistency_tol: 1.0,
            surface_margin: 0.25,
            occlusion_aware_fit: true,
            splat_sharpness: 50.0,
            per_level_fit: false,
            reverse: ReverseParams::default(),
        }
    }
}

impl BlendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidParameter("levels must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_mix) {
            return Err(Error::InvalidParameter("alpha_mix must lie in [0, 1]".into()));
        }
        if !(self.splat_sharpness >= 0.0 && self.splat_sharpness.is_finite()) {
            return Err(Error::InvalidParameter("splat_sharpness must be finite and non-negative".into()));
        }
        if !(self.consistency_tol >= 0.0 && self.surface_margin >= 0.0) {
            return Err(Error::InvalidParameter("consistency_tol and surface_margin must be non-negative".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter("eps must be positive".into()));
        }
        Ok(())
    }
}

fn single_channel(img: &Image, what: &str) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::dims(format!("{what} must have one channel")));
    }
    Ok(())
}

/// Per-pixel mean absolute difference between a keyframe and the other
/// keyframe pulled back along the cross flow, aligned with `key`.
pub fn photometric_error(key: &Image, other: &Image, cross: &FlowField) -> Result<Image> {
    key.ensure_same_shape(other, "photometric_error")?;
    let pulled = backward_warp(other, cross)?;
    let c = key.channels();
    let err: Vec<f64> = key
        .data()
        .par_chunks(c)
        .zip(pulled.data().par_chunks(c))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / c as f64)
        .collect();
    Image::new(key.width(), key.height(), 1, err)
}

fn reverse_with_importance(fwd: &FlowField, err: &Image, cfg: &BlendConfig) -> Result<(FlowField, Image)> {
    if cfg.splat_sharpness == 0.0 {
        return Ok(reverse_flow(fwd, &cfg.reverse));
    }
    let importance = err.map(|e| (-cfg.splat_sharpness * e).exp())?;
    reverse_flow_weighted(fwd, &importance, &cfg.reverse)
}

/// Soft occlusion weight: 1 trusts the frame-0 warp, 0 the frame-1 warp.
pub fn occlusion_weight(
    cov0: &Image,
    cov1: &Image,
    err0: &Image,
    err1: &Image,
    alpha_up: Option<&Image>,
    cfg: &BlendConfig,
) -> Result<Image> {
    for (img, what) in [(cov0, "cov0"), (cov1, "cov1"), (err0, "err0"), (err1, "err1")] {
        single_channel(img, what)?;
        cov0.ensure_same_shape(img, "occlusion_weight")?;
    }
    if let Some(up) = alpha_up {
        single_channel(up, "alpha_up")?;
        cov0.ensure_same_shape(up, "occlusion_weight")?;
    }
    let (w, h) = cov0.dims();
    let data = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (c0, c1) = (cov0.data()[i], cov1.data()[i]);
            let raw = 0.5 + cfg.coverage_gain * (c0 - c1) / (c0 + c1 + cfg.eps)
                - cfg.residual_gain * (err0.data()[i] - err1.data()[i]);
            let raw = raw.clamp(0.0, 1.0);
            match alpha_up {
                Some(up) => cfg.alpha_mix * up.data()[i] + (1.0 - cfg.alpha_mix) * raw,
                None => raw,
            }
        })
        .collect();
    Image::new(w, h, 1, data)
}

/// `[(1-t) α W0 + t (1-α) W1] / [(1-t) α + t (1-α)]`, falling back to the
/// linear blend where the denominator vanishes.
pub fn blend_frames(w0: &Image, w1: &Image, alpha: &Image, t: f64, eps: f64) -> Result<Image> {
    w0.ensure_same_shape(w1, "blend_frames")?;
    single_channel(alpha, "alpha")?;
    if alpha.dims() != w0.dims() {
        return Err(Error::dims("alpha does not match the warped frames"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t {t} outside [0, 1]")));
    }
    let c = w0.channels();
    let mut out = vec![0.0; w0.data().len()];
    out.par_chunks_mut(c)
        .zip(w0.data().par_chunks(c))
        .zip(w1.data().par_chunks(c))
        .zip(alpha.data().par_iter())
        .for_each(|(((o, a), b), &al)| {
            let (k0, k1) = ((1.0 - t) * al, t * (1.0 - al));
            let den = k0 + k1;
            for ((ov, &x0), &x1) in o.iter_mut().zip(a).zip(b) {
                let v = if den < eps {
                    (1.0 - t) * x0 + t * x1
                } else {
                    (k0 * x0 + k1 * x1) / den
                };
                *ov = v.clamp(x0.min(x1), x0.max(x1));
            }
        });
    Image::new(w0.width(), w0.height(), c, out)
}

/// Triplet for one basis. With the occlusion-aware fit the third flow only
/// samples the other intra flow on the surface the cross flow lands on, and
/// where no such surface exists it comes from the two-flow model instead.
fn assemble_triplet(
    intra: &FlowField,
    cross: &FlowField,
    other_cross: &FlowField,
    other_intra: &FlowField,
    tau: f64,
    basis: Basis,
    cfg: &BlendConfig,
) -> Result<FlowTriplet> {
    if !cfg.occlusion_aware_fit {
        return FlowTriplet::derive(intra.clone(), cross.clone(), other_intra, tau, basis);
    }
    let (mut third, ok) = derive_third_flow_consistent(cross, other_cross, other_intra, cfg.consistency_tol, cfg.surface_margin)?;
    if ok.count() < ok.data().len() {
        let two: MotionModel = fit_two_flow_quadratic(intra, cross, tau, basis)?.into();
        let predicted = two.displacement_at_offset(basis.offsets(tau)[2]);
        let (w, h) = third.dims();
        third = FlowField::from_fn(w, h, |x, y| {
            if ok.get(x, y) {
                third.get(x, y)
            } else {
                predicted.get(x, y)
            }
        })?;
    }
    FlowTriplet::new(intra.clone(), cross.clone(), third, tau, basis)
}

/// Fit the chosen variant at both frame ends.
pub fn fit_models(
    flows: &PairFlows,
    tau: f64,
    variant: Variant,
    cfg: &BlendConfig,
) -> Result<(MotionModel, MotionModel)> {
    let (w, h) = flows.cross_01.dims();
    flows.cross_10.ensure_dims(w, h, "cross_10")?;
    if variant == Variant::Linear {
        return Ok((
            linear_model(&flows.cross_01, Basis::Frame0).into(),
            linear_model(&flows.cross_10, Basis::Frame1).into(),
        ));
    }
    let (Some(intra_0), Some(intra_1)) = (&flows.intra_0, &flows.intra_1) else {
        return Err(Error::MissingIntraFlow(variant.name()));
    };
    intra_0.ensure_dims(w, h, "intra_0")?;
    intra_1.ensure_dims(w, h, "intra_1")?;
    if variant == Variant::TwoFlow {
        return Ok((
            fit_two_flow_quadratic(intra_0, &flows.cross_01, tau, Basis::Frame0)?.into(),
            fit_two_flow_quadratic(intra_1, &flows.cross_10, tau, Basis::Frame1)?.into(),
        ));
    }
    let t0 = assemble_triplet(intra_0, &flows.cross_01, &flows.cross_10, intra_1, tau, Basis::Frame0, cfg)?;
    let t1 = assemble_triplet(intra_1, &flows.cross_10, &flows.cross_01, intra_0, tau, Basis::Frame1, cfg)?;
    Ok(match variant {
        Variant::Cubic => (fit_cubic(&t0)?.into(), fit_cubic(&t1)?.into()),
        _ => (fit_quadratic(&t0)?.into(), fit_quadratic(&t1)?.into()),
    })
}

fn downsample_pair(flows: &PairFlows, level: usize) -> PairFlows {
    PairFlows {
        intra_0: flows.intra_0.as_ref().map(|f| downsample_flow(f, level)),
        intra_1: flows.intra_1.as_ref().map(|f| downsample_flow(f, level)),
        cross_01: downsample_flow(&flows.cross_01, level),
        cross_10: downsample_flow(&flows.cross_10, level),
    }
}

/// Everything computed at one pyramid level.
#[derive(Debug, Clone)]
pub struct LevelProducts {
    pub level: usize,
    pub forward_0: FlowField,
    pub forward_1: FlowField,
    pub backward_0: FlowField,
    pub backward_1: FlowField,
    pub coverage_0: Image,
    pub coverage_1: Image,
    pub warped_0: Image,
    pub warped_1: Image,
    pub residual_0: Image,
    pub residual_1: Image,
    pub alpha: Image,
    pub blended: Image,
}

impl LevelProducts {
    /// Write every map as `l<level>_<name>.{pfm,flo}` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
        let l = self.level;
        for (name, f) in [
            ("forward_0", &self.forward_0),
            ("forward_1", &self.forward_1),
            ("backward_0", &self.backward_0),
            ("backward_1", &self.backward_1),
        ] {
            write_flo(dir.join(format!("l{l}_{name}.flo")), f)?;
        }
        for (name, img) in [
            ("coverage_0", &self.coverage_0),
            ("coverage_1", &self.coverage_1),
            ("warped_0", &self.warped_0),
            ("warped_1", &self.warped_1),
            ("residual_0", &self.residual_0),
            ("residual_1", &self.residual_1),
            ("alpha", &self.alpha),
            ("blended", &self.blended),
        ] {
            write_pfm(dir.join(format!("l{l}_{name}.pfm")), img)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Interpolation {
    pub image: Image,
    pub levels_used: usize,
    /// Coarsest level first; empty unless requested.
    pub intermediates: Vec<LevelProducts>,
}

/// Synthesize the frame at `t` from the two end-of-exposure keyframes.
#[allow(clippy::too_many_arguments)]
pub fn interpolate_at(
    key0: &Image,
    key1: &Image,
    flows: &PairFlows,
    tau: f64,
    t: f64,
    variant: Variant,
    cfg: &BlendConfig,
    keep_intermediates: bool,
) -> Result<Interpolation> {
    cfg.validate()?;
    key0.ensure_same_shape(key1, "interpolate_at")?;
    let (w, h) = key0.dims();
    flows.cross_01.ensure_dims(w, h, "cross_01")?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t {t} outside [0, 1]")));
    }
    let depth = feasible_depth(w, h, cfg.levels);
    let full = if cfg.per_level_fit {
        None
    } else {
        let (m0, m1) = fit_models(flows, tau, variant, cfg)?;
        Some((eval_displacement(&m0, t)?, eval_displacement(&m1, t)?))
    };
    let mut alpha_prev: Option<Image> = None;
    let mut intermediates = Vec::new();
    let mut result = None;
    for l in (0..depth).rev() {
        let (k0, k1) = (downsample(key0, l), downsample(key1, l));
        let level_flows = downsample_pair(flows, l);
        let (f0, f1) = match &full {
            Some((f0, f1)) => (downsample_flow(f0, l), downsample_flow(f1, l)),
            None => {
                let (m0, m1) = fit_models(&level_flows, tau, variant, cfg)?;
                (eval_displacement(&m0, t)?, eval_displacement(&m1, t)?)
            }
        };
        let p0 = photometric_error(&k0, &k1, &level_flows.cross_01)?;
        let p1 = photometric_error(&k1, &k0, &level_flows.cross_10)?;
        let (b0, cov0) = reverse_with_importance(&f0, &p0, cfg)?;
        let (b1, cov1) = reverse_with_importance(&f1, &p1, cfg)?;
        let w0 = backward_warp(&k0, &b0)?;
        let w1 = backward_warp(&k1, &b1)?;
        let e0 = backward_warp(&p0, &b0)?;
        let e1 = backward_warp(&p1, &b1)?;
        let (lw, lh) = k0.dims();
        let up = alpha_prev
            .as_ref()
            .map(|a| upsample_image2x(a, lw, lh))
            .transpose()?;
        let alpha = occlusion_weight(&cov0, &cov1, &e0, &e1, up.as_ref(), cfg)?;
        let blended = blend_frames(&w0, &w1, &alpha, t, cfg.eps)?;
        if keep_intermediates {
            intermediates.push(LevelProducts {
                level: l,
                forward_0: f0,
                forward_1: f1,
                backward_0: b0,
                backward_1: b1,
                coverage_0: cov0,
                coverage_1: cov1,
                warped_0: w0,
                warped_1: w1,
                residual_0: e0,
                residual_1: e1,
                alpha: alpha.clone(),
                blended: blended.clone(),
            });
        }
        alpha_prev = Some(alpha);
        result = Some(blended);
    }
    Ok(Interpolation {
        image: result.expect("at least one level"),
        levels_used: depth,
        intermediates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(v: f64) -> Image {
        Image::filled(4, 3, 1, v).unwrap()
    }

    #[test]
    fn blend_examples() {
        let out = blend_frames(&img(10.0), &img(20.0), &img(0.8), 0.25, 1e-6).unwrap();
        assert!((out.get(0, 0, 0) - 7.0 / 0.65).abs() < 1e-9);
        let out = blend_frames(&img(10.0), &img(20.0), &img(1.0), 0.7, 1e-6).unwrap();
        assert_eq!(out.get(1, 1, 0), 10.0);
        let out = blend_frames(&img(10.0), &img(20.0), &img(0.5), 0.5, 1e-6).unwrap();
        assert_eq!(out.get(1, 1, 0), 15.0);
        // α = 1 at t = 1 has a zero denominator.
        let out = blend_frames(&img(10.0), &img(20.0), &img(1.0), 1.0, 1e-6).unwrap();
        assert_eq!(out.get(1, 1, 0), 20.0);
    }

    #[test]
    fn alpha_examples() {
        let cfg = BlendConfig::default();
        let one = img(1.0);
        let z = img(0.0);
        let a = occlusion_weight(&one, &one, &z, &z, None, &cfg).unwrap();
        assert!(a.data().iter().all(|v| *v == 0.5));
        let a = occlusion_weight(&z, &one, &z, &z, None, &cfg).unwrap();
        assert!(a.data().iter().all(|v| *v == 0.0));
        let a = occlusion_weight(&one, &one, &z, &z, Some(&img(1.0)), &cfg).unwrap();
        assert!(a.data().iter().all(|v| *v == 0.75));
        assert!(occlusion_weight(&one, &Image::filled(2, 2, 1, 1.0).unwrap(), &z, &z, None, &cfg).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("two-flow".parse::<Variant>().unwrap(), Variant::TwoFlow);
        assert!("quartic".parse::<Variant>().is_err());
    }

    #[test]
    fn missing_intra_flow() {
        let z = FlowField::zeros(16, 16);
        let flows = PairFlows {
            intra_0: None,
            intra_1: None,
            cross_01: z.clone(),
            cross_10: z,
        };
        let k = Image::filled(16, 16, 1, 0.5).unwrap();
        let cfg = BlendConfig::default();
        let err = interpolate_at(&k, &k, &flows, 0.25, 0.5, Variant::Quadratic, &cfg, false).unwrap_err();
        assert!(matches!(err, Error::MissingIntraFlow("quadratic")));
        assert!(interpolate_at(&k, &k, &flows, 0.25, 0.5, Variant::Linear, &cfg, false).is_ok());
    }

    #[test]
    fn static_scene_is_identity() {
        let k = Image::from_fn(32, 24, 3, |x, y, c| 0.1 + 0.01 * (x + 2 * y + c) as f64).unwrap();
        let z = FlowField::zeros(32, 24);
        let flows = PairFlows {
            intra_0: Some(z.clone()),
            intra_1: Some(z.clone()),
            cross_01: z.clone(),
            cross_10: z,
        };
        for t in [0.0, 0.25, 0.5, 1.0] {
            let out = interpolate_at(&k, &k, &flows, 0.25, t, Variant::Quadratic, &BlendConfig::default(), true)
                .unwrap();
            let diff = out.image.data().iter().zip(k.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-6);
            assert_eq!(out.intermediates.len(), out.levels_used);
        }
    }
}
