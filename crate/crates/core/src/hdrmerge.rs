//! Merging end-aligned short/long exposures into linear radiance, and
//! global Reinhard tonemapping for LDR export.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    /// Long / short exposure-time ratio.
    pub ratio: f64,
    pub saturation_level: f64,
    /// Fraction of the saturation level where the long-exposure weight
    /// starts its linear decay to zero.
    pub weight_knee: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            ratio: 4.0,
            saturation_level: 1.0,
            weight_knee: 0.9,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio.is_finite() && self.ratio > 1.0) {
            return Err(Error::InvalidParameter(format!("ratio {} must exceed 1", self.ratio)));
        }
        if !(self.weight_knee > 0.0 && self.weight_knee < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "weight_knee {} must lie in (0, 1)",
                self.weight_knee
            )));
        }
        if !(self.saturation_level.is_finite() && self.saturation_level > 0.0) {
            return Err(Error::InvalidParameter("saturation_level must be positive".into()));
        }
        Ok(())
    }

    /// Weight of a long-exposure sample: 1 up to the knee, then linear
    /// down to 0 at saturation.
    pub fn long_weight(&self, long: f64) -> f64 {
        let knee = self.weight_knee * self.saturation_level;
        if long <= knee {
            1.0
        } else if long >= self.saturation_level {
            0.0
        } else {
            (self.saturation_level - long) / (self.saturation_level - knee)
        }
    }

    /// Brightest radiance the long exposure records before clipping.
    pub fn max_radiance_long(&self) -> f64 {
        self.saturation_level / self.ratio
    }

    /// Brightest radiance the short exposure records before clipping.
    pub fn max_radiance_short(&self) -> f64 {
        self.saturation_level
    }
}

/// Per-pixel weighted radiance estimate from a short exposure (unit time)
/// and a long exposure (`ratio` time units).
pub fn merge_exposures(short: &Image, long: &Image, cfg: &MergeConfig) -> Result<Image> {
    cfg.validate()?;
    short.ensure_same_shape(long, "merge_exposures")?;
    let data = short
        .data()
        .par_iter()
        .zip(long.data().par_iter())
        .map(|(&s, &l)| {
            let wl = cfg.long_weight(l);
            let rl = l / cfg.ratio;
            (s + wl * rl) / (1.0 + wl)
        })
        .collect();
    Image::new(short.width(), short.height(), short.channels(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReinhardParams {
    /// Key value `a`.
    pub key: f64,
    /// White luminance; `None` uses the image maximum.
    pub white: Option<f64>,
    /// Log-average luminance override; `None` computes it from the image.
    pub log_average: Option<f64>,
}

impl Default for ReinhardParams {
    fn default() -> Self {
        Self {
            key: 0.18,
            white: None,
            log_average: None,
        }
    }
}

const LOG_DELTA: f64 = 1e-6;

/// `exp(mean(log(delta + L)))`, summed sequentially in pixel order so the
/// result does not depend on the thread count.
pub fn log_average_luminance(lum: &Image) -> f64 {
    let sum: f64 = lum.data().iter().map(|l| (LOG_DELTA + l).ln()).sum();
    (sum / lum.data().len() as f64).exp()
}

/// Global Reinhard operator with white-point burn-out; output in `[0, 1]`.
pub fn tonemap_reinhard(hdr: &Image, params: &ReinhardParams) -> Result<Image> {
    if !(params.key > 0.0) {
        return Err(Error::InvalidParameter("tonemap key must be positive".into()));
    }
    let lum = hdr.luminance();
    let l_avg = params.log_average.unwrap_or_else(|| log_average_luminance(&lum));
    let l_white = params
        .white
        .unwrap_or_else(|| lum.data().iter().copied().fold(0.0, f64::max));
    let white_scaled = params.key * l_white / l_avg;
    let white2 = white_scaled * white_scaled;
    let c = hdr.channels();
    let mut out = vec![0.0; hdr.data().len()];
    out.par_chunks_mut(c)
        .zip(hdr.data().par_chunks(c))
        .zip(lum.data().par_iter())
        .for_each(|((o, px), &l)| {
            if l <= 0.0 {
                o.fill(0.0);
                return;
            }
            let lm = params.key * l / l_avg;
            let burn = if white2 > 0.0 { lm / white2 } else { 0.0 };
            let ld = lm * (1.0 + burn) / (1.0 + lm);
            let gain = ld / l;
            for (ov, pv) in o.iter_mut().zip(px) {
                *ov = (pv * gain).clamp(0.0, 1.0);
            }
        });
    Image::new(hdr.width(), hdr.height(), c, out)
}
