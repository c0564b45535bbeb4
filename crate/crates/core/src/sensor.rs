//! Dual-exposure sensor simulation from high-framerate sequences.
//!
//! A window of `2E + G - 1` consecutive frames (`E` exposure frames, `G`
//! readout-gap frames; 16 frames with the defaults 4 and 9) yields two
//! captured frames. Each long exposure sums its `E` frames and clips at the
//! saturation level; the short exposure is the last frame of the window,
//! so both exposures end on the same instant.
//!
//! Normalized time puts frame 0's exposure end at `t = 0` and frame 1's at
//! `t = 1`; source frame `k` (1-based) sits at `(k - E) / (E - 1 + G)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FlowField, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExposureTimeline {
    pub exposure_frames: usize,
    pub gap_frames: usize,
    /// Long / short exposure-time ratio.
    pub ratio: f64,
}

impl Default for ExposureTimeline {
    fn default() -> Self {
        Self {
            exposure_frames: 4,
            gap_frames: 9,
            ratio: 4.0,
        }
    }
}

impl ExposureTimeline {
    pub fn validate(&self) -> Result<()> {
        if self.exposure_frames < 2 {
            return Err(Error::InvalidParameter(
                "exposure_frames must be at least 2".into(),
            ));
        }
        if self.gap_frames < 1 {
            return Err(Error::InvalidParameter("gap_frames must be at least 1".into()));
        }
        if !(self.ratio.is_finite() && self.ratio > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "exposure ratio {} must exceed 1",
                self.ratio
            )));
        }
        Ok(())
    }

    /// Source frames consumed by one sample.
    pub fn window_len(&self) -> usize {
        2 * self.exposure_frames + self.gap_frames - 1
    }

    /// Source-frame distance between the two exposure ends.
    pub fn inter_end_interval(&self) -> usize {
        self.exposure_frames - 1 + self.gap_frames
    }

    /// Intra-exposure span as a fraction of the end-to-end interval.
    pub fn tau(&self) -> f64 {
        (self.exposure_frames - 1) as f64 / self.inter_end_interval() as f64
    }

    /// 1-based indices of (frame-0 start, frame-0 end, frame-1 start, frame-1 end).
    pub fn keyframes(&self) -> [usize; 4] {
        let e = self.exposure_frames;
        [1, e, e + self.gap_frames, self.window_len()]
    }

    /// 1-based target frames: steps of `E - 1` frames after frame 0's end,
    /// strictly before frame 1's exposure starts.
    pub fn target_frames(&self) -> Vec<usize> {
        let [_, end0, start1, _] = self.keyframes();
        let step = self.exposure_frames - 1;
        (1..)
            .map(|k| end0 + k * step)
            .take_while(|f| *f < start1)
            .collect()
    }

    /// Normalized time of a 1-based source frame.
    pub fn time_of(&self, frame: usize) -> f64 {
        (frame as f64 - self.exposure_frames as f64) / self.inter_end_interval() as f64
    }

    pub fn target_times(&self) -> Vec<f64> {
        self.target_frames().into_iter().map(|f| self.time_of(f)).collect()
    }

    /// Normalized times of every frame in the window.
    pub fn frame_times(&self) -> Vec<f64> {
        (1..=self.window_len()).map(|f| self.time_of(f)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Saturation level in normalized units (1.0 is 255 for 8-bit sources).
    pub saturation_level: f64,
    /// A patch is rejected when more than this fraction is saturated.
    pub reject_fraction: f64,
    /// Standard deviation of optional additive Gaussian noise (0 disables).
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            saturation_level: 1.0,
            reject_fraction: 0.2,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }
}

/// One captured frame of the dual-exposure sensor.
#[derive(Debug, Clone)]
pub struct DualExposureFrame {
    /// Interleaved sensor raster: long in even columns, short in odd columns.
    pub raw: Image,
    /// Short exposure at half horizontal resolution.
    pub short: Image,
    /// Long exposure at half horizontal resolution.
    pub long: Image,
    /// Full-resolution short exposure kept as ground truth.
    pub short_full: Image,
    /// Full-resolution long exposure kept as ground truth.
    pub long_full: Image,
    pub saturation_level: f64,
}

impl DualExposureFrame {
    /// Column-subsample full-resolution exposures onto the sensor layout.
    pub fn from_full(short_full: Image, long_full: Image, saturation_level: f64) -> Result<Self> {
        short_full.ensure_same_shape(&long_full, "exposure pair")?;
        if short_full.width() < 2 {
            return Err(Error::TooSmall("sensor frames need at least 2 columns".into()));
        }
        let short = take_columns(&short_full, 1);
        let long = take_columns(&long_full, 0);
        let raw = interleave_columns(&short, &long)?;
        Ok(Self {
            raw,
            short,
            long,
            short_full,
            long_full,
            saturation_level,
        })
    }
}

/// Every other column starting at `offset`, `floor(W / 2)` columns total.
fn take_columns(img: &Image, offset: usize) -> Image {
    let half = img.width() / 2;
    let c = img.channels();
    let mut data = Vec::with_capacity(half * img.height() * c);
    for y in 0..img.height() {
        for k in 0..half {
            for ch in 0..c {
                data.push(img.get(2 * k + offset, y, ch));
            }
        }
    }
    Image::from_parts(half, img.height(), c, data)
}

/// Even columns from `long`, odd columns from `short`.
pub fn interleave_columns(short: &Image, long: &Image) -> Result<Image> {
    short.ensure_same_shape(long, "interleave_columns")?;
    let (w, h, c) = (short.width(), short.height(), short.channels());
    let mut data = Vec::with_capacity(2 * w * h * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data.push(long.get(x, y, ch));
            }
            for ch in 0..c {
                data.push(short.get(x, y, ch));
            }
        }
    }
    Ok(Image::from_parts(2 * w, h, c, data))
}

/// Split a raw raster into `(short, long)`.
pub fn deinterleave_columns(raw: &Image) -> Result<(Image, Image)> {
    if raw.width() % 2 != 0 {
        return Err(Error::dims(format!(
            "raw width {} is not even",
            raw.width()
        )));
    }
    Ok((take_columns(raw, 1), take_columns(raw, 0)))
}

/// Pixel-wise sum of `frames` clipped at `saturation_level`.
pub fn simulate_long_exposure(frames: &[Image], saturation_level: f64) -> Result<Image> {
    let first = frames
        .first()
        .filter(|_| frames.len() >= 2)
        .ok_or_else(|| Error::InvalidParameter("long exposure needs at least 2 frames".into()))?;
    let mut sum = vec![0.0; first.data().len()];
    for f in frames {
        first.ensure_same_shape(f, "simulate_long_exposure")?;
        sum.iter_mut().zip(f.data()).for_each(|(s, v)| *s += v);
    }
    let data = sum.into_iter().map(|v| v.min(saturation_level)).collect();
    Image::new(first.width(), first.height(), first.channels(), data)
}

/// Fraction of pixels with any channel at or above `saturation_level`.
pub fn saturated_fraction(patch: &Image, saturation_level: f64) -> f64 {
    let c = patch.channels();
    let n = patch
        .data()
        .chunks(c)
        .filter(|p| p.iter().any(|v| *v >= saturation_level))
        .count();
    n as f64 / (patch.width() * patch.height()) as f64
}

/// True (reject) when strictly more than `threshold` of the patch is saturated.
pub fn reject_saturated_patch(patch: &Image, saturation_level: f64, threshold: f64) -> bool {
    saturated_fraction(patch, saturation_level) > threshold
}

/// Additive zero-mean Gaussian noise, clamped at zero.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .data()
        .iter()
        .map(|v| (v + normal.sample(&mut rng)).max(0.0))
        .collect();
    Image::new(img.width(), img.height(), img.channels(), data)
}

#[derive(Debug, Clone)]
pub struct Target {
    /// 1-based source frame index within the window.
    pub frame: usize,
    pub t: f64,
    pub image: Image,
}

/// Ground-truth flows available for analytic scenes.
#[derive(Debug, Clone)]
pub struct GroundTruthFlows {
    /// Frame 0 exposure end -> start.
    pub intra_0: FlowField,
    /// Frame 1 exposure end -> start.
    pub intra_1: FlowField,
    /// Frame 0 end -> frame 1 end.
    pub cross_01: FlowField,
    /// Frame 1 end -> frame 0 end.
    pub cross_10: FlowField,
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub timeline: ExposureTimeline,
    pub frame0: DualExposureFrame,
    pub frame1: DualExposureFrame,
    pub sharp_0s: Image,
    pub sharp_0e: Image,
    pub sharp_1s: Image,
    pub sharp_1e: Image,
    pub targets: Vec<Target>,
    pub gt_flows: Option<GroundTruthFlows>,
    /// Worst saturated fraction over the source frames.
    pub saturated_fraction: f64,
}

impl SynthSample {
    pub fn tau(&self) -> f64 {
        self.timeline.tau()
    }
}

/// Build a dual-exposure sample from one window of source frames.
///
/// Fails with [`Error::Rejected`] when any source frame has more than
/// `sensor.reject_fraction` of its pixels saturated.
pub fn synthesize_sample(
    frames: &[Image],
    timeline: &ExposureTimeline,
    sensor: &SensorConfig,
) -> Result<SynthSample> {
    timeline.validate()?;
    if frames.len() != timeline.window_len() {
        return Err(Error::InvalidParameter(format!(
            "expected {} frames, got {}",
            timeline.window_len(),
            frames.len()
        )));
    }
    for f in &frames[1..] {
        frames[0].ensure_same_shape(f, "synthesize_sample")?;
    }
    let level = sensor.saturation_level;
    let worst = frames
        .iter()
        .map(|f| saturated_fraction(f, level))
        .fold(0.0, f64::max);
    if worst > sensor.reject_fraction {
        return Err(Error::Rejected {
            fraction: worst,
            limit: sensor.reject_fraction,
        });
    }

    let [s0, e0, s1, e1] = timeline.keyframes();
    let frame = |k: usize| &frames[k - 1];
    // the short exposure lasts E / ratio source frames and ends with the last one
    let short_gain = timeline.exposure_frames as f64 / timeline.ratio;
    let capture = |start: usize, end: usize, seed: u64| -> Result<DualExposureFrame> {
        let long = simulate_long_exposure(&frames[start - 1..end], level)?;
        let short = frame(end).map(|v| (v * short_gain).min(level))?;
        let long = add_gaussian_noise(&long, sensor.noise_sigma, seed)?;
        let short = add_gaussian_noise(&short, sensor.noise_sigma, seed ^ 0x5eed)?;
        DualExposureFrame::from_full(short, long, level)
    };

    let targets = timeline
        .target_frames()
        .into_iter()
        .map(|k| Target {
            frame: k,
            t: timeline.time_of(k),
            image: frame(k).clone(),
        })
        .collect();

    Ok(SynthSample {
        timeline: *timeline,
        frame0: capture(s0, e0, sensor.noise_seed)?,
        frame1: capture(s1, e1, sensor.noise_seed.wrapping_add(1))?,
        sharp_0s: frame(s0).clone(),
        sharp_0e: frame(e0).clone(),
        sharp_1s: frame(s1).clone(),
        sharp_1e: frame(e1).clone(),
        targets,
        gt_flows: None,
        saturated_fraction: worst,
    })
}
