//! Motion non-uniformity: how far per-pixel trajectories over `N` frames
//! depart from constant-velocity motion.
//!
//! Each valid pixel's trajectory gets a least-squares line per coordinate
//! over uniform frame indices. Its error is the mean squared residual
//! normalized by the aggregated path length (squared by default, which
//! makes the score scale-free). A window's score is the nearest-rank
//! median over its pixels.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{clip_small_flows, estimate_flow, EstimatorParams};
use crate::image::{FlowField, Mask};
use crate::io::{list_files, list_frames, read_flo, read_image};
use crate::warp::sample_flow;

/// Per-pixel positions over `n` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    n: usize,
    width: usize,
    height: usize,
    /// Pixel-major: the `n` positions of pixel `i` start at `i * n`.
    positions: Vec<[f64; 2]>,
    valid: Mask,
}

impl TrajectorySet {
    pub fn new(n: usize, width: usize, height: usize, positions: Vec<[f64; 2]>, valid: Mask) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!(
                "trajectories need at least 3 frames, got {n}"
            )));
        }
        if positions.len() != n * width * height {
            return Err(Error::dims(format!(
                "{} positions for {width}x{height} pixels over {n} frames",
                positions.len()
            )));
        }
        if valid.width() != width || valid.height() != height {
            return Err(Error::dims("validity mask does not match the trajectory grid"));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite trajectory position".into()));
        }
        Ok(Self {
            n,
            width,
            height,
            positions,
            valid,
        })
    }

    /// Trajectories generated per pixel, all valid.
    pub fn from_fn(
        n: usize,
        width: usize,
        height: usize,
        f: impl Fn(usize, usize, usize) -> [f64; 2],
    ) -> Result<Self> {
        let mut positions = Vec::with_capacity(n * width * height);
        for y in 0..height {
            for x in 0..width {
                positions.extend((0..n).map(|k| f(x, y, k)));
            }
        }
        Self::new(n, width, height, positions, Mask::filled(width, height, true))
    }

    pub fn frames(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn trajectory(&self, x: usize, y: usize) -> &[[f64; 2]] {
        let i = (y * self.width + x) * self.n;
        &self.positions[i..i + self.n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackParams {
    /// Per-step flows shorter than this are zeroed before tracking.
    pub min_flow_px: f64,
    /// Forward-backward tolerance between the first and last frames.
    pub fb_tol_px: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            min_flow_px: 1.0,
            fb_tol_px: 1.0,
        }
    }
}

/// Chain `N - 1` consecutive flows from every pixel of the first frame.
///
/// `backward` maps the last frame to the first; when given, pixels whose
/// round trip misses by more than `fb_tol_px` are invalid. Pixels that
/// leave the frame are always invalid.
pub fn track_trajectories(
    flows: &[FlowField],
    backward: Option<&FlowField>,
    params: &TrackParams,
) -> Result<TrajectorySet> {
    let n = flows.len() + 1;
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "tracking needs at least 3 frames, got {n}"
        )));
    }
    let (w, h) = flows[0].dims();
    for f in flows.iter().chain(backward) {
        f.ensure_dims(w, h, "track_trajectories")?;
    }
    let clipped: Vec<FlowField> = flows.iter().map(|f| clip_small_flows(f, params.min_flow_px)).collect();
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    let per_pixel: Vec<(Vec<[f64; 2]>, bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let mut p = [(i % w) as f64, (i / w) as f64];
            let mut path = Vec::with_capacity(n);
            let mut inside = true;
            path.push(p);
            for f in &clipped {
                let [u, v] = sample_flow(f, p[0], p[1]);
                p = [p[0] + u, p[1] + v];
                inside &= p[0] >= 0.0 && p[0] <= xmax && p[1] >= 0.0 && p[1] <= ymax;
                path.push(p);
            }
            let consistent = match backward {
                Some(b) if inside => {
                    let [u, v] = sample_flow(b, p[0], p[1]);
                    (p[0] + u - path[0][0]).hypot(p[1] + v - path[0][1]) <= params.fb_tol_px
                }
                _ => true,
            };
            (path, inside && consistent)
        })
        .collect();
    let mut positions = Vec::with_capacity(n * w * h);
    let mut valid = Vec::with_capacity(w * h);
    for (path, ok) in per_pixel {
        positions.extend(path);
        valid.push(ok);
    }
    TrajectorySet::new(n, w, h, positions, Mask::new(w, h, valid)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Divide by the squared aggregated displacement (scale-free).
    #[default]
    Squared,
    /// Divide by the aggregated displacement itself.
    Linear,
}

impl std::str::FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "squared" => Ok(NormMode::Squared),
            "linear" => Ok(NormMode::Linear),
            other => Err(Error::InvalidParameter(format!("unknown normalization '{other}'"))),
        }
    }
}

/// Normalized line-fit error of one trajectory; `None` when it never moves.
pub fn trajectory_error(path: &[[f64; 2]], norm: NormMode) -> Option<f64> {
    let n = path.len();
    let path_len: f64 = path.windows(2).map(|s| (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1])).sum();
    if !(path_len > 0.0) || n < 3 {
        return None;
    }
    let kbar = (n - 1) as f64 / 2.0;
    let skk: f64 = (0..n).map(|k| (k as f64 - kbar).powi(2)).sum();
    let mut sse = 0.0;
    for c in 0..2 {
        // relative to the first sample so large offsets do not cost precision
        let rel: Vec<f64> = path.iter().map(|p| p[c] - path[0][c]).collect();
        let mean = rel.iter().sum::<f64>() / n as f64;
        let slope = rel.iter().enumerate().map(|(k, v)| (k as f64 - kbar) * (v - mean)).sum::<f64>() / skk;
        sse += rel
            .iter()
            .enumerate()
            .map(|(k, v)| (v - mean - slope * (k as f64 - kbar)).powi(2))
            .sum::<f64>();
    }
    let mse = sse / n as f64;
    Some(match norm {
        NormMode::Squared => mse / (path_len * path_len),
        NormMode::Linear => mse / path_len,
    })
}

/// Nearest-rank percentile (`p` in (0, 100]) of a non-empty slice.
pub fn nearest_rank(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

/// Median normalized error over the valid, moving pixels.
pub fn frame_nonuniformity(traj: &TrajectorySet, norm: NormMode) -> Result<f64> {
    let (w, h) = traj.dims();
    let mut errors: Vec<f64> = (0..w * h)
        .into_par_iter()
        .filter(|i| traj.valid.data()[*i])
        .filter_map(|i| trajectory_error(traj.trajectory(i % w, i / w), norm))
        .collect();
    if errors.is_empty() {
        return Err(Error::NoValidTrajectories);
    }
    Ok(nearest_rank(&mut errors, 50.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Easy,
    Medium,
    Difficult,
    Extreme,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Easy, Category::Medium, Category::Difficult, Category::Extreme];

    /// Quarter of `[0, range]` holding `score`; a score on a boundary
    /// belongs to the upper quarter and anything past `range` is Extreme.
    pub fn of(score: f64, range: f64) -> Category {
        let bound = |k: f64| range * k / 4.0;
        if score >= bound(3.0) {
            Category::Extreme
        } else if score >= bound(2.0) {
            Category::Difficult
        } else if score >= bound(1.0) {
            Category::Medium
        } else {
            Category::Easy
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Easy => "Easy",
            Category::Medium => "Medium",
            Category::Difficult => "Difficult",
            Category::Extreme => "Extreme",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    /// Frames per window.
    pub n: usize,
    pub bins: usize,
    pub range: f64,
    pub norm: NormMode,
    pub track: TrackParams,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            n: 8,
            bins: 8,
            range: 0.15,
            norm: NormMode::Squared,
            track: TrackParams::default(),
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidParameter("n must be at least 3".into()));
        }
        if self.bins == 0 {
            return Err(Error::InvalidParameter("bins must be positive".into()));
        }
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::InvalidParameter("range must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub index: usize,
    /// `None` when the window had no valid moving pixels.
    pub score: Option<f64>,
    pub category: Option<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub n: usize,
    pub bins: usize,
    pub range: f64,
    pub norm: NormMode,
    pub percentile: String,
    pub residual: String,
    pub min_flow_px: f64,
    pub fb_tol_px: f64,
    pub fb_checked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonuniformityReport {
    pub windows: Vec<WindowScore>,
    /// Probability per bin over `[0, range]`; the last bin also holds
    /// scores beyond the range.
    pub histogram: Vec<f64>,
    pub params: ReportParams,
}

impl NonuniformityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn report_params(params: &MetricParams, fb_checked: bool) -> ReportParams {
    ReportParams {
        n: params.n,
        bins: params.bins,
        range: params.range,
        norm: params.norm,
        percentile: "nearest_rank_50".into(),
        residual: "mean_squared".into(),
        min_flow_px: params.track.min_flow_px,
        fb_tol_px: params.track.fb_tol_px,
        fb_checked,
    }
}

/// Probability-normalized histogram of `scores` over `[0, range]`.
pub fn histogram(scores: &[f64], bins: usize, range: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidParameter("no scores to histogram".into()));
    }
    if bins == 0 || !(range > 0.0) {
        return Err(Error::InvalidParameter("bins and range must be positive".into()));
    }
    let mut counts = vec![0usize; bins];
    for &s in scores {
        if !(s >= 0.0) {
            return Err(Error::InvalidParameter(format!("score {s} is negative or NaN")));
        }
        let b = ((s / range) * bins as f64).floor();
        counts[(b as usize).min(bins - 1)] += 1;
    }
    Ok(counts.iter().map(|c| *c as f64 / scores.len() as f64).collect())
}

/// Histogram and categories for a list of window scores.
pub fn categorize(scores: &[f64], params: &MetricParams) -> Result<NonuniformityReport> {
    params.validate()?;
    let histogram = histogram(scores, params.bins, params.range)?;
    Ok(NonuniformityReport {
        windows: scores
            .iter()
            .enumerate()
            .map(|(index, &s)| WindowScore {
                index,
                score: Some(s),
                category: Some(Category::of(s, params.range)),
            })
            .collect(),
        histogram,
        params: report_params(params, false),
    })
}

/// Flows of one `N`-frame window.
#[derive(Debug, Clone)]
pub struct WindowFlows {
    pub forward: Vec<FlowField>,
    /// Last frame -> first frame.
    pub backward: Option<FlowField>,
}

/// Score every window independently and aggregate.
pub fn analyze_windows(windows: &[WindowFlows], params: &MetricParams) -> Result<NonuniformityReport> {
    params.validate()?;
    if windows.is_empty() {
        return Err(Error::InvalidParameter("no windows to analyze".into()));
    }
    let scores: Vec<Option<f64>> = windows
        .par_iter()
        .map(|win| {
            let traj = track_trajectories(&win.forward, win.backward.as_ref(), &params.track)?;
            match frame_nonuniformity(&traj, params.norm) {
                Ok(s) => Ok(Some(s)),
                Err(Error::NoValidTrajectories) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let scored: Vec<f64> = scores.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::NoValidTrajectories);
    }
    Ok(NonuniformityReport {
        windows: scores
            .iter()
            .enumerate()
            .map(|(index, s)| WindowScore {
                index,
                score: *s,
                category: s.map(|s| Category::of(s, params.range)),
            })
            .collect(),
        histogram: histogram(&scored, params.bins, params.range)?,
        params: report_params(params, windows.iter().all(|w| w.backward.is_some())),
    })
}

/// Analyze a frame directory (flows estimated between consecutive frames,
/// with a last-to-first flow for the consistency check) or, when
/// `flow_dir` is given, its sorted `.flo` files as consecutive flows.
pub fn analyze_dataset(
    dir: impl AsRef<Path>,
    flow_dir: Option<&Path>,
    params: &MetricParams,
    estimator: &EstimatorParams,
) -> Result<NonuniformityReport> {
    params.validate()?;
    let n = params.n;
    let windows = match flow_dir {
        Some(fd) => {
            let files = list_files(fd, &["flo"])?;
            let flows = files.iter().map(read_flo).collect::<Result<Vec<_>>>()?;
            if flows.len() + 1 < n {
                return Err(Error::InvalidParameter(format!(
                    "{} flows cover {} frames, fewer than n = {n}",
                    flows.len(),
                    flows.len() + 1
                )));
            }
            (0..(flows.len() + 1) / n)
                .map(|w| WindowFlows {
                    forward: flows[w * n..w * n + n - 1].to_vec(),
                    backward: None,
                })
                .collect::<Vec<_>>()
        }
        None => {
            let paths = list_frames(dir.as_ref())?;
            if paths.len() < n {
                return Err(Error::InvalidParameter(format!(
                    "{} frames, fewer than n = {n}",
                    paths.len()
                )));
            }
            let frames = paths
                .iter()
                .map(|p| read_image(p, false).map(|i| i.luminance()))
                .collect::<Result<Vec<_>>>()?;
            (0..frames.len() / n)
                .map(|w| {
                    let win = &frames[w * n..w * n + n];
                    let forward = win
                        .windows(2)
                        .map(|p| estimate_flow(&p[0], &p[1], estimator))
                        .collect::<Result<_>>()?;
                    let backward = estimate_flow(&win[n - 1], &win[0], estimator)?;
                    Ok(WindowFlows {
                        forward,
                        backward: Some(backward),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    analyze_windows(&windows, params)
}
