//! On-disk samples and the seeded synthetic suite.
//!
//! A sample directory holds PFM images, ground-truth `.flo` flows under
//! `flows/` when known, and a `manifest.json` describing the window. A
//! rejected window keeps only its manifest.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{CROSS_01_FILE, CROSS_10_FILE, INTRA_0_FILE, INTRA_1_FILE};
use crate::image::Image;
use crate::io::{list_frames, read_flo, read_image, read_pfm, write_flo, write_pfm};
use crate::metric::{frame_nonuniformity, Category, NormMode, TrajectorySet};
use crate::scene::{synthesize_scene_sample, Scene, SceneSpec, Trajectory};
use crate::sensor::{
    synthesize_sample, DualExposureFrame, ExposureTimeline, GroundTruthFlows, SensorConfig, SynthSample,
    Target,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_TAG: &str = "hdrvfi-sample";
pub const FORMAT_VERSION: u32 = 1;
const FLOW_DIR: &str = "flows";

const SHARP_FILES: [&str; 4] = ["sharp_0s.pfm", "sharp_0e.pfm", "sharp_1s.pfm", "sharp_1e.pfm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleSource {
    /// Window of a frame directory; `first_frame` is the 0-based index of
    /// the window's first file.
    Frames { dir: PathBuf, first_frame: usize },
    Generator { seed: u64, scene: SceneSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    /// 1-based source frame.
    pub frame: usize,
    pub t: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub id: String,
    pub source: SampleSource,
    pub timeline: ExposureTimeline,
    pub tau: f64,
    pub keyframes: [usize; 4],
    pub targets: Vec<TargetEntry>,
    pub saturation_level: f64,
    pub reject_fraction: f64,
    /// Worst saturated fraction over the window's source frames.
    pub saturated_fraction: f64,
    pub rejected: bool,
    /// Source frames were 8/16-bit sRGB and decoded to linear on ingestion.
    pub srgb_decoded: bool,
    pub gt_flows: bool,
    #[serde(default)]
    pub category: Option<Category>,
    #[serde(default)]
    pub nonuniformity: Option<f64>,
}

fn safe_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Manifest {
    fn new(
        id: &str,
        source: SampleSource,
        timeline: &ExposureTimeline,
        sensor: &SensorConfig,
        saturated_fraction: f64,
        rejected: bool,
        srgb_decoded: bool,
    ) -> Self {
        let targets = if rejected {
            Vec::new()
        } else {
            timeline
                .target_frames()
                .into_iter()
                .map(|frame| TargetEntry {
                    frame,
                    t: timeline.time_of(frame),
                    file: target_file(frame),
                })
                .collect()
        };
        Self {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            id: id.into(),
            source,
            timeline: *timeline,
            tau: timeline.tau(),
            keyframes: timeline.keyframes(),
            targets,
            saturation_level: sensor.saturation_level,
            reject_fraction: sensor.reject_fraction,
            saturated_fraction,
            rejected,
            srgb_decoded,
            gt_flows: false,
            category: None,
            nonuniformity: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::format("manifest", why));
        if self.format != FORMAT_TAG {
            return bad(format!("format tag '{}'", self.format));
        }
        if self.version != FORMAT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if !safe_name(&self.id) {
            return bad(format!("sample id '{}' is not a plain name", self.id));
        }
        self.timeline.validate()?;
        if (self.tau - self.timeline.tau()).abs() > 1e-12 {
            return bad(format!("tau {} disagrees with the timeline", self.tau));
        }
        if self.keyframes != self.timeline.keyframes() {
            return bad("keyframes disagree with the timeline".into());
        }
        let allowed = self.timeline.target_frames();
        for t in &self.targets {
            if !allowed.contains(&t.frame) || (t.t - self.timeline.time_of(t.frame)).abs() > 1e-12 {
                return bad(format!("target frame {} at t = {} is not on the timeline", t.frame, t.t));
            }
            if !safe_name(&t.file) || !t.file.ends_with(".pfm") {
                return bad(format!("target file '{}'", t.file));
            }
        }
        if !(self.saturation_level.is_finite() && self.saturation_level > 0.0) {
            return bad("saturation_level must be positive".into());
        }
        for (name, v) in [("reject_fraction", self.reject_fraction), ("saturated_fraction", self.saturated_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if let Some(s) = self.nonuniformity {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("nonuniformity {s}"));
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(bytes)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn target_file(frame: usize) -> String {
    format!("target_{frame:02}.pfm")
}

fn exposure_files(k: usize) -> [String; 5] {
    ["raw", "short", "long", "short_full", "long_full"].map(|s| format!("frame{k}_{s}.pfm"))
}

fn in_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    manifest.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_json()? + "\n").map_err(|e| Error::from(e).at(path))
}

/// Write a sample's images, flows and manifest into `dir`.
pub fn write_sample(dir: impl AsRef<Path>, sample: &SynthSample, manifest: &Manifest) -> Result<()> {
    let dir = dir.as_ref();
    let mut manifest = manifest.clone();
    manifest.gt_flows = sample.gt_flows.is_some();
    write_manifest(dir, &manifest)?;
    for (k, f) in [&sample.frame0, &sample.frame1].into_iter().enumerate() {
        let imgs = [&f.raw, &f.short, &f.long, &f.short_full, &f.long_full];
        for (name, img) in exposure_files(k).iter().zip(imgs) {
            write_pfm(in_dir(dir, name), img)?;
        }
    }
    let sharp = [&sample.sharp_0s, &sample.sharp_0e, &sample.sharp_1s, &sample.sharp_1e];
    for (name, img) in SHARP_FILES.iter().zip(sharp) {
        write_pfm(in_dir(dir, name), img)?;
    }
    for (entry, target) in manifest.targets.iter().zip(&sample.targets) {
        write_pfm(in_dir(dir, &entry.file), &target.image)?;
    }
    if let Some(gt) = &sample.gt_flows {
        let fd = dir.join(FLOW_DIR);
        std::fs::create_dir_all(&fd).map_err(|e| Error::from(e).at(&fd))?;
        write_flo(fd.join(INTRA_0_FILE), &gt.intra_0)?;
        write_flo(fd.join(INTRA_1_FILE), &gt.intra_1)?;
        write_flo(fd.join(CROSS_01_FILE), &gt.cross_01)?;
        write_flo(fd.join(CROSS_10_FILE), &gt.cross_10)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub sample: SynthSample,
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::from(e).at(&path))?;
    Manifest::from_json(&bytes).map_err(|e| e.at(path))
}

/// Load a sample written by [`write_sample`]. Rejected windows fail with
/// [`Error::Rejected`].
pub fn read_sample(dir: impl AsRef<Path>) -> Result<LoadedSample> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    if manifest.rejected {
        return Err(Error::Rejected {
            fraction: manifest.saturated_fraction,
            limit: manifest.reject_fraction,
        }
        .at(dir));
    }
    let read = |name: &str| read_pfm(in_dir(dir, name));
    let frame = |k: usize| -> Result<DualExposureFrame> {
        let [_, _, _, short_full, long_full] = exposure_files(k);
        DualExposureFrame::from_full(read(&short_full)?, read(&long_full)?, manifest.saturation_level)
    };
    let targets = manifest
        .targets
        .iter()
        .map(|e| {
            Ok(Target {
                frame: e.frame,
                t: e.t,
                image: read(&e.file)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gt_flows = if manifest.gt_flows {
        let fd = dir.join(FLOW_DIR);
        Some(GroundTruthFlows {
            intra_0: read_flo(fd.join(INTRA_0_FILE))?,
            intra_1: read_flo(fd.join(INTRA_1_FILE))?,
            cross_01: read_flo(fd.join(CROSS_01_FILE))?,
            cross_10: read_flo(fd.join(CROSS_10_FILE))?,
        })
    } else {
        None
    };
    let sample = SynthSample {
        timeline: manifest.timeline,
        frame0: frame(0)?,
        frame1: frame(1)?,
        sharp_0s: read(SHARP_FILES[0])?,
        sharp_0e: read(SHARP_FILES[1])?,
        sharp_1s: read(SHARP_FILES[2])?,
        sharp_1e: read(SHARP_FILES[3])?,
        targets,
        gt_flows,
        saturated_fraction: manifest.saturated_fraction,
    };
    Ok(LoadedSample {
        dir: dir.to_path_buf(),
        manifest,
        sample,
    })
}

/// Sample directories (those holding a manifest) directly under `dir`,
/// sorted by name.
pub fn list_samples(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::from(e).at(dir))? {
        let path = entry?.path();
        if path.join(MANIFEST_FILE).is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Cut a frame directory into non-overlapping windows and write one sample
/// per window under `out`. PNG frames are sRGB-decoded.
pub fn synth_from_frames(
    input: impl AsRef<Path>,
    out: impl AsRef<Path>,
    timeline: &ExposureTimeline,
    sensor: &SensorConfig,
) -> Result<Vec<Manifest>> {
    timeline.validate()?;
    let input = input.as_ref();
    let paths = list_frames(input)?;
    let len = timeline.window_len();
    if paths.len() < len {
        return Err(Error::InvalidParameter(format!(
            "{} frames in {}, a window needs {len}",
            paths.len(),
            input.display()
        )));
    }
    let srgb = paths
        .iter()
        .any(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
    (0..paths.len() / len)
        .map(|w| {
            let frames = paths[w * len..(w + 1) * len]
                .iter()
                .map(|p| read_image(p, false))
                .collect::<Result<Vec<Image>>>()?;
            let id = format!("window_{w:04}");
            let source = SampleSource::Frames {
                dir: input.to_path_buf(),
                first_frame: w * len,
            };
            let dir = out.as_ref().join(&id);
            match synthesize_sample(&frames, timeline, sensor) {
                Ok(sample) => {
                    let m = Manifest::new(&id, source, timeline, sensor, sample.saturated_fraction, false, srgb);
                    write_sample(&dir, &sample, &m)?;
                    Ok(m)
                }
                Err(Error::Rejected { fraction, .. }) => {
                    let m = Manifest::new(&id, source, timeline, sensor, fraction, true, srgb);
                    write_manifest(&dir, &m)?;
                    Ok(m)
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteParams {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Acceleration magnitude range, px per unit time squared.
    pub accel_min: f64,
    pub accel_max: f64,
    /// Largest velocity component at `t = 0`, px per unit time.
    pub speed_max: f64,
    /// Range of the category quarters.
    pub category_range: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            count: 8,
            width: 128,
            height: 128,
            seed: 0,
            accel_min: 2.0,
            accel_max: 16.0,
            speed_max: 6.0,
            category_range: 0.15,
        }
    }
}

impl SuiteParams {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParameter("suite count must be positive".into()));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::TooSmall("suite scenes need at least 32x32 pixels".into()));
        }
        if !(0.0 <= self.accel_min && self.accel_min <= self.accel_max && self.accel_max.is_finite()) {
            return Err(Error::InvalidParameter("acceleration range must be ordered and finite".into()));
        }
        if !(self.speed_max >= 0.0 && self.speed_max.is_finite()) {
            return Err(Error::InvalidParameter("speed_max must be finite and non-negative".into()));
        }
        if !(self.category_range > 0.0) {
            return Err(Error::InvalidParameter("category_range must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteScene {
    pub id: String,
    pub seed: u64,
    pub spec: SceneSpec,
    /// Acceleration magnitude of the sprite.
    pub accel: f64,
}

/// Single-sprite scenes with random velocity and an acceleration whose
/// magnitude is uniform in `[accel_min, accel_max]`.
pub fn suite_scenes(params: &SuiteParams) -> Result<Vec<SuiteScene>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let jitter = 0.1 * params.width.min(params.height) as f64;
    Ok((0..params.count)
        .map(|i| {
            let seed: u64 = rng.random();
            let accel = rng.random_range(params.accel_min..=params.accel_max);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let mut v = [0.0; 2];
            let mut origin = [0.0; 2];
            for k in 0..2 {
                v[k] = rng.random_range(-params.speed_max..=params.speed_max);
                origin[k] = rng.random_range(-jitter..=jitter);
            }
            let trajectory = Trajectory {
                origin,
                velocity: v,
                acceleration: [accel * angle.cos(), accel * angle.sin()],
                jerk: [0.0; 2],
            };
            SuiteScene {
                id: format!("scene_{i:03}"),
                seed,
                spec: SceneSpec::single_sprite(params.width, params.height, seed, trajectory),
                accel,
            }
        })
        .collect())
}

/// Non-uniformity of a scene's analytic trajectories over the window's
/// source frames, sampled on a 4-px grid, with linear normalization.
pub fn scene_nonuniformity(scene: &Scene, timeline: &ExposureTimeline) -> Result<f64> {
    const STRIDE: usize = 4;
    let times = timeline.frame_times();
    let (w, h) = (scene.spec().width, scene.spec().height);
    let (gw, gh) = (w.div_ceil(STRIDE), h.div_ceil(STRIDE));
    let traj = TrajectorySet::from_fn(times.len(), gw, gh, |gx, gy, k| {
        scene.track(gx * STRIDE, gy * STRIDE, &times)[k]
    })?;
    frame_nonuniformity(&traj, NormMode::Linear)
}

#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub manifest: Manifest,
    pub sample: SynthSample,
    pub scene: Scene,
    pub accel: f64,
}

pub fn generate_sample(
    s: &SuiteScene,
    timeline: &ExposureTimeline,
    sensor: &SensorConfig,
    category_range: f64,
) -> Result<GeneratedSample> {
    let (sample, scene) = synthesize_scene_sample(s.spec.clone(), timeline, sensor)?;
    let mut manifest = Manifest::new(
        &s.id,
        SampleSource::Generator {
            seed: s.seed,
            scene: s.spec.clone(),
        },
        timeline,
        sensor,
        sample.saturated_fraction,
        false,
        false,
    );
    manifest.gt_flows = true;
    match scene_nonuniformity(&scene, timeline) {
        Ok(score) => {
            manifest.nonuniformity = Some(score);
            manifest.category = Some(Category::of(score, category_range));
        }
        Err(Error::NoValidTrajectories) => {}
        Err(e) => return Err(e),
    }
    Ok(GeneratedSample {
        manifest,
        sample,
        scene,
        accel: s.accel,
    })
}

/// Generate the whole suite in memory, in scene order.
pub fn generate_suite(
    params: &SuiteParams,
    timeline: &ExposureTimeline,
    sensor: &SensorConfig,
) -> Result<Vec<GeneratedSample>> {
    suite_scenes(params)?
        .par_iter()
        .map(|s| generate_sample(s, timeline, sensor, params.category_range))
        .collect()
}

/// Generate the suite and write one sample directory per scene.
pub fn write_suite(
    out: impl AsRef<Path>,
    params: &SuiteParams,
    timeline: &ExposureTimeline,
    sensor: &SensorConfig,
) -> Result<Vec<Manifest>> {
    let out = out.as_ref();
    generate_suite(params, timeline, sensor)?
        .into_iter()
        .map(|g| {
            write_sample(out.join(&g.manifest.id), &g.sample, &g.manifest)?;
            Ok(g.manifest)
        })
        .collect()
}
