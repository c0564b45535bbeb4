//! Analytic synthetic scenes: textured layers moving along polynomial
//! trajectories, with exact correspondence flows between any two times.
//!
//! Layer 0 is a full-canvas background; sprites are stacked above it in
//! declaration order (last sprite on top). Every layer translates rigidly,
//! `p(t) = p0 + v t + a t^2 / 2 + j t^3 / 6`, and its texture is a smooth
//! sum of sinusoids evaluated in layer coordinates, so rendering at any
//! sub-pixel offset is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FlowField, Image, Mask};
use crate::sensor::{synthesize_sample, ExposureTimeline, GroundTruthFlows, SensorConfig, SynthSample};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Trajectory {
    pub origin: [f64; 2],
    pub velocity: [f64; 2],
    pub acceleration: [f64; 2],
    pub jerk: [f64; 2],
}

impl Trajectory {
    pub fn position(&self, t: f64) -> [f64; 2] {
        let f = |i: usize| {
            self.origin[i]
                + self.velocity[i] * t
                + 0.5 * self.acceleration[i] * t * t
                + self.jerk[i] * t * t * t / 6.0
        };
        [f(0), f(1)]
    }

    pub fn displacement(&self, t0: f64, t1: f64) -> [f64; 2] {
        let (a, b) = (self.position(t0), self.position(t1));
        [b[0] - a[0], b[1] - a[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned rectangle centred on the trajectory position.
    Rect { width: f64, height: f64 },
    Disc { radius: f64 },
}

impl Shape {
    fn contains(&self, lx: f64, ly: f64) -> bool {
        match *self {
            Shape::Rect { width, height } => {
                lx >= -0.5 * width && lx < 0.5 * width && ly >= -0.5 * height && ly < 0.5 * height
            }
            Shape::Disc { radius } => lx * lx + ly * ly <= radius * radius,
        }
    }

    fn half_extent(&self) -> [f64; 2] {
        match *self {
            Shape::Rect { width, height } => [0.5 * width, 0.5 * height],
            Shape::Disc { radius } => [radius, radius],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureSpec {
    pub seed: u64,
    pub mean: f64,
    /// Peak deviation from the mean; kept at or below `mean`.
    pub contrast: f64,
    pub min_period: f64,
    pub max_period: f64,
    pub waves: usize,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            mean: 0.45,
            contrast: 0.3,
            min_period: 14.0,
            max_period: 40.0,
            waves: 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    k: [f64; 2],
    amplitude: f64,
    phase: [f64; 3],
}

#[derive(Debug, Clone)]
struct Texture {
    mean: [f64; 3],
    waves: Vec<Wave>,
}

impl Texture {
    fn compile(spec: &TextureSpec) -> Result<Self> {
        if !(spec.mean >= spec.contrast && spec.contrast >= 0.0)
            || spec.min_period <= 0.0
            || spec.max_period < spec.min_period
            || spec.waves == 0
        {
            return Err(Error::InvalidParameter(format!("bad texture {spec:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.85..1.0));
        let waves = (0..spec.waves)
            .map(|_| {
                let period = rng.random_range(spec.min_period..=spec.max_period);
                let angle = rng.random_range(0.0..std::f64::consts::PI);
                let freq = 1.0 / period;
                Wave {
                    k: [freq * angle.cos(), freq * angle.sin()],
                    amplitude: spec.contrast / spec.waves as f64,
                    phase: std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU)),
                }
            })
            .collect();
        Ok(Self {
            mean: tint.map(|t| t * spec.mean),
            waves,
        })
    }

    fn value(&self, u: f64, v: f64, c: usize) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|w| {
                w.amplitude
                    * (std::f64::consts::TAU * (w.k[0] * u + w.k[1] * v) + w.phase[c]).sin()
            })
            .sum();
        (self.mean[c] + s).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpriteSpec {
    pub shape: Shape,
    pub texture: TextureSpec,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub background: TextureSpec,
    #[serde(default)]
    pub background_motion: Trajectory,
    #[serde(default)]
    pub sprites: Vec<SpriteSpec>,
}

impl SceneSpec {
    /// Static textured background with one square sprite centred in the
    /// frame at `t = 0`, moving along `trajectory` (its origin is an offset
    /// from the centre).
    pub fn single_sprite(width: usize, height: usize, seed: u64, trajectory: Trajectory) -> Self {
        let side = (width.min(height) as f64 * 0.3).round().max(4.0);
        let centre = [0.5 * width as f64, 0.5 * height as f64];
        let mut tr = trajectory;
        tr.origin = [centre[0] + tr.origin[0], centre[1] + tr.origin[1]];
        Self {
            width,
            height,
            channels: 3,
            background: TextureSpec {
                seed: seed.wrapping_mul(2).wrapping_add(1),
                mean: 0.35,
                contrast: 0.2,
                min_period: 18.0,
                max_period: 48.0,
                waves: 4,
            },
            background_motion: Trajectory::default(),
            sprites: vec![SpriteSpec {
                shape: Shape::Rect {
                    width: side,
                    height: side,
                },
                texture: TextureSpec {
                    seed: seed.wrapping_mul(2).wrapping_add(2),
                    mean: 0.55,
                    contrast: 0.35,
                    min_period: 12.0,
                    max_period: 30.0,
                    waves: 4,
                },
                trajectory: tr,
            }],
        }
    }

    /// Whole-frame motion (camera pan) with no sprites.
    pub fn global_motion(width: usize, height: usize, seed: u64, motion: Trajectory) -> Self {
        Self {
            width,
            height,
            channels: 1,
            background: TextureSpec {
                seed,
                ..Default::default()
            },
            background_motion: motion,
            sprites: Vec::new(),
        }
    }
}

/// A compiled scene ready for rendering and flow queries.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    background: Texture,
    sprites: Vec<Texture>,
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        if spec.width == 0 || spec.height == 0 {
            return Err(Error::InvalidParameter("scene has no pixels".into()));
        }
        if spec.channels != 1 && spec.channels != 3 {
            return Err(Error::InvalidParameter("scene channels must be 1 or 3".into()));
        }
        let background = Texture::compile(&spec.background)?;
        let sprites = spec
            .sprites
            .iter()
            .map(|s| Texture::compile(&s.texture))
            .collect::<Result<_>>()?;
        Ok(Self {
            spec,
            background,
            sprites,
        })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    fn trajectory(&self, layer: usize) -> &Trajectory {
        if layer == 0 {
            &self.spec.background_motion
        } else {
            &self.spec.sprites[layer - 1].trajectory
        }
    }

    /// Topmost layer covering the continuous point `(x, y)` at time `t`.
    pub fn layer_at(&self, x: f64, y: f64, t: f64) -> usize {
        for (i, s) in self.spec.sprites.iter().enumerate().rev() {
            let c = s.trajectory.position(t);
            if s.shape.contains(x - c[0], y - c[1]) {
                return i + 1;
            }
        }
        0
    }

    fn shade(&self, layer: usize, x: f64, y: f64, t: f64, c: usize) -> f64 {
        let p = self.trajectory(layer).position(t);
        let tex = if layer == 0 {
            &self.background
        } else {
            &self.sprites[layer - 1]
        };
        let channel = if self.spec.channels == 1 { 0 } else { c };
        tex.value(x - p[0], y - p[1], channel)
    }

    pub fn render(&self, t: f64) -> Result<Image> {
        Image::from_fn(self.spec.width, self.spec.height, self.spec.channels, |x, y, c| {
            let (fx, fy) = (x as f64, y as f64);
            self.shade(self.layer_at(fx, fy, t), fx, fy, t, c)
        })
    }

    /// Exact correspondence flow aligned with the frame at `t0`: the point
    /// seen at pixel `x` at `t0` is at `x + F(x)` at `t1`.
    pub fn flow(&self, t0: f64, t1: f64) -> Result<FlowField> {
        FlowField::from_fn(self.spec.width, self.spec.height, |x, y| {
            let layer = self.layer_at(x as f64, y as f64, t0);
            self.trajectory(layer).displacement(t0, t1)
        })
    }

    /// `true` where the point visible at `t0` is hidden by another layer or
    /// has left the canvas at `t1`.
    pub fn occlusion(&self, t0: f64, t1: f64) -> Mask {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut data = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let layer = self.layer_at(x as f64, y as f64, t0);
                let d = self.trajectory(layer).displacement(t0, t1);
                let (nx, ny) = (x as f64 + d[0], y as f64 + d[1]);
                let inside = nx >= -0.5 && ny >= -0.5 && nx <= w as f64 - 0.5 && ny <= h as f64 - 0.5;
                data[y * w + x] = !inside || self.layer_at(nx, ny, t1) != layer;
            }
        }
        Mask::new(w, h, data).expect("mask size matches scene")
    }

    /// Per-pixel layer ids at time `t`.
    pub fn layer_map(&self, t: f64) -> Vec<usize> {
        let (w, h) = (self.spec.width, self.spec.height);
        (0..w * h)
            .map(|i| self.layer_at((i % w) as f64, (i / w) as f64, t))
            .collect()
    }

    /// Pixels within `radius` of a layer boundary at time `t`.
    pub fn boundary_band(&self, t: f64, radius: usize) -> Mask {
        let (w, h) = (self.spec.width, self.spec.height);
        let layers = self.layer_map(t);
        let mut edge = Mask::filled(w, h, false);
        for y in 0..h {
            for x in 0..w {
                let l = layers[y * w + x];
                let differs = (x + 1 < w && layers[y * w + x + 1] != l)
                    || (y + 1 < h && layers[(y + 1) * w + x] != l);
                if differs {
                    edge.set(x, y, true);
                    if x + 1 < w && layers[y * w + x + 1] != l {
                        edge.set(x + 1, y, true);
                    }
                    if y + 1 < h && layers[(y + 1) * w + x] != l {
                        edge.set(x, y + 1, true);
                    }
                }
            }
        }
        if radius == 0 {
            edge
        } else {
            edge.dilate(radius)
        }
    }

    /// Pixels covered by sprite `index` (0-based) at time `t`.
    pub fn sprite_mask(&self, index: usize, t: f64) -> Mask {
        let (w, h) = (self.spec.width, self.spec.height);
        let data = self.layer_map(t).into_iter().map(|l| l == index + 1).collect();
        Mask::new(w, h, data).expect("mask size matches scene")
    }

    /// Axis-aligned pixel bounding box `(x0, y0, x1, y1)` (inclusive,
    /// clamped) of sprite `index` at time `t`.
    pub fn sprite_bbox(&self, index: usize, t: f64) -> (usize, usize, usize, usize) {
        let s = &self.spec.sprites[index];
        let c = s.trajectory.position(t);
        let [hx, hy] = s.shape.half_extent();
        let clamp = |v: f64, max: usize| v.clamp(0.0, (max - 1) as f64) as usize;
        (
            clamp((c[0] - hx).floor(), self.spec.width),
            clamp((c[1] - hy).floor(), self.spec.height),
            clamp((c[0] + hx).ceil(), self.spec.width),
            clamp((c[1] + hy).ceil(), self.spec.height),
        )
    }

    /// Positions over `times` of the scene point seen at pixel `(x, y)` at
    /// `times[0]`.
    pub fn track(&self, x: usize, y: usize, times: &[f64]) -> Vec<[f64; 2]> {
        let t0 = times[0];
        let tr = self.trajectory(self.layer_at(x as f64, y as f64, t0));
        times
            .iter()
            .map(|t| {
                let d = tr.displacement(t0, *t);
                [x as f64 + d[0], y as f64 + d[1]]
            })
            .collect()
    }

    fn sprite_visible(&self, index: usize, t: f64) -> bool {
        let s = &self.spec.sprites[index];
        let c = s.trajectory.position(t);
        let [hx, hy] = s.shape.half_extent();
        let (w, h) = (self.spec.width as f64, self.spec.height as f64);
        c[0] + hx >= 0.0 && c[0] - hx <= w - 1.0 && c[1] + hy >= 0.0 && c[1] - hy <= h - 1.0
    }
}

#[derive(Debug, Clone)]
pub struct SceneFrames {
    pub scene: Scene,
    pub times: Vec<f64>,
    pub frames: Vec<Image>,
}

/// Render `spec` at every time in `times`. Fails if a sprite never
/// overlaps the canvas.
pub fn generate_synthetic_scene(spec: SceneSpec, times: &[f64]) -> Result<SceneFrames> {
    let scene = Scene::new(spec)?;
    if times.is_empty() {
        return Err(Error::InvalidParameter("no sample times".into()));
    }
    for i in 0..scene.spec.sprites.len() {
        if !times.iter().any(|t| scene.sprite_visible(i, *t)) {
            return Err(Error::InvalidParameter(format!(
                "sprite {i} is outside the canvas at every sample time"
            )));
        }
    }
    let frames = times.iter().map(|t| scene.render(*t)).collect::<Result<_>>()?;
    Ok(SceneFrames {
        scene,
        times: times.to_vec(),
        frames,
    })
}

/// Synthesize a sensor sample from an analytic scene, attaching its exact
/// flows.
pub fn synthesize_scene_sample(
    spec: SceneSpec,
    timeline: &ExposureTimeline,
    sensor: &SensorConfig,
) -> Result<(SynthSample, Scene)> {
    timeline.validate()?;
    let rendered = generate_synthetic_scene(spec, &timeline.frame_times())?;
    let mut sample = synthesize_sample(&rendered.frames, timeline, sensor)?;
    let scene = rendered.scene;
    let tau = timeline.tau();
    sample.gt_flows = Some(GroundTruthFlows {
        intra_0: scene.flow(0.0, -tau)?,
        intra_1: scene.flow(1.0, 1.0 - tau)?,
        cross_01: scene.flow(0.0, 1.0)?,
        cross_10: scene.flow(1.0, 0.0)?,
    });
    Ok((sample, scene))
}
