//! PSNR / SSIM and the variant comparison harness.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{list_samples, read_manifest, read_sample};
use crate::error::{Error, Result};
use crate::flow::FlowSource;
use crate::hdrmerge::{log_average_luminance, tonemap_reinhard, ReinhardParams};
use crate::image::Image;
use crate::interp::{interpolate_at, BlendConfig, Variant};
use crate::io::png::linear_to_srgb;
use crate::metric::Category;
use crate::sensor::SynthSample;

fn crop_border(img: &Image, border: usize) -> Result<Image> {
    let (w, h) = img.dims();
    if 2 * border >= w || 2 * border >= h {
        return Err(Error::TooSmall(format!("{w}x{h} image has nothing left inside a {border}px border")));
    }
    img.crop(border, border, w - 2 * border, h - 2 * border)
}

/// `10 log10(peak^2 / MSE)` inside a `border`-pixel frame; identical
/// images give `f64::INFINITY`.
pub fn psnr(pred: &Image, gt: &Image, peak: f64, border: usize) -> Result<f64> {
    pred.ensure_same_shape(gt, "psnr")?;
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidParameter(format!("peak {peak} must be positive")));
    }
    let (a, b) = (crop_border(pred, border)?, crop_border(gt, border)?);
    let sse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.data().len() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    /// Odd Gaussian window side.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let k: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Valid-region separable filtering of one channel.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut tmp = vec![0.0; ow * h];
    tmp.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = k.iter().enumerate().map(|(i, c)| c * src[y * w + x + i]).sum();
        }
    });
    let mut out = vec![0.0; ow * oh];
    out.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = k.iter().enumerate().map(|(i, c)| c * tmp[(y + i) * ow + x]).sum();
        }
    });
    out
}

/// Mean SSIM over channels and valid window positions.
pub fn ssim(pred: &Image, gt: &Image, peak: f64, params: &SsimParams) -> Result<f64> {
    pred.ensure_same_shape(gt, "ssim")?;
    if params.window == 0 || params.window % 2 == 0 || !(params.sigma > 0.0) {
        return Err(Error::InvalidParameter("ssim window must be odd with positive sigma".into()));
    }
    let (w, h) = pred.dims();
    if w < params.window || h < params.window {
        return Err(Error::TooSmall(format!(
            "{w}x{h} image is smaller than the {0}x{0} ssim window",
            params.window
        )));
    }
    let k = gaussian_kernel(params.window, params.sigma);
    let c1 = (params.k1 * peak).powi(2);
    let c2 = (params.k2 * peak).powi(2);
    let ch = pred.channels();
    let plane = |img: &Image, c: usize| -> Vec<f64> { img.data().iter().skip(c).step_by(ch).copied().collect() };
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        let (x, y) = (plane(pred, c), plane(gt, c));
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, w, h, &k));
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        count += mx.len();
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSpace {
    /// Reinhard-tonemapped and sRGB-encoded, with tonemap parameters taken
    /// from the ground truth.
    #[default]
    Ldr,
    /// Linear radiance as is.
    Hdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub space: EvalSpace,
    pub border: usize,
    pub peak: f64,
    /// Reinhard key for the LDR space.
    pub key: f64,
    pub ssim: SsimParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            space: EvalSpace::Ldr,
            border: 2,
            peak: 1.0,
            key: 0.18,
            ssim: SsimParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub psnr: f64,
    pub ssim: f64,
}

/// Map both images into the evaluation space.
pub fn to_eval_space(pred: &Image, gt: &Image, cfg: &EvalConfig) -> Result<(Image, Image)> {
    match cfg.space {
        EvalSpace::Hdr => Ok((pred.clone(), gt.clone())),
        EvalSpace::Ldr => {
            let lum = gt.luminance();
            let params = ReinhardParams {
                key: cfg.key,
                white: Some(lum.data().iter().copied().fold(0.0, f64::max)),
                log_average: Some(log_average_luminance(&lum)),
            };
            let ldr = |img: &Image| tonemap_reinhard(img, &params)?.map(linear_to_srgb);
            Ok((ldr(pred)?, ldr(gt)?))
        }
    }
}

pub fn evaluate(pred: &Image, gt: &Image, cfg: &EvalConfig) -> Result<Scores> {
    pred.ensure_same_shape(gt, "evaluate")?;
    let (p, g) = to_eval_space(pred, gt, cfg)?;
    let psnr = psnr(&p, &g, cfg.peak, cfg.border)?;
    let ssim = ssim(&crop_border(&p, cfg.border)?, &crop_border(&g, cfg.border)?, cfg.peak, &cfg.ssim)?;
    Ok(Scores { psnr, ssim })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample: String,
    pub variant: Variant,
    pub t: f64,
    /// `None` when the prediction is identical to the ground truth.
    pub psnr: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
    pub excluded_border_px: usize,
    pub category: Option<Category>,
}

impl EvalRecord {
    pub fn psnr_value(&self) -> f64 {
        self.psnr.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub sample: String,
    pub t: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: Variant,
    /// `None` aggregates every category.
    pub category: Option<Category>,
    pub count: usize,
    pub infinite_count: usize,
    /// Mean over the finite PSNR values.
    pub mean_psnr: Option<f64>,
    pub mean_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub variants: Vec<Variant>,
    /// Target times to score; `None` scores every target of each sample.
    pub times: Option<Vec<f64>>,
    /// Flow source; a `file` directory is read per sample as `dir/<id>/`.
    pub flows: FlowSource,
    pub eval: EvalConfig,
    pub blend: BlendConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            times: None,
            flows: FlowSource::GroundTruth,
            eval: EvalConfig::default(),
            blend: BlendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub records: Vec<EvalRecord>,
    pub summary: Vec<Aggregate>,
    pub skipped: Vec<Skipped>,
    pub config: CompareConfig,
}

/// One sample handed to [`compare_samples`].
#[derive(Debug, Clone, Copy)]
pub struct CompareInput<'a> {
    pub id: &'a str,
    pub sample: &'a SynthSample,
    pub category: Option<Category>,
}

const T_MATCH: f64 = 1e-9;

fn compare_one(input: &CompareInput, cfg: &CompareConfig) -> Result<(Vec<EvalRecord>, Vec<Skipped>)> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let skip = |t: Option<f64>, reason: String| Skipped {
        sample: input.id.to_string(),
        t,
        reason,
    };
    let wanted: Vec<(f64, Option<&Image>)> = match &cfg.times {
        None => input.sample.targets.iter().map(|tg| (tg.t, Some(&tg.image))).collect(),
        Some(ts) => ts
            .iter()
            .map(|t| {
                let hit = input.sample.targets.iter().find(|tg| (tg.t - t).abs() < T_MATCH);
                (*t, hit.map(|tg| &tg.image))
            })
            .collect(),
    };
    if wanted.is_empty() {
        skipped.push(skip(None, "sample has no targets".into()));
        return Ok((records, skipped));
    }
    let source = match &cfg.flows {
        FlowSource::File { dir } => FlowSource::File { dir: dir.join(input.id) },
        other => other.clone(),
    };
    let flows = match source.resolve(input.sample) {
        Ok(f) => f,
        Err(e) if !e.is_numerical() => {
            skipped.push(skip(None, format!("flows unavailable: {e}")));
            return Ok((records, skipped));
        }
        Err(e) => return Err(e),
    };
    for (t, gt) in wanted {
        let Some(gt) = gt else {
            skipped.push(skip(Some(t), format!("no target at t = {t}")));
            continue;
        };
        for &variant in &cfg.variants {
            if variant.needs_intra() && (flows.intra_0.is_none() || flows.intra_1.is_none()) {
                skipped.push(skip(Some(t), format!("intra flow required for the {variant} variant")));
                continue;
            }
            let out = interpolate_at(
                &input.sample.sharp_0e,
                &input.sample.sharp_1e,
                &flows,
                input.sample.tau(),
                t,
                variant,
                &cfg.blend,
                false,
            )?;
            let s = evaluate(&out.image, gt, &cfg.eval)?;
            records.push(EvalRecord {
                sample: input.id.to_string(),
                variant,
                t,
                psnr: s.psnr.is_finite().then_some(s.psnr),
                psnr_infinite: s.psnr.is_infinite(),
                ssim: s.ssim,
                excluded_border_px: cfg.eval.border,
                category: input.category,
            });
        }
    }
    Ok((records, skipped))
}

fn aggregate(records: &[EvalRecord], variants: &[Variant]) -> Vec<Aggregate> {
    let summarize = |variant: Variant, category: Option<Category>| -> Option<Aggregate> {
        let sel: Vec<&EvalRecord> = records
            .iter()
            .filter(|r| r.variant == variant && (category.is_none() || r.category == category))
            .collect();
        if sel.is_empty() {
            return None;
        }
        let finite: Vec<f64> = sel.iter().filter_map(|r| r.psnr).collect();
        Some(Aggregate {
            variant,
            category,
            count: sel.len(),
            infinite_count: sel.len() - finite.len(),
            mean_psnr: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
            mean_ssim: sel.iter().map(|r| r.ssim).sum::<f64>() / sel.len() as f64,
        })
    };
    let mut out = Vec::new();
    for &v in variants {
        out.extend(summarize(v, None));
        for c in Category::ALL {
            out.extend(summarize(v, Some(c)));
        }
    }
    out
}

/// Interpolate and score every sample × target × variant. Samples run in
/// parallel; records keep input order.
pub fn compare_samples(inputs: &[CompareInput], cfg: &CompareConfig) -> Result<ComparisonReport> {
    cfg.blend.validate()?;
    if cfg.variants.is_empty() {
        return Err(Error::InvalidParameter("no variants to compare".into()));
    }
    let parts = inputs
        .par_iter()
        .map(|i| compare_one(i, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (r, s) in parts {
        records.extend(r);
        skipped.extend(s);
    }
    Ok(ComparisonReport {
        summary: aggregate(&records, &cfg.variants),
        records,
        skipped,
        config: cfg.clone(),
    })
}

/// [`compare_samples`] over every sample directory under `dataset`.
/// Rejected windows are listed as skipped.
pub fn run_comparison(dataset: impl AsRef<Path>, cfg: &CompareConfig) -> Result<ComparisonReport> {
    let dirs = list_samples(dataset.as_ref())?;
    if dirs.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no samples under {}",
            dataset.as_ref().display()
        )));
    }
    let mut loaded = Vec::new();
    let mut rejected = Vec::new();
    for d in &dirs {
        let m = read_manifest(d)?;
        if m.rejected {
            rejected.push(Skipped {
                sample: m.id,
                t: None,
                reason: "window rejected for saturation".into(),
            });
        } else {
            loaded.push(read_sample(d)?);
        }
    }
    let inputs: Vec<CompareInput> = loaded
        .iter()
        .map(|l| CompareInput {
            id: &l.manifest.id,
            sample: &l.sample,
            category: l.manifest.category,
        })
        .collect();
    let mut report = compare_samples(&inputs, cfg)?;
    report.skipped.extend(rejected);
    Ok(report)
}

/// Left-aligned first column, right-aligned others.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec()) + "\n";
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
        out.push('\n');
    }
    out
}

fn fmt_psnr(p: Option<f64>) -> String {
    p.map_or("inf".into(), |v| format!("{v:.3}"))
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .summary
            .iter()
            .map(|a| {
                vec![
                    a.variant.to_string(),
                    a.category.map_or("all".into(), |c| c.to_string()),
                    a.count.to_string(),
                    match (a.mean_psnr, a.infinite_count) {
                        (None, _) => "inf".into(),
                        (Some(p), 0) => format!("{p:.3}"),
                        (Some(p), k) => format!("{p:.3} (+{k} inf)"),
                    },
                    format!("{:.4}", a.mean_ssim),
                ]
            })
            .collect();
        let mut out = aligned_table(&["variant", "category", "n", "psnr", "ssim"], &rows);
        if !self.records.is_empty() {
            out.push('\n');
            let rows: Vec<Vec<String>> = self
                .records
                .iter()
                .map(|r| {
                    vec![
                        r.sample.clone(),
                        r.variant.to_string(),
                        format!("{:.4}", r.t),
                        fmt_psnr(r.psnr),
                        format!("{:.4}", r.ssim),
                    ]
                })
                .collect();
            out += &aligned_table(&["sample", "variant", "t", "psnr", "ssim"], &rows);
        }
        for s in &self.skipped {
            out += &format!("skipped {}: {}\n", s.sample, s.reason);
        }
        out
    }
}
