use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hdrvfi::config::PipelineConfig;
use hdrvfi::dataset::{read_sample, synth_from_frames, write_suite, Manifest};
use hdrvfi::error::Error;
use hdrvfi::eval::{aligned_table, evaluate, run_comparison, CompareConfig, EvalSpace};
use hdrvfi::flow::{estimate_flow, FlowSource, CROSS_01_FILE, CROSS_10_FILE, INTRA_0_FILE, INTRA_1_FILE};
use hdrvfi::hdrmerge::{merge_exposures, tonemap_reinhard};
use hdrvfi::interp::{fit_models, interpolate_at, Variant};
use hdrvfi::io::{read_image, write_flo, write_image, write_pfm, write_png, BitDepth};
use hdrvfi::metric::{analyze_dataset, NormMode};
use hdrvfi::motion::export_model;

#[derive(Parser)]
#[command(name = "hdrvfi", version, about = "Dual-exposure HDR video frame interpolation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Generator seed for `synth --generate` and sensor noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file overriding module defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Build dual-exposure samples from a frame directory or the generator.
    Synth(SynthArgs),
    /// Estimate optical flow between two images, or the four flows of a sample.
    Flow(FlowArgs),
    /// Merge a short and a long exposure into linear radiance.
    Hdrmerge(HdrmergeArgs),
    /// Reinhard-tonemap an HDR image to PNG.
    Tonemap(TonemapArgs),
    /// Synthesize the frame at one or more times t.
    Interpolate(InterpolateArgs),
    /// Motion non-uniformity report over N-frame windows.
    Analyze(AnalyzeArgs),
    /// PSNR and SSIM of a prediction against ground truth.
    Eval(EvalArgs),
    /// Score every variant on every sample of a dataset.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Directory of sequentially numbered PNG/PFM frames.
    #[arg(long, required_unless_present = "generate", conflicts_with = "generate")]
    input: Option<PathBuf>,
    /// Generate this many analytic scenes instead of reading frames.
    #[arg(long)]
    generate: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    exposure_frames: Option<usize>,
    #[arg(long)]
    gap: Option<usize>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    saturation: Option<f64>,
    #[arg(long)]
    reject_frac: Option<f64>,
    /// Generated scene width.
    #[arg(long)]
    width: Option<usize>,
    /// Generated scene height.
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long, requires = "b", required_unless_present = "sample", conflicts_with = "sample")]
    a: Option<PathBuf>,
    #[arg(long, requires = "a")]
    b: Option<PathBuf>,
    /// Estimate the sample's intra and cross flows into the `--out` directory.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// Read PNG inputs without sRGB decoding.
    #[arg(long)]
    linear: bool,
}

#[derive(Args)]
struct HdrmergeArgs {
    #[arg(long, requires = "long", required_unless_present = "sample", conflicts_with = "sample")]
    short: Option<PathBuf>,
    #[arg(long, requires = "short")]
    long: Option<PathBuf>,
    /// Merge a captured frame of this sample.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    frame: u8,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    saturation: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TonemapArgs {
    #[arg(long = "in", alias = "input")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    key: Option<f64>,
    #[arg(long)]
    white: Option<f64>,
    /// Write linear values instead of sRGB-encoding them.
    #[arg(long)]
    linear: bool,
    #[arg(long)]
    sixteen_bit: bool,
}

#[derive(Args)]
struct InterpolateArgs {
    #[arg(long)]
    sample: PathBuf,
    #[arg(long = "t", required = true, value_delimiter = ',')]
    t: Vec<f64>,
    #[arg(long, default_value = "quadratic")]
    variant: Variant,
    /// `gt`, `estimate`, or a directory of .flo files.
    #[arg(long, default_value = "gt")]
    flows: String,
    /// Output PFM; a tonemapped PNG is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dump_intermediates: Option<PathBuf>,
    #[arg(long)]
    per_level_fit: bool,
    /// Write the fitted motion models (PFM + JSON header) here.
    #[arg(long)]
    export_models: Option<PathBuf>,
    /// Score against targets on linear radiance.
    #[arg(long)]
    hdr_space: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Frame directory.
    #[arg(long, required_unless_present = "flows")]
    input: Option<PathBuf>,
    /// Directory of consecutive .flo flows used instead of estimating.
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    range: Option<f64>,
    #[arg(long)]
    norm: Option<NormMode>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    hdr_space: bool,
    #[arg(long)]
    border: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',')]
    variants: Vec<Variant>,
    #[arg(long = "t", value_delimiter = ',')]
    t: Vec<f64>,
    /// `gt`, `estimate`, or a directory holding one .flo directory per sample.
    #[arg(long, default_value = "gt")]
    flows: String,
    #[arg(long)]
    hdr_space: bool,
    #[arg(long)]
    border: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Ctx {
    cfg: PipelineConfig,
    format: Format,
}

impl Ctx {
    /// Print a report and optionally save its JSON.
    fn emit<T: Serialize>(&self, value: &T, text: String, out: Option<&Path>) -> Result<(), Error> {
        let json = serde_json::to_string_pretty(value)? + "\n";
        if let Some(path) = out {
            std::fs::write(path, &json).map_err(|e| Error::from(e).at(path))?;
        }
        match self.format {
            Format::Text => print!("{text}"),
            Format::Json => print!("{json}"),
        }
        Ok(())
    }

    fn flow_source(&self, spec: &str) -> FlowSource {
        match spec {
            "gt" => FlowSource::GroundTruth,
            "estimate" => FlowSource::Estimated {
                params: self.cfg.estimator,
            },
            dir => FlowSource::File { dir: dir.into() },
        }
    }
}

fn ensure_parent(path: &Path) -> Result<(), Error> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p).map_err(|e| Error::from(e).at(p))?;
    }
    Ok(())
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<(), Error> {
    let mut timeline = ctx.cfg.timeline;
    let mut sensor = ctx.cfg.sensor;
    let mut suite = ctx.cfg.suite;
    if let Some(v) = a.exposure_frames {
        timeline.exposure_frames = v;
    }
    if let Some(v) = a.gap {
        timeline.gap_frames = v;
    }
    if let Some(v) = a.ratio {
        timeline.ratio = v;
    }
    if let Some(v) = a.saturation {
        sensor.saturation_level = v;
    }
    if let Some(v) = a.reject_frac {
        sensor.reject_fraction = v;
    }
    if let Some(v) = a.width {
        suite.width = v;
    }
    if let Some(v) = a.height {
        suite.height = v;
    }
    let manifests: Vec<Manifest> = match (a.generate, &a.input) {
        (Some(n), _) => {
            suite.count = n;
            write_suite(&a.out, &suite, &timeline, &sensor)?
        }
        (None, Some(input)) => synth_from_frames(input, &a.out, &timeline, &sensor)?,
        (None, None) => unreachable!("clap requires --input or --generate"),
    };
    let rows: Vec<Vec<String>> = manifests
        .iter()
        .map(|m| {
            vec![
                m.id.clone(),
                if m.rejected { "rejected" } else { "ok" }.into(),
                format!("{:.4}", m.saturated_fraction),
                m.category.map_or("-".into(), |c| c.to_string()),
            ]
        })
        .collect();
    let text = aligned_table(&["sample", "verdict", "saturated", "category"], &rows);
    ctx.emit(&manifests, text, None)
}

#[derive(Serialize)]
struct FlowSummary {
    file: PathBuf,
    width: usize,
    height: usize,
    mean_magnitude: f64,
    max_magnitude: f64,
}

fn flow(ctx: &Ctx, a: &FlowArgs) -> Result<(), Error> {
    let mut params = ctx.cfg.estimator;
    if let Some(v) = a.levels {
        params.levels = v;
    }
    if let Some(v) = a.window {
        params.window = v;
    }
    if let Some(v) = a.iters {
        params.iters = v;
    }
    let mut written = Vec::new();
    if let Some(dir) = &a.sample {
        let s = read_sample(dir)?.sample;
        std::fs::create_dir_all(&a.out).map_err(|e| Error::from(e).at(&a.out))?;
        for (name, x, y) in [
            (INTRA_0_FILE, &s.sharp_0e, &s.sharp_0s),
            (INTRA_1_FILE, &s.sharp_1e, &s.sharp_1s),
            (CROSS_01_FILE, &s.sharp_0e, &s.sharp_1e),
            (CROSS_10_FILE, &s.sharp_1e, &s.sharp_0e),
        ] {
            let f = estimate_flow(x, y, &params)?;
            let path = a.out.join(name);
            write_flo(&path, &f)?;
            written.push((path, f));
        }
    } else {
        let (pa, pb) = (a.a.as_ref().expect("clap requires --a"), a.b.as_ref().expect("clap requires --b"));
        let f = estimate_flow(&read_image(pa, a.linear)?, &read_image(pb, a.linear)?, &params)?;
        ensure_parent(&a.out)?;
        write_flo(&a.out, &f)?;
        written.push((a.out.clone(), f));
    }
    let summaries: Vec<FlowSummary> = written
        .into_iter()
        .map(|(file, f)| {
            let m = f.magnitudes();
            FlowSummary {
                file,
                width: f.width(),
                height: f.height(),
                mean_magnitude: m.iter().sum::<f64>() / m.len() as f64,
                max_magnitude: m.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                s.file.display().to_string(),
                format!("{}x{}", s.width, s.height),
                format!("{:.3}", s.mean_magnitude),
                format!("{:.3}", s.max_magnitude),
            ]
        })
        .collect();
    ctx.emit(&summaries, aligned_table(&["flow", "size", "mean_px", "max_px"], &rows), None)
}

#[derive(Serialize)]
struct ImageSummary {
    file: PathBuf,
    width: usize,
    height: usize,
    channels: usize,
    min: f64,
    max: f64,
}

impl ImageSummary {
    fn new(file: &Path, img: &hdrvfi::image::Image) -> Self {
        let d = img.data();
        Self {
            file: file.to_path_buf(),
            width: img.width(),
            height: img.height(),
            channels: img.channels(),
            min: d.iter().copied().fold(f64::INFINITY, f64::min),
            max: d.iter().copied().fold(0.0, f64::max),
        }
    }

    fn text(&self) -> String {
        aligned_table(
            &["file", "size", "min", "max"],
            &[vec![
                self.file.display().to_string(),
                format!("{}x{}x{}", self.width, self.height, self.channels),
                format!("{:.6}", self.min),
                format!("{:.6}", self.max),
            ]],
        )
    }
}

fn hdrmerge(ctx: &Ctx, a: &HdrmergeArgs) -> Result<(), Error> {
    let mut cfg = ctx.cfg.merge;
    let (short, long) = if let Some(dir) = &a.sample {
        let loaded = read_sample(dir)?;
        cfg.ratio = loaded.manifest.timeline.ratio;
        cfg.saturation_level = loaded.manifest.saturation_level;
        let f = if a.frame == 0 { loaded.sample.frame0 } else { loaded.sample.frame1 };
        (f.short, f.long)
    } else {
        let s = a.short.as_ref().expect("clap requires --short");
        let l = a.long.as_ref().expect("clap requires --long");
        (read_image(s, false)?, read_image(l, false)?)
    };
    if let Some(v) = a.ratio {
        cfg.ratio = v;
    }
    if let Some(v) = a.saturation {
        cfg.saturation_level = v;
    }
    let hdr = merge_exposures(&short, &long, &cfg)?;
    ensure_parent(&a.out)?;
    write_image(&a.out, &hdr, false)?;
    let s = ImageSummary::new(&a.out, &hdr);
    ctx.emit(&s, s.text(), None)
}

fn tonemap(ctx: &Ctx, a: &TonemapArgs) -> Result<(), Error> {
    let mut params = ctx.cfg.tonemap;
    if let Some(v) = a.key {
        params.key = v;
    }
    if a.white.is_some() {
        params.white = a.white;
    }
    let ldr = tonemap_reinhard(&read_image(&a.input, false)?, &params)?;
    ensure_parent(&a.out)?;
    let depth = if a.sixteen_bit { BitDepth::Sixteen } else { BitDepth::Eight };
    write_png(&a.out, &ldr, depth, a.linear)?;
    let s = ImageSummary::new(&a.out, &ldr);
    ctx.emit(&s, s.text(), None)
}

#[derive(Serialize)]
struct InterpolationSummary {
    t: f64,
    variant: Variant,
    flows: &'static str,
    levels_used: usize,
    output: PathBuf,
    psnr: Option<f64>,
    psnr_infinite: bool,
    ssim: Option<f64>,
}

fn output_for(out: &Path, t: f64, many: bool) -> PathBuf {
    if !many {
        return out.to_path_buf();
    }
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
    out.with_file_name(format!("{stem}_t{t:.4}.pfm"))
}

fn interpolate(ctx: &Ctx, a: &InterpolateArgs) -> Result<(), Error> {
    let loaded = read_sample(&a.sample)?;
    let s = &loaded.sample;
    let source = ctx.flow_source(&a.flows);
    let flows = source.resolve(s)?;
    let mut blend = ctx.cfg.blend;
    blend.per_level_fit |= a.per_level_fit;
    let mut eval = ctx.cfg.eval;
    if a.hdr_space {
        eval.space = EvalSpace::Hdr;
    }
    if let Some(dir) = &a.export_models {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
        let (m0, m1) = fit_models(&flows, s.tau(), a.variant, &blend)?;
        export_model(dir.join("model_0"), &m0, s.tau(), a.variant.name())?;
        export_model(dir.join("model_1"), &m1, s.tau(), a.variant.name())?;
    }
    let many = a.t.len() > 1;
    let mut results = Vec::new();
    for &t in &a.t {
        let res = interpolate_at(
            &s.sharp_0e,
            &s.sharp_1e,
            &flows,
            s.tau(),
            t,
            a.variant,
            &blend,
            a.dump_intermediates.is_some(),
        )?;
        let out = output_for(&a.out, t, many);
        ensure_parent(&out)?;
        write_pfm(&out, &res.image)?;
        write_png(out.with_extension("png"), &tonemap_reinhard(&res.image, &ctx.cfg.tonemap)?, BitDepth::Eight, false)?;
        if let Some(dir) = &a.dump_intermediates {
            let dir = dir.join(format!("t{t:.4}"));
            for level in &res.intermediates {
                level.write(&dir)?;
            }
        }
        let target = s.targets.iter().find(|tg| (tg.t - t).abs() < 1e-9);
        let scores = target.map(|tg| evaluate(&res.image, &tg.image, &eval)).transpose()?;
        results.push(InterpolationSummary {
            t,
            variant: a.variant,
            flows: source.label(),
            levels_used: res.levels_used,
            output: out,
            psnr: scores.and_then(|sc| sc.psnr.is_finite().then_some(sc.psnr)),
            psnr_infinite: scores.is_some_and(|sc| sc.psnr.is_infinite()),
            ssim: scores.map(|sc| sc.ssim),
        });
    }
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                format!("{:.4}", r.t),
                r.variant.to_string(),
                r.levels_used.to_string(),
                match (r.psnr, r.psnr_infinite) {
                    (_, true) => "inf".into(),
                    (Some(p), _) => format!("{p:.3}"),
                    (None, _) => "-".into(),
                },
                r.ssim.map_or("-".into(), |v| format!("{v:.4}")),
                r.output.display().to_string(),
            ]
        })
        .collect();
    let text = aligned_table(&["t", "variant", "levels", "psnr", "ssim", "output"], &rows);
    ctx.emit(&results, text, None)
}

fn analyze(ctx: &Ctx, a: &AnalyzeArgs) -> Result<(), Error> {
    let mut params = ctx.cfg.metric;
    if let Some(v) = a.n {
        params.n = v;
    }
    if let Some(v) = a.bins {
        params.bins = v;
    }
    if let Some(v) = a.range {
        params.range = v;
    }
    if let Some(v) = a.norm {
        params.norm = v;
    }
    let input = a.input.clone().unwrap_or_default();
    let report = analyze_dataset(&input, a.flows.as_deref(), &params, &ctx.cfg.estimator)?;
    let rows: Vec<Vec<String>> = report
        .windows
        .iter()
        .map(|w| {
            vec![
                w.index.to_string(),
                w.score.map_or("-".into(), |s| format!("{s:.6}")),
                w.category.map_or("-".into(), |c| c.to_string()),
            ]
        })
        .collect();
    let mut text = aligned_table(&["window", "score", "category"], &rows);
    let width = params.range / params.bins as f64;
    let rows: Vec<Vec<String>> = report
        .histogram
        .iter()
        .enumerate()
        .map(|(i, p)| vec![format!("[{:.4}, {:.4})", i as f64 * width, (i + 1) as f64 * width), format!("{p:.4}")])
        .collect();
    text.push('\n');
    text += &aligned_table(&["bin", "probability"], &rows);
    text += &format!(
        "norm: {:?}, percentile: {}, n: {}\n",
        report.params.norm, report.params.percentile, report.params.n
    );
    ctx.emit(&report, text, a.out.as_deref())
}

#[derive(Serialize)]
struct EvalSummary {
    pred: PathBuf,
    gt: PathBuf,
    space: EvalSpace,
    psnr: Option<f64>,
    psnr_infinite: bool,
    ssim: f64,
    excluded_border_px: usize,
}

fn eval_cmd(ctx: &Ctx, a: &EvalArgs) -> Result<(), Error> {
    let mut cfg = ctx.cfg.eval;
    if a.hdr_space {
        cfg.space = EvalSpace::Hdr;
    }
    if let Some(b) = a.border {
        cfg.border = b;
    }
    let s = evaluate(&read_image(&a.pred, false)?, &read_image(&a.gt, false)?, &cfg)?;
    let summary = EvalSummary {
        pred: a.pred.clone(),
        gt: a.gt.clone(),
        space: cfg.space,
        psnr: s.psnr.is_finite().then_some(s.psnr),
        psnr_infinite: s.psnr.is_infinite(),
        ssim: s.ssim,
        excluded_border_px: cfg.border,
    };
    let psnr = summary.psnr.map_or("inf".into(), |p| format!("{p:.3}"));
    let text = aligned_table(
        &["psnr", "ssim", "space", "border"],
        &[vec![psnr, format!("{:.4}", s.ssim), format!("{:?}", cfg.space).to_lowercase(), cfg.border.to_string()]],
    );
    ctx.emit(&summary, text, a.out.as_deref())
}

fn compare(ctx: &Ctx, a: &CompareArgs) -> Result<(), Error> {
    let mut cfg = CompareConfig {
        flows: ctx.flow_source(&a.flows),
        eval: ctx.cfg.eval,
        blend: ctx.cfg.blend,
        ..Default::default()
    };
    if !a.variants.is_empty() {
        cfg.variants = a.variants.clone();
    }
    if !a.t.is_empty() {
        cfg.times = Some(a.t.clone());
    }
    if a.hdr_space {
        cfg.eval.space = EvalSpace::Hdr;
    }
    if let Some(b) = a.border {
        cfg.eval.border = b;
    }
    let report = run_comparison(&a.dataset, &cfg)?;
    for s in &report.skipped {
        eprintln!("warning: skipped {}: {}", s.sample, s.reason);
    }
    ctx.emit(&report, report.to_text(), a.out.as_deref())
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.suite.seed = seed;
        cfg.sensor.noise_seed = seed;
    }
    let ctx = Ctx { cfg, format: cli.format };
    match &cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Flow(a) => flow(&ctx, a),
        Command::Hdrmerge(a) => hdrmerge(&ctx, a),
        Command::Tonemap(a) => tonemap(&ctx, a),
        Command::Interpolate(a) => interpolate(&ctx, a),
        Command::Analyze(a) => analyze(&ctx, a),
        Command::Eval(a) => eval_cmd(&ctx, a),
        Command::Compare(a) => compare(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
