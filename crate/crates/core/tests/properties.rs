use proptest::prelude::*;

use hdrvfi::eval::{psnr, ssim, SsimParams};
use hdrvfi::flow::{compose_flows, PairFlows};
use hdrvfi::hdrmerge::{merge_exposures, MergeConfig};
use hdrvfi::image::{FlowField, Image};
use hdrvfi::interp::{blend_frames, interpolate_at, BlendConfig, Variant};
use hdrvfi::io::{decode_flo, decode_pfm, encode_flo, encode_pfm};
use hdrvfi::metric::{frame_nonuniformity, histogram, trajectory_error, NormMode, TrajectorySet};
use hdrvfi::motion::{
    eval_displacement, fit_quadratic, reverse_flow, Basis, FlowTriplet, MotionModel, ReverseParams,
};
use hdrvfi::pyramid::downsample2x;
use hdrvfi::scene::{Scene, SceneSpec, Trajectory};
use hdrvfi::sensor::{deinterleave_columns, interleave_columns};
use hdrvfi::warp::backward_warp;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// Small image with f32-representable samples.
fn image(max_side: usize, channels: usize) -> impl Strategy<Value = Image> {
    (2..=max_side, 2..=max_side).prop_flat_map(move |(w, h)| {
        prop::collection::vec(0.0f32..4.0, w * h * channels)
            .prop_map(move |d| Image::new(w, h, channels, d.into_iter().map(f64::from).collect()).unwrap())
    })
}

fn flow(w: usize, h: usize, mag: f64) -> impl Strategy<Value = FlowField> {
    prop::collection::vec(-mag..mag, w * h * 2).prop_map(move |d| FlowField::new(w, h, d).unwrap())
}

fn quad(v: [f64; 2], a: [f64; 2], d: f64) -> FlowField {
    FlowField::constant(4, 3, v[0] * d + 0.5 * a[0] * d * d, v[1] * d + 0.5 * a[1] * d * d)
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn quadratic_fit_recovers_motion(
        v in prop::array::uniform2(-32.0..32.0f64),
        a in prop::array::uniform2(-32.0..32.0f64),
        tau in 0.05..0.95f64,
        frame1 in any::<bool>(),
    ) {
        let basis = if frame1 { Basis::Frame1 } else { Basis::Frame0 };
        let [d0, d1, d2] = basis.offsets(tau);
        let trip = FlowTriplet::new(quad(v, a, d0), quad(v, a, d1), quad(v, a, d2), tau, basis).unwrap();
        let m = fit_quadratic(&trip).unwrap();
        for i in 0..2 {
            prop_assert!((m.v.get(1, 1)[i] - v[i]).abs() < 1e-7 * (1.0 + v[i].abs()));
            prop_assert!((m.a.get(1, 1)[i] - a[i]).abs() < 1e-7 * (1.0 + a[i].abs()));
        }
        let at_basis = eval_displacement(&MotionModel::Quadratic(m), basis.time()).unwrap();
        prop_assert!(at_basis.data().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn constant_flow_reverses_twice_to_itself(u in -3.0..3.0f64, v in -3.0..3.0f64) {
        let f = FlowField::constant(24, 20, u, v);
        let p = ReverseParams::default();
        let (back, _) = reverse_flow(&f, &p);
        let (again, _) = reverse_flow(&back, &p);
        prop_assert!(again.max_abs_diff(&f) < 1e-12);
    }

    #[test]
    fn blend_stays_between_inputs(
        (w0, w1, alpha) in (2usize..10, 2usize..10).prop_flat_map(|(w, h)| (
            prop::collection::vec(0.0..2.0f64, w * h * 3),
            prop::collection::vec(0.0..2.0f64, w * h * 3),
            prop::collection::vec(0.0..=1.0f64, w * h),
        ).prop_map(move |(a, b, al)| (
            Image::new(w, h, 3, a).unwrap(),
            Image::new(w, h, 3, b).unwrap(),
            Image::new(w, h, 1, al).unwrap(),
        ))),
        t in 0.0..=1.0f64,
    ) {
        let out = blend_frames(&w0, &w1, &alpha, t, 1e-6).unwrap();
        for ((o, a), b) in out.data().iter().zip(w0.data()).zip(w1.data()) {
            prop_assert!(*o >= a.min(*b) && *o <= a.max(*b));
        }
    }

    #[test]
    fn composition_is_associative_for_integer_shifts(
        shift in prop::array::uniform2(-2i32..=2),
        (b, c) in (flow(12, 10, 1.5), flow(12, 10, 1.5)),
    ) {
        let a = FlowField::constant(12, 10, shift[0] as f64, shift[1] as f64);
        let left = compose_flows(&compose_flows(&a, &b).unwrap(), &c).unwrap();
        let right = compose_flows(&a, &compose_flows(&b, &c).unwrap()).unwrap();
        // interior only: clamping at the border breaks the identity
        for y in 4..6 {
            for x in 4..8 {
                let (l, r) = (left.get(x, y), right.get(x, y));
                prop_assert!((l[0] - r[0]).abs() < 1e-9 && (l[1] - r[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn psnr_and_ssim_are_symmetric(
        (a, b) in (12usize..20, 12usize..20).prop_flat_map(|(w, h)| (
            prop::collection::vec(0.0..1.0f64, w * h * 3),
            prop::collection::vec(0.0..1.0f64, w * h * 3),
        ).prop_map(move |(a, b)| (Image::new(w, h, 3, a).unwrap(), Image::new(w, h, 3, b).unwrap()))),
    ) {
        prop_assert_eq!(psnr(&a, &b, 1.0, 2).unwrap(), psnr(&b, &a, 1.0, 2).unwrap());
        let p = SsimParams::default();
        prop_assert!((ssim(&a, &b, 1.0, &p).unwrap() - ssim(&b, &a, 1.0, &p).unwrap()).abs() < 1e-12);
        prop_assert_eq!(psnr(&a, &a, 1.0, 2).unwrap(), f64::INFINITY);
    }

    #[test]
    fn nonuniformity_ignores_translation_and_scale(
        path in prop::collection::vec(prop::array::uniform2(-20.0..20.0f64), 3..12),
        offset in prop::array::uniform2(-1e3..1e3f64),
        scale in 0.1..10.0f64,
    ) {
        let Some(base) = trajectory_error(&path, NormMode::Squared) else { return Ok(()); };
        let moved: Vec<[f64; 2]> = path.iter().map(|p| [p[0] + offset[0], p[1] + offset[1]]).collect();
        let scaled: Vec<[f64; 2]> = path.iter().map(|p| [p[0] * scale, p[1] * scale]).collect();
        let tol = 1e-9 * base + 1e-15;
        prop_assert!((trajectory_error(&moved, NormMode::Squared).unwrap() - base).abs() <= tol);
        prop_assert!((trajectory_error(&scaled, NormMode::Squared).unwrap() - base).abs() <= tol);
    }

    #[test]
    fn straight_paths_score_zero(
        start in prop::array::uniform2(-50.0..50.0f64),
        step in prop::array::uniform2(0.5..5.0f64),
        n in 3usize..16,
    ) {
        let traj = TrajectorySet::from_fn(n, 3, 2, |x, y, k| {
            [start[0] + x as f64 + step[0] * k as f64, start[1] + y as f64 + step[1] * k as f64]
        }).unwrap();
        prop_assert!(frame_nonuniformity(&traj, NormMode::Squared).unwrap() < 1e-12);
        prop_assert!(frame_nonuniformity(&traj, NormMode::Linear).unwrap() < 1e-12);
    }

    #[test]
    fn histogram_is_a_distribution(
        scores in prop::collection::vec(0.0..1.0f64, 1..64),
        bins in 1usize..16,
        range in 0.01..2.0f64,
    ) {
        let h = histogram(&scores, bins, range).unwrap();
        prop_assert_eq!(h.len(), bins);
        prop_assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(h.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn interleave_round_trips((s, l) in (1usize..8, 1usize..8).prop_flat_map(|(w, h)| (
        prop::collection::vec(0.0..1.0f64, w * h * 3),
        prop::collection::vec(0.0..1.0f64, w * h * 3),
    ).prop_map(move |(a, b)| (Image::new(w, h, 3, a).unwrap(), Image::new(w, h, 3, b).unwrap())))) {
        let raw = interleave_columns(&s, &l).unwrap();
        prop_assert_eq!(raw.width(), 2 * s.width());
        let (s2, l2) = deinterleave_columns(&raw).unwrap();
        prop_assert_eq!(s2, s);
        prop_assert_eq!(l2, l);
    }

    #[test]
    fn pfm_round_trips(img in image(9, 3), gray in image(9, 1)) {
        prop_assert_eq!(decode_pfm(&encode_pfm(&img).unwrap()).unwrap(), img);
        prop_assert_eq!(decode_pfm(&encode_pfm(&gray).unwrap()).unwrap(), gray);
    }

    #[test]
    fn flo_round_trips(d in (1usize..9, 1usize..9).prop_flat_map(|(w, h)| {
        prop::collection::vec(-100.0f32..100.0, w * h * 2).prop_map(move |d| (w, h, d))
    })) {
        let f = FlowField::new(d.0, d.1, d.2.into_iter().map(f64::from).collect()).unwrap();
        prop_assert_eq!(decode_flo(&encode_flo(&f)).unwrap(), f);
    }

    #[test]
    fn zero_flow_warp_is_identity(img in image(12, 3)) {
        let (w, h) = img.dims();
        prop_assert_eq!(backward_warp(&img, &FlowField::zeros(w, h)).unwrap(), img);
    }

    #[test]
    fn downsampling_keeps_the_mean(img in (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0..1.0f64, 4 * w * h).prop_map(move |d| Image::new(2 * w, 2 * h, 1, d).unwrap())
    })) {
        let mean = |i: &Image| i.data().iter().sum::<f64>() / i.data().len() as f64;
        prop_assert!((mean(&downsample2x(&img)) - mean(&img)).abs() < 1e-12);
    }

    #[test]
    fn merge_scales_with_radiance(
        (s, l) in (1usize..8, 1usize..8).prop_flat_map(|(w, h)| (
            prop::collection::vec(0.0..1.0f64, w * h),
            prop::collection::vec(0.0..1.0f64, w * h),
        ).prop_map(move |(a, b)| (Image::new(w, h, 1, a).unwrap(), Image::new(w, h, 1, b).unwrap()))),
        k in 0.1..10.0f64,
    ) {
        let cfg = MergeConfig::default();
        let scaled_cfg = MergeConfig { saturation_level: cfg.saturation_level * k, ..cfg };
        let base = merge_exposures(&s, &l, &cfg).unwrap();
        let up = |i: &Image| i.map(|v| v * k).unwrap();
        let scaled = merge_exposures(&up(&s), &up(&l), &scaled_cfg).unwrap();
        for (a, b) in scaled.data().iter().zip(base.data()) {
            prop_assert!((a - b * k).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}

proptest! {
    #![proptest_config(config(12))]

    /// Swapping the keyframes and mirroring t gives the same frame for the
    /// constant-velocity variant.
    #[test]
    fn linear_interpolation_is_swap_symmetric(
        vel in prop::array::uniform2(-6.0..6.0f64),
        seed in 0u64..1000,
        t in 0.0..=1.0f64,
    ) {
        let motion = Trajectory { velocity: vel, ..Default::default() };
        let scene = Scene::new(SceneSpec::global_motion(48, 40, seed, motion)).unwrap();
        let (k0, k1) = (scene.render(0.0).unwrap(), scene.render(1.0).unwrap());
        let (f01, f10) = (scene.flow(0.0, 1.0).unwrap(), scene.flow(1.0, 0.0).unwrap());
        let fwd = PairFlows { intra_0: None, intra_1: None, cross_01: f01.clone(), cross_10: f10.clone() };
        let rev = PairFlows { intra_0: None, intra_1: None, cross_01: f10, cross_10: f01 };
        let cfg = BlendConfig::default();
        let a = interpolate_at(&k0, &k1, &fwd, 0.25, t, Variant::Linear, &cfg, false).unwrap().image;
        let b = interpolate_at(&k1, &k0, &rev, 0.25, 1.0 - t, Variant::Linear, &cfg, false).unwrap().image;
        let worst = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-4, "max difference {worst}");
    }
}

#[test]
fn histogram_puts_range_and_beyond_in_last_bin() {
    let h = histogram(&[0.15, 3.0, 0.0], 4, 0.15).unwrap();
    assert_eq!(h, vec![1.0 / 3.0, 0.0, 0.0, 2.0 / 3.0]);
}
