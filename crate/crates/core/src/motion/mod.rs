//! Per-pixel motion models fitted to flow triplets.
//!
//! Time runs from 0 at the end of frame 0's exposure to 1 at the end of frame
//! 1's exposure; each exposure spans `tau`. A model anchored at a frame end
//! gives the displacement of the pixel observed there at any other time.

mod reverse;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use reverse::{reverse_flow, reverse_flow_weighted, ReverseParams};

use crate::error::{Error, Result};
use crate::image::{FlowField, Image, Mask};
use crate::io::{write_float_map, FloatMap};
use crate::warp::warp_flow;

/// Which frame end a model is anchored at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Frame0,
    Frame1,
}

impl Basis {
    pub fn time(self) -> f64 {
        match self {
            Basis::Frame0 => 0.0,
            Basis::Frame1 => 1.0,
        }
    }

    /// Constraint offsets for (own intra, other end, other start).
    pub fn offsets(self, tau: f64) -> [f64; 3] {
        match self {
            Basis::Frame0 => [-tau, 1.0, 1.0 - tau],
            Basis::Frame1 => [-tau, -1.0, -(1.0 + tau)],
        }
    }
}

/// The three flows that constrain a model at one frame end.
#[derive(Debug, Clone)]
pub struct FlowTriplet {
    /// Own exposure end -> start.
    pub intra: FlowField,
    /// Own end -> other frame's end.
    pub cross_end: FlowField,
    /// Own end -> other frame's exposure start.
    pub cross_start: FlowField,
    pub tau: f64,
    pub basis: Basis,
}

impl FlowTriplet {
    pub fn new(
        intra: FlowField,
        cross_end: FlowField,
        cross_start: FlowField,
        tau: f64,
        basis: Basis,
    ) -> Result<Self> {
        check_tau(tau)?;
        let (w, h) = intra.dims();
        cross_end.ensure_dims(w, h, "flow triplet")?;
        cross_start.ensure_dims(w, h, "flow triplet")?;
        Ok(Self {
            intra,
            cross_end,
            cross_start,
            tau,
            basis,
        })
    }

    /// Build the triplet from intra and cross flows, deriving the third flow.
    pub fn derive(
        intra: FlowField,
        cross_end: FlowField,
        other_intra: &FlowField,
        tau: f64,
        basis: Basis,
    ) -> Result<Self> {
        let cross_start = derive_third_flow(&cross_end, other_intra)?;
        Self::new(intra, cross_end, cross_start, tau, basis)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.intra.dims()
    }

    fn values(&self) -> [&FlowField; 3] {
        [&self.intra, &self.cross_end, &self.cross_start]
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau {tau} must lie in (0, 1)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadMotionField {
    pub v: FlowField,
    pub a: FlowField,
    pub basis_time: f64,
    /// Per-pixel least-squares residual norm in pixels.
    pub residual: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicMotionField {
    pub v: FlowField,
    pub a: FlowField,
    pub j: FlowField,
    pub basis_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MotionModel {
    Quadratic(QuadMotionField),
    Cubic(CubicMotionField),
}

impl From<QuadMotionField> for MotionModel {
    fn from(m: QuadMotionField) -> Self {
        MotionModel::Quadratic(m)
    }
}

impl From<CubicMotionField> for MotionModel {
    fn from(m: CubicMotionField) -> Self {
        MotionModel::Cubic(m)
    }
}

impl MotionModel {
    pub fn basis_time(&self) -> f64 {
        match self {
            MotionModel::Quadratic(m) => m.basis_time,
            MotionModel::Cubic(m) => m.basis_time,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            MotionModel::Quadratic(m) => m.v.dims(),
            MotionModel::Cubic(m) => m.v.dims(),
        }
    }

    /// Displacement at an arbitrary offset from the basis time, without the
    /// `[0, 1]` restriction of [`eval_displacement`].
    pub fn displacement_at_offset(&self, dt: f64) -> FlowField {
        let (c1, c2, c3) = (dt, 0.5 * dt * dt, dt * dt * dt / 6.0);
        let (w, h) = self.dims();
        let data = match self {
            MotionModel::Quadratic(m) => m
                .v
                .data()
                .par_iter()
                .zip(m.a.data().par_iter())
                .map(|(v, a)| c1 * v + c2 * a)
                .collect(),
            MotionModel::Cubic(m) => m
                .v
                .data()
                .par_iter()
                .zip(m.a.data().par_iter())
                .zip(m.j.data().par_iter())
                .map(|((v, a), j)| c1 * v + c2 * a + c3 * j)
                .collect(),
        };
        FlowField::from_parts(w, h, data)
    }
}

/// Forward flow from the basis frame to time `t ∈ [0, 1]`.
pub fn eval_displacement(model: &MotionModel, t: f64) -> Result<FlowField> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t {t} outside [0, 1]")));
    }
    Ok(model.displacement_at_offset(t - model.basis_time()))
}

/// Flow from this frame's end to the other frame's exposure start:
/// `F_s(x) = cross_end(x) + other_intra(x + cross_end(x))`.
pub fn derive_third_flow(cross_end: &FlowField, other_intra: &FlowField) -> Result<FlowField> {
    let sampled = warp_flow(other_intra, cross_end)?;
    cross_end.add(&sampled)
}

/// Third flow that only samples `other_intra` from the surface the cross
/// flow lands on. A bilinear neighbour `n` of `x + cross_end(x)` has
/// consistency error `e_n = |cross_end(x) + other_cross(n)|`; it takes part
/// when `e_n <= tol` and `e_n` is within `margin` of the best neighbour, and
/// the remaining weights are renormalized. Pixels with no such neighbour,
/// or whose cross flow leaves the frame, are cleared in the returned mask
/// and keep the plain bilinear value.
pub fn derive_third_flow_consistent(
    cross_end: &FlowField,
    other_cross: &FlowField,
    other_intra: &FlowField,
    tol: f64,
    margin: f64,
) -> Result<(FlowField, Mask)> {
    let (w, h) = cross_end.dims();
    other_cross.ensure_dims(w, h, "third flow")?;
    other_intra.ensure_dims(w, h, "third flow")?;
    if !(tol >= 0.0 && margin >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance {tol} and margin {margin} must be non-negative"
        )));
    }
    let plain = derive_third_flow(cross_end, other_intra)?;
    let per_pixel: Vec<([f64; 2], bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let c = cross_end.get(x, y);
            let (px, py) = (x as f64 + c[0], y as f64 + c[1]);
            if !(0.0..=(w - 1) as f64).contains(&px) || !(0.0..=(h - 1) as f64).contains(&py) {
                return (plain.get(x, y), false);
            }
            let (x0, y0) = (px.floor() as usize, py.floor() as usize);
            let (fx, fy) = (px - x0 as f64, py - y0 as f64);
            let neighbours = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                ((x0 + 1).min(w - 1), y0, fx * (1.0 - fy)),
                (x0, (y0 + 1).min(h - 1), (1.0 - fx) * fy),
                ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1), fx * fy),
            ]
            .map(|(nx, ny, wt)| {
                let b = other_cross.get(nx, ny);
                (nx, ny, wt, (c[0] + b[0]).hypot(c[1] + b[1]))
            });
            let best = neighbours
                .iter()
                .filter(|n| n.2 > 0.0)
                .map(|n| n.3)
                .fold(f64::INFINITY, f64::min);
            let mut acc = [0.0; 2];
            let mut wsum = 0.0;
            for (nx, ny, wt, err) in neighbours {
                if wt > 0.0 && err <= tol && err <= best + margin {
                    let f = other_intra.get(nx, ny);
                    acc[0] += wt * f[0];
                    acc[1] += wt * f[1];
                    wsum += wt;
                }
            }
            if wsum > 0.0 {
                ([c[0] + acc[0] / wsum, c[1] + acc[1] / wsum], true)
            } else {
                (plain.get(x, y), false)
            }
        })
        .collect();
    let data = per_pixel.iter().flat_map(|(f, _)| *f).collect();
    let mask = Mask::new(w, h, per_pixel.iter().map(|(_, ok)| *ok).collect())?;
    Ok((FlowField::new(w, h, data)?, mask))
}

fn ensure_finite(fields: &[&FlowField]) -> Result<()> {
    // FlowField construction already rejects non-finite values; this guards
    // against values that overflow during the solve.
    for f in fields {
        if f.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFlow("non-finite flow value".into()));
        }
    }
    Ok(())
}

fn quad_rows(offsets: &[f64]) -> Vec<[f64; 2]> {
    offsets.iter().map(|&d| [d, 0.5 * d * d]).collect()
}

/// `(AᵀA)⁻¹Aᵀ` for an n×2 design matrix.
fn pseudo_inverse(rows: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
    for r in rows {
        s11 += r[0] * r[0];
        s12 += r[0] * r[1];
        s22 += r[1] * r[1];
    }
    let det = s11 * s22 - s12 * s12;
    if !(det.abs() > 1e-300) {
        return Err(Error::Numerical("singular normal matrix".into()));
    }
    // Column k of the pseudo-inverse maps observation k to (v, a).
    Ok(rows
        .iter()
        .map(|r| [(s22 * r[0] - s12 * r[1]) / det, (s11 * r[1] - s12 * r[0]) / det])
        .collect())
}

fn invert3(m: [[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    if !(det.abs() > 1e-300) {
        return Err(Error::Numerical("singular constraint matrix".into()));
    }
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cof[j][i] / det;
        }
    }
    Ok(inv)
}

/// Least-squares quadratic through the given constraints; used by both the
/// three-flow and two-flow fits.
fn fit_quad_generic(
    fields: &[&FlowField],
    offsets: &[f64],
    basis_time: f64,
) -> Result<QuadMotionField> {
    ensure_finite(fields)?;
    let (w, h) = fields[0].dims();
    let rows = quad_rows(offsets);
    let pinv = pseudo_inverse(&rows)?;
    let n = w * h;
    let solved: Vec<([f64; 2], [f64; 2], f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut v = [0.0; 2];
            let mut a = [0.0; 2];
            for c in 0..2 {
                for (k, f) in fields.iter().enumerate() {
                    let y = f.data()[2 * i + c];
                    v[c] += pinv[k][0] * y;
                    a[c] += pinv[k][1] * y;
                }
            }
            let mut r2 = 0.0;
            for c in 0..2 {
                for (k, f) in fields.iter().enumerate() {
                    let r = rows[k][0] * v[c] + rows[k][1] * a[c] - f.data()[2 * i + c];
                    r2 += r * r;
                }
            }
            (v, a, r2.sqrt())
        })
        .collect();
    let mut vd = Vec::with_capacity(2 * n);
    let mut ad = Vec::with_capacity(2 * n);
    let mut res = Vec::with_capacity(n);
    for (v, a, r) in solved {
        vd.extend_from_slice(&v);
        ad.extend_from_slice(&a);
        res.push(r);
    }
    Ok(QuadMotionField {
        v: FlowField::new(w, h, vd)?,
        a: FlowField::new(w, h, ad)?,
        basis_time,
        residual: Image::new(w, h, 1, res)?,
    })
}

/// Least-squares `(v, a)` per pixel from all three constraints.
pub fn fit_quadratic(triplet: &FlowTriplet) -> Result<QuadMotionField> {
    check_tau(triplet.tau)?;
    fit_quad_generic(
        &triplet.values(),
        &triplet.basis.offsets(triplet.tau),
        triplet.basis.time(),
    )
}

/// Exact quadratic through the intra and cross-end constraints only.
pub fn fit_two_flow_quadratic(
    intra: &FlowField,
    cross_end: &FlowField,
    tau: f64,
    basis: Basis,
) -> Result<QuadMotionField> {
    check_tau(tau)?;
    let (w, h) = intra.dims();
    cross_end.ensure_dims(w, h, "two-flow fit")?;
    let offsets = basis.offsets(tau);
    fit_quad_generic(&[intra, cross_end], &offsets[..2], basis.time())
}

/// Exact cubic `(v, a, j)` through the three constraints.
pub fn fit_cubic(triplet: &FlowTriplet) -> Result<CubicMotionField> {
    check_tau(triplet.tau)?;
    let fields = triplet.values();
    ensure_finite(&fields)?;
    let offsets = triplet.basis.offsets(triplet.tau);
    let m = offsets.map(|d| [d, 0.5 * d * d, d * d * d / 6.0]);
    let inv = invert3(m)?;
    let (w, h) = triplet.dims();
    let n = w * h;
    let mut out = [vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n]];
    for (p, o) in out.iter_mut().enumerate() {
        o.par_iter_mut().enumerate().for_each(|(i, val)| {
            *val = (0..3).map(|k| inv[p][k] * fields[k].data()[i]).sum();
        });
    }
    let [v, a, j] = out;
    Ok(CubicMotionField {
        v: FlowField::new(w, h, v)?,
        a: FlowField::new(w, h, a)?,
        j: FlowField::new(w, h, j)?,
        basis_time: triplet.basis.time(),
    })
}

/// Constant-velocity model that splits the cross flow linearly in time.
pub fn linear_model(cross_end: &FlowField, basis: Basis) -> QuadMotionField {
    let (w, h) = cross_end.dims();
    let v = match basis {
        Basis::Frame0 => cross_end.clone(),
        Basis::Frame1 => cross_end.scaled(-1.0),
    };
    QuadMotionField {
        v,
        a: FlowField::zeros(w, h),
        basis_time: basis.time(),
        residual: Image::from_parts(w, h, 1, vec![0.0; w * h]),
    }
}

/// Metadata written next to an exported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub variant: String,
    pub basis_time: f64,
    pub tau: f64,
    pub width: usize,
    pub height: usize,
    /// Channel layout of the float map, in order.
    pub channels: Vec<String>,
}

/// Pack model coefficients into a float map (`vx vy ax ay [jx jy]`).
pub fn model_to_float_map(model: &MotionModel, tau: f64, variant: &str) -> (FloatMap, ModelHeader) {
    let (w, h) = model.dims();
    let fields: Vec<&FlowField> = match model {
        MotionModel::Quadratic(m) => vec![&m.v, &m.a],
        MotionModel::Cubic(m) => vec![&m.v, &m.a, &m.j],
    };
    let names = ["vx", "vy", "ax", "ay", "jx", "jy"];
    let channels = 2 * fields.len();
    let mut data = Vec::with_capacity(w * h * channels);
    for i in 0..w * h {
        for f in &fields {
            data.push(f.data()[2 * i] as f32);
            data.push(f.data()[2 * i + 1] as f32);
        }
    }
    let header = ModelHeader {
        variant: variant.to_string(),
        basis_time: model.basis_time(),
        tau,
        width: w,
        height: h,
        channels: names[..channels].iter().map(|s| s.to_string()).collect(),
    };
    (
        FloatMap {
            width: w,
            height: h,
            channels,
            data,
        },
        header,
    )
}

/// Write `<stem>.pfm` and `<stem>.json` for a fitted model.
pub fn export_model(stem: impl AsRef<Path>, model: &MotionModel, tau: f64, variant: &str) -> Result<()> {
    let stem = stem.as_ref();
    let (map, header) = model_to_float_map(model, tau, variant);
    write_float_map(stem.with_extension("pfm"), &map)?;
    let json_path = stem.with_extension("json");
    std::fs::write(&json_path, serde_json::to_vec_pretty(&header)?)
        .map_err(|e| Error::from(e).at(&json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(w: usize, h: usize, u: f64) -> FlowField {
        FlowField::constant(w, h, u, 0.0)
    }

    fn quad_triplet(v: f64, a: f64, tau: f64, basis: Basis) -> FlowTriplet {
        let d = basis.offsets(tau).map(|t| v * t + 0.5 * a * t * t);
        FlowTriplet::new(c(3, 2, d[0]), c(3, 2, d[1]), c(3, 2, d[2]), tau, basis).unwrap()
    }

    #[test]
    fn third_flow_examples() {
        let f = derive_third_flow(&c(5, 5, 3.0), &FlowField::zeros(5, 5)).unwrap();
        assert_eq!(f, c(5, 5, 3.0));
        let f = derive_third_flow(&FlowField::zeros(5, 5), &c(5, 5, -2.0)).unwrap();
        assert_eq!(f, c(5, 5, -2.0));
        let f = derive_third_flow(&c(20, 4, 8.0), &c(20, 4, -2.0)).unwrap();
        assert!(f.data().chunks(2).all(|p| p == [6.0, 0.0]));
        assert!(derive_third_flow(&c(4, 4, 0.0), &c(5, 4, 0.0)).is_err());
    }

    #[test]
    fn consistent_third_flow_stays_on_one_surface() {
        // frame 1: columns 0..4 are a sprite that came from +0.5 px to the left
        let other_cross = FlowField::from_fn(8, 2, |x, _| [if x < 4 { -0.5 } else { 0.0 }, 0.0]).unwrap();
        let other_intra = FlowField::from_fn(8, 2, |x, _| [if x < 4 { -1.0 } else { 0.0 }, 0.0]).unwrap();
        let mut cross = FlowField::from_fn(8, 2, |x, _| [if x < 4 { 0.5 } else { 0.0 }, 0.0]).unwrap();
        let (third, ok) = derive_third_flow_consistent(&cross, &other_cross, &other_intra, 1.0, 0.25).unwrap();
        // x = 3 lands between the sprite and the background; only the sprite counts
        assert_eq!(third.get(3, 0), [-0.5, 0.0]);
        assert_eq!(derive_third_flow(&cross, &other_intra).unwrap().get(3, 0), [0.0, 0.0]);
        assert_eq!(third.get(6, 1), [0.0, 0.0]);
        assert_eq!(ok.count(), 16);

        cross = FlowField::from_fn(8, 2, |x, _| [if x == 7 { 3.0 } else { 0.0 }, 0.0]).unwrap();
        let (_, ok) = derive_third_flow_consistent(&cross, &other_cross, &other_intra, 1.0, 0.25).unwrap();
        assert!(!ok.get(7, 0) && ok.get(0, 0) && ok.get(5, 0));
        assert!(derive_third_flow_consistent(&cross, &other_cross, &other_intra, -1.0, 0.0).is_err());
    }

    #[test]
    fn quadratic_examples() {
        let t = FlowTriplet::new(c(2, 2, -0.75), c(2, 2, 8.0), c(2, 2, 5.25), 0.25, Basis::Frame0).unwrap();
        let m = fit_quadratic(&t).unwrap();
        assert!((m.v.get(0, 0)[0] - 4.0).abs() < 1e-12);
        assert!((m.a.get(0, 0)[0] - 8.0).abs() < 1e-12);
        assert!(m.residual.get(0, 0, 0) < 1e-12);

        let t = FlowTriplet::new(c(2, 2, -2.0), c(2, 2, 8.0), c(2, 2, 6.0), 0.25, Basis::Frame0).unwrap();
        let m = fit_quadratic(&t).unwrap();
        assert!((m.v.get(1, 1)[0] - 8.0).abs() < 1e-12);
        assert!(m.a.get(1, 1)[0].abs() < 1e-12);

        let z = FlowField::zeros(3, 3);
        let t = FlowTriplet::new(z.clone(), z.clone(), z, 0.25, Basis::Frame1).unwrap();
        let m = fit_quadratic(&t).unwrap();
        assert!(m.v.data().iter().chain(m.a.data()).all(|v| *v == 0.0));
    }

    #[test]
    fn frame1_basis_recovers_quadratic() {
        let t = quad_triplet(-3.0, 5.0, 0.25, Basis::Frame1);
        let m = fit_quadratic(&t).unwrap();
        assert!((m.v.get(0, 0)[0] + 3.0).abs() < 1e-12);
        assert!((m.a.get(0, 0)[0] - 5.0).abs() < 1e-12);
        assert_eq!(m.basis_time, 1.0);
    }

    #[test]
    fn residual_of_inconsistent_data() {
        let t = FlowTriplet::new(c(1, 1, -2.0), c(1, 1, 8.0), c(1, 1, 7.0), 0.25, Basis::Frame0).unwrap();
        let m = fit_quadratic(&t).unwrap();
        assert!(m.residual.get(0, 0, 0) > 0.1);
    }

    #[test]
    fn two_flow_examples() {
        let m = fit_two_flow_quadratic(&c(2, 2, -0.75), &c(2, 2, 8.0), 0.25, Basis::Frame0).unwrap();
        assert!((m.v.get(0, 0)[0] - 4.0).abs() < 1e-12);
        assert!((m.a.get(0, 0)[0] - 8.0).abs() < 1e-12);
        assert_eq!(m.residual.get(0, 0, 0), 0.0);

        // Perturbing the intra flow moves the two-flow solution further.
        let err = |m: &QuadMotionField| (m.v.get(0, 0)[0] - 4.0).hypot(m.a.get(0, 0)[0] - 8.0);
        let two = fit_two_flow_quadratic(&c(1, 1, -0.45), &c(1, 1, 8.0), 0.25, Basis::Frame0).unwrap();
        let t = FlowTriplet::new(c(1, 1, -0.45), c(1, 1, 8.0), c(1, 1, 5.25), 0.25, Basis::Frame0).unwrap();
        let three = fit_quadratic(&t).unwrap();
        assert!(err(&three) < err(&two));
    }

    #[test]
    fn cubic_examples() {
        let tau = 0.25;
        let x = |t: f64| t + t * t + t * t * t;
        let d = Basis::Frame0.offsets(tau).map(x);
        let t = FlowTriplet::new(c(1, 1, d[0]), c(1, 1, d[1]), c(1, 1, d[2]), tau, Basis::Frame0).unwrap();
        let m = fit_cubic(&t).unwrap();
        assert!((m.v.get(0, 0)[0] - 1.0).abs() < 1e-9);
        assert!((m.a.get(0, 0)[0] - 2.0).abs() < 1e-9);
        assert!((m.j.get(0, 0)[0] - 6.0).abs() < 1e-9);

        let q = quad_triplet(4.0, 8.0, tau, Basis::Frame0);
        let cm = fit_cubic(&q).unwrap();
        assert!(cm.j.data().iter().all(|j| j.abs() < 1e-9));
        assert!((cm.v.get(0, 0)[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn linear_examples() {
        let m: MotionModel = linear_model(&c(2, 2, 8.0), Basis::Frame0).into();
        assert_eq!(eval_displacement(&m, 0.5).unwrap().get(0, 0), [4.0, 0.0]);
        let m1: MotionModel = linear_model(&c(2, 2, -8.0), Basis::Frame1).into();
        assert_eq!(eval_displacement(&m1, 0.5).unwrap().get(0, 0), [-4.0, 0.0]);
        assert_eq!(eval_displacement(&m1, 0.0).unwrap().get(0, 0), [-8.0, 0.0]);
    }

    #[test]
    fn evaluation() {
        let m: MotionModel = fit_quadratic(&quad_triplet(4.0, 8.0, 0.25, Basis::Frame0)).unwrap().into();
        assert!(eval_displacement(&m, 0.0).unwrap().data().iter().all(|v| *v == 0.0));
        assert!((eval_displacement(&m, 0.5).unwrap().get(0, 0)[0] - 3.0).abs() < 1e-12);
        assert!((eval_displacement(&m, 1.0).unwrap().get(0, 0)[0] - 8.0).abs() < 1e-12);
        assert!(eval_displacement(&m, 1.5).is_err());
        assert!(eval_displacement(&m, -0.1).is_err());
    }

    #[test]
    fn bad_tau() {
        let z = FlowField::zeros(2, 2);
        assert!(FlowTriplet::new(z.clone(), z.clone(), z.clone(), 0.0, Basis::Frame0).is_err());
        assert!(fit_two_flow_quadratic(&z, &z, 1.0, Basis::Frame0).is_err());
    }

    #[test]
    fn export_layout() {
        let m: MotionModel = fit_cubic(&quad_triplet(4.0, 8.0, 0.25, Basis::Frame0)).unwrap().into();
        let (map, header) = model_to_float_map(&m, 0.25, "cubic");
        assert_eq!(map.channels, 6);
        assert_eq!(header.channels, ["vx", "vy", "ax", "ay", "jx", "jy"]);
        assert!((map.data[0] - 4.0).abs() < 1e-5);
        assert!((map.data[2] - 8.0).abs() < 1e-5);
        let dir = tempfile::tempdir().unwrap();
        export_model(dir.path().join("model"), &m, 0.25, "cubic").unwrap();
        assert!(dir.path().join("model.pfm").exists());
        assert!(dir.path().join("model.json").exists());
    }
}
