//! Dual-exposure HDR video frame interpolation: sensor simulation, HDR merge,
//! optical flow, quadratic motion fitting with flow reversal, occlusion-aware
//! blending, a motion non-uniformity metric and evaluation.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod flow;
pub mod hdrmerge;
pub mod image;
pub mod interp;
pub mod metric;
pub mod io;
pub mod motion;
pub mod pyramid;
pub mod scene;
pub mod sensor;
pub mod warp;
