//! Flow inputs for the pipeline and the flow algebra shared with the
//! non-uniformity metric.

mod algebra;
mod estimate;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use algebra::{clip_small_flows, compose_flows, fb_consistency_mask, fb_residual};
pub use estimate::{estimate_flow, EstimatorParams};

use crate::error::{Error, Result};
use crate::image::FlowField;
use crate::io::read_flo;
use crate::sensor::SynthSample;

/// The four flows the interpolator consumes for one frame pair.
#[derive(Debug, Clone)]
pub struct PairFlows {
    /// Frame 0 exposure end -> start (required by every variant but linear).
    pub intra_0: Option<FlowField>,
    /// Frame 1 exposure end -> start.
    pub intra_1: Option<FlowField>,
    /// Frame 0 end -> frame 1 end.
    pub cross_01: FlowField,
    /// Frame 1 end -> frame 0 end.
    pub cross_10: FlowField,
}

/// File names used for flows inside a flow directory.
pub const INTRA_0_FILE: &str = "intra_0.flo";
pub const INTRA_1_FILE: &str = "intra_1.flo";
pub const CROSS_01_FILE: &str = "cross_01.flo";
pub const CROSS_10_FILE: &str = "cross_10.flo";

/// Where the pipeline gets its flows from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowSource {
    /// Exact flows recorded with an analytic sample.
    GroundTruth,
    /// `.flo` files in a directory (`cross_01.flo`, `cross_10.flo`, and
    /// optionally `intra_0.flo`, `intra_1.flo`).
    File { dir: PathBuf },
    /// Classical estimator run on the sample's sharp keyframes. Intra flows
    /// are estimated between each exposure's end and start keyframes.
    Estimated { params: EstimatorParams },
}

impl FlowSource {
    pub fn label(&self) -> &'static str {
        match self {
            FlowSource::GroundTruth => "gt",
            FlowSource::File { .. } => "file",
            FlowSource::Estimated { .. } => "estimate",
        }
    }

    pub fn resolve(&self, sample: &SynthSample) -> Result<PairFlows> {
        match self {
            FlowSource::GroundTruth => {
                let gt = sample.gt_flows.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("sample carries no ground-truth flows".into())
                })?;
                Ok(PairFlows {
                    intra_0: Some(gt.intra_0.clone()),
                    intra_1: Some(gt.intra_1.clone()),
                    cross_01: gt.cross_01.clone(),
                    cross_10: gt.cross_10.clone(),
                })
            }
            FlowSource::File { dir } => {
                let optional = |name: &str| -> Result<Option<FlowField>> {
                    let path = dir.join(name);
                    if path.exists() {
                        read_flo(path).map(Some)
                    } else {
                        Ok(None)
                    }
                };
                Ok(PairFlows {
                    intra_0: optional(INTRA_0_FILE)?,
                    intra_1: optional(INTRA_1_FILE)?,
                    cross_01: read_flo(dir.join(CROSS_01_FILE))?,
                    cross_10: read_flo(dir.join(CROSS_10_FILE))?,
                })
            }
            FlowSource::Estimated { params } => Ok(PairFlows {
                intra_0: Some(estimate_flow(&sample.sharp_0e, &sample.sharp_0s, params)?),
                intra_1: Some(estimate_flow(&sample.sharp_1e, &sample.sharp_1s, params)?),
                cross_01: estimate_flow(&sample.sharp_0e, &sample.sharp_1e, params)?,
                cross_10: estimate_flow(&sample.sharp_1e, &sample.sharp_0e, params)?,
            }),
        }
    }
}
