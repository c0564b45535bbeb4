//! One JSON document overriding any module default. Missing sections and
//! fields keep their defaults; unknown top-level sections are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::SuiteParams;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::flow::EstimatorParams;
use crate::hdrmerge::{MergeConfig, ReinhardParams};
use crate::interp::BlendConfig;
use crate::metric::MetricParams;
use crate::sensor::{ExposureTimeline, SensorConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub timeline: ExposureTimeline,
    pub sensor: SensorConfig,
    pub merge: MergeConfig,
    pub tonemap: ReinhardParams,
    pub estimator: EstimatorParams,
    pub blend: BlendConfig,
    pub metric: MetricParams,
    pub eval: EvalConfig,
    pub suite: SuiteParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.timeline.validate()?;
        if !(self.sensor.saturation_level.is_finite() && self.sensor.saturation_level > 0.0) {
            return Err(Error::InvalidParameter("sensor.saturation_level must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sensor.reject_fraction) {
            return Err(Error::InvalidParameter("sensor.reject_fraction must lie in [0, 1]".into()));
        }
        if !(self.sensor.noise_sigma >= 0.0 && self.sensor.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter("sensor.noise_sigma must be non-negative".into()));
        }
        self.merge.validate()?;
        if !(self.tonemap.key > 0.0 && self.tonemap.key.is_finite()) {
            return Err(Error::InvalidParameter("tonemap.key must be positive".into()));
        }
        self.estimator.validate()?;
        self.blend.validate()?;
        self.metric.validate()?;
        if !(self.eval.peak > 0.0 && self.eval.peak.is_finite() && self.eval.key > 0.0) {
            return Err(Error::InvalidParameter("eval.peak and eval.key must be positive".into()));
        }
        self.suite.validate()?;
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_json(&bytes).map_err(|e| e.at(path))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
