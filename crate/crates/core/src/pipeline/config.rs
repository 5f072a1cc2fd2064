use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::elastic::{DEFAULT_ANNOTATORS, DEFAULT_SMOOTH_SIGMA};
use crate::error::{Error, Result};
use crate::inpaint::{ExternalInpainter, GeodesicCompleter, InpaintBackend};
use crate::metrics::BenchConfig;
use crate::nms::NmsParams;
use crate::refine::RefineConfig;

/// Which inpainting backend refinement uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackendConfig {
    Geodesic,
    /// Whitespace-separated command template; the four patch paths are
    /// appended.
    External { command: String, timeout_secs: f64 },
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn InpaintBackend>> {
        match self {
            BackendConfig::Geodesic => Ok(Box::new(GeodesicCompleter)),
            BackendConfig::External { command, timeout_secs } => {
                if !(*timeout_secs > 0.0) || !timeout_secs.is_finite() {
                    return Err(Error::InvalidArgument("timeout must be > 0".into()));
                }
                let b = ExternalInpainter::from_template(command, Duration::from_secs_f64(*timeout_secs))
                    .ok_or_else(|| Error::InvalidArgument("empty inpainter command".into()))?;
                Ok(Box::new(b))
            }
        }
    }
}

/// Everything a batch run depends on. Echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub refine: RefineConfig,
    pub nms: NmsParams,
    pub bench: BenchConfig,
    pub backend: BackendConfig,
    pub seed: u64,
    /// Worker threads; 0 means one per core. Results do not depend on it,
    /// so it is left out of echoed configs to keep outputs identical
    /// across thread counts.
    #[serde(skip_serializing)]
    pub parallelism: usize,
    pub annotators: usize,
    pub smooth_sigma: f64,
    pub alphas: Vec<f64>,
    pub mix_alpha: f64,
    pub mix_fractions: Vec<f64>,
    pub upscale_factor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            refine: RefineConfig::default(),
            nms: NmsParams::default(),
            bench: BenchConfig::default(),
            backend: BackendConfig::Geodesic,
            seed: 0,
            parallelism: 0,
            annotators: DEFAULT_ANNOTATORS,
            smooth_sigma: DEFAULT_SMOOTH_SIGMA,
            alphas: vec![0.0, 10.0, 20.0, 40.0],
            mix_alpha: 20.0,
            mix_fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0],
            upscale_factor: 1.5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.refine.validate()?;
        self.nms.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.bench.thresholds == 0 {
            return bad("thresholds must be >= 1");
        }
        if self.bench.absolute_radius.is_none() && !(self.bench.max_dist > 0.0) {
            return bad("max_dist must be > 0");
        }
        if self.annotators == 0 {
            return bad("annotators must be >= 1");
        }
        if !(self.smooth_sigma >= 0.0) {
            return bad("smooth_sigma must be >= 0");
        }
        if self.alphas.iter().chain([&self.mix_alpha]).any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return bad("alphas must be finite and >= 0");
        }
        if self.mix_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("mix fractions must lie in [0, 1]");
        }
        if !(self.upscale_factor > 0.0) || !self.upscale_factor.is_finite() {
            return bad("upscale factor must be > 0");
        }
        Ok(())
    }
}
