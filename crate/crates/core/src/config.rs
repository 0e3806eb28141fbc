//! Pipeline configuration: every tunable of the chain in one validated,
//! serializable structure.

use std::path::Path;

use crate::data::{NormalizeConfig, RoiSpec};
use crate::embed::{EmbedConfig, ReductionMethod};
use crate::error::{Error, Result};
use crate::hot::HotParams;
use crate::learn::SvrParams;
use crate::scalespace::ScaleParams;
use crate::temporal::FilterConfig;

/// Schema version echoed into outputs.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub normalize: NormalizeConfig,
    pub roi: RoiSpec,
    pub scale: ScaleParams,
    pub hot: HotParams,
    pub embed: EmbedConfig,
    /// Reduced dimensionality of the Hessian descriptor half.
    pub t_hess: usize,
    /// Reduced dimensionality of the gradient descriptor half.
    pub t_grad: usize,
    pub method: ReductionMethod,
    pub svr: SvrParams,
    /// Temporal filter; absent means per-frame estimates are reported as-is.
    pub filter: Option<FilterConfig>,
    pub seed: u64,
    /// Worker threads; absent means all available cores.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            normalize: NormalizeConfig::default(),
            roi: RoiSpec::default(),
            scale: ScaleParams::default(),
            hot: HotParams::default(),
            embed: EmbedConfig::default(),
            t_hess: 32,
            t_grad: 24,
            method: ReductionMethod::SrM,
            svr: SvrParams::default(),
            filter: None,
            seed: 0,
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.normalize.validate()?;
        self.roi.validate()?;
        if !(self.scale.sigma > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sigma must be > 0, got {}",
                self.scale.sigma
            )));
        }
        self.hot.validate()?;
        self.svr.validate()?;
        if self.t_hess == 0 || self.t_grad == 0 {
            return Err(Error::InvalidParam(
                "reduced dimensions must be positive".into(),
            ));
        }
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        if self.embed.graph.p == 0 {
            return Err(Error::InvalidParam("graph neighbor count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            detail: format!("config parse failed: {e}"),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}
