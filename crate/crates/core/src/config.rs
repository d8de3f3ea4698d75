//! Flat key=value configuration covering every tunable of the pipeline.
//!
//! The same keys work in a config file (one `key = value` per line, `#`
//! comments) and as command-line flags of the same name.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::patch_matching::MatchConfig;
use crate::point_matching::PointMatchConfig;
use crate::registration::RegConfig;
use crate::sampler::SamplerConfig;
use crate::spectral::SpectralConfig;

/// Grid cell sizes for the three resolution levels, at indoor-scan scale.
#[derive(Debug, Clone, Serialize)]
pub struct GridConfig {
    /// Dense level used for point matching.
    pub cell1: f64,
    /// Mid level feeding the saliency test.
    pub cell2: f64,
    /// Coarse level supplying uniform fill nodes.
    pub cell3: f64,
    /// Scene scale multiplier applied to every length-valued setting
    /// (e.g. 20 for outdoor lidar scale).
    pub scale: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            cell1: 0.025,
            cell2: 0.05,
            cell3: 0.10,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub sampler: SamplerConfig,
    pub features: FeatureConfig,
    pub matching: MatchConfig,
    pub sm: SpectralConfig,
    pub point: PointMatchConfig,
    pub reg: RegConfig,
    pub harness: HarnessConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnessConfig {
    /// Cap on pooled point correspondences (by descending confidence);
    /// 0 disables the cap. Recorded in reports.
    pub max_corrs: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig { max_corrs: 1000 }
    }
}

/// Every config key with its help line, in display order.
pub const KEYS: &[(&str, &str)] = &[
    ("grid.cell1", "dense grid cell size [m]"),
    ("grid.cell2", "mid grid cell size [m]"),
    ("grid.cell3", "coarse grid cell size [m]"),
    ("grid.scale", "scene scale multiplier for all lengths"),
    ("sampler.r", "saliency covariance radius [m]"),
    ("sampler.gamma1", "first eigenvalue ratio threshold"),
    ("sampler.gamma2", "second eigenvalue ratio threshold"),
    ("sampler.nms_radius", "non-maximum suppression radius [m]"),
    ("sampler.sigma", "non-salient fill distance threshold [m]"),
    ("sampler.min_neighbors", "minimum neighbors for the saliency test"),
    ("features.radius", "descriptor neighborhood radius [m]"),
    ("features.bins", "histogram bins per angle feature"),
    ("match.K", "patch correspondences kept per branch"),
    ("match.keep_fraction", "fraction of filtered correspondences retained"),
    ("sm.tau", "spectral matching inlier threshold [m]"),
    ("sm.min_cluster", "minimum spectral cluster size"),
    ("sm.tol", "power iteration tolerance"),
    ("sm.max_iters", "power iteration cap"),
    ("point.alpha", "Sinkhorn dustbin score"),
    ("point.sinkhorn_iters", "Sinkhorn iteration rounds"),
    ("point.k", "mutual top-K rank bound"),
    ("reg.accept_radius", "LGR inlier acceptance radius [m]"),
    ("reg.refine_iters", "LGR refinement rounds"),
    ("reg.ransac_iters", "RANSAC iteration count"),
    ("reg.ransac_threshold", "RANSAC inlier threshold [m]"),
    ("reg.seed", "RANSAC seed"),
    ("harness.max_corrs", "point correspondence cap (0 = unlimited)"),
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| Error::ConfigValue {
        key: key.to_string(),
        message: format!("`{value}`: {e}"),
    })
}

impl PipelineConfig {
    /// Applies one key=value setting.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "grid.cell1" => self.grid.cell1 = parse(key, value)?,
            "grid.cell2" => self.grid.cell2 = parse(key, value)?,
            "grid.cell3" => self.grid.cell3 = parse(key, value)?,
            "grid.scale" => self.grid.scale = parse(key, value)?,
            "sampler.r" => self.sampler.r = parse(key, value)?,
            "sampler.gamma1" => self.sampler.gamma1 = parse(key, value)?,
            "sampler.gamma2" => self.sampler.gamma2 = parse(key, value)?,
            "sampler.nms_radius" => self.sampler.nms_radius = parse(key, value)?,
            "sampler.sigma" => self.sampler.sigma = parse(key, value)?,
            "sampler.min_neighbors" => self.sampler.min_neighbors = parse(key, value)?,
            "features.radius" => self.features.radius = parse(key, value)?,
            "features.bins" => self.features.bins = parse(key, value)?,
            "match.K" => self.matching.k = parse(key, value)?,
            "match.keep_fraction" => self.matching.keep_fraction = parse(key, value)?,
            "sm.tau" => self.sm.tau = parse(key, value)?,
            "sm.min_cluster" => self.sm.min_cluster = parse(key, value)?,
            "sm.tol" => self.sm.tol = parse(key, value)?,
            "sm.max_iters" => self.sm.max_iters = parse(key, value)?,
            "point.alpha" => self.point.alpha = parse(key, value)?,
            "point.sinkhorn_iters" => self.point.sinkhorn_iters = parse(key, value)?,
            "point.k" => self.point.k = parse(key, value)?,
            "reg.accept_radius" => self.reg.accept_radius = parse(key, value)?,
            "reg.refine_iters" => self.reg.refine_iters = parse(key, value)?,
            "reg.ransac_iters" => self.reg.ransac_iters = parse(key, value)?,
            "reg.ransac_threshold" => self.reg.ransac_threshold = parse(key, value)?,
            "reg.seed" => self.reg.seed = parse(key, value)?,
            "harness.max_corrs" => self.harness.max_corrs = parse(key, value)?,
            other => return Err(Error::UnknownConfigKey(other.to_string())),
        }
        Ok(())
    }

    /// Parses a flat `key = value` config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.load_file(path)?;
        Ok(cfg)
    }

    /// Applies the settings of a config file over the current values.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(path, lineno + 1, "expected `key = value`"));
            };
            self.apply(key.trim(), value.trim()).map_err(|e| match e {
                Error::UnknownConfigKey(k) => {
                    Error::parse(path, lineno + 1, format!("unknown config key `{k}`"))
                }
                Error::ConfigValue { key, message } => {
                    Error::parse(path, lineno + 1, format!("bad value for `{key}`: {message}"))
                }
                other => other,
            })?;
        }
        Ok(())
    }

    /// A copy with every length-valued setting multiplied by `grid.scale`.
    pub fn scaled(&self) -> PipelineConfig {
        let s = self.grid.scale;
        let mut out = self.clone();
        out.grid.cell1 *= s;
        out.grid.cell2 *= s;
        out.grid.cell3 *= s;
        out.grid.scale = 1.0;
        out.sampler.r *= s;
        out.sampler.nms_radius *= s;
        out.sampler.sigma *= s;
        out.features.radius *= s;
        out.sm.tau *= s;
        out.reg.accept_radius *= s;
        out.reg.ransac_threshold *= s;
        out
    }
}
