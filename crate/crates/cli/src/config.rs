//! Run configuration: JSON file, dotted-name overrides, environment.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use uosam_core::gro::{GridPlan, DEFAULT_CROP_LAYERS, DEFAULT_MIN_SCORE, DEFAULT_NMS_IOU, DEFAULT_POINTS_PER_SIDE};
use uosam_core::metrics::{EvalOptions, DEFAULT_BAND_FRACTION, DEFAULT_BETA_SQ};
use uosam_core::PipelineOptions;

/// Environment variable that replaces the configured backend address.
pub const BRIDGE_ENV: &str = "UO_SAM_BRIDGE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LroConfig {
    pub enabled: bool,
}

impl Default for LroConfig {
    fn default() -> Self {
        Self { enabled: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroConfig {
    pub enabled: bool,
    pub points_per_side: usize,
    pub crop_layers: usize,
    pub crop_overlap: f64,
    pub min_score: f64,
    pub nms_iou: f64,
}

impl Default for GroConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            points_per_side: DEFAULT_POINTS_PER_SIDE,
            crop_layers: DEFAULT_CROP_LAYERS,
            crop_overlap: 0.0,
            min_score: DEFAULT_MIN_SCORE,
            nms_iou: DEFAULT_NMS_IOU,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub band_fraction: f64,
    pub beta_sq: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            band_fraction: DEFAULT_BAND_FRACTION,
            beta_sq: DEFAULT_BETA_SQ,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// `mock`, `tcp:host:port`, `host:port` or `stdio:<command>`.
    pub backend: String,
    pub workers: usize,
    /// Number of class IDs in use (labels `0..class_count`). Taken from the
    /// dataset manifest or the data itself when unset.
    pub class_count: Option<usize>,
    /// Label excluded from refinement and scoring.
    pub ignore_id: u8,
    pub lro: LroConfig,
    pub gro: GroConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            backend: "mock".into(),
            workers: 1,
            class_count: None,
            ignore_id: uosam_core::DEFAULT_IGNORE,
            lro: LroConfig::default(),
            gro: GroConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Rejected configuration; the binary exits with status 2 on these.
#[derive(Debug)]
pub struct ConfigError(pub anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies `key=value` overrides where `key` is a dotted field path
    /// such as `gro.nms_iou`. Values are parsed as JSON, falling back to a
    /// plain string.
    pub fn with_overrides<'a>(
        self,
        overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> anyhow::Result<Self> {
        let mut doc = serde_json::to_value(&self)?;
        for (key, raw) in overrides {
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            let parts: Vec<&str> = key.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let obj = slot
                    .as_object_mut()
                    .ok_or_else(|| anyhow!("{key}: {} is not a section", parts[..i].join(".")))?;
                if !obj.contains_key(*part) {
                    bail!("unknown config field {key}");
                }
                slot = obj.get_mut(*part).expect("checked above");
            }
            *slot = value;
        }
        serde_json::from_value(doc).context("applying overrides")
    }

    /// Backend address after the environment override.
    pub fn effective_backend(&self) -> String {
        match std::env::var(BRIDGE_ENV) {
            Ok(v) if !v.trim().is_empty() => v.trim().to_string(),
            _ => self.backend.clone(),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.workers == 0 {
            bail!("workers must be >= 1");
        }
        if let Some(c) = self.class_count {
            if !(1..=255).contains(&c) {
                bail!("class_count {c} outside 1..=255");
            }
            if (self.ignore_id as usize) < c {
                bail!("ignore_id {} collides with class IDs 0..{c}", self.ignore_id);
            }
        }
        let g = &self.gro;
        if g.points_per_side == 0 {
            bail!("gro.points_per_side must be >= 1");
        }
        if g.crop_layers == 0 {
            bail!("gro.crop_layers must be >= 1");
        }
        if !(0.0..1.0).contains(&g.crop_overlap) {
            bail!("gro.crop_overlap {} outside [0, 1)", g.crop_overlap);
        }
        if !(0.0..=1.0).contains(&g.min_score) {
            bail!("gro.min_score {} outside [0, 1]", g.min_score);
        }
        if !(0.0..=1.0).contains(&g.nms_iou) {
            bail!("gro.nms_iou {} outside [0, 1]", g.nms_iou);
        }
        if !(self.eval.band_fraction > 0.0 && self.eval.band_fraction.is_finite()) {
            bail!("eval.band_fraction must be > 0");
        }
        if !(self.eval.beta_sq > 0.0 && self.eval.beta_sq.is_finite()) {
            bail!("eval.beta_sq must be > 0");
        }
        let backend = self.effective_backend();
        if backend != "mock" {
            backend
                .parse::<uosam_core::segmenter::BridgeAddress>()
                .map_err(|e| anyhow!("backend: {e}"))?;
        }
        Ok(())
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            enable_lro: self.lro.enabled,
            enable_gro: self.gro.enabled,
            grid: GridPlan::PerCrop(self.gro.points_per_side),
            crop_layers: self.gro.crop_layers,
            crop_overlap: self.gro.crop_overlap,
            min_score: self.gro.min_score,
            nms_iou: self.gro.nms_iou,
        }
    }

    pub fn eval_options(&self, class_count: usize) -> EvalOptions {
        EvalOptions {
            class_count,
            band_fraction: self.eval.band_fraction,
            beta_sq: self.eval.beta_sq,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides() {
        let cfg = PipelineConfig::default()
            .with_overrides([("gro.nms_iou", "0.5"), ("lro.enabled", "false"), ("backend", "tcp:h:1")])
            .unwrap();
        assert_eq!(cfg.gro.nms_iou, 0.5);
        assert!(!cfg.lro.enabled);
        assert_eq!(cfg.backend, "tcp:h:1");
        assert!(PipelineConfig::default().with_overrides([("gro.nope", "1")]).is_err());
        assert!(PipelineConfig::default().with_overrides([("workers.x", "1")]).is_err());
        assert!(PipelineConfig::default().with_overrides([("workers", "\"many\"")]).is_err());
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = |f: fn(&mut PipelineConfig)| {
            let mut c = PipelineConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.workers = 0));
        assert!(bad(|c| c.gro.nms_iou = 1.5));
        assert!(bad(|c| c.gro.crop_overlap = 1.0));
        assert!(bad(|c| c.eval.band_fraction = 0.0));
        assert!(bad(|c| c.backend = "carrier-pigeon".into()));
    }

    #[test]
    fn json_round_trip_with_partial_file() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"gro": {"min_score": 0.9}}"#).unwrap();
        assert_eq!(cfg.gro.min_score, 0.9);
        assert_eq!(cfg.gro.nms_iou, DEFAULT_NMS_IOU);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"grow": {}}"#).is_err());
    }
}
