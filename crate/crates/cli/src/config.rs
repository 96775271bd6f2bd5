use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use craterscan::annotations::{ClassMap, SplitSpec};
use craterscan::detector::{ConfDist, ReplayOracleConfig};
use craterscan::geodesy::{GeoRegion, SizeThresholds};
use craterscan::nms::check_threshold;
use craterscan::TileConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    #[default]
    Replay,
    Bridge { command: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train: s.train_frac,
            val: s.val_frac,
            test: s.test_frac,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayNoise {
    pub drop_prob: f64,
    pub jitter_px: f64,
    pub conf: ConfDist,
}

impl Default for ReplayNoise {
    fn default() -> Self {
        Self {
            drop_prob: 0.0,
            jitter_px: 0.0,
            conf: ConfDist::Fixed,
        }
    }
}

/// Everything that influences pipeline outputs. Worker count and output
/// paths are deliberately absent so they never change the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub tile_size: u32,
    pub overlap: f64,
    pub nms_iou: f64,
    pub class_aware: bool,
    pub match_iou: f64,
    pub thresholds: SizeThresholds,
    pub region: Option<PathBuf>,
    pub backend: BackendSpec,
    pub seed: u64,
    pub split: SplitFractions,
    pub replay: ReplayNoise,
    pub class_map: ClassMap,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let tile = TileConfig::default();
        Self {
            tile_size: tile.tile_size_px,
            overlap: tile.overlap_frac,
            nms_iou: craterscan::nms::DEFAULT_NMS_IOU,
            class_aware: true,
            match_iou: craterscan::evaluation::DEFAULT_MATCH_IOU,
            thresholds: SizeThresholds::default(),
            region: None,
            backend: BackendSpec::Replay,
            seed: 0,
            split: SplitFractions::default(),
            replay: ReplayNoise::default(),
            class_map: ClassMap::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tile_config()?;
        check_threshold(self.nms_iou).context("nms_iou")?;
        check_threshold(self.match_iou).context("match_iou")?;
        self.thresholds.validate()?;
        self.split_spec().validate()?;
        self.replay_config().validate()?;
        if let BackendSpec::Bridge { command } = &self.backend {
            if command.is_empty() {
                bail!("bridge backend needs a non-empty command");
            }
        }
        Ok(())
    }

    pub fn tile_config(&self) -> Result<TileConfig> {
        Ok(TileConfig::new(self.tile_size, self.overlap)?)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_frac: self.split.train,
            val_frac: self.split.val,
            test_frac: self.split.test,
            seed: self.seed,
        }
    }

    pub fn replay_config(&self) -> ReplayOracleConfig {
        ReplayOracleConfig {
            drop_prob: self.replay.drop_prob,
            jitter_px: self.replay.jitter_px,
            conf: self.replay.conf,
            seed: self.seed,
        }
    }

    pub fn load_region(&self, flag: Option<&Path>) -> Result<Option<GeoRegion>> {
        let Some(path) = flag.or(self.region.as_deref()) else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading region {}", path.display()))?;
        let region: GeoRegion =
            serde_json::from_str(&text).with_context(|| format!("parsing region {}", path.display()))?;
        region.validate()?;
        Ok(Some(region))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
