//! Replay oracle: a backend that answers from ground-truth annotations.
//!
//! A window returns every ground-truth box lying fully inside it. Optional
//! noise (drop, per-edge jitter, random confidence) is drawn from a stream
//! keyed by `(seed, image id, window index, box index)`, so answers do not
//! depend on call order or thread scheduling.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BackendError, Capabilities, DetectorBackend, GroundTruth, WindowRequest};
use crate::annotations::AnnotatedImage;
use crate::geometry::PixelBox;
use crate::nms::Detection;
use crate::tiling::Window;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("drop probability must lie in [0, 1], got {0}")]
    DropProb(f64),
    #[error("jitter must be finite and non-negative, got {0}")]
    Jitter(f64),
    #[error("confidence range must satisfy 0 <= lo <= hi <= 1, got [{0}, {1}]")]
    ConfRange(f64, f64),
    #[error("image `{0}` has no annotations in the replay set")]
    UnknownImage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConfDist {
    /// Every detection gets confidence 1.0.
    Fixed,
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayOracleConfig {
    #[serde(default)]
    pub drop_prob: f64,
    #[serde(default)]
    pub jitter_px: f64,
    #[serde(default = "default_conf")]
    pub conf: ConfDist,
    #[serde(default)]
    pub seed: u64,
}

fn default_conf() -> ConfDist {
    ConfDist::Fixed
}

impl Default for ReplayOracleConfig {
    fn default() -> Self {
        Self {
            drop_prob: 0.0,
            jitter_px: 0.0,
            conf: ConfDist::Fixed,
            seed: 0,
        }
    }
}

impl ReplayOracleConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        if !(self.drop_prob.is_finite() && (0.0..=1.0).contains(&self.drop_prob)) {
            return Err(ReplayError::DropProb(self.drop_prob));
        }
        if !(self.jitter_px.is_finite() && self.jitter_px >= 0.0) {
            return Err(ReplayError::Jitter(self.jitter_px));
        }
        if let ConfDist::Uniform { lo, hi } = self.conf {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(ReplayError::ConfRange(lo, hi));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.drop_prob == 0.0 && self.jitter_px == 0.0 && self.conf == ConfDist::Fixed
    }
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn noise_rng(seed: u64, image_id: &str, window: usize, box_index: usize) -> ChaCha8Rng {
    let mut k = splitmix(seed ^ fnv1a(image_id.as_bytes()));
    k = splitmix(k ^ window as u64);
    k = splitmix(k ^ box_index as u64);
    ChaCha8Rng::seed_from_u64(k)
}

/// Answer one window from `gt` (image coordinates). Output is window-local.
pub fn replay_detect(
    image_id: &str,
    window: &Window,
    gt: &[GroundTruth],
    cfg: &ReplayOracleConfig,
) -> Vec<Detection> {
    let (ox, oy) = window.origin();
    let (ww, wh) = (f64::from(window.w), f64::from(window.h));
    let mut out = Vec::new();
    for (box_index, g) in gt.iter().enumerate() {
        if !window.contains_box(&g.bbox) {
            continue;
        }
        let local = g.bbox.translate(-ox, -oy);
        let mut rng = noise_rng(cfg.seed, image_id, window.index, box_index);
        // draw order is fixed: drop, four edges, confidence
        let u_drop: f64 = rng.gen();
        if u_drop < cfg.drop_prob {
            continue;
        }
        let bbox = if cfg.jitter_px > 0.0 {
            let j = cfg.jitter_px;
            let mut e = local.to_array();
            for v in e.iter_mut() {
                *v += rng.gen_range(-j..=j);
            }
            PixelBox::new(e[0].clamp(0.0, ww), e[1].clamp(0.0, wh), e[2].clamp(0.0, ww), e[3].clamp(0.0, wh))
                .unwrap_or(local)
        } else {
            local
        };
        let confidence = match cfg.conf {
            ConfDist::Fixed => 1.0,
            ConfDist::Uniform { lo, hi } => {
                if hi > lo {
                    rng.gen_range(lo..=hi)
                } else {
                    lo
                }
            }
        };
        out.push(Detection {
            bbox,
            class_id: g.class_id,
            confidence,
            source_window: None,
        });
    }
    out
}

/// Replay backend over a set of annotated images.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    caps: Capabilities,
    cfg: ReplayOracleConfig,
    truth: HashMap<String, Vec<GroundTruth>>,
}

impl ReplayOracle {
    pub fn new(
        truth: HashMap<String, Vec<GroundTruth>>,
        cfg: ReplayOracleConfig,
    ) -> Result<Self, ReplayError> {
        cfg.validate()?;
        let mut classes: Vec<u32> = truth.values().flatten().map(|g| g.class_id).collect();
        classes.sort_unstable();
        classes.dedup();
        Ok(Self {
            caps: Capabilities {
                backend_id: "replay".into(),
                max_input_px: u32::MAX,
                classes,
                single_flight: false,
            },
            cfg,
            truth,
        })
    }

    pub fn from_images<'a>(
        images: impl IntoIterator<Item = &'a AnnotatedImage>,
        cfg: ReplayOracleConfig,
    ) -> Result<Self, ReplayError> {
        let truth = images
            .into_iter()
            .map(|img| {
                let gt = img
                    .pixel_boxes()
                    .map(|(class_id, bbox)| GroundTruth { class_id, bbox })
                    .collect();
                (img.id.clone(), gt)
            })
            .collect();
        Self::new(truth, cfg)
    }

    pub fn with_max_input_px(mut self, max: u32) -> Self {
        self.caps.max_input_px = max;
        self
    }

    pub fn config(&self) -> &ReplayOracleConfig {
        &self.cfg
    }

    pub fn truth(&self, image_id: &str) -> Option<&[GroundTruth]> {
        self.truth.get(image_id).map(Vec::as_slice)
    }
}

impl DetectorBackend for ReplayOracle {
    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn detect(&self, request: &WindowRequest<'_>) -> Result<Vec<Detection>, BackendError> {
        let gt = self
            .truth
            .get(&request.image.id)
            .ok_or_else(|| BackendError(ReplayError::UnknownImage(request.image.id.clone()).to_string()))?;
        Ok(replay_detect(&request.image.id, &request.window, gt, &self.cfg))
    }
}
