//! Direct and sliding-window detection over pluggable backends.
//!
//! A backend sees one window at a time and answers in window-local pixel
//! coordinates. The orchestrator checks the backend contract, translates
//! results into image coordinates, sorts them into a fixed total order and
//! merges duplicates with NMS. Window dispatch may run on several workers;
//! merging happens once, after every window has returned, so the output does
//! not depend on completion order.

mod bridge;
mod replay;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bridge::{
    BridgeBackend, BridgeError, BridgeRequest, BridgeResponse, Handshake, PROTOCOL_VERSION,
};
pub use replay::{replay_detect, ConfDist, ReplayError, ReplayOracle, ReplayOracleConfig};

use crate::geometry::PixelBox;
use crate::nms::{check_threshold, nms, sort_detections, Detection, DetectionError, DEFAULT_NMS_IOU};
use crate::tiling::{to_global, TilePlan, Window};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct BackendError(pub String);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("backend `{backend}` failed{}: {message}", window_suffix(*.window))]
    Backend {
        backend: String,
        window: Option<usize>,
        message: String,
    },
    #[error("backend `{backend}` violated its contract{}: {detail}", window_suffix(*.window))]
    ContractViolation {
        backend: String,
        window: Option<usize>,
        detail: String,
    },
    #[error("{width}x{height} image exceeds backend input limit of {max} px")]
    Oversized { width: u32, height: u32, max: u32 },
    #[error("tile plan is for {plan_w}x{plan_h} but image is {width}x{height}")]
    PlanMismatch {
        plan_w: u32,
        plan_h: u32,
        width: u32,
        height: u32,
    },
    #[error("invalid worker count {0}")]
    Jobs(usize),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

fn window_suffix(window: Option<usize>) -> String {
    window.map(|w| format!(" on window {w}")).unwrap_or_default()
}

impl DetectorError {
    /// True for failures attributable to the backend rather than the inputs.
    pub fn is_backend_failure(&self) -> bool {
        matches!(self, DetectorError::Backend { .. } | DetectorError::ContractViolation { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub backend_id: String,
    /// Largest image side accepted in a single call.
    pub max_input_px: u32,
    pub classes: Vec<u32>,
    /// The backend cannot take concurrent `detect` calls.
    pub single_flight: bool,
}

/// An image handed to detection. Pixels are optional: the replay oracle and
/// the bridge (which reads `path` itself) never need them.
#[derive(Debug, Clone)]
pub struct SceneImage {
    pub id: String,
    pub path: Option<PathBuf>,
    pub width: u32,
    pub height: u32,
    pub pixels: Option<Arc<GrayImage>>,
}

impl SceneImage {
    pub fn new(id: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            id: id.into(),
            path: None,
            width,
            height,
            pixels: None,
        }
    }

    pub fn with_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn with_pixels(mut self, pixels: GrayImage) -> Self {
        self.pixels = Some(Arc::new(pixels));
        self
    }

    pub fn full_frame(&self) -> Window {
        Window {
            index: 0,
            x0: 0,
            y0: 0,
            w: self.width,
            h: self.height,
            padded: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WindowRequest<'a> {
    pub image: &'a SceneImage,
    pub window: Window,
}

impl WindowRequest<'_> {
    /// The window's pixels, with any part beyond the image filled black.
    pub fn pixels(&self) -> Option<GrayImage> {
        let src = self.image.pixels.as_deref()?;
        let Window { x0, y0, w, h, .. } = self.window;
        let cw = w.min(src.width().saturating_sub(x0));
        let ch = h.min(src.height().saturating_sub(y0));
        let region = image::imageops::crop_imm(src, x0, y0, cw, ch).to_image();
        if (cw, ch) == (w, h) {
            return Some(region);
        }
        let mut out = GrayImage::new(w, h);
        image::imageops::replace(&mut out, &region, 0, 0);
        Some(out)
    }
}

pub trait DetectorBackend: Send + Sync {
    fn capabilities(&self) -> &Capabilities;

    /// Detect inside one window. Boxes are window-local.
    fn detect(&self, request: &WindowRequest<'_>) -> Result<Vec<Detection>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectMode {
    Direct,
    Tiled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    pub nms_iou: f64,
    pub class_aware: bool,
    /// Worker threads for window dispatch.
    pub jobs: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            nms_iou: DEFAULT_NMS_IOU,
            class_aware: true,
            jobs: 1,
        }
    }
}

/// Detections for one image, in image coordinates, NMS-merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRun {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub mode: DetectMode,
    pub backend_id: String,
    pub detections: Vec<Detection>,
}

fn check_contract(
    backend: &str,
    window: &Window,
    window_tag: Option<usize>,
    dets: &[Detection],
) -> Result<(), DetectorError> {
    for d in dets {
        if !d.bbox.is_inside(0.0, 0.0, f64::from(window.w), f64::from(window.h)) {
            return Err(DetectorError::ContractViolation {
                backend: backend.to_string(),
                window: window_tag,
                detail: format!(
                    "box {:?} outside {}x{} window",
                    d.bbox.to_array(),
                    window.w,
                    window.h
                ),
            });
        }
        if !(d.confidence.is_finite() && (0.0..=1.0).contains(&d.confidence)) {
            return Err(DetectorError::ContractViolation {
                backend: backend.to_string(),
                window: window_tag,
                detail: format!("confidence {} outside [0, 1]", d.confidence),
            });
        }
    }
    Ok(())
}

/// One backend call over the whole frame.
pub fn detect_direct(
    image: &SceneImage,
    backend: &dyn DetectorBackend,
    opts: &DetectOptions,
) -> Result<DetectionRun, DetectorError> {
    check_threshold(opts.nms_iou)?;
    let caps = backend.capabilities();
    if image.width.max(image.height) > caps.max_input_px {
        return Err(DetectorError::Oversized {
            width: image.width,
            height: image.height,
            max: caps.max_input_px,
        });
    }
    let window = image.full_frame();
    let dets = backend
        .detect(&WindowRequest { image, window })
        .map_err(|e| DetectorError::Backend {
            backend: caps.backend_id.clone(),
            window: None,
            message: e.0,
        })?;
    check_contract(&caps.backend_id, &window, None, &dets)?;
    let detections = nms(&dets, opts.nms_iou, opts.class_aware)?;
    Ok(DetectionRun {
        image_id: image.id.clone(),
        width: image.width,
        height: image.height,
        mode: DetectMode::Direct,
        backend_id: caps.backend_id.clone(),
        detections,
    })
}

fn detect_window(
    image: &SceneImage,
    window: &Window,
    backend: &dyn DetectorBackend,
) -> Result<Vec<Detection>, DetectorError> {
    let caps = backend.capabilities();
    let local = backend
        .detect(&WindowRequest {
            image,
            window: *window,
        })
        .map_err(|e| DetectorError::Backend {
            backend: caps.backend_id.clone(),
            window: Some(window.index),
            message: e.0,
        })?;
    check_contract(&caps.backend_id, window, Some(window.index), &local)?;
    local
        .into_iter()
        .map(|d| {
            let bbox = to_global(&d.bbox, window).map_err(|e| DetectorError::ContractViolation {
                backend: caps.backend_id.clone(),
                window: Some(window.index),
                detail: e.to_string(),
            })?;
            Ok(Detection {
                bbox,
                source_window: Some(window.index),
                ..d
            })
        })
        .collect()
}

/// Detect every window independently, translate into image coordinates and
/// merge with NMS. The first failing window (lowest index) aborts the run.
pub fn detect_tiled(
    image: &SceneImage,
    plan: &TilePlan,
    backend: &dyn DetectorBackend,
    opts: &DetectOptions,
) -> Result<DetectionRun, DetectorError> {
    check_threshold(opts.nms_iou)?;
    if opts.jobs == 0 {
        return Err(DetectorError::Jobs(0));
    }
    if (plan.image_w, plan.image_h) != (image.width, image.height) {
        return Err(DetectorError::PlanMismatch {
            plan_w: plan.image_w,
            plan_h: plan.image_h,
            width: image.width,
            height: image.height,
        });
    }
    let caps = backend.capabilities();
    let per_window: Vec<Result<Vec<Detection>, DetectorError>> =
        if caps.single_flight || opts.jobs == 1 {
            plan.windows
                .iter()
                .map(|w| detect_window(image, w, backend))
                .collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.jobs)
                .build()
                .map_err(|_| DetectorError::Jobs(opts.jobs))?;
            pool.install(|| {
                plan.windows
                    .par_iter()
                    .map(|w| detect_window(image, w, backend))
                    .collect()
            })
        };
    let mut merged = Vec::new();
    for r in per_window {
        merged.extend(r?);
    }
    sort_detections(&mut merged);
    let detections = nms(&merged, opts.nms_iou, opts.class_aware)?;
    Ok(DetectionRun {
        image_id: image.id.clone(),
        width: image.width,
        height: image.height,
        mode: DetectMode::Tiled,
        backend_id: caps.backend_id.clone(),
        detections,
    })
}

/// Origin of a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub backend_id: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub width: u32,
    pub height: u32,
    pub detections: Vec<Detection>,
}

/// On-disk run file: image id to detections, plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub run_version: u32,
    pub mode: DetectMode,
    pub provenance: Provenance,
    pub images: BTreeMap<String, ImageDetections>,
}

impl RunFile {
    pub const VERSION: u32 = 1;

    pub fn new(mode: DetectMode, provenance: Provenance, runs: impl IntoIterator<Item = DetectionRun>) -> Self {
        let images = runs
            .into_iter()
            .map(|r| {
                (
                    r.image_id,
                    ImageDetections {
                        width: r.width,
                        height: r.height,
                        detections: r.detections,
                    },
                )
            })
            .collect();
        Self {
            run_version: Self::VERSION,
            mode,
            provenance,
            images,
        }
    }

    pub fn run_for(&self, image_id: &str) -> Option<DetectionRun> {
        self.images.get(image_id).map(|img| DetectionRun {
            image_id: image_id.to_string(),
            width: img.width,
            height: img.height,
            mode: self.mode,
            backend_id: self.provenance.backend_id.clone(),
            detections: img.detections.clone(),
        })
    }
}

/// A ground-truth box with its class, in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class_id: u32,
    pub bbox: PixelBox,
}
