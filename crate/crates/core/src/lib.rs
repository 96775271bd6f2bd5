//! Two-stage crater detection over large planetary images.
//!
//! The pipeline tiles an image into overlapping windows, runs a detector
//! backend on each, merges the results with NMS, classifies craters by size
//! and summarizes a region. Evaluation utilities score detections against
//! YOLO-format ground truth and compare models by mean rank.

pub mod annotations;
pub mod detector;
pub mod evaluation;
pub mod geodesy;
pub mod geometry;
pub mod nms;
pub mod report;
pub mod tiling;

pub use detector::{
    detect_direct, detect_tiled, DetectMode, DetectOptions, DetectionRun, DetectorBackend,
    GroundTruth, RunFile, SceneImage,
};
pub use geometry::{iou, PixelBox};
pub use nms::{nms, Detection};
pub use tiling::{plan_tiles, TileConfig, TilePlan};
