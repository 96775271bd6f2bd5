//! Sliding-window coverage of large images.
//!
//! Along each axis windows start at `0, s, 2s, ...` (stride `s`) for as long as
//! they fit, then one flush window ends exactly at the image edge. Images
//! smaller than a tile get a single window that is padded with black.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelBox;

pub const DEFAULT_TILE_SIZE: u32 = 640;
pub const DEFAULT_OVERLAP: f64 = 0.30;
pub const MAX_OVERLAP: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TilingError {
    #[error("tile size must be positive")]
    ZeroTile,
    #[error("overlap fraction must lie in [0, {MAX_OVERLAP}], got {0}")]
    InvalidOverlap(f64),
    #[error("image dimensions must be positive, got {0}x{1}")]
    ZeroImage(u32, u32),
    #[error("box {bbox:?} exceeds the {w}x{h} window")]
    BoxOutsideWindow { bbox: [f64; 4], w: u32, h: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileConfig {
    pub tile_size_px: u32,
    pub overlap_frac: f64,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            tile_size_px: DEFAULT_TILE_SIZE,
            overlap_frac: DEFAULT_OVERLAP,
        }
    }
}

impl TileConfig {
    pub fn new(tile_size_px: u32, overlap_frac: f64) -> Result<Self, TilingError> {
        let c = Self {
            tile_size_px,
            overlap_frac,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), TilingError> {
        if self.tile_size_px == 0 {
            return Err(TilingError::ZeroTile);
        }
        if !(self.overlap_frac.is_finite() && (0.0..=MAX_OVERLAP).contains(&self.overlap_frac)) {
            return Err(TilingError::InvalidOverlap(self.overlap_frac));
        }
        Ok(())
    }

    pub fn stride(&self) -> u32 {
        let s = (f64::from(self.tile_size_px) * (1.0 - self.overlap_frac)).round() as u32;
        s.max(1)
    }

    /// Largest box side guaranteed to fall entirely inside some window.
    pub fn containment_guarantee_px(&self) -> u32 {
        self.tile_size_px - self.stride().min(self.tile_size_px)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
    /// Part of the window lies beyond the image and is filled black.
    pub padded: bool,
}

impl Window {
    pub fn origin(&self) -> (f64, f64) {
        (f64::from(self.x0), f64::from(self.y0))
    }

    pub fn contains_box(&self, bbox: &PixelBox) -> bool {
        bbox.is_inside(
            f64::from(self.x0),
            f64::from(self.y0),
            f64::from(self.w),
            f64::from(self.h),
        )
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && y >= self.y0 && x - self.x0 < self.w && y - self.y0 < self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilePlan {
    pub image_w: u32,
    pub image_h: u32,
    pub config: TileConfig,
    pub stride: u32,
    /// Row-major by `(y0, x0)`.
    pub windows: Vec<Window>,
}

impl TilePlan {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn x_starts(&self) -> Vec<u32> {
        axis_starts(self.image_w, self.config.tile_size_px, self.stride)
    }

    pub fn y_starts(&self) -> Vec<u32> {
        axis_starts(self.image_h, self.config.tile_size_px, self.stride)
    }
}

/// Window start offsets along one axis.
pub fn axis_starts(dim: u32, tile: u32, stride: u32) -> Vec<u32> {
    if dim <= tile {
        return vec![0];
    }
    let last = dim - tile;
    let mut starts: Vec<u32> = (0..=last).step_by(stride as usize).collect();
    if *starts.last().expect("range includes 0") != last {
        starts.push(last);
    }
    starts
}

pub fn plan_tiles(image_w: u32, image_h: u32, config: TileConfig) -> Result<TilePlan, TilingError> {
    config.validate()?;
    if image_w == 0 || image_h == 0 {
        return Err(TilingError::ZeroImage(image_w, image_h));
    }
    let tile = config.tile_size_px;
    let stride = config.stride();
    let xs = axis_starts(image_w, tile, stride);
    let ys = axis_starts(image_h, tile, stride);
    let mut windows = Vec::with_capacity(xs.len() * ys.len());
    for &y0 in &ys {
        for &x0 in &xs {
            windows.push(Window {
                index: windows.len(),
                x0,
                y0,
                w: tile,
                h: tile,
                padded: x0 + tile > image_w || y0 + tile > image_h,
            });
        }
    }
    Ok(TilePlan {
        image_w,
        image_h,
        config,
        stride,
        windows,
    })
}

/// Translate a window-local box into image coordinates.
pub fn to_global(bbox: &PixelBox, window: &Window) -> Result<PixelBox, TilingError> {
    if !bbox.is_inside(0.0, 0.0, f64::from(window.w), f64::from(window.h)) {
        return Err(TilingError::BoxOutsideWindow {
            bbox: bbox.to_array(),
            w: window.w,
            h: window.h,
        });
    }
    let (dx, dy) = window.origin();
    Ok(bbox.translate(dx, dy))
}
