//! Pixel to physical scale conversion and crater size classification.
//!
//! Regions are small enough (a fraction of a degree) that a local
//! equirectangular approximation on a spherical body is used: the N-S extent
//! is `dlat * R` and the E-W extent is `dlon * R * cos(mean_lat)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("body radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("latitude bounds invalid: [{min}, {max}]")]
    InvalidLatitude { min: f64, max: f64 },
    #[error("longitude bounds invalid: [{min}, {max}] (degrees east in [0, 360), no wrap)")]
    InvalidLongitude { min: f64, max: f64 },
    #[error("image dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("mean latitude {0} deg is at a pole; E-W scale is undefined")]
    PolarRegion(f64),
    #[error("scene scale must be positive and finite, got ({x}, {y}) m/px")]
    InvalidScale { x: f64, y: f64 },
    #[error("size thresholds must satisfy 0 < small_max < large_min, got {small_max} / {large_min}")]
    InvalidThresholds { small_max: f64, large_min: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanetaryBody {
    pub name: String,
    pub radius_km: f64,
}

impl PlanetaryBody {
    pub fn new(name: impl Into<String>, radius_km: f64) -> Result<Self, GeoError> {
        let body = Self {
            name: name.into(),
            radius_km,
        };
        body.validate()?;
        Ok(body)
    }

    /// IAU mean radius of Mars.
    pub fn mars() -> Self {
        Self {
            name: "Mars".into(),
            radius_km: 3389.5,
        }
    }

    /// IAU mean radius of the Moon.
    pub fn moon() -> Self {
        Self {
            name: "Moon".into(),
            radius_km: 1737.4,
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.radius_km.is_finite() && self.radius_km > 0.0) {
            return Err(GeoError::InvalidRadius(self.radius_km));
        }
        Ok(())
    }
}

/// How image rows and columns map onto latitude and longitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orientation {
    /// Row 0 is the northern edge (latitude decreases down the image).
    pub north_up: bool,
    /// Column 0 is the western edge (longitude increases to the right).
    pub east_right: bool,
}

impl Default for Orientation {
    fn default() -> Self {
        Self {
            north_up: true,
            east_right: true,
        }
    }
}

/// Geographic bounds of an image footprint. This is also the on-disk region
/// file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoRegion {
    #[serde(rename = "lat_min")]
    pub lat_min_deg: f64,
    #[serde(rename = "lat_max")]
    pub lat_max_deg: f64,
    #[serde(rename = "lon_min")]
    pub lon_min_deg: f64,
    #[serde(rename = "lon_max")]
    pub lon_max_deg: f64,
    pub body: PlanetaryBody,
    #[serde(default)]
    pub orientation: Orientation,
}

impl GeoRegion {
    pub fn new(
        lat_min_deg: f64,
        lat_max_deg: f64,
        lon_min_deg: f64,
        lon_max_deg: f64,
        body: PlanetaryBody,
    ) -> Result<Self, GeoError> {
        let region = Self {
            lat_min_deg,
            lat_max_deg,
            lon_min_deg,
            lon_max_deg,
            body,
            orientation: Orientation::default(),
        };
        region.validate()?;
        Ok(region)
    }

    /// Mars study region: lat -25.40..-25.17, lon 196.23E..196.34E.
    pub fn mars_study_region() -> Self {
        Self::new(-25.40, -25.17, 196.23, 196.34, PlanetaryBody::mars())
            .expect("static region is valid")
    }

    /// Moon study region: lat -1.60..-1.27, lon 318.04E..318.16E.
    pub fn moon_study_region() -> Self {
        Self::new(-1.60, -1.27, 318.04, 318.16, PlanetaryBody::moon())
            .expect("static region is valid")
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        self.body.validate()?;
        let lat_ok = |v: f64| v.is_finite() && (-90.0..=90.0).contains(&v);
        if !(lat_ok(self.lat_min_deg) && lat_ok(self.lat_max_deg))
            || self.lat_min_deg >= self.lat_max_deg
        {
            return Err(GeoError::InvalidLatitude {
                min: self.lat_min_deg,
                max: self.lat_max_deg,
            });
        }
        let lon_ok = |v: f64| v.is_finite() && (0.0..360.0).contains(&v);
        // lon_max may sit exactly on 360 when the footprint ends at the meridian
        let lon_max_ok = self.lon_max_deg.is_finite() && (0.0..=360.0).contains(&self.lon_max_deg);
        if !(lon_ok(self.lon_min_deg) && lon_max_ok) || self.lon_min_deg >= self.lon_max_deg {
            return Err(GeoError::InvalidLongitude {
                min: self.lon_min_deg,
                max: self.lon_max_deg,
            });
        }
        Ok(())
    }

    pub fn mean_lat_deg(&self) -> f64 {
        0.5 * (self.lat_min_deg + self.lat_max_deg)
    }

    /// North-south extent in kilometres.
    pub fn ns_extent_km(&self) -> f64 {
        (self.lat_max_deg - self.lat_min_deg).to_radians() * self.body.radius_km
    }

    /// East-west extent in kilometres, measured along the mean latitude.
    pub fn ew_extent_km(&self) -> f64 {
        (self.lon_max_deg - self.lon_min_deg).to_radians()
            * self.body.radius_km
            * self.mean_lat_deg().to_radians().cos()
    }

    /// Planar footprint area in square kilometres.
    pub fn area_km2(&self) -> f64 {
        self.ns_extent_km() * self.ew_extent_km()
    }

    /// Linear pixel to (lat, lon) interpolation. `x`, `y` are continuous pixel
    /// coordinates with (0, 0) at the image corner.
    pub fn pixel_to_latlon(&self, x: f64, y: f64, width_px: u32, height_px: u32) -> (f64, f64) {
        let fx = x / f64::from(width_px);
        let fy = y / f64::from(height_px);
        let dlat = self.lat_max_deg - self.lat_min_deg;
        let dlon = self.lon_max_deg - self.lon_min_deg;
        let lat = if self.orientation.north_up {
            self.lat_max_deg - fy * dlat
        } else {
            self.lat_min_deg + fy * dlat
        };
        let lon = if self.orientation.east_right {
            self.lon_min_deg + fx * dlon
        } else {
            self.lon_max_deg - fx * dlon
        };
        (lat, lon)
    }
}

/// Ground sampling distance of an image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneScale {
    pub metres_per_px_x: f64,
    pub metres_per_px_y: f64,
}

impl SceneScale {
    pub fn new(metres_per_px_x: f64, metres_per_px_y: f64) -> Result<Self, GeoError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(metres_per_px_x) && ok(metres_per_px_y)) {
            return Err(GeoError::InvalidScale {
                x: metres_per_px_x,
                y: metres_per_px_y,
            });
        }
        Ok(Self {
            metres_per_px_x,
            metres_per_px_y,
        })
    }

    pub fn isotropic(metres_per_px: f64) -> Result<Self, GeoError> {
        Self::new(metres_per_px, metres_per_px)
    }
}

pub fn scene_scale(
    region: &GeoRegion,
    image_width_px: u32,
    image_height_px: u32,
) -> Result<SceneScale, GeoError> {
    region.validate()?;
    if image_width_px == 0 || image_height_px == 0 {
        return Err(GeoError::ZeroDimension {
            width: image_width_px,
            height: image_height_px,
        });
    }
    let mean_lat = region.mean_lat_deg();
    if mean_lat.abs() >= 90.0 {
        return Err(GeoError::PolarRegion(mean_lat));
    }
    let ns_m = region.ns_extent_km() * 1000.0;
    let ew_m = region.ew_extent_km() * 1000.0;
    SceneScale::new(
        ew_m / f64::from(image_width_px),
        ns_m / f64::from(image_height_px),
    )
}

/// Physical diameter of a box: the larger of its two ground extents, in km.
pub fn box_diameter_km(bbox: &PixelBox, scale: &SceneScale) -> f64 {
    let w_m = bbox.width() * scale.metres_per_px_x;
    let h_m = bbox.height() * scale.metres_per_px_y;
    w_m.max(h_m) / 1000.0
}

/// Pixel diameter of a box: the larger of width and height.
pub fn box_diameter_px(bbox: &PixelBox) -> f64 {
    bbox.width().max(bbox.height())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitMode {
    #[default]
    Kilometres,
    Pixels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeThresholds {
    /// Upper bound of the Small band (exclusive).
    pub small_max: f64,
    /// Lower bound of the Large band (exclusive).
    pub large_min: f64,
    #[serde(default)]
    pub unit_mode: UnitMode,
}

impl Default for SizeThresholds {
    fn default() -> Self {
        Self {
            small_max: 10.0,
            large_min: 50.0,
            unit_mode: UnitMode::Kilometres,
        }
    }
}

impl SizeThresholds {
    pub fn new(small_max: f64, large_min: f64, unit_mode: UnitMode) -> Result<Self, GeoError> {
        let t = Self {
            small_max,
            large_min,
            unit_mode,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let ok = self.small_max.is_finite()
            && self.large_min.is_finite()
            && self.small_max > 0.0
            && self.small_max < self.large_min;
        if !ok {
            return Err(GeoError::InvalidThresholds {
                small_max: self.small_max,
                large_min: self.large_min,
            });
        }
        Ok(())
    }

    /// Diameter of `bbox` in this threshold set's unit. Kilometre mode needs a
    /// scale; pixel mode ignores it.
    pub fn diameter_of(&self, bbox: &PixelBox, scale: Option<&SceneScale>) -> Option<f64> {
        match self.unit_mode {
            UnitMode::Pixels => Some(box_diameter_px(bbox)),
            UnitMode::Kilometres => scale.map(|s| box_diameter_km(bbox, s)),
        }
    }

    pub fn unit_label(&self) -> &'static str {
        match self.unit_mode {
            UnitMode::Kilometres => "km",
            UnitMode::Pixels => "px",
        }
    }
}

/// Crater size taxonomy. Numeric ids follow the labelled datasets:
/// 0 = Large, 1 = Small, 2 = Medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Large, SizeClass::Small, SizeClass::Medium];

    pub fn id(self) -> u32 {
        match self {
            SizeClass::Large => 0,
            SizeClass::Small => 1,
            SizeClass::Medium => 2,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(SizeClass::Large),
            1 => Some(SizeClass::Small),
            2 => Some(SizeClass::Medium),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Small => "Small",
            SizeClass::Medium => "Medium",
            SizeClass::Large => "Large",
        }
    }
}

impl std::fmt::Display for SizeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Boundary values (exactly `small_max` or `large_min`) fall in Medium.
pub fn size_class(diameter: f64, thresholds: &SizeThresholds) -> SizeClass {
    if diameter < thresholds.small_max {
        SizeClass::Small
    } else if diameter <= thresholds.large_min {
        SizeClass::Medium
    } else {
        SizeClass::Large
    }
}
