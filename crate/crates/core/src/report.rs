//! Region summary: crater counts by size class, density, a log-binned size
//! histogram and a geo-located crater list, rendered as JSON, CSV or Markdown.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::DetectionRun;
use crate::geodesy::{size_class, GeoError, GeoRegion, SceneScale, SizeClass, SizeThresholds};

pub const REPORT_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 8;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("kilometre thresholds require a scene scale")]
    MissingScale,
    #[error("unknown report format `{0}` (expected json, csv or markdown)")]
    UnknownFormat(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeCounts {
    pub small: usize,
    pub medium: usize,
    pub large: usize,
}

impl SizeCounts {
    pub fn add(&mut self, c: SizeClass) {
        match c {
            SizeClass::Small => self.small += 1,
            SizeClass::Medium => self.medium += 1,
            SizeClass::Large => self.large += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.small + self.medium + self.large
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CraterRecord {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub diameter: f64,
    pub size_class: SizeClass,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub report_version: u32,
    pub region: GeoRegion,
    pub image_id: String,
    /// Unit of `diameter` and histogram edges: "km" or "px".
    pub diameter_unit: String,
    pub counts: SizeCounts,
    pub area_km2: f64,
    pub density_per_km2: f64,
    pub size_histogram: Vec<HistogramBin>,
    pub craters: Vec<CraterRecord>,
}

/// `bins` logarithmic bins spanning `[min, max]` of `values`. The last bin is
/// closed on the right. A single distinct value gets bins spanning a factor of
/// two either side of it.
pub fn log_histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let positive: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
    if positive.is_empty() || bins == 0 {
        return Vec::new();
    }
    let mut lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo /= 2.0;
        hi *= 2.0;
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / bins as f64;
    let edge = |i: usize| -> f64 {
        match i {
            0 => lo,
            i if i == bins => hi,
            i => (llo + step * i as f64).exp(),
        }
    };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: edge(i),
            hi: edge(i + 1),
            count: 0,
        })
        .collect();
    for v in positive {
        let k = out
            .iter()
            .position(|b| v < b.hi)
            .unwrap_or(bins - 1);
        out[k].count += 1;
    }
    out
}

/// Classify every detection, place it on the region grid and summarize.
/// `scale` is only needed for kilometre thresholds.
pub fn region_report(
    run: &DetectionRun,
    region: &GeoRegion,
    scale: Option<&SceneScale>,
    thresholds: &SizeThresholds,
) -> Result<RegionReport, ReportError> {
    region.validate()?;
    thresholds.validate()?;
    let mut counts = SizeCounts::default();
    let mut craters = Vec::with_capacity(run.detections.len());
    for d in &run.detections {
        let diameter = thresholds
            .diameter_of(&d.bbox, scale)
            .ok_or(ReportError::MissingScale)?;
        let class = size_class(diameter, thresholds);
        counts.add(class);
        let (cx, cy) = d.bbox.center();
        let (lat_deg, lon_deg) = region.pixel_to_latlon(cx, cy, run.width, run.height);
        craters.push(CraterRecord {
            lat_deg,
            lon_deg,
            diameter,
            size_class: class,
            confidence: d.confidence,
        });
    }
    let area_km2 = region.area_km2();
    let total = counts.total();
    let diameters: Vec<f64> = craters.iter().map(|c| c.diameter).collect();
    Ok(RegionReport {
        report_version: REPORT_VERSION,
        region: region.clone(),
        image_id: run.image_id.clone(),
        diameter_unit: thresholds.unit_label().to_string(),
        counts,
        area_km2,
        density_per_km2: if total == 0 { 0.0 } else { total as f64 / area_km2 },
        size_histogram: log_histogram(&diameters, HISTOGRAM_BINS),
        craters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

pub fn render(report: &RegionReport, format: ReportFormat) -> Result<String, ReportError> {
    Ok(match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report),
    })
}

pub fn parse_json(text: &str) -> Result<RegionReport, ReportError> {
    Ok(serde_json::from_str(text)?)
}

fn render_csv(r: &RegionReport) -> String {
    let mut out = String::from("lat_deg,lon_deg,diameter,size_class,confidence\n");
    for c in &r.craters {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.lat_deg, c.lon_deg, c.diameter, c.size_class, c.confidence
        );
    }
    out
}

fn render_markdown(r: &RegionReport) -> String {
    let mut out = String::new();
    let reg = &r.region;
    let _ = writeln!(out, "# Crater report: {}\n", r.image_id);
    let _ = writeln!(
        out,
        "{} region, latitude {}° to {}°, longitude {}°E to {}°E, area {:.3} km²\n",
        reg.body.name, reg.lat_min_deg, reg.lat_max_deg, reg.lon_min_deg, reg.lon_max_deg, r.area_km2
    );
    let _ = writeln!(out, "| Size class | Count |");
    let _ = writeln!(out, "|---|---:|");
    let _ = writeln!(out, "| Large | {} |", r.counts.large);
    let _ = writeln!(out, "| Medium | {} |", r.counts.medium);
    let _ = writeln!(out, "| Small | {} |", r.counts.small);
    let _ = writeln!(out, "| **Total** | {} |", r.counts.total());
    let _ = writeln!(out, "\nDensity: {:.4} craters/km²\n", r.density_per_km2);
    if !r.size_histogram.is_empty() {
        let _ = writeln!(out, "| Diameter ({}) | Count |", r.diameter_unit);
        let _ = writeln!(out, "|---|---:|");
        for b in &r.size_histogram {
            let _ = writeln!(out, "| {:.4} – {:.4} | {} |", b.lo, b.hi, b.count);
        }
    }
    out
}
