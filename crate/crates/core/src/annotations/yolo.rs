//! YOLO text labels: one `class cx cy w h` line per box, normalized to the
//! image dimensions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineErrorKind {
    #[error("expected 5 tokens (class cx cy w h), found {0}")]
    TokenCount(usize),
    #[error("field `{field}` is not numeric: {value:?}")]
    NotNumeric { field: &'static str, value: String },
    #[error("field `{field}` out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct LineError {
    pub line: usize,
    pub kind: LineErrorKind,
}

/// A box in YOLO-normalized form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormBox {
    pub fn new(class_id: u32, cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, LineErrorKind> {
        let nb = Self {
            class_id,
            cx,
            cy,
            w,
            h,
        };
        nb.validate()?;
        Ok(nb)
    }

    pub fn validate(&self) -> Result<(), LineErrorKind> {
        let centre = |field, v: f64| {
            if v.is_finite() && (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(LineErrorKind::OutOfRange { field, value: v })
            }
        };
        let size = |field, v: f64| {
            if v.is_finite() && v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(LineErrorKind::OutOfRange { field, value: v })
            }
        };
        centre("cx", self.cx)?;
        centre("cy", self.cy)?;
        size("w", self.w)?;
        size("h", self.h)
    }

    /// Serialize as a label line (6 decimal places, no trailing newline).
    pub fn to_yolo_line(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class_id, self.cx, self.cy, self.w, self.h
        )
    }
}

/// Parse one label line. `line_no` is 1-based and only used for error reports.
pub fn parse_yolo_line(line: &str, line_no: usize) -> Result<NormBox, LineError> {
    let err = |kind| LineError { line: line_no, kind };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 5 {
        return Err(err(LineErrorKind::TokenCount(tokens.len())));
    }
    let class_id = tokens[0].parse::<u32>().map_err(|_| {
        err(LineErrorKind::NotNumeric {
            field: "class",
            value: tokens[0].to_string(),
        })
    })?;
    const FIELDS: [&str; 4] = ["cx", "cy", "w", "h"];
    let mut vals = [0.0f64; 4];
    for (i, field) in FIELDS.iter().enumerate() {
        let tok = tokens[i + 1];
        vals[i] = tok.parse::<f64>().map_err(|_| {
            err(LineErrorKind::NotNumeric {
                field,
                value: tok.to_string(),
            })
        })?;
    }
    NormBox::new(class_id, vals[0], vals[1], vals[2], vals[3]).map_err(err)
}

/// Parse a whole label file. Blank lines are skipped.
pub fn parse_label_text(text: &str) -> Result<Vec<NormBox>, LineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_yolo_line(l, i + 1))
        .collect()
}

pub fn write_label_text(boxes: &[NormBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        let _ = writeln!(out, "{}", b.to_yolo_line());
    }
    out
}

/// Convert to pixel space, clamped to the image.
pub fn denormalize(nb: &NormBox, width_px: u32, height_px: u32) -> PixelBox {
    let (w, h) = (f64::from(width_px), f64::from(height_px));
    let x_min = ((nb.cx - nb.w / 2.0) * w).clamp(0.0, w);
    let x_max = ((nb.cx + nb.w / 2.0) * w).clamp(0.0, w);
    let y_min = ((nb.cy - nb.h / 2.0) * h).clamp(0.0, h);
    let y_max = ((nb.cy + nb.h / 2.0) * h).clamp(0.0, h);
    // a valid NormBox always keeps positive extent after clamping
    PixelBox::new(x_min, y_min, x_max, y_max).expect("valid NormBox denormalizes to a valid box")
}

/// Inverse of [`denormalize`] for boxes inside the image.
pub fn normalize(
    bbox: &PixelBox,
    class_id: u32,
    width_px: u32,
    height_px: u32,
) -> Result<NormBox, LineErrorKind> {
    let (w, h) = (f64::from(width_px), f64::from(height_px));
    let (cx, cy) = bbox.center();
    NormBox::new(class_id, cx / w, cy / h, bbox.width() / w, bbox.height() / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_basic_line() {
        let nb = parse_yolo_line("1 0.5 0.5 0.1 0.2", 1).unwrap();
        assert_eq!(
            nb,
            NormBox {
                class_id: 1,
                cx: 0.5,
                cy: 0.5,
                w: 0.1,
                h: 0.2
            }
        );
        assert!(parse_yolo_line("1 0.5 0.5 0.1 0.2   \t", 1).is_ok());
    }

    #[test]
    fn distinct_errors_with_line_numbers() {
        let e = parse_yolo_line("0 0.5 0.5 0 0.1", 7).unwrap_err();
        assert_eq!(e.line, 7);
        assert!(matches!(e.kind, LineErrorKind::OutOfRange { field: "w", .. }));

        let e = parse_yolo_line("1 0.5 0.5 0.1", 3).unwrap_err();
        assert_eq!(e.kind, LineErrorKind::TokenCount(4));

        let e = parse_yolo_line("1 0.5 0.5 0.1 0.2 9", 3).unwrap_err();
        assert_eq!(e.kind, LineErrorKind::TokenCount(6));

        let e = parse_yolo_line("1 0.5 abc 0.1 0.2", 2).unwrap_err();
        assert!(matches!(e.kind, LineErrorKind::NotNumeric { field: "cy", .. }));

        let e = parse_yolo_line("-1 0.5 0.5 0.1 0.2", 2).unwrap_err();
        assert!(matches!(e.kind, LineErrorKind::NotNumeric { field: "class", .. }));

        let e = parse_yolo_line("1 1.5 0.5 0.1 0.2", 2).unwrap_err();
        assert!(matches!(e.kind, LineErrorKind::OutOfRange { field: "cx", .. }));
    }

    #[test]
    fn label_text_reports_physical_line() {
        let e = parse_label_text("1 0.5 0.5 0.1 0.2\n\n2 0.5 0.5 0.1\n").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn denormalize_example() {
        let nb = NormBox::new(1, 0.5, 0.5, 0.1, 0.2).unwrap();
        let pb = denormalize(&nb, 640, 640);
        assert_eq!(pb.to_array(), [288.0, 256.0, 352.0, 384.0]);
    }

    #[test]
    fn full_width_is_clamped() {
        let nb = NormBox::new(0, 0.5, 0.5, 1.0, 0.1).unwrap();
        let pb = denormalize(&nb, 333, 200);
        assert_eq!(pb.x_min(), 0.0);
        assert_eq!(pb.x_max(), 333.0);
        let edge = NormBox::new(0, 0.0, 1.0, 0.2, 0.2).unwrap();
        let pb = denormalize(&edge, 100, 100);
        assert_eq!(pb.to_array(), [0.0, 90.0, 10.0, 100.0]);
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(class in 0u32..4, cx in 0.0f64..=1.0, cy in 0.0f64..=1.0,
                                      w in 1e-6f64..=1.0, h in 1e-6f64..=1.0) {
            let nb = NormBox::new(class, cx, cy, w, h).unwrap();
            let back = parse_yolo_line(&nb.to_yolo_line(), 1);
            // 6-decimal rounding can push a tiny size to zero
            if let Ok(back) = back {
                prop_assert_eq!(back.class_id, class);
                for (a, b) in [(back.cx, cx), (back.cy, cy), (back.w, w), (back.h, h)] {
                    prop_assert!((a - b).abs() <= 5e-7 + 1e-15);
                }
            } else {
                prop_assert!(w < 5e-7 || h < 5e-7);
            }
        }

        #[test]
        fn normalize_inverts_denormalize(cx in 0.2f64..0.8, cy in 0.2f64..0.8, w in 0.01f64..0.3, h in 0.01f64..0.3,
                                         iw in 16u32..5000, ih in 16u32..5000) {
            let nb = NormBox::new(2, cx, cy, w, h).unwrap();
            let back = normalize(&denormalize(&nb, iw, ih), 2, iw, ih).unwrap();
            for (a, b) in [(back.cx, cx), (back.cy, cy), (back.w, w), (back.h, h)] {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
