//! Classifier chip extraction and black padding of undersized images.

use image::{ImageBuffer, Pixel};
use tracing::warn;

use super::yolo::NormBox;
use super::AnnotationError;
use crate::geometry::PixelBox;

pub type Raster<P> = ImageBuffer<P, Vec<u8>>;

/// Default classifier input edge length.
pub const CHIP_SIZE_PX: u32 = 128;

#[derive(Debug, Clone)]
pub struct Chip<P: Pixel<Subpixel = u8>> {
    pub image: Raster<P>,
    /// Integer source region `(x0, y0, w, h)` that was resampled.
    pub source_region: (u32, u32, u32, u32),
    /// The box extended past the image and was clipped.
    pub clamped: bool,
}

/// Cut the box region out of `image` (clipped to the image) and resample it
/// to `out_size` x `out_size` with bilinear interpolation. Aspect ratio is not
/// preserved.
pub fn crop_for_classifier<P>(
    image: &Raster<P>,
    bbox: &PixelBox,
    out_size: u32,
) -> Result<Chip<P>, AnnotationError>
where
    P: Pixel<Subpixel = u8> + 'static,
{
    let (iw, ih) = image.dimensions();
    let x0 = bbox.x_min().floor().max(0.0);
    let y0 = bbox.y_min().floor().max(0.0);
    let x1 = bbox.x_max().ceil().min(f64::from(iw));
    let y1 = bbox.y_max().ceil().min(f64::from(ih));
    if x1 <= x0 || y1 <= y0 || out_size == 0 {
        return Err(AnnotationError::BoxOutsideImage {
            bbox: bbox.to_array(),
            width: iw,
            height: ih,
        });
    }
    let clamped = bbox.x_min() < 0.0
        || bbox.y_min() < 0.0
        || bbox.x_max() > f64::from(iw)
        || bbox.y_max() > f64::from(ih);
    if clamped {
        warn!(bbox = ?bbox.to_array(), width = iw, height = ih, "crop box clipped to image bounds");
    }
    let (rx, ry) = (x0 as u32, y0 as u32);
    let (rw, rh) = ((x1 - x0) as u32, (y1 - y0) as u32);
    let region = image::imageops::crop_imm(image, rx, ry, rw, rh).to_image();
    Ok(Chip {
        image: resize_bilinear(&region, out_size, out_size),
        source_region: (rx, ry, rw, rh),
        clamped,
    })
}

/// Bilinear resampling with pixel-centre alignment and edge clamping. A
/// same-size resize reproduces the input exactly.
pub fn resize_bilinear<P>(src: &Raster<P>, out_w: u32, out_h: u32) -> Raster<P>
where
    P: Pixel<Subpixel = u8> + 'static,
{
    let (sw, sh) = src.dimensions();
    let channels = usize::from(P::CHANNEL_COUNT);
    let map = |o: u32, out: u32, s: u32| -> (u32, u32, f64) {
        let pos = (f64::from(o) + 0.5) * f64::from(s) / f64::from(out) - 0.5;
        let pos = pos.clamp(0.0, f64::from(s - 1));
        let lo = pos.floor() as u32;
        let hi = (lo + 1).min(s - 1);
        (lo, hi, pos - f64::from(lo))
    };
    let xs: Vec<_> = (0..out_w).map(|o| map(o, out_w, sw)).collect();
    let ys: Vec<_> = (0..out_h).map(|o| map(o, out_h, sh)).collect();
    let raw = src.as_raw();
    let row_len = sw as usize * channels;
    let mut out = vec![0u8; out_w as usize * out_h as usize * channels];
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let at = |x: u32, y: u32, c: usize| {
                f64::from(raw[y as usize * row_len + x as usize * channels + c])
            };
            for c in 0..channels {
                let top = at(x0, y0, c) * (1.0 - fx) + at(x1, y0, c) * fx;
                let bottom = at(x0, y1, c) * (1.0 - fx) + at(x1, y1, c) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out[(oy * out_w as usize + ox) * channels + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageBuffer::from_raw(out_w, out_h, out).expect("buffer sized to dimensions")
}

#[derive(Debug, Clone)]
pub struct Padded<P: Pixel<Subpixel = u8>> {
    pub image: Raster<P>,
    /// Where the original image's top-left corner sits in the padded image.
    pub offset: (u32, u32),
}

/// Place `image` at the top-left of a black `target_w` x `target_h` canvas.
pub fn pad_to_size<P>(
    image: &Raster<P>,
    target_w: u32,
    target_h: u32,
) -> Result<Padded<P>, AnnotationError>
where
    P: Pixel<Subpixel = u8> + 'static,
{
    let (w, h) = image.dimensions();
    if w > target_w || h > target_h {
        return Err(AnnotationError::ImageTooLarge {
            width: w,
            height: h,
            target_w,
            target_h,
        });
    }
    if (w, h) == (target_w, target_h) {
        return Ok(Padded {
            image: image.clone(),
            offset: (0, 0),
        });
    }
    let mut canvas: Raster<P> = ImageBuffer::new(target_w, target_h);
    image::imageops::replace(&mut canvas, image, 0, 0);
    Ok(Padded {
        image: canvas,
        offset: (0, 0),
    })
}

/// Re-express a label from an `orig_w` x `orig_h` image in the coordinates of
/// the padded `target_w` x `target_h` image.
pub fn relabel_after_pad(
    nb: &NormBox,
    orig: (u32, u32),
    target: (u32, u32),
    offset: (u32, u32),
) -> NormBox {
    let (ow, oh) = (f64::from(orig.0), f64::from(orig.1));
    let (tw, th) = (f64::from(target.0), f64::from(target.1));
    NormBox {
        class_id: nb.class_id,
        cx: (f64::from(offset.0) + nb.cx * ow) / tw,
        cy: (f64::from(offset.1) + nb.cy * oh) / th,
        w: nb.w * ow / tw,
        h: nb.h * oh / th,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgb, RgbImage};

    fn gradient(w: u32, h: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| Luma([(2 * x + y) as u8]))
    }

    fn pbox(x0: f64, y0: f64, x1: f64, y1: f64) -> PixelBox {
        PixelBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn chip_has_requested_size() {
        let img = gradient(200, 200);
        let chip = crop_for_classifier(&img, &pbox(10.0, 20.0, 74.0, 52.0), 128).unwrap();
        assert_eq!(chip.image.dimensions(), (128, 128));
        assert_eq!(chip.source_region, (10, 20, 64, 32));
        assert!(!chip.clamped);
    }

    #[test]
    fn identity_resize_is_bit_exact() {
        let img = RgbImage::from_fn(300, 260, |x, y| Rgb([(x * 7 % 251) as u8, (y * 13 % 241) as u8, ((x ^ y) & 0xff) as u8]));
        let chip = crop_for_classifier(&img, &pbox(40.0, 50.0, 168.0, 178.0), 128).unwrap();
        let src = image::imageops::crop_imm(&img, 40, 50, 128, 128).to_image();
        assert_eq!(chip.image, src);
    }

    /// Bilinear interpolation is exact on an affine intensity ramp, so the
    /// expected chip can be computed analytically from the sample positions.
    #[test]
    fn clamped_crop_matches_affine_reference() {
        let img = gradient(60, 60);
        // half of the box hangs off the right edge
        let chip = crop_for_classifier(&img, &pbox(40.0, 10.0, 80.0, 50.0), 128).unwrap();
        assert!(chip.clamped);
        assert_eq!(chip.source_region, (40, 10, 20, 40));
        let (rw, rh) = (20.0f64, 40.0f64);
        for oy in 0..128u32 {
            for ox in 0..128u32 {
                let sx = ((f64::from(ox) + 0.5) * rw / 128.0 - 0.5).clamp(0.0, rw - 1.0);
                let sy = ((f64::from(oy) + 0.5) * rh / 128.0 - 0.5).clamp(0.0, rh - 1.0);
                let expected = 2.0 * (40.0 + sx) + (10.0 + sy);
                let got = f64::from(chip.image.get_pixel(ox, oy)[0]);
                assert!((got - expected).abs() <= 0.5 + 1e-9, "({ox},{oy}): {got} vs {expected}");
            }
        }
    }

    #[test]
    fn box_fully_outside_rejected() {
        let img = gradient(60, 60);
        let err = crop_for_classifier(&img, &pbox(70.0, 10.0, 90.0, 30.0), 128).unwrap_err();
        assert!(matches!(err, AnnotationError::BoxOutsideImage { .. }));
    }

    #[test]
    fn pad_fills_black_and_keeps_pixels() {
        let img = gradient(50, 50);
        let padded = pad_to_size(&img, 64, 64).unwrap();
        assert_eq!(padded.offset, (0, 0));
        assert_eq!(padded.image.dimensions(), (64, 64));
        for (x, y, p) in padded.image.enumerate_pixels() {
            if x < 50 && y < 50 {
                assert_eq!(p, img.get_pixel(x, y));
            } else {
                assert_eq!(p[0], 0);
            }
        }
    }

    #[test]
    fn pad_500_to_640() {
        let img = GrayImage::from_pixel(500, 500, Luma([200]));
        let padded = pad_to_size(&img, 640, 640).unwrap();
        let margin_black = (500..640).all(|i| padded.image.get_pixel(i, 10)[0] == 0 && padded.image.get_pixel(10, i)[0] == 0);
        assert!(margin_black);
        assert_eq!(padded.image.get_pixel(499, 499)[0], 200);
        let same = pad_to_size(&padded.image, 640, 640).unwrap();
        assert_eq!(same.image, padded.image);
        assert!(pad_to_size(&padded.image, 600, 700).is_err());
    }

    #[test]
    fn relabel_scales_by_ratio() {
        let nb = NormBox::new(1, 0.5, 0.25, 0.1, 0.2).unwrap();
        let r = relabel_after_pad(&nb, (500, 500), (640, 640), (0, 0));
        let k = 500.0 / 640.0;
        assert!((r.cx - 0.5 * k).abs() < 1e-12);
        assert!((r.cy - 0.25 * k).abs() < 1e-12);
        assert!((r.w - 0.1 * k).abs() < 1e-12);
        assert!((r.h - 0.2 * k).abs() < 1e-12);
        // pixel geometry is unchanged by the relabel
        let before = super::super::yolo::denormalize(&nb, 500, 500);
        let after = super::super::yolo::denormalize(&r, 640, 640);
        for (a, b) in before.to_array().iter().zip(after.to_array()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
