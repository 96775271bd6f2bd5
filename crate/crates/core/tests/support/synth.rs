#![allow(dead_code)]

use std::path::PathBuf;

use craterscan::annotations::{normalize, AnnotatedImage};
use craterscan::{GroundTruth, PixelBox};
use rand::seq::SliceRandom;
use rand::Rng;

/// Non-overlapping integer boxes, one per randomly chosen `cell`-sized grid
/// cell, sides in `[min_side, max_side]`.
pub fn grid_truth<R: Rng>(
    rng: &mut R,
    width: u32,
    height: u32,
    cell: u32,
    count: usize,
    min_side: u32,
    max_side: u32,
) -> Vec<GroundTruth> {
    assert!(max_side < cell);
    let cols = width / cell;
    let rows = height / cell;
    let mut cells: Vec<(u32, u32)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (c, r))).collect();
    cells.shuffle(rng);
    cells
        .into_iter()
        .take(count)
        .map(|(c, r)| {
            let w = rng.gen_range(min_side..=max_side);
            let h = rng.gen_range(min_side..=max_side);
            let x = c * cell + rng.gen_range(0..=cell - w);
            let y = r * cell + rng.gen_range(0..=cell - h);
            GroundTruth {
                class_id: rng.gen_range(0..3),
                bbox: PixelBox::new(f64::from(x), f64::from(y), f64::from(x + w), f64::from(y + h)).unwrap(),
            }
        })
        .collect()
}

pub fn annotated(id: &str, width: u32, height: u32, truth: &[GroundTruth]) -> AnnotatedImage {
    AnnotatedImage {
        id: id.to_string(),
        image_path: PathBuf::from(format!("{id}.png")),
        width_px: width,
        height_px: height,
        boxes: truth
            .iter()
            .map(|g| normalize(&g.bbox, g.class_id, width, height).unwrap())
            .collect(),
    }
}
