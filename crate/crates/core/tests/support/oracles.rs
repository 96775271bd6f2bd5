// Independent reference implementations. Nothing here calls into the
// library's matching, suppression or statistics code.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use craterscan::{Detection, GroundTruth, PixelBox};
use rand::Rng;

pub fn ref_iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let [ax0, ay0, ax1, ay1] = a.to_array();
    let [bx0, by0, bx1, by1] = b.to_array();
    let left = if ax0 > bx0 { ax0 } else { bx0 };
    let right = if ax1 < bx1 { ax1 } else { bx1 };
    let top = if ay0 > by0 { ay0 } else { by0 };
    let bottom = if ay1 < by1 { ay1 } else { by1 };
    if right <= left || bottom <= top {
        return 0.0;
    }
    let inter = (right - left) * (bottom - top);
    let area_a = (ax1 - ax0) * (ay1 - ay0);
    let area_b = (bx1 - bx0) * (by1 - by0);
    inter / (area_a + area_b - inter)
}

fn key(d: &Detection) -> (f64, f64, f64, u32, f64, f64, i64) {
    let [x0, y0, x1, y1] = d.bbox.to_array();
    (-d.confidence, x0, y0, d.class_id, x1, y1, d.source_window.map_or(-1, |w| w as i64))
}

/// True when `a` outranks `b` under the suppression order.
fn outranks(a: &Detection, b: &Detection) -> bool {
    let (ka, kb) = (key(a), key(b));
    let fields = [
        ka.0.partial_cmp(&kb.0),
        ka.1.partial_cmp(&kb.1),
        ka.2.partial_cmp(&kb.2),
        Some(ka.3.cmp(&kb.3)),
        ka.4.partial_cmp(&kb.4),
        ka.5.partial_cmp(&kb.5),
        Some(ka.6.cmp(&kb.6)),
    ];
    for f in fields {
        match f.expect("finite keys") {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
    }
    false
}

/// Repeatedly take the best remaining detection and discard everything it
/// overlaps by more than `thr`.
pub fn ref_nms(dets: &[Detection], thr: f64, class_aware: bool) -> Vec<Detection> {
    let mut pool: Vec<Detection> = dets.to_vec();
    let mut kept = Vec::new();
    while !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            if outranks(&pool[i], &pool[best]) {
                best = i;
            }
        }
        let head = pool.remove(best);
        pool.retain(|d| {
            let same_group = !class_aware || d.class_id == head.class_id;
            !(same_group && ref_iou(&d.bbox, &head.bbox) > thr)
        });
        kept.push(head);
    }
    kept
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Class-aware greedy matching done one class at a time.
pub fn ref_confusion(preds: &[Detection], gts: &[GroundTruth], thr: f64) -> BTreeMap<u32, Counts> {
    let mut out: BTreeMap<u32, Counts> = BTreeMap::new();
    let mut classes: Vec<u32> = preds.iter().map(|p| p.class_id).chain(gts.iter().map(|g| g.class_id)).collect();
    classes.sort_unstable();
    classes.dedup();
    for c in classes {
        let mut ps: Vec<&Detection> = preds.iter().filter(|p| p.class_id == c).collect();
        // insertion sort by rank
        for i in 1..ps.len() {
            let mut j = i;
            while j > 0 && outranks(ps[j], ps[j - 1]) {
                ps.swap(j, j - 1);
                j -= 1;
            }
        }
        let gs: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == c).collect();
        let mut used = vec![false; gs.len()];
        let entry = out.entry(c).or_default();
        for p in ps {
            let mut pick: Option<usize> = None;
            let mut pick_iou = -1.0;
            for (k, g) in gs.iter().enumerate() {
                if used[k] {
                    continue;
                }
                let v = ref_iou(&p.bbox, &g.bbox);
                if v >= thr && v > pick_iou {
                    pick = Some(k);
                    pick_iou = v;
                }
            }
            match pick {
                Some(k) => {
                    used[k] = true;
                    entry.tp += 1;
                }
                None => entry.fp += 1,
            }
        }
        entry.fn_ += used.iter().filter(|u| !**u).count();
    }
    out
}

/// (precision, recall, f1) straight from the definitions.
pub fn ref_prf(c: Counts) -> (f64, f64, f64) {
    let p = if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
    let r = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Welford's streaming mean and population std.
pub fn welford(xs: &[f64]) -> (f64, f64) {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for &x in xs {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    (mean, (m2 / n).sqrt())
}

/// Sum and sum of squares in one pass.
pub fn naive_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let s: f64 = xs.iter().sum();
    let s2: f64 = xs.iter().map(|x| x * x).sum();
    let mean = s / n;
    (mean, (s2 / n - mean * mean).max(0.0).sqrt())
}

/// Boxes on a half-pixel grid so IoU ties against thresholds are exercised.
pub fn random_box<R: Rng>(rng: &mut R, extent: f64, max_side: f64) -> PixelBox {
    let x = (rng.gen_range(0.0..extent) * 2.0).round() / 2.0;
    let y = (rng.gen_range(0.0..extent) * 2.0).round() / 2.0;
    let w = (rng.gen_range(1.0..max_side) * 2.0).round() / 2.0;
    let h = (rng.gen_range(1.0..max_side) * 2.0).round() / 2.0;
    PixelBox::new(x, y, x + w, y + h).unwrap()
}

pub fn random_detections<R: Rng>(rng: &mut R, n: usize, classes: u32) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let b = random_box(rng, 200.0, 60.0);
            // coarse confidences force tie-breaking on geometry
            let conf = f64::from(rng.gen_range(0..=10u32)) / 10.0;
            let mut d = Detection::new(b, rng.gen_range(0..classes), conf).unwrap();
            if rng.gen_bool(0.5) {
                d = d.with_window(rng.gen_range(0..9));
            }
            d
        })
        .collect()
}
