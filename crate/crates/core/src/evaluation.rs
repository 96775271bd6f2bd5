//! Detection scoring: greedy IoU matching, per-class precision / recall / F1,
//! multi-run mean ± std aggregation and mean-rank model comparison.
//!
//! Conventions:
//! - 0/0 ratios are 0 (a class with no predictions has precision 0).
//! - Standard deviations are population (divide by n).
//! - Tied scores share the average of the rank positions they span.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{AnnotatedImage, ClassMap};
use crate::detector::{GroundTruth, RunFile};
use crate::geometry::iou;
use crate::nms::{check_threshold, detection_order, Detection, DetectionError};

pub const DEFAULT_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no class metrics to summarize")]
    Empty,
    #[error("run {run} has classes {found:?}, expected {expected:?}")]
    InconsistentClasses {
        run: usize,
        expected: Vec<u32>,
        found: Vec<u32>,
    },
    #[error("score matrix must be at least 2 models x 1 class, rectangular and finite: {0}")]
    RankShape(String),
    #[error("run file has detections for unknown image `{0}`")]
    UnknownImage(String),
    #[error(transparent)]
    Threshold(#[from] DetectionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// A prediction can only match ground truth of its own class.
    #[default]
    ClassAware,
    /// Localization only; classes are ignored when pairing.
    ClassAgnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    /// Unmatched prediction indices.
    pub false_positives: Vec<usize>,
    /// Unmatched ground-truth indices.
    pub false_negatives: Vec<usize>,
}

/// Predictions are visited best-first (confidence descending, ties broken as
/// in NMS); each takes the unmatched eligible ground truth of highest IoU,
/// provided that IoU reaches `iou_threshold`. Equal IoUs go to the lower
/// ground-truth index.
pub fn match_detections(
    preds: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
    mode: MatchMode,
) -> Result<MatchResult, EvalError> {
    check_threshold(iou_threshold)?;
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| detection_order(&preds[a], &preds[b]).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut result = MatchResult::default();
    for p in order {
        let pred = &preds[p];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || (mode == MatchMode::ClassAware && gt.class_id != pred.class_id) {
                continue;
            }
            let v = iou(&pred.bbox, &gt.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, v)) => {
                taken[g] = true;
                result.pairs.push(MatchPair {
                    pred: p,
                    gt: g,
                    iou: v,
                });
            }
            None => result.false_positives.push(p),
        }
    }
    result.false_negatives = taken
        .iter()
        .enumerate()
        .filter(|(_, t)| !**t)
        .map(|(g, _)| g)
        .collect();
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Confusion counts per class id, summed over any number of images.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassTally(pub BTreeMap<u32, Confusion>);

impl ClassTally {
    /// True positives are credited to the ground-truth class, false positives
    /// to the predicted class, false negatives to the ground-truth class.
    pub fn add_match(&mut self, m: &MatchResult, preds: &[Detection], gts: &[GroundTruth]) {
        for pair in &m.pairs {
            self.0.entry(gts[pair.gt].class_id).or_default().tp += 1;
        }
        for &p in &m.false_positives {
            self.0.entry(preds[p].class_id).or_default().fp += 1;
        }
        for &g in &m.false_negatives {
            self.0.entry(gts[g].class_id).or_default().fn_ += 1;
        }
    }

    pub fn merge(&mut self, other: &ClassTally) {
        for (c, k) in &other.0 {
            let e = self.0.entry(*c).or_default();
            e.tp += k.tp;
            e.fp += k.fp;
            e.fn_ += k.fn_;
        }
    }

    pub fn get(&self, class_id: u32) -> Confusion {
        self.0.get(&class_id).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Metrics for each id in `classes`, in that order.
pub fn per_class_metrics(tally: &ClassTally, classes: &[u32]) -> Vec<ClassMetrics> {
    classes
        .iter()
        .map(|&class_id| {
            let c = tally.get(class_id);
            let precision = ratio(c.tp, c.tp + c.fp);
            let recall = ratio(c.tp, c.tp + c.fn_);
            ClassMetrics {
                class_id,
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: c.tp + c.fn_,
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(metrics: &[ClassMetrics]) -> Result<f64, EvalError> {
    if metrics.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(metrics.iter().map(|m| m.f1).sum::<f64>() / metrics.len() as f64)
}

/// Support-weighted mean recall. Zero when no class has support.
pub fn weighted_accuracy(metrics: &[ClassMetrics]) -> Result<f64, EvalError> {
    if metrics.is_empty() {
        return Err(EvalError::Empty);
    }
    let total: usize = metrics.iter().map(|m| m.support).sum();
    if total == 0 {
        return Ok(0.0);
    }
    Ok(metrics.iter().map(|m| m.recall * m.support as f64).sum::<f64>() / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub mode: MatchMode,
    /// Class ids scored and reported. Other classes are dropped from both
    /// predictions and ground truth before matching.
    pub classes: Vec<u32>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_MATCH_IOU,
            mode: MatchMode::ClassAware,
            classes: ClassMap::default().crater_ids(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub mode: MatchMode,
    pub n_images: usize,
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub weighted_accuracy: f64,
    pub tally: ClassTally,
}

/// Score a run file against annotated images. Images absent from the run
/// count as having no detections.
pub fn evaluate_run(
    run: &RunFile,
    images: &[AnnotatedImage],
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let wanted: BTreeSet<u32> = opts.classes.iter().copied().collect();
    let known: BTreeSet<&str> = images.iter().map(|i| i.id.as_str()).collect();
    if let Some(id) = run.images.keys().find(|id| !known.contains(id.as_str())) {
        return Err(EvalError::UnknownImage(id.clone()));
    }
    let mut tally = ClassTally::default();
    for img in images {
        let gts: Vec<GroundTruth> = img
            .pixel_boxes()
            .filter(|(c, _)| wanted.contains(c))
            .map(|(class_id, bbox)| GroundTruth { class_id, bbox })
            .collect();
        let preds: Vec<Detection> = run
            .images
            .get(&img.id)
            .map(|r| {
                r.detections
                    .iter()
                    .filter(|d| wanted.contains(&d.class_id))
                    .copied()
                    .collect()
            })
            .unwrap_or_default();
        let m = match_detections(&preds, &gts, opts.iou_threshold, opts.mode)?;
        tally.add_match(&m, &preds, &gts);
    }
    let per_class = per_class_metrics(&tally, &opts.classes);
    Ok(EvalReport {
        iou_threshold: opts.iou_threshold,
        mode: opts.mode,
        n_images: images.len(),
        macro_f1: macro_f1(&per_class)?,
        weighted_accuracy: weighted_accuracy(&per_class)?,
        per_class,
        tally,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Two-pass computation shifted by the first value, so constant input
    /// gives exactly its value and zero spread. Panics on an empty slice.
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "MeanStd of empty slice");
        let n = values.len() as f64;
        let k = values[0];
        let mean = k + values.iter().map(|v| v - k).sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub class_id: u32,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub support: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub n_runs: usize,
    pub classes: Vec<ClassAggregate>,
}

/// Per-class mean ± std over repeated runs. Every run must report the same
/// class ids in the same order.
pub fn aggregate_runs(runs: &[Vec<ClassMetrics>]) -> Result<RunAggregate, EvalError> {
    let first = runs.first().ok_or(EvalError::Empty)?;
    let expected: Vec<u32> = first.iter().map(|m| m.class_id).collect();
    for (i, run) in runs.iter().enumerate() {
        let found: Vec<u32> = run.iter().map(|m| m.class_id).collect();
        if found != expected {
            return Err(EvalError::InconsistentClasses {
                run: i,
                expected,
                found,
            });
        }
    }
    let column = |k: usize, f: fn(&ClassMetrics) -> f64| -> MeanStd {
        let vals: Vec<f64> = runs.iter().map(|r| f(&r[k])).collect();
        MeanStd::of(&vals)
    };
    let classes = expected
        .iter()
        .enumerate()
        .map(|(k, &class_id)| ClassAggregate {
            class_id,
            precision: column(k, |m| m.precision),
            recall: column(k, |m| m.recall),
            f1: column(k, |m| m.f1),
            support: column(k, |m| m.support as f64),
        })
        .collect();
    Ok(RunAggregate {
        n_runs: runs.len(),
        classes,
    })
}

/// Models x classes ranking; rank 1 is the best score in a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub models: Vec<String>,
    pub classes: Vec<String>,
    /// `ranks[model][class]`.
    pub ranks: Vec<Vec<f64>>,
    pub mean_rank: Vec<f64>,
}

/// Rank models within each class by score (higher is better, ties averaged),
/// then average each model's ranks over classes.
pub fn mean_rank(
    models: &[String],
    classes: &[String],
    scores: &[Vec<f64>],
) -> Result<RankTable, EvalError> {
    let n = models.len();
    if n < 2 || classes.is_empty() || scores.len() != n {
        return Err(EvalError::RankShape(format!(
            "{} models, {} classes, {} score rows",
            n,
            classes.len(),
            scores.len()
        )));
    }
    if let Some((i, row)) = scores
        .iter()
        .enumerate()
        .find(|(_, r)| r.len() != classes.len() || r.iter().any(|v| !v.is_finite()))
    {
        return Err(EvalError::RankShape(format!("row {i} ({}) is {:?}", models[i], row)));
    }
    let mut ranks = vec![vec![0.0; classes.len()]; n];
    for c in 0..classes.len() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b][c].total_cmp(&scores[a][c]));
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && scores[order[j + 1]][c] == scores[order[i]][c] {
                j += 1;
            }
            // positions i..=j (0-based) share ranks i+1..=j+1
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &m in &order[i..=j] {
                ranks[m][c] = avg;
            }
            i = j + 1;
        }
    }
    let mean_rank = ranks
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    Ok(RankTable {
        models: models.to_vec(),
        classes: classes.to_vec(),
        ranks,
        mean_rank,
    })
}

fn class_name(class_map: &ClassMap, id: u32) -> String {
    match class_map.label(id) {
        Some(l) => format!("{id} ({})", capitalize(&format!("{l:?}"))),
        None => id.to_string(),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl EvalReport {
    pub fn to_table(&self, class_map: &ClassMap) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12}{:>11}{:>9}{:>10}{:>9}", "Class", "Precision", "Recall", "F1-score", "Support");
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{:<12}{:>11.2}{:>9.2}{:>10.2}{:>9}",
                class_name(class_map, m.class_id),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let _ = writeln!(out, "macro F1 {:.2}  weighted accuracy (support-weighted recall) {:.2}", self.macro_f1, self.weighted_accuracy);
        out
    }
}

impl RunAggregate {
    pub fn to_table(&self, class_map: &ClassMap) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12}{:>15}{:>15}{:>15}{:>9}", "Class", "Precision", "Recall", "F1-score", "Support");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<12}{:>15}{:>15}{:>15}{:>9.0}",
                class_name(class_map, c.class_id),
                c.precision.to_string(),
                c.recall.to_string(),
                c.f1.to_string(),
                c.support.mean
            );
        }
        let _ = writeln!(out, "({} runs, mean ± population std)", self.n_runs);
        out
    }
}

impl RankTable {
    pub fn to_table(&self) -> String {
        let width = self.models.iter().map(|m| m.len()).max().unwrap_or(0).max(6) + 2;
        let label = self.classes.iter().map(|c| c.len()).max().unwrap_or(0).max(9) + 2;
        let mut out = String::new();
        let _ = write!(out, "{:<label$}", "");
        for m in &self.models {
            let _ = write!(out, "{m:>width$}");
        }
        out.push('\n');
        for (c, name) in self.classes.iter().enumerate() {
            let _ = write!(out, "{name:<label$}");
            for r in &self.ranks {
                let v = r[c];
                if v.fract() == 0.0 {
                    let _ = write!(out, "{:>width$}", v as i64);
                } else {
                    let _ = write!(out, "{v:>width$.2}");
                }
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<label$}", "Mean-Rank");
        for v in &self.mean_rank {
            let _ = write!(out, "{v:>width$.2}");
        }
        out.push('\n');
        out
    }
}

/// Lookup of per-class F1 means by class id, for feeding [`mean_rank`].
pub fn f1_means(agg: &RunAggregate) -> HashMap<u32, f64> {
    agg.classes.iter().map(|c| (c.class_id, c.f1.mean)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelBox;
    use proptest::prelude::*;

    fn pb(x0: f64, y0: f64, x1: f64, y1: f64) -> PixelBox {
        PixelBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(b: PixelBox, class_id: u32, conf: f64) -> Detection {
        Detection::new(b, class_id, conf).unwrap()
    }

    fn gt(b: PixelBox, class_id: u32) -> GroundTruth {
        GroundTruth { class_id, bbox: b }
    }

    #[test]
    fn exact_hit() {
        let b = pb(0.0, 0.0, 10.0, 10.0);
        let m = match_detections(&[det(b, 1, 0.9)], &[gt(b, 1)], 0.5, MatchMode::ClassAware).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert!(m.false_positives.is_empty() && m.false_negatives.is_empty());
    }

    #[test]
    fn duplicate_prediction_is_fp() {
        let b = pb(0.0, 0.0, 10.0, 10.0);
        let preds = [det(pb(0.5, 0.0, 10.5, 10.0), 1, 0.8), det(b, 1, 0.9)];
        let m = match_detections(&preds, &[gt(b, 1)], 0.5, MatchMode::ClassAware).unwrap();
        assert_eq!(m.pairs, vec![MatchPair { pred: 1, gt: 0, iou: 1.0 }]);
        assert_eq!(m.false_positives, vec![0]);
    }

    #[test]
    fn no_predictions_all_fn() {
        let gts: Vec<_> = (0..3).map(|i| gt(pb(f64::from(i) * 20.0, 0.0, f64::from(i) * 20.0 + 5.0, 5.0), 0)).collect();
        let m = match_detections(&[], &gts, 0.5, MatchMode::ClassAware).unwrap();
        assert_eq!(m.false_negatives, vec![0, 1, 2]);
    }

    #[test]
    fn class_modes() {
        let b = pb(0.0, 0.0, 10.0, 10.0);
        let aware = match_detections(&[det(b, 2, 0.9)], &[gt(b, 1)], 0.5, MatchMode::ClassAware).unwrap();
        assert_eq!((aware.pairs.len(), aware.false_positives.len(), aware.false_negatives.len()), (0, 1, 1));
        let agnostic = match_detections(&[det(b, 2, 0.9)], &[gt(b, 1)], 0.5, MatchMode::ClassAgnostic).unwrap();
        assert_eq!(agnostic.pairs.len(), 1);
    }

    #[test]
    fn metric_formulas() {
        let mut t = ClassTally::default();
        t.0.insert(0, Confusion { tp: 2, fp: 1, fn_: 1 });
        t.0.insert(1, Confusion { tp: 0, fp: 0, fn_: 5 });
        t.0.insert(2, Confusion { tp: 4, fp: 0, fn_: 0 });
        let m = per_class_metrics(&t, &[0, 1, 2, 7]);
        for v in [m[0].precision, m[0].recall, m[0].f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!((m[1].precision, m[1].recall, m[1].f1, m[1].support), (0.0, 0.0, 0.0, 5));
        assert_eq!((m[2].precision, m[2].recall, m[2].f1), (1.0, 1.0, 1.0));
        assert_eq!(m[3].support, 0);
    }

    fn cm(class_id: u32, f1: f64, recall: f64, support: usize) -> ClassMetrics {
        ClassMetrics { class_id, precision: 0.0, recall, f1, support }
    }

    #[test]
    fn macro_and_weighted() {
        let moon = [cm(0, 0.01, 0.00, 15), cm(1, 0.99, 0.98, 611), cm(2, 0.72, 0.90, 45)];
        assert!((macro_f1(&moon).unwrap() - 0.5733333).abs() < 1e-6);
        let mars = [cm(0, 0.51, 0.69, 16), cm(1, 0.97, 0.96, 135), cm(2, 0.20, 0.16, 20)];
        assert!((macro_f1(&mars).unwrap() - 0.56).abs() < 1e-12);
        assert_eq!(macro_f1(&[cm(4, 0.3, 0.1, 1)]).unwrap(), 0.3);
        assert!(macro_f1(&[]).is_err());
        let w = weighted_accuracy(&mars).unwrap();
        assert!((w - (0.69 * 16.0 + 0.96 * 135.0 + 0.16 * 20.0) / 171.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate_runs(&[vec![cm(0, 0.6, 0.0, 1)], vec![cm(0, 0.8, 0.0, 1)]]).unwrap();
        assert!((a.classes[0].f1.mean - 0.7).abs() < 1e-12);
        assert!((a.classes[0].f1.std - 0.1).abs() < 1e-12);
        assert_eq!(a.classes[0].f1.to_string(), "0.70 ± 0.10");
        let one = aggregate_runs(&[vec![cm(0, 0.6, 0.0, 1)]]).unwrap();
        assert_eq!(one.classes[0].f1.std, 0.0);
        let same: Vec<_> = (0..30).map(|_| vec![cm(1, 0.97, 0.96, 135)]).collect();
        assert_eq!(aggregate_runs(&same).unwrap().classes[0].f1.std, 0.0);
        assert!(matches!(
            aggregate_runs(&[vec![cm(0, 0.6, 0.0, 1)], vec![cm(1, 0.6, 0.0, 1)]]),
            Err(EvalError::InconsistentClasses { run: 1, .. })
        ));
        assert!(aggregate_runs(&[]).is_err());
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rank_ties_and_shape() {
        let t = mean_rank(&names(&["a", "b", "c"]), &names(&["x"]), &[vec![0.5], vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(t.ranks, vec![vec![2.0], vec![2.0], vec![2.0]]);
        let t = mean_rank(&names(&["a", "b", "c"]), &names(&["x"]), &[vec![0.9], vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(t.ranks, vec![vec![1.0], vec![2.5], vec![2.5]]);
        assert!(mean_rank(&names(&["a"]), &names(&["x"]), &[vec![1.0]]).is_err());
        assert!(mean_rank(&names(&["a", "b"]), &names(&["x"]), &[vec![1.0], vec![]]).is_err());
        assert!(mean_rank(&names(&["a", "b"]), &names(&["x"]), &[vec![1.0], vec![f64::NAN]]).is_err());
    }

    #[test]
    fn rank_table_renders() {
        let t = mean_rank(
            &names(&["CNN", "YOLO", "ResNet50"]),
            &names(&["Large Crater", "Small Crater", "Medium Crater"]),
            &[vec![0.51, 0.97, 0.20], vec![0.70, 0.67, 0.76], vec![0.05, 0.86, 0.04]],
        )
        .unwrap();
        let s = t.to_table();
        assert!(s.contains("Mean-Rank"));
        assert!(s.contains("1.67"));
        assert!(s.contains("2.67"));
    }

    proptest! {
        #[test]
        fn rank_invariant_under_monotone_transform(scores in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 2..6)) {
            let models: Vec<String> = (0..scores.len()).map(|i| format!("m{i}")).collect();
            let classes = names(&["a", "b", "c"]);
            let base = mean_rank(&models, &classes, &scores).unwrap();
            let warped: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|v| (3.0 * v).exp() - 7.0).collect()).collect();
            let other = mean_rank(&models, &classes, &warped).unwrap();
            prop_assert_eq!(&base.ranks, &other.ranks);
            // ranks in each class always sum to n(n+1)/2
            let n = scores.len() as f64;
            for c in 0..3 {
                let s: f64 = other.ranks.iter().map(|r| r[c]).sum();
                prop_assert!((s - n * (n + 1.0) / 2.0).abs() < 1e-9);
            }
        }

        #[test]
        fn matching_partitions(boxes in proptest::collection::vec((0.0f64..60.0, 0.0f64..60.0, 2.0f64..20.0, 0u32..2, any::<bool>(), 0u32..4), 0..30),
                               thr in 0.05f64..=1.0) {
            let mut preds = Vec::new();
            let mut gts = Vec::new();
            for (x, y, s, c, is_pred, q) in boxes {
                let b = pb(x, y, x + s, y + s);
                if is_pred { preds.push(det(b, c, f64::from(q) / 3.0)); } else { gts.push(gt(b, c)); }
            }
            let m = match_detections(&preds, &gts, thr, MatchMode::ClassAware).unwrap();
            prop_assert_eq!(m.pairs.len() + m.false_positives.len(), preds.len());
            prop_assert_eq!(m.pairs.len() + m.false_negatives.len(), gts.len());
            let mut seen = std::collections::HashSet::new();
            for p in &m.pairs {
                prop_assert!(seen.insert(p.gt));
                prop_assert!(p.iou >= thr);
                prop_assert_eq!(preds[p.pred].class_id, gts[p.gt].class_id);
            }
            let stricter = match_detections(&preds, &gts, (thr + 0.2).min(1.0), MatchMode::ClassAware).unwrap();
            prop_assert!(stricter.pairs.len() <= m.pairs.len());
        }
    }
}
