//! COCO-style detection evaluation.
//!
//! Matching follows the COCO rules: detections are visited by descending
//! score, each claims the best still-unmatched ground truth at or above the
//! IoU threshold, and a detection whose best candidate is an ignored ground
//! truth is absorbed (neither TP nor FP). AP uses interpolated precision
//! sampled at evenly spaced recall points (101 by default).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{iou, Detection, GroundTruth};
use crate::{Error, Result};

/// Half-open pixel-area interval `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl AreaRange {
    pub fn new(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
        }
    }

    pub fn contains(&self, area: f64) -> bool {
        area >= self.lo && area < self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: usize,
    /// The first range is the reference stratum used for mAP/AP50/AP75.
    pub area_ranges: Vec<AreaRange>,
    pub max_detections_per_image: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            recall_points: 101,
            area_ranges: vec![
                AreaRange::new("all", 0.0, f64::INFINITY),
                AreaRange::new("small", 0.0, 32.0 * 32.0),
                AreaRange::new("medium", 32.0 * 32.0, 96.0 * 96.0),
                AreaRange::new("large", 96.0 * 96.0, f64::INFINITY),
            ],
            max_detections_per_image: 100,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::input("no IoU thresholds"));
        }
        if self
            .iou_thresholds
            .iter()
            .any(|&t| !(t > 0.0 && t <= 1.0))
        {
            return Err(Error::input("IoU thresholds must lie in (0, 1]"));
        }
        if self.iou_thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("IoU thresholds must be strictly increasing"));
        }
        if self.recall_points < 2 {
            return Err(Error::input("recall_points must be at least 2"));
        }
        if self.area_ranges.is_empty() {
            return Err(Error::input("no area ranges"));
        }
        if self.area_ranges.iter().any(|r| r.lo.is_nan() || r.hi.is_nan() || r.lo > r.hi || r.lo < 0.0) {
            return Err(Error::input("malformed area range"));
        }
        if self.max_detections_per_image == 0 {
            return Err(Error::input("max_detections_per_image must be positive"));
        }
        Ok(())
    }

    fn threshold_index(&self, t: f64) -> Option<usize> {
        self.iou_thresholds
            .iter()
            .position(|&x| (x - t).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchLabel {
    Tp,
    Fp,
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// One label per detection, in input order.
    pub labels: Vec<MatchLabel>,
    /// One flag per ground truth, in input order.
    pub gt_matched: Vec<bool>,
}

/// Indices of `dets` by descending score, ties in input order.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Matches one image's detections of one class against its ground truths.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
) -> MatchResult {
    let mut labels = vec![MatchLabel::Fp; dets.len()];
    let mut gt_matched = vec![false; gts.len()];

    for d in score_order(dets) {
        // Non-ignored candidates are preferred; ignored ones only absorb.
        let mut best: Option<(usize, f64)> = None;
        for ignored_pass in [false, true] {
            for (g, gt) in gts.iter().enumerate() {
                if gt.ignore != ignored_pass || gt_matched[g] {
                    continue;
                }
                let o = iou(&dets[d].bbox, &gt.bbox);
                if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            if best.is_some() {
                break;
            }
        }
        if let Some((g, _)) = best {
            gt_matched[g] = true;
            labels[d] = if gts[g].ignore {
                MatchLabel::Ignored
            } else {
                MatchLabel::Tp
            };
        }
    }
    MatchResult { labels, gt_matched }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)` after each non-ignored detection.
    pub points: Vec<(f64, f64)>,
    pub n_gt: usize,
}

impl PrCurve {
    /// A curve without ground truth has no defined AP.
    pub fn is_defined(&self) -> bool {
        self.n_gt > 0
    }
}

/// Builds the cumulative precision/recall curve from score-ordered labels.
/// Ignored labels are skipped.
pub fn pr_curve(labels: &[MatchLabel], n_gt: usize) -> PrCurve {
    if n_gt == 0 {
        return PrCurve {
            points: Vec::new(),
            n_gt,
        };
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points = Vec::with_capacity(labels.len());
    for label in labels {
        match label {
            MatchLabel::Tp => tp += 1,
            MatchLabel::Fp => fp += 1,
            MatchLabel::Ignored => continue,
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    PrCurve { points, n_gt }
}

/// Interpolated AP over `recall_points` evenly spaced recall levels in [0, 1].
/// Returns `None` for an undefined curve.
pub fn ap_interpolated(curve: &PrCurve, recall_points: usize) -> Option<f64> {
    if !curve.is_defined() {
        return None;
    }
    // Precision envelope: max precision at this point or any later one.
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let last = (recall_points - 1) as f64;
    let mut sum = 0.0;
    let mut cursor = 0;
    for i in 0..recall_points {
        let r = i as f64 / last;
        while cursor < curve.points.len() && curve.points[cursor].0 < r {
            cursor += 1;
        }
        if cursor < envelope.len() {
            sum += envelope[cursor];
        }
    }
    Some(sum / recall_points as f64)
}

/// 101-point interpolated AP.
pub fn ap_101(curve: &PrCurve) -> Option<f64> {
    ap_interpolated(curve, 101)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: usize,
    pub n_gt: usize,
    /// AP per IoU threshold over the reference area range.
    pub ap_per_threshold: Vec<Option<f64>>,
    pub mean_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    pub iou_thresholds: Vec<f64>,
    pub per_class: Vec<ClassAp>,
    /// Mean AP per configured area range, in config order.
    pub per_area: Vec<(String, Option<f64>)>,
}

fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Labels of one image for every (class, area range, threshold) cell.
type Cell = Vec<(f64, MatchLabel)>;

struct ImageLabels {
    /// Indexed `[class][area][threshold]`; each entry lists `(score, label)`
    /// in the image's score order.
    cells: Vec<Vec<Vec<Cell>>>,
    /// Non-ignored GT counts, indexed `[class][area]`.
    n_gt: Vec<Vec<usize>>,
}

fn evaluate_image(
    dets: &[Detection],
    gts: &[GroundTruth],
    classes: &[usize],
    config: &EvalConfig,
) -> ImageLabels {
    let mut order = score_order(dets);
    order.truncate(config.max_detections_per_image);
    let kept: Vec<Detection> = order.iter().map(|&i| dets[i]).collect();

    let mut cells = Vec::with_capacity(classes.len());
    let mut n_gt = Vec::with_capacity(classes.len());
    for &class in classes {
        let class_dets: Vec<Detection> =
            kept.iter().filter(|d| d.class_id == class).copied().collect();
        let class_gts: Vec<GroundTruth> =
            gts.iter().filter(|g| g.class_id == class).copied().collect();

        let mut per_area = Vec::with_capacity(config.area_ranges.len());
        let mut gt_counts = Vec::with_capacity(config.area_ranges.len());
        for range in &config.area_ranges {
            let stratum_gts: Vec<GroundTruth> = class_gts
                .iter()
                .map(|g| GroundTruth {
                    ignore: g.ignore || !range.contains(g.bbox.area()),
                    ..*g
                })
                .collect();
            gt_counts.push(stratum_gts.iter().filter(|g| !g.ignore).count());

            let mut per_thr = Vec::with_capacity(config.iou_thresholds.len());
            for &t in &config.iou_thresholds {
                let m = match_detections(&class_dets, &stratum_gts, t);
                let labelled = class_dets
                    .iter()
                    .zip(&m.labels)
                    .map(|(d, &label)| {
                        let label = if label == MatchLabel::Fp && !range.contains(d.bbox.area()) {
                            MatchLabel::Ignored
                        } else {
                            label
                        };
                        (d.score, label)
                    })
                    .collect();
                per_thr.push(labelled);
            }
            per_area.push(per_thr);
        }
        cells.push(per_area);
        n_gt.push(gt_counts);
    }
    ImageLabels { cells, n_gt }
}

/// Evaluates a dataset with the current rayon pool.
///
/// Images are keyed by id; detections for images absent from `gts` count as
/// false positives. Classes without ground truth are reported undefined and
/// excluded from every mean.
pub fn coco_map(
    dets: &BTreeMap<u64, Vec<Detection>>,
    gts: &BTreeMap<u64, Vec<GroundTruth>>,
    config: &EvalConfig,
) -> Result<EvalSummary> {
    config.validate()?;
    let image_ids: Vec<u64> = dets
        .keys()
        .chain(gts.keys())
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let classes: Vec<usize> = dets
        .values()
        .flatten()
        .map(|d| d.class_id)
        .chain(gts.values().flatten().map(|g| g.class_id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let empty_d: Vec<Detection> = Vec::new();
    let empty_g: Vec<GroundTruth> = Vec::new();
    let per_image: Vec<ImageLabels> = image_ids
        .par_iter()
        .map(|id| {
            evaluate_image(
                dets.get(id).unwrap_or(&empty_d),
                gts.get(id).unwrap_or(&empty_g),
                &classes,
                config,
            )
        })
        .collect();

    let n_thr = config.iou_thresholds.len();
    let n_area = config.area_ranges.len();
    // ap[class][area][threshold]
    let mut ap = vec![vec![vec![None; n_thr]; n_area]; classes.len()];
    let mut class_gt = vec![0usize; classes.len()];
    for c in 0..classes.len() {
        for a in 0..n_area {
            let n_gt: usize = per_image.iter().map(|im| im.n_gt[c][a]).sum();
            if a == 0 {
                class_gt[c] = n_gt;
            }
            for t in 0..n_thr {
                let mut all: Vec<(f64, MatchLabel)> = per_image
                    .iter()
                    .flat_map(|im| im.cells[c][a][t].iter().copied())
                    .collect();
                // Stable: ties stay in image order, then in-image score order.
                all.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal));
                let labels: Vec<MatchLabel> = all.into_iter().map(|(_, l)| l).collect();
                ap[c][a][t] = ap_interpolated(&pr_curve(&labels, n_gt), config.recall_points);
            }
        }
    }

    if !class_gt.iter().any(|&n| n > 0) {
        return Err(Error::Undefined("no class has ground truth".into()));
    }

    let per_class: Vec<ClassAp> = classes
        .iter()
        .enumerate()
        .map(|(c, &class_id)| ClassAp {
            class_id,
            n_gt: class_gt[c],
            ap_per_threshold: ap[c][0].clone(),
            mean_ap: mean_defined(ap[c][0].iter().copied()),
        })
        .collect();

    let area_mean = |a: usize| mean_defined((0..classes.len()).map(|c| mean_defined(ap[c][a].iter().copied())));
    let at_threshold = |t: f64| {
        config
            .threshold_index(t)
            .and_then(|ti| mean_defined((0..classes.len()).map(|c| ap[c][0][ti])))
    };
    let per_area: Vec<(String, Option<f64>)> = config
        .area_ranges
        .iter()
        .enumerate()
        .map(|(a, r)| (r.name.clone(), area_mean(a)))
        .collect();
    let named = |name: &str| {
        per_area
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, v)| *v)
    };

    Ok(EvalSummary {
        map: mean_defined(per_class.iter().map(|c| c.mean_ap)),
        ap50: at_threshold(0.5),
        ap75: at_threshold(0.75),
        ap_small: named("small"),
        ap_medium: named("medium"),
        ap_large: named("large"),
        iou_thresholds: config.iou_thresholds.clone(),
        per_class,
        per_area,
    })
}

/// [`coco_map`] on a dedicated pool of `workers` threads. The result does not
/// depend on the worker count.
pub fn coco_map_with_workers(
    dets: &BTreeMap<u64, Vec<Detection>>,
    gts: &BTreeMap<u64, Vec<GroundTruth>>,
    config: &EvalConfig,
    workers: usize,
) -> Result<EvalSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| coco_map(dets, gts, config))
}

impl EvalSummary {
    /// Human-readable table in the usual COCO summary layout.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "  n/a".to_string(), |x| format!("{x:.3}"));
        let mut s = String::new();
        s.push_str(&format!("mAP@[.50:.95]  {}\n", fmt(self.map)));
        s.push_str(&format!("AP50           {}\n", fmt(self.ap50)));
        s.push_str(&format!("AP75           {}\n", fmt(self.ap75)));
        s.push_str(&format!("AP_small       {}\n", fmt(self.ap_small)));
        s.push_str(&format!("AP_medium      {}\n", fmt(self.ap_medium)));
        s.push_str(&format!("AP_large       {}\n", fmt(self.ap_large)));
        for c in &self.per_class {
            s.push_str(&format!(
                "class {:<3} (n_gt {:>4})  {}\n",
                c.class_id,
                c.n_gt,
                fmt(c.mean_ap)
            ));
        }
        s
    }
}
