//! Axis-aligned box geometry: IoU, CIoU loss, greedy NMS and coordinate transforms.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Minimum width/height fed to the aspect-ratio term of CIoU.
pub const ASPECT_GUARD: f64 = 1e-9;

/// Corner-form box in continuous pixel coordinates.
///
/// Construction validates that the box is finite and not inverted, so every
/// geometric routine below can assume a well-formed operand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::input(format!("non-finite box coordinates {coords:?}")));
        }
        if x_max < x_min || y_max < y_min {
            return Err(Error::input(format!("inverted box {coords:?}")));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Caller guarantees validity; checked in debug builds only.
    pub(crate) fn from_corners(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        debug_assert!(x_max >= x_min && y_max >= y_min, "inverted box");
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn is_degenerate(&self) -> bool {
        self.width() <= 0.0 || self.height() <= 0.0
    }

    /// Clips to `[0, width] x [0, height]`.
    pub fn clip(&self, width: f64, height: f64) -> BBox {
        let x0 = self.x_min.clamp(0.0, width);
        let y0 = self.y_min.clamp(0.0, height);
        let x1 = self.x_max.clamp(0.0, width);
        let y1 = self.y_max.clamp(0.0, height);
        BBox::from_corners(x0, y0, x1.max(x0), y1.max(y0))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::from_corners(
            self.x_min + dx,
            self.y_min + dy,
            self.x_max + dx,
            self.y_max + dy,
        )
    }

    fn intersection(&self, other: &BBox) -> f64 {
        let iw = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let ih = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: usize, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::input(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            bbox,
            class_id,
            score,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class_id: usize,
    pub ignore: bool,
}

impl GroundTruth {
    pub fn new(bbox: BBox, class_id: usize) -> Self {
        Self {
            bbox,
            class_id,
            ignore: false,
        }
    }

    pub fn ignored(bbox: BBox, class_id: usize) -> Self {
        Self {
            bbox,
            class_id,
            ignore: true,
        }
    }
}

/// Intersection over union. Two zero-area boxes have IoU 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Intermediate CIoU quantities shared by the value and gradient paths.
struct CiouTerms {
    iou: f64,
    center_dist_sq: f64,
    diag_sq: f64,
    v: f64,
    alpha: f64,
}

fn guarded_atan_ratio(w: f64, h: f64) -> f64 {
    (w.max(ASPECT_GUARD) / h.max(ASPECT_GUARD)).atan()
}

fn ciou_terms(pred: &BBox, gt: &BBox) -> CiouTerms {
    let iou = iou(pred, gt);
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let center_dist_sq = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);
    let cw = pred.x_max.max(gt.x_max) - pred.x_min.min(gt.x_min);
    let ch = pred.y_max.max(gt.y_max) - pred.y_min.min(gt.y_min);
    let diag_sq = cw * cw + ch * ch;
    let delta = guarded_atan_ratio(gt.width(), gt.height())
        - guarded_atan_ratio(pred.width(), pred.height());
    let v = 4.0 / (PI * PI) * delta * delta;
    let denom = (1.0 - iou) + v;
    let alpha = if denom > 0.0 { v / denom } else { 0.0 };
    CiouTerms {
        iou,
        center_dist_sq,
        diag_sq,
        v,
        alpha,
    }
}

fn check_gt(gt: &BBox) -> Result<()> {
    if gt.is_degenerate() {
        return Err(Error::input(format!("degenerate ground-truth box {gt}")));
    }
    Ok(())
}

/// Complete IoU: IoU minus normalized center distance and aspect-ratio penalty.
pub fn ciou(pred: &BBox, gt: &BBox) -> Result<f64> {
    check_gt(gt)?;
    let t = ciou_terms(pred, gt);
    let dist = if t.diag_sq > 0.0 {
        t.center_dist_sq / t.diag_sq
    } else {
        0.0
    };
    Ok(t.iou - dist - t.alpha * t.v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiouLoss {
    pub value: f64,
    /// d(value)/d(x_min, y_min, x_max, y_max) of the prediction.
    pub gradient: [f64; 4],
}

/// `1 - CIoU` with its analytic gradient w.r.t. the predicted corners.
///
/// The trade-off weight alpha is held constant during differentiation.
pub fn ciou_loss(pred: &BBox, gt: &BBox) -> Result<CiouLoss> {
    check_gt(gt)?;
    let t = ciou_terms(pred, gt);

    let (x1, y1, x2, y2) = (pred.x_min, pred.y_min, pred.x_max, pred.y_max);
    let (a1, b1, a2, b2) = (gt.x_min, gt.y_min, gt.x_max, gt.y_max);
    let w = x2 - x1;
    let h = y2 - y1;

    // Intersection and union.
    let iw = x2.min(a2) - x1.max(a1);
    let ih = y2.min(b2) - y1.max(b1);
    let overlapping = iw > 0.0 && ih > 0.0;
    let inter = if overlapping { iw * ih } else { 0.0 };
    let union = pred.area() + gt.area() - inter;
    let d_inter = if overlapping {
        [
            if x1 > a1 { -ih } else { 0.0 },
            if y1 > b1 { -iw } else { 0.0 },
            if x2 < a2 { ih } else { 0.0 },
            if y2 < b2 { iw } else { 0.0 },
        ]
    } else {
        [0.0; 4]
    };
    let d_area = [-h, -w, h, w];
    let mut d_iou = [0.0; 4];
    if union > 0.0 {
        for k in 0..4 {
            let d_union = d_area[k] - d_inter[k];
            d_iou[k] = (d_inter[k] * union - inter * d_union) / (union * union);
        }
    }

    // Normalized center distance.
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let d_rho = [pcx - gcx, pcy - gcy, pcx - gcx, pcy - gcy];
    let cw = x2.max(a2) - x1.min(a1);
    let ch = y2.max(b2) - y1.min(b1);
    let d_diag = [
        if x1 < a1 { -2.0 * cw } else { 0.0 },
        if y1 < b1 { -2.0 * ch } else { 0.0 },
        if x2 > a2 { 2.0 * cw } else { 0.0 },
        if y2 > b2 { 2.0 * ch } else { 0.0 },
    ];
    let mut d_dist = [0.0; 4];
    let mut dist = 0.0;
    if t.diag_sq > 0.0 {
        dist = t.center_dist_sq / t.diag_sq;
        let c4 = t.diag_sq * t.diag_sq;
        for k in 0..4 {
            d_dist[k] = (d_rho[k] * t.diag_sq - t.center_dist_sq * d_diag[k]) / c4;
        }
    }

    // Aspect-ratio consistency; the guard freezes the term for collapsed sides.
    let delta = guarded_atan_ratio(gt.width(), gt.height()) - guarded_atan_ratio(w, h);
    let k4 = 4.0 / (PI * PI);
    let (dv_dw, dv_dh) = if w > ASPECT_GUARD && h > ASPECT_GUARD {
        let r2 = w * w + h * h;
        (-2.0 * k4 * delta * h / r2, 2.0 * k4 * delta * w / r2)
    } else {
        (0.0, 0.0)
    };
    let d_v = [-dv_dw, -dv_dh, dv_dw, dv_dh];

    let value = 1.0 - t.iou + dist + t.alpha * t.v;
    let mut gradient = [0.0; 4];
    for k in 0..4 {
        gradient[k] = -d_iou[k] + d_dist[k] + t.alpha * d_v[k];
    }
    Ok(CiouLoss { value, gradient })
}

/// Greedy non-maximum suppression.
///
/// Detections are visited by descending score (ties keep input order); each
/// kept detection suppresses every remaining one whose IoU with it exceeds
/// `iou_threshold`, restricted to the same class when `per_class` is set.
pub fn nms(dets: &[Detection], iou_threshold: f64, per_class: bool) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
    });

    let mut suppressed = vec![false; dets.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(dets[i]);
        for &j in &order[pos + 1..] {
            if suppressed[j] || (per_class && dets[j].class_id != dets[i].class_id) {
                continue;
            }
            if iou(&dets[i].bbox, &dets[j].bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// Four-number box encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxFormat {
    /// `x_min, y_min, x_max, y_max`
    Xyxy,
    /// `center_x, center_y, width, height`
    Cxcywh,
    /// `x_min, y_min, width, height` (COCO)
    Xywh,
}

impl FromStr for BoxFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyxy" => Ok(BoxFormat::Xyxy),
            "cxcywh" | "center-xywh" => Ok(BoxFormat::Cxcywh),
            "xywh" | "corner-xywh" => Ok(BoxFormat::Xywh),
            other => Err(Error::input(format!("unknown box format `{other}`"))),
        }
    }
}

pub fn convert(coords: [f64; 4], from: BoxFormat, to: BoxFormat) -> Result<[f64; 4]> {
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::input(format!("non-finite box {coords:?}")));
    }
    let xyxy = match from {
        BoxFormat::Xyxy => coords,
        BoxFormat::Cxcywh => {
            let [cx, cy, w, h] = coords;
            [cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h]
        }
        BoxFormat::Xywh => {
            let [x, y, w, h] = coords;
            [x, y, x + w, y + h]
        }
    };
    if xyxy[2] < xyxy[0] || xyxy[3] < xyxy[1] {
        return Err(Error::input(format!("negative box extent {coords:?}")));
    }
    let [x0, y0, x1, y1] = xyxy;
    Ok(match to {
        BoxFormat::Xyxy => xyxy,
        BoxFormat::Cxcywh => [0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0],
        BoxFormat::Xywh => [x0, y0, x1 - x0, y1 - y0],
    })
}

/// Bookkeeping for an aspect-preserving resize plus padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxTransform {
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
    pub original_width: usize,
    pub original_height: usize,
    pub target_width: usize,
    pub target_height: usize,
}

impl BoxTransform {
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            scale: 1.0,
            pad_x: 0.0,
            pad_y: 0.0,
            original_width: width,
            original_height: height,
            target_width: width,
            target_height: height,
        }
    }

    /// Maps a box from original-image coordinates into the letterboxed frame.
    pub fn forward(&self, b: &BBox) -> BBox {
        BBox::from_corners(
            b.x_min * self.scale + self.pad_x,
            b.y_min * self.scale + self.pad_y,
            b.x_max * self.scale + self.pad_x,
            b.y_max * self.scale + self.pad_y,
        )
    }
}

/// Maps a box from the letterboxed frame back to the original image, clipped
/// to its bounds.
pub fn unletterbox(b: &BBox, t: &BoxTransform) -> BBox {
    BBox::from_corners(
        (b.x_min - t.pad_x) / t.scale,
        (b.y_min - t.pad_y) / t.scale,
        (b.x_max - t.pad_x) / t.scale,
        (b.y_max - t.pad_y) / t.scale,
    )
    .clip(t.original_width as f64, t.original_height as f64)
}
