use super::Tensor;
use crate::boxes::{BBox, Detection};
use crate::{Error, Result};

/// Anchor prior size in input pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub w: f64,
    pub h: f64,
}

impl Anchor {
    pub fn new(w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::input(format!("anchor ({w}, {h}) must be positive")));
        }
        Ok(Self { w, h })
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Decodes a single-scale YOLOv5-style head `[A*(5+K), H, W]`.
///
/// Per anchor the channel block is `tx, ty, tw, th, obj, cls_0..cls_K`. For
/// cell `(i, j)`:
///
/// - center = `(2*sigmoid(t_xy) - 0.5 + (j, i)) * stride`
/// - size = `(2*sigmoid(t_wh))^2 * anchor`
/// - score = `sigmoid(obj) * max_k sigmoid(cls_k)`, class = argmax
///
/// Detections with `score >= conf_threshold` are returned in anchor, row,
/// column order as corner boxes.
pub fn yolo_decode(
    raw: &Tensor,
    anchors: &[Anchor],
    stride: f64,
    conf_threshold: f64,
) -> Result<Vec<Detection>> {
    let (channels, h, w) = raw.chw()?;
    let a_count = anchors.len();
    if a_count == 0 || channels % a_count != 0 || channels / a_count < 6 {
        return Err(Error::input(format!(
            "head has {channels} channels, not A*(5+K) for A={a_count}, K>=1"
        )));
    }
    if stride.is_nan() || stride <= 0.0 {
        return Err(Error::input("stride must be positive"));
    }
    let per_anchor = channels / a_count;
    let n_classes = per_anchor - 5;
    let data = raw.data();
    let plane = h * w;
    let at = |c: usize, i: usize, j: usize| data[c * plane + i * w + j] as f64;

    let mut out = Vec::new();
    for (a, anchor) in anchors.iter().enumerate() {
        let base = a * per_anchor;
        for i in 0..h {
            for j in 0..w {
                let obj = sigmoid(at(base + 4, i, j));
                let (mut best_k, mut best_p) = (0, f64::NEG_INFINITY);
                for k in 0..n_classes {
                    let p = sigmoid(at(base + 5 + k, i, j));
                    if p > best_p {
                        best_k = k;
                        best_p = p;
                    }
                }
                let score = obj * best_p;
                if score < conf_threshold {
                    continue;
                }
                let cx = (2.0 * sigmoid(at(base, i, j)) - 0.5 + j as f64) * stride;
                let cy = (2.0 * sigmoid(at(base + 1, i, j)) - 0.5 + i as f64) * stride;
                let bw = (2.0 * sigmoid(at(base + 2, i, j))).powi(2) * anchor.w;
                let bh = (2.0 * sigmoid(at(base + 3, i, j))).powi(2) * anchor.h;
                let bbox = BBox::new(cx - 0.5 * bw, cy - 0.5 * bh, cx + 0.5 * bw, cy + 0.5 * bh)?;
                out.push(Detection {
                    bbox,
                    class_id: best_k,
                    score,
                });
            }
        }
    }
    Ok(out)
}
