//! Independent reference implementations and generators shared by the
//! integration tests. Nothing here calls into the library's algorithms; only
//! its plain data types are used.

#![allow(dead_code)]

use std::collections::BTreeMap;

use detbench::boxes::{BBox, Detection, GroundTruth};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn overlap(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |c: [f64; 4]| (c[2] - c[0]) * (c[3] - c[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

pub fn random_box(r: &mut ChaCha8Rng, extent: f64, min_side: f64, max_side: f64) -> BBox {
    let w = r.random_range(min_side..max_side);
    let h = r.random_range(min_side..max_side);
    let x = r.random_range(0.0..extent - w);
    let y = r.random_range(0.0..extent - h);
    BBox::new(x, y, x + w, y + h).unwrap()
}

pub fn jitter(r: &mut ChaCha8Rng, b: &BBox, amount: f64) -> BBox {
    let c = b.to_array();
    let mut d = [0.0; 4];
    for k in 0..4 {
        d[k] = c[k] + r.random_range(-amount..amount) * if k % 2 == 0 { b.width() } else { b.height() };
    }
    let (x0, x1) = (d[0].min(d[2]), d[0].max(d[2]) + 0.5);
    let (y0, y1) = (d[1].min(d[3]), d[1].max(d[3]) + 0.5);
    BBox::new(x0, y0, x1, y1).unwrap()
}

pub type Dataset = (BTreeMap<u64, Vec<Detection>>, BTreeMap<u64, Vec<GroundTruth>>);

/// Up to 5 images, up to 10 ground truths and 10 detections each, 3 classes,
/// a mix of object sizes, some ignored ground truths and distinct scores.
pub fn random_dataset(seed: u64) -> Dataset {
    let mut r = rng(seed);
    let n_images = r.random_range(1..=5);
    let mut dets = BTreeMap::new();
    let mut gts = BTreeMap::new();
    let mut score_pool: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
    for id in 0..n_images as u64 {
        let n_gt = r.random_range(0..=10);
        let mut g = Vec::new();
        for _ in 0..n_gt {
            let side = match r.random_range(0..3) {
                0 => (4.0, 30.0),
                1 => (30.0, 100.0),
                _ => (90.0, 200.0),
            };
            let b = random_box(&mut r, 400.0, side.0, side.1);
            let class = r.random_range(0..3);
            g.push(if r.random_bool(0.1) {
                GroundTruth::ignored(b, class)
            } else {
                GroundTruth::new(b, class)
            });
        }
        let n_det = r.random_range(0..=10);
        let mut d = Vec::new();
        for _ in 0..n_det {
            let k = r.random_range(0..score_pool.len());
            let score = score_pool.swap_remove(k);
            let (b, class) = if !g.is_empty() && r.random_bool(0.7) {
                let gt: &GroundTruth = &g[r.random_range(0..g.len())];
                let class = if r.random_bool(0.85) { gt.class_id } else { r.random_range(0..3) };
                (jitter(&mut r, &gt.bbox, 0.15), class)
            } else {
                (random_box(&mut r, 400.0, 4.0, 150.0), r.random_range(0..3))
            };
            d.push(Detection::new(b, class, score).unwrap());
        }
        gts.insert(id, g);
        dets.insert(id, d);
    }
    (dets, gts)
}

/// Stratum membership of a pixel area; half-open.
pub fn in_range(area: f64, range: (f64, f64)) -> bool {
    area >= range.0 && area < range.1
}

pub const RANGES: [(f64, f64); 4] = [
    (0.0, f64::INFINITY),
    (0.0, 1024.0),
    (1024.0, 9216.0),
    (9216.0, f64::INFINITY),
];

/// Brute-force COCO evaluator. Returns AP indexed `[class][range][threshold]`.
pub fn brute_force_ap(
    dets: &BTreeMap<u64, Vec<Detection>>,
    gts: &BTreeMap<u64, Vec<GroundTruth>>,
    n_classes: usize,
    max_dets: usize,
) -> Vec<Vec<Vec<Option<f64>>>> {
    let thresholds: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let mut ids: Vec<u64> = dets.keys().chain(gts.keys()).copied().collect();
    ids.sort();
    ids.dedup();

    let mut out = vec![vec![vec![None; thresholds.len()]; RANGES.len()]; n_classes];
    for class in 0..n_classes {
        for (ri, &range) in RANGES.iter().enumerate() {
            for (ti, &thr) in thresholds.iter().enumerate() {
                // (score, is_tp) for every counted detection, over all images.
                let mut scored: Vec<(f64, bool)> = Vec::new();
                let mut n_pos = 0usize;
                for id in &ids {
                    let no_d = Vec::new();
                    let no_g = Vec::new();
                    let image_dets = dets.get(id).unwrap_or(&no_d);
                    let image_gts = gts.get(id).unwrap_or(&no_g);

                    let mut kept: Vec<&Detection> = image_dets.iter().collect();
                    kept.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
                    kept.truncate(max_dets);
                    let cd: Vec<&Detection> = kept.into_iter().filter(|d| d.class_id == class).collect();

                    let cg: Vec<(BBox, bool)> = image_gts
                        .iter()
                        .filter(|g| g.class_id == class)
                        .map(|g| (g.bbox, g.ignore || !in_range(g.bbox.area(), range)))
                        .collect();
                    n_pos += cg.iter().filter(|g| !g.1).count();

                    let mut taken = vec![false; cg.len()];
                    for d in cd {
                        let mut pick: Option<usize> = None;
                        for want_ignored in [false, true] {
                            let mut best = -1.0;
                            for (k, g) in cg.iter().enumerate() {
                                if taken[k] || g.1 != want_ignored {
                                    continue;
                                }
                                let o = overlap(d.bbox.to_array(), g.0.to_array());
                                if o >= thr && o > best {
                                    best = o;
                                    pick = Some(k);
                                }
                            }
                            if pick.is_some() {
                                break;
                            }
                        }
                        match pick {
                            Some(k) => {
                                taken[k] = true;
                                if !cg[k].1 {
                                    scored.push((d.score, true));
                                }
                            }
                            None => {
                                if in_range(d.bbox.area(), range) {
                                    scored.push((d.score, false));
                                }
                            }
                        }
                    }
                }
                if n_pos == 0 {
                    continue;
                }
                scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                let mut recall = Vec::new();
                let mut precision = Vec::new();
                let mut tp = 0.0;
                for (rank, s) in scored.iter().enumerate() {
                    if s.1 {
                        tp += 1.0;
                    }
                    recall.push(tp / n_pos as f64);
                    precision.push(tp / (rank + 1) as f64);
                }
                let mut total = 0.0;
                for i in 0..101 {
                    let r = i as f64 / 100.0;
                    let mut p: f64 = 0.0;
                    for k in 0..recall.len() {
                        if recall[k] >= r {
                            p = p.max(precision[k]);
                        }
                    }
                    total += p;
                }
                out[class][ri][ti] = Some(total / 101.0);
            }
        }
    }
    out
}

pub fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// `(map, ap50, ap75, small, medium, large)` from the brute-force table.
pub fn brute_force_summary(ap: &[Vec<Vec<Option<f64>>>]) -> [Option<f64>; 6] {
    let range_mean = |ri: usize| mean(ap.iter().map(|c| mean(c[ri].iter().copied())));
    [
        range_mean(0),
        mean(ap.iter().map(|c| c[0][0])),
        mean(ap.iter().map(|c| c[0][5])),
        range_mean(1),
        range_mean(2),
        range_mean(3),
    ]
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}

/// Quadratic greedy suppression written from the definition.
pub fn reference_nms(dets: &[Detection], thr: f64, per_class: bool) -> Vec<Detection> {
    let mut alive: Vec<bool> = vec![true; dets.len()];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..dets.len() {
            if alive[i] && best.is_none_or(|b| dets[i].score > dets[b].score) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        alive[b] = false;
        kept.push(dets[b]);
        for i in 0..dets.len() {
            if alive[i]
                && (!per_class || dets[i].class_id == dets[b].class_id)
                && overlap(dets[i].bbox.to_array(), dets[b].bbox.to_array()) > thr
            {
                alive[i] = false;
            }
        }
    }
    kept
}

/// Complete-IoU written out term by term, with the aspect weight supplied
/// by the caller so it can be frozen for differentiation.
pub fn ciou_frozen(p: [f64; 4], g: [f64; 4], alpha: Option<f64>) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let iou = overlap(p, g);
    let (pcx, pcy) = ((p[0] + p[2]) / 2.0, (p[1] + p[3]) / 2.0);
    let (gcx, gcy) = ((g[0] + g[2]) / 2.0, (g[1] + g[3]) / 2.0);
    let rho2 = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);
    let cw = p[2].max(g[2]) - p[0].min(g[0]);
    let ch = p[3].max(g[3]) - p[1].min(g[1]);
    let c2 = cw * cw + ch * ch;
    let v = 4.0 / (pi * pi)
        * (((g[2] - g[0]) / (g[3] - g[1])).atan() - ((p[2] - p[0]) / (p[3] - p[1])).atan()).powi(2);
    let a = alpha.unwrap_or_else(|| if v == 0.0 { 0.0 } else { v / ((1.0 - iou) + v) });
    (iou - rho2 / c2 - a * v, a)
}

pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-8)
}

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// SE gating computed directly in f64: mean over space, two dense layers,
/// relu, sigmoid, channel scaling.
pub fn se_reference(
    x: &[f32],
    (c, h, w): (usize, usize, usize),
    w1: &[f32],
    b1: &[f32],
    w2: &[f32],
    b2: &[f32],
) -> Vec<f64> {
    let m = b1.len();
    let hw = h * w;
    let z: Vec<f64> = (0..c)
        .map(|k| x[k * hw..(k + 1) * hw].iter().map(|&v| v as f64).sum::<f64>() / hw as f64)
        .collect();
    let s: Vec<f64> = (0..m)
        .map(|j| (b1[j] as f64 + (0..c).map(|k| w1[j * c + k] as f64 * z[k]).sum::<f64>()).max(0.0))
        .collect();
    let gate: Vec<f64> = (0..c)
        .map(|k| {
            let t = b2[k] as f64 + (0..m).map(|j| w2[k * m + j] as f64 * s[j]).sum::<f64>();
            1.0 / (1.0 + (-t).exp())
        })
        .collect();
    (0..c * hw).map(|i| x[i] as f64 * gate[i / hw]).collect()
}

/// Per-cell decoding straight from the head formulas.
pub fn decode_reference(
    data: &[f32],
    (ch, h, w): (usize, usize, usize),
    anchors: &[(f64, f64)],
    stride: f64,
    conf: f64,
) -> Vec<(usize, f64, [f64; 4])> {
    let s = |v: f32| 1.0 / (1.0 + (-(v as f64)).exp());
    let per = ch / anchors.len();
    let get = |c: usize, i: usize, j: usize| data[(c * h + i) * w + j];
    let mut out = Vec::new();
    for (a, &(aw, ah)) in anchors.iter().enumerate() {
        for i in 0..h {
            for j in 0..w {
                let b = a * per;
                let mut cls = 0;
                for k in 1..per - 5 {
                    if s(get(b + 5 + k, i, j)) > s(get(b + 5 + cls, i, j)) {
                        cls = k;
                    }
                }
                let score = s(get(b + 4, i, j)) * s(get(b + 5 + cls, i, j));
                if score < conf {
                    continue;
                }
                let x = (2.0 * s(get(b, i, j)) - 0.5 + j as f64) * stride;
                let y = (2.0 * s(get(b + 1, i, j)) - 0.5 + i as f64) * stride;
                let bw = (2.0 * s(get(b + 2, i, j))).powi(2) * aw;
                let bh = (2.0 * s(get(b + 3, i, j))).powi(2) * ah;
                out.push((cls, score, [x - bw / 2.0, y - bh / 2.0, x + bw / 2.0, y + bh / 2.0]));
            }
        }
    }
    out
}

/// Hand-tabulated cost of the reference network at 3x320x320:
/// `(name, params, macs, elementwise)` per node.
///
/// - stage1: 3->8, k3 s2 p1, 160x160 out: params 8*27+8, MACs 8*27*25600,
///   bias 204800 + silu 204800 (silu counted on its own node)
/// - stage2: 8->16, 80x80: params 16*72+16, MACs 16*72*6400
/// - se: C=16, r=16 -> m=1: params 16+1+16+16, MACs 2*16*1, elementwise 16 + 16*6400
/// - stage3: 16->32, 40x40: params 32*144+32, MACs 32*144*1600
/// - head: 1x1 32->24, params 24*32+24, MACs 24*32*1600
pub const REFNET_320: [(&str, u64, u64, u64); 8] = [
    ("stage1", 224, 5_529_600, 204_800),
    ("stage1_act", 0, 0, 204_800),
    ("stage2", 1_168, 7_372_800, 102_400),
    ("stage2_act", 0, 0, 102_400),
    ("se", 49, 32, 102_416),
    ("stage3", 4_640, 7_372_800, 51_200),
    ("stage3_act", 0, 0, 51_200),
    ("head", 792, 1_228_800, 38_400),
];
