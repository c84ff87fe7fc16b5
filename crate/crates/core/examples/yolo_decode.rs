//! Decoding a raw YOLO-style head into boxes, then NMS.

use detbench::boxes::nms;
use detbench::nnops::{yolo_decode, Anchor, Tensor};

fn main() -> detbench::Result<()> {
    let anchors = [Anchor::new(10.0, 13.0)?, Anchor::new(16.0, 30.0)?];
    let (classes, grid) = (3, 4);
    let per_anchor = 5 + classes;

    // All-zero logits: cell-centered boxes of anchor size, score 0.25.
    let zeros = Tensor::zeros(vec![anchors.len() * per_anchor, grid, grid]);
    let dets = yolo_decode(&zeros, &anchors, 8.0, 0.0)?;
    println!("{} boxes from zero logits; first {} score {}", dets.len(), dets[0].bbox, dets[0].score);

    // One confident cell for anchor 1, class 2.
    let mut raw = Tensor::full(vec![anchors.len() * per_anchor, grid, grid], -6.0);
    let cell = |ch: usize| (per_anchor + ch) * grid * grid + grid + 2;
    for (ch, v) in [(0, 0.3), (1, -0.2), (2, 0.1), (3, 0.4), (4, 5.0), (7, 4.0)] {
        raw.data_mut()[cell(ch)] = v;
    }
    let dets = nms(&yolo_decode(&raw, &anchors, 8.0, 0.25)?, 0.45, true);
    for d in &dets {
        println!("class {} score {:.4} {}", d.class_id, d.score, d.bbox);
    }
    Ok(())
}
