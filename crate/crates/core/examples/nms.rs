//! Greedy non-maximum suppression, class-aware and class-agnostic.

use detbench::boxes::{nms, BBox, Detection};

fn main() -> detbench::Result<()> {
    let raw = [
        (0.0, 0.0, 10.0, 10.0, 0, 0.9),
        (1.0, 1.0, 11.0, 11.0, 0, 0.8),
        (0.0, 0.0, 10.0, 10.0, 1, 0.7),
        (20.0, 20.0, 30.0, 30.0, 0, 0.6),
        (0.5, 0.0, 10.5, 10.0, 0, 0.9),
    ];
    let dets: Vec<Detection> = raw
        .iter()
        .map(|&(x0, y0, x1, y1, c, s)| Detection::new(BBox::new(x0, y0, x1, y1)?, c, s))
        .collect::<detbench::Result<_>>()?;

    for per_class in [true, false] {
        println!("per_class = {per_class}");
        for d in nms(&dets, 0.5, per_class) {
            println!("  class {} score {:.2} {}", d.class_id, d.score, d.bbox);
        }
    }
    Ok(())
}
