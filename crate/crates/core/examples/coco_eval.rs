//! COCO-style evaluation of a small synthetic detector output.

use std::collections::BTreeMap;

use detbench::boxes::{BBox, Detection, GroundTruth};
use detbench::metrics::{coco_map, EvalConfig};

fn main() -> detbench::Result<()> {
    let b = |x0, y0, x1, y1| BBox::new(x0, y0, x1, y1);
    let mut gts = BTreeMap::new();
    gts.insert(
        1,
        vec![
            GroundTruth::new(b(10.0, 10.0, 60.0, 70.0)?, 0),
            GroundTruth::new(b(100.0, 20.0, 130.0, 45.0)?, 2),
            GroundTruth::ignored(b(200.0, 200.0, 260.0, 260.0)?, 0),
        ],
    );
    gts.insert(2, vec![GroundTruth::new(b(0.0, 0.0, 150.0, 150.0)?, 1)]);

    let mut dets = BTreeMap::new();
    dets.insert(
        1,
        vec![
            Detection::new(b(12.0, 11.0, 61.0, 72.0)?, 0, 0.95)?,
            Detection::new(b(201.0, 199.0, 258.0, 262.0)?, 0, 0.9)?,
            Detection::new(b(102.0, 21.0, 128.0, 44.0)?, 2, 0.6)?,
            Detection::new(b(300.0, 300.0, 320.0, 320.0)?, 2, 0.7)?,
        ],
    );
    dets.insert(2, vec![Detection::new(b(5.0, 5.0, 140.0, 150.0)?, 1, 0.8)?]);

    let summary = coco_map(&dets, &gts, &EvalConfig::default())?;
    print!("{}", summary.to_table());
    for c in &summary.per_class {
        println!("class {}: {} gt, AP {:?}", c.class_id, c.n_gt, c.mean_ap);
    }
    Ok(())
}
