//! IoU, CIoU and the CIoU loss gradient for a few box pairs.

use detbench::boxes::{ciou, ciou_loss, iou, BBox};

fn main() -> detbench::Result<()> {
    let gt = BBox::new(10.0, 10.0, 50.0, 40.0)?;
    let preds = [
        BBox::new(10.0, 10.0, 50.0, 40.0)?,
        BBox::new(15.0, 12.0, 55.0, 42.0)?,
        BBox::new(30.0, 30.0, 60.0, 90.0)?,
        BBox::new(100.0, 100.0, 120.0, 110.0)?,
    ];
    println!("{:<28} {:>8} {:>9} {:>9}  gradient", "pred", "IoU", "CIoU", "loss");
    for p in &preds {
        let l = ciou_loss(p, &gt)?;
        println!(
            "{:<28} {:>8.4} {:>9.4} {:>9.4}  [{:.4}, {:.4}, {:.4}, {:.4}]",
            p.to_string(),
            iou(p, &gt),
            ciou(p, &gt)?,
            l.value,
            l.gradient[0],
            l.gradient[1],
            l.gradient[2],
            l.gradient[3]
        );
    }

    // A few steps of gradient descent pull a prediction onto the target.
    let mut c = BBox::new(30.0, 30.0, 60.0, 90.0)?.to_array();
    for step in 0..=200 {
        let l = ciou_loss(&BBox::from_array(c)?, &gt)?;
        if step % 50 == 0 {
            println!("step {step:>3}: loss {:.5}", l.value);
        }
        for k in 0..4 {
            c[k] -= 400.0 * l.gradient[k];
        }
    }
    Ok(())
}
