//! Letterbox, flip, mosaic and mixup on synthetic images, then the seeded
//! training pipeline.

use detbench::augment::{hflip, letterbox, mixup, mosaic, AugmentConfig, Augmenter, Image, LabeledImage, FILL_VALUE};
use detbench::boxes::{BBox, GroundTruth};

fn tile(size: usize, shade: f32, class_id: usize) -> detbench::Result<LabeledImage> {
    let image = Image::filled(size, size, [shade, 0.5, 1.0 - shade])?;
    let label = GroundTruth::new(BBox::new(10.0, 10.0, 40.0, 30.0)?, class_id);
    LabeledImage::new(image, vec![label])
}

fn show(name: &str, s: &LabeledImage) {
    println!("{name}: {}x{}", s.image.width(), s.image.height());
    for l in &s.labels {
        println!("  class {} {}", l.class_id, l.bbox);
    }
}

fn main() -> detbench::Result<()> {
    let wide = LabeledImage::new(
        Image::filled(50, 100, [0.2, 0.4, 0.6])?,
        vec![GroundTruth::new(BBox::new(10.0, 10.0, 30.0, 20.0)?, 0)],
    )?;
    let (boxed, t) = letterbox(&wide, 200, FILL_VALUE)?;
    show("letterbox 100x50 -> 200", &boxed);
    println!("  scale {} pad ({}, {})", t.scale, t.pad_x, t.pad_y);

    let a = tile(64, 0.1, 0)?;
    show("hflip", &hflip(&a));
    assert_eq!(hflip(&hflip(&a)), a);

    let tiles = [tile(64, 0.1, 0)?, tile(64, 0.4, 1)?, tile(64, 0.7, 2)?, tile(64, 0.9, 0)?];
    show("mosaic", &mosaic(&tiles, 128, (64, 64), 4.0)?);

    let m = mixup(&tiles[0], &tiles[2], 0.5)?;
    println!("mixup pixel: {:?}", m.image.pixel(0, 0));

    let config = AugmentConfig {
        image_size: 96,
        seed: 7,
        ..AugmentConfig::default()
    };
    let aug = Augmenter::new(config)?;
    let out = aug.apply_all(&tiles)?;
    for (i, s) in out.iter().enumerate() {
        println!("sample {i}: {} labels", s.labels.len());
    }
    assert_eq!(aug.apply_all(&tiles)?, out);
    Ok(())
}
