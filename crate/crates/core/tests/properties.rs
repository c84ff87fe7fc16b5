use detbench::augment::{affine_translate_scale, hflip, letterbox, mosaic, AugmentConfig, Augmenter, Image, LabeledImage};
use detbench::boxes::{ciou, convert, iou, nms, BBox, BoxFormat, Detection, GroundTruth};
use detbench::cli::{parse_coco, Annotation, Category, DatasetManifest, ImageEntry};
use detbench::harness::pareto_frontier;
use detbench::kv::KvDoc;
use detbench::nnops::cross_entropy;
use detbench::schedule::{lr_at, OneCycleConfig};
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..100.0f64, 0.0..100.0f64, 0.5..60.0f64, 0.5..60.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn labeled(max_side: usize) -> impl Strategy<Value = LabeledImage> {
    (8..max_side, 8..max_side, any::<u64>(), 0..4usize).prop_map(|(w, h, seed, n)| {
        let data = (0..w * h * 3)
            .map(|i| ((i as u64 ^ seed).wrapping_mul(2654435761) % 1000) as f32 / 999.0)
            .collect();
        let labels = (0..n)
            .map(|k| {
                let x0 = (k * 3 % w) as f64;
                let y0 = (k * 5 % h) as f64;
                let b = BBox::new(x0, y0, (x0 + 6.0).min(w as f64), (y0 + 6.0).min(h as f64)).unwrap();
                GroundTruth::new(b, k % 3)
            })
            .collect();
        LabeledImage::new(Image::new(h, w, data).unwrap(), labels).unwrap()
    })
}

fn check_bounds(s: &LabeledImage) {
    assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let (w, h) = (s.image.width() as f64, s.image.height() as f64);
    for l in &s.labels {
        let b = l.bbox;
        assert!(b.x_min() >= 0.0 && b.y_min() >= 0.0 && b.x_max() <= w && b.y_max() <= h, "{b} in {w}x{h}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let o = iou(&a, &b);
        prop_assert_eq!(o, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&o));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn ciou_below_iou_unless_aligned(a in bbox(), b in bbox()) {
        let c = ciou(&a, &b).unwrap();
        let same_center = a.center() == b.center();
        let same_aspect = a.width() / a.height() == b.width() / b.height();
        if !(same_center && same_aspect) {
            prop_assert!(c < iou(&a, &b));
        }
    }

    #[test]
    fn format_round_trips(b in bbox()) {
        for f in [BoxFormat::Cxcywh, BoxFormat::Xywh] {
            let there = convert(b.to_array(), BoxFormat::Xyxy, f).unwrap();
            let back = convert(there, f, BoxFormat::Xyxy).unwrap();
            for k in 0..4 {
                prop_assert!((back[k] - b.to_array()[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero(logits in prop::collection::vec(-20.0..20.0f64, 2..12), t in 0..100usize) {
        let target = t % logits.len();
        let l = cross_entropy(&logits, target).unwrap();
        prop_assert!(l.value >= 0.0);
        prop_assert!(l.gradient.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn nms_output_is_sorted_and_separated(
        raw in prop::collection::vec((bbox(), 0..3usize, 0..10u32), 0..60),
        thr in 0.1..0.9f64,
        per_class in any::<bool>(),
    ) {
        let dets: Vec<Detection> = raw
            .iter()
            .map(|&(b, c, s)| Detection::new(b, c, s as f64 / 10.0).unwrap())
            .collect();
        let kept = nms(&dets, thr, per_class);
        prop_assert!(kept.windows(2).all(|w| w[0].score >= w[1].score));
        for (i, a) in kept.iter().enumerate() {
            prop_assert!(dets.contains(a));
            for b in &kept[i + 1..] {
                if !per_class || a.class_id == b.class_id {
                    prop_assert!(iou(&a.bbox, &b.bbox) <= thr);
                }
            }
        }
    }

    #[test]
    fn frontier_invariant_under_reordering(
        points in prop::collection::vec((0u32..50, 0u32..50), 1..20),
        shift in 0usize..20,
    ) {
        let pts: Vec<(f64, f64)> = points.iter().map(|&(f, m)| (f as f64, m as f64 / 50.0)).collect();
        let mut rotated = pts.clone();
        let k = shift % pts.len();
        rotated.rotate_left(k);
        let mut a: Vec<(f64, f64)> = pareto_frontier(&pts).into_iter().map(|i| pts[i]).collect();
        let mut b: Vec<(f64, f64)> = pareto_frontier(&rotated).into_iter().map(|i| rotated[i]).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        prop_assert!(!a.is_empty());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lr_stays_in_range(total in 2usize..400, pct in 0.05..0.95f64, step in 0usize..400) {
        let c = OneCycleConfig { total_steps: total, pct_start: pct, ..OneCycleConfig::default() };
        let lr = lr_at(&c, step.min(total)).unwrap();
        prop_assert!((0.001..=0.01).contains(&lr));
    }

    #[test]
    fn kv_round_trip(entries in prop::collection::btree_map("[a-z][a-z_.]{0,10}", "[a-zA-Z0-9 ,.]{0,20}", 0..10)) {
        let mut doc = KvDoc::new();
        for (k, v) in &entries {
            doc.set(k, v.trim());
        }
        let back = KvDoc::parse(&doc.to_text()).unwrap();
        prop_assert_eq!(back, doc);
    }

    #[test]
    fn coco_serialize_parse_identity(
        sizes in prop::collection::vec((16usize..400, 16usize..400), 1..4),
        boxes in prop::collection::vec((0usize..4, 0u32..40, 0u32..40, 1u32..40, 1u32..40, 0usize..3, any::<bool>()), 0..12),
    ) {
        let images: Vec<ImageEntry> = sizes
            .iter()
            .enumerate()
            .map(|(i, &(w, h))| ImageEntry { id: 10 + i as u64, file_name: format!("{i}.ppm"), width: w, height: h })
            .collect();
        let categories = vec![
            Category { coco_id: 1, name: "with mask".into() },
            Category { coco_id: 5, name: "incorrect mask".into() },
            Category { coco_id: 9, name: "without mask".into() },
        ];
        let annotations = boxes
            .iter()
            .map(|&(im, x, y, w, h, c, ignore)| {
                let e = &images[im % images.len()];
                // Quarter-pixel coordinates keep the xywh conversion exact.
                let (x, y) = (x as f64 / 4.0, y as f64 / 4.0);
                let b = BBox::new(x, y, x + w as f64 / 4.0, y + h as f64 / 4.0).unwrap();
                Annotation { image_id: e.id, class_id: c, bbox: b.clip(e.width as f64, e.height as f64), ignore }
            })
            .collect();
        let m = DatasetManifest { images, annotations, categories };
        prop_assert_eq!(parse_coco(&m.to_coco_json()).unwrap(), m);
    }

    #[test]
    fn augmentations_stay_in_bounds(
        pool in prop::collection::vec(labeled(80), 1..5),
        seed in any::<u64>(),
        mosaic_enabled in any::<bool>(),
        mixup_enabled in any::<bool>(),
    ) {
        let config = AugmentConfig { image_size: 64, seed, mosaic_enabled, mixup_enabled, ..AugmentConfig::default() };
        let aug = Augmenter::new(config).unwrap();
        for s in aug.apply_all(&pool).unwrap() {
            prop_assert_eq!((s.image.width(), s.image.height()), (64, 64));
            check_bounds(&s);
        }
    }

    #[test]
    fn geometric_ops_stay_in_bounds(
        src in labeled(60),
        tx in -30.0..30.0f64,
        ty in -30.0..30.0f64,
        s in 0.3..2.5f64,
    ) {
        check_bounds(&hflip(&src));
        check_bounds(&affine_translate_scale(&src, tx, ty, s, 1.0).unwrap());
        check_bounds(&letterbox(&src, 48, 0.5).unwrap().0);
        let tiles = [src.clone(), hflip(&src), src.clone(), hflip(&src)];
        check_bounds(&mosaic(&tiles, 96, (40, 56), 1.0).unwrap());
    }
}

/// Pixels covered by a box painted as 1.0 on a 0.0 background.
fn painted(w: usize, h: usize, b: [f64; 4]) -> LabeledImage {
    let mut data = vec![0.0f32; w * h * 3];
    for y in b[1] as usize..b[3] as usize {
        for x in b[0] as usize..b[2] as usize {
            for c in 0..3 {
                data[(y * w + x) * 3 + c] = 1.0;
            }
        }
    }
    let label = GroundTruth::new(BBox::from_array(b).unwrap(), 0);
    LabeledImage::new(Image::new(h, w, data).unwrap(), vec![label]).unwrap()
}

/// Bounding rectangle of pixels brighter than one half.
fn lit_extent(img: &Image) -> [f64; 4] {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.pixel(x, y)[0] > 0.5 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    [x0 as f64, y0 as f64, x1 as f64, y1 as f64]
}

fn assert_within_pixel(mask: [f64; 4], label: [f64; 4]) {
    for k in 0..4 {
        assert!((mask[k] - label[k]).abs() <= 1.0, "mask {mask:?} vs label {label:?}");
    }
}

#[test]
fn label_geometry_follows_pixels() {
    let src = painted(80, 60, [12.0, 9.0, 41.0, 30.0]);

    let f = hflip(&src);
    assert_within_pixel(lit_extent(&f.image), f.labels[0].bbox.to_array());

    for (tx, ty, s) in [(5.0, -3.0, 1.0), (0.0, 0.0, 1.5), (-4.0, 6.0, 0.7)] {
        let a = affine_translate_scale(&src, tx, ty, s, 1.0).unwrap();
        assert_within_pixel(lit_extent(&a.image), a.labels[0].bbox.to_array());
    }

    for target in [64, 100, 160] {
        let (l, _) = letterbox(&src, target, 0.0).unwrap();
        assert_within_pixel(lit_extent(&l.image), l.labels[0].bbox.to_array());
    }
}
