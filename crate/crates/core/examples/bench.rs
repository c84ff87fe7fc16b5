//! Benchmarking adapters at batch size 1 with heap tracking.

use std::collections::BTreeMap;
use std::time::Duration;

use detbench::augment::Image;
use detbench::boxes::{BBox, GroundTruth};
use detbench::harness::{
    run_bench, run_eval, BenchConfig, EvalDataset, RefNetAdapter, ReplayAdapter, SleepAdapter, TrackingAllocator,
};
use detbench::metrics::EvalConfig;
use detbench::nnops::{RefNet, RefNetSpec};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

fn main() -> detbench::Result<()> {
    let images: Vec<Image> = (0..4)
        .map(|i| Image::filled(120, 160, [0.1 * i as f32, 0.5, 0.3]))
        .collect::<detbench::Result<_>>()?;
    let config = BenchConfig {
        warmup_iters: 2,
        measured_iters: 20,
        include_postprocess: true,
    };

    let sleep = SleepAdapter::new(Duration::from_millis(10));
    let r = run_bench(&sleep, &images, &config)?;
    println!("{}: {:.1} fps (expected about 100)", r.model, r.fps);

    let refnet = RefNetAdapter::new(RefNet::random(RefNetSpec::default(), 42)?, 160)?;
    let r = run_bench(&refnet, &images, &config)?;
    println!(
        "{}: {:.1} fps, p50 {:.2} ms, peak {:?} bytes ({:?}), {:?} GFLOPs, {:?} bytes on disk",
        r.model, r.fps, r.p50_ms, r.peak_memory_bytes, r.memory_source, r.gflops, r.storage_bytes
    );

    let mut gts = BTreeMap::new();
    gts.insert(0, vec![GroundTruth::new(BBox::new(20.0, 20.0, 80.0, 90.0)?, 0)]);
    gts.insert(1, vec![GroundTruth::new(BBox::new(50.0, 10.0, 150.0, 110.0)?, 1)]);
    let dataset = EvalDataset {
        images: vec![(0, images[0].clone()), (1, images[1].clone())],
        ground_truths: gts.clone(),
    };
    let perfect = ReplayAdapter::from_ground_truths(&gts);
    println!("replayed ground truth: mAP {:?}", run_eval(&perfect, &dataset, &EvalConfig::default(), 2)?.map);
    println!("untrained refnet: mAP {:?}", run_eval(&refnet, &dataset, &EvalConfig::default(), 2)?.map);
    Ok(())
}
