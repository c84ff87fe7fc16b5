use std::collections::BTreeMap;
use std::time::Duration;

use detbench::augment::Image;
use detbench::boxes::{BBox, BoxTransform, Detection, GroundTruth};
use detbench::harness::{
    run_bench, run_eval, tradeoff_report, BenchConfig, DetectorAdapter, EvalDataset, MemorySource, ModelInput,
    RawOutput, RefNetAdapter, ReplayAdapter, SleepAdapter, TrackingAllocator, TradeoffRecord,
};
use detbench::metrics::EvalConfig;
use detbench::nnops::{RefNet, RefNetSpec};
use detbench::Error;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

fn frames(n: usize) -> Vec<Image> {
    (0..n)
        .map(|i| {
            let data = (0..48 * 64 * 3).map(|k| ((k * 7 + i * 13) % 255) as f32 / 255.0).collect();
            Image::new(48, 64, data).unwrap()
        })
        .collect()
}

fn dataset() -> EvalDataset {
    let images: Vec<(u64, Image)> = frames(3).into_iter().enumerate().map(|(i, im)| (i as u64, im)).collect();
    let mut ground_truths = BTreeMap::new();
    for (id, _) in &images {
        let b = BBox::new(5.0 + *id as f64, 4.0, 30.0, 40.0).unwrap();
        ground_truths.insert(*id, vec![GroundTruth::new(b, *id as usize % 3)]);
    }
    EvalDataset { images, ground_truths }
}

#[test]
fn single_iteration_percentiles_coincide() {
    let config = BenchConfig {
        warmup_iters: 0,
        measured_iters: 1,
        include_postprocess: true,
    };
    let r = run_bench(&SleepAdapter::new(Duration::from_millis(2)), &frames(1), &config).unwrap();
    assert_eq!(r.p50_ms, r.p90_ms);
    assert_eq!(r.p90_ms, r.p99_ms);
    assert_eq!(r.p50_ms, r.mean_latency_ms);
}

#[test]
fn postprocess_adds_latency() {
    let adapter = SleepAdapter {
        infer_delay: Duration::from_millis(2),
        postprocess_delay: Duration::from_millis(3),
    };
    let run = |include_postprocess| {
        let config = BenchConfig {
            warmup_iters: 1,
            measured_iters: 10,
            include_postprocess,
        };
        run_bench(&adapter, &frames(2), &config).unwrap()
    };
    let with = run(true);
    let without = run(false);
    assert!(with.mean_latency_ms >= without.mean_latency_ms);
    assert!(with.include_postprocess && !without.include_postprocess);
}

#[test]
fn benchmarking_leaves_results_unchanged() {
    let adapter = RefNetAdapter::new(RefNet::random(RefNetSpec::default(), 5).unwrap(), 64).unwrap();
    let data = dataset();
    let before = run_eval(&adapter, &data, &EvalConfig::default(), 2).unwrap();
    let images: Vec<Image> = data.images.iter().map(|(_, im)| im.clone()).collect();
    let config = BenchConfig {
        warmup_iters: 1,
        measured_iters: 3,
        include_postprocess: true,
    };
    let r = run_bench(&adapter, &images, &config).unwrap();
    assert_eq!(run_eval(&adapter, &data, &EvalConfig::default(), 2).unwrap(), before);

    assert_eq!(r.memory_source, MemorySource::Allocator);
    // Largest intermediate: stage-1 output, 8 channels at half resolution.
    let largest = 8 * 32 * 32 * 4;
    assert!(r.peak_memory_bytes.unwrap() >= largest);
    assert!(adapter.reported_peak_memory().unwrap() >= largest);
    assert!(r.gflops.unwrap() > 0.0);
    assert!(r.storage_bytes.unwrap() > 4 * adapter.net().param_count() as u64);
}

#[test]
fn replay_extremes() {
    let data = dataset();
    let perfect = ReplayAdapter::from_ground_truths(&data.ground_truths);
    assert_eq!(run_eval(&perfect, &data, &EvalConfig::default(), 1).unwrap().map, Some(1.0));
    let silent = ReplayAdapter::new("empty", BTreeMap::new());
    assert_eq!(run_eval(&silent, &data, &EvalConfig::default(), 1).unwrap().map, Some(0.0));
}

#[test]
fn replay_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("0.txt"), "0 0.9 5 4 30 40\n").unwrap();
    std::fs::write(dir.path().join("2.txt"), "# none\n").unwrap();
    let r = ReplayAdapter::from_dir(dir.path()).unwrap();
    assert_eq!(r.detections().len(), 2);
    assert_eq!(r.detections()[&0][0].class_id, 0);
    std::fs::write(dir.path().join("x.txt"), "").unwrap();
    assert!(ReplayAdapter::from_dir(dir.path()).is_err());
}

struct FailsAt(usize, std::sync::atomic::AtomicUsize);

impl DetectorAdapter for FailsAt {
    fn name(&self) -> &str {
        "flaky"
    }

    fn prepare(&self, image_id: u64, image: &Image) -> detbench::Result<ModelInput> {
        Ok(ModelInput {
            image_id,
            tensor: None,
            transform: BoxTransform::identity(image.width(), image.height()),
        })
    }

    fn infer(&self, _input: &ModelInput) -> detbench::Result<RawOutput> {
        let n = self.1.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        if n == self.0 {
            return Err(Error::Input("boom".into()));
        }
        Ok(RawOutput::Detections(Vec::<Detection>::new()))
    }

    fn postprocess(&self, raw: RawOutput, _t: &BoxTransform) -> detbench::Result<Vec<Detection>> {
        match raw {
            RawOutput::Detections(d) => Ok(d),
            RawOutput::Tensor(_) => Ok(Vec::new()),
        }
    }
}

#[test]
fn adapter_failure_carries_iteration() {
    let adapter = FailsAt(7, Default::default());
    let err = run_bench(&adapter, &frames(2), &BenchConfig::default()).unwrap_err();
    match err {
        Error::Adapter { iteration, .. } => assert_eq!(iteration, 7),
        other => panic!("unexpected {other:?}"),
    }
    assert!(run_bench(&adapter, &[], &BenchConfig::default()).is_err());
}

#[test]
fn report_columns_and_frontier() {
    let data = dataset();
    let summary = run_eval(&ReplayAdapter::from_ground_truths(&data.ground_truths), &data, &EvalConfig::default(), 1)
        .unwrap();
    let bench = run_bench(
        &SleepAdapter::new(Duration::from_millis(1)),
        &frames(1),
        &BenchConfig {
            warmup_iters: 0,
            measured_iters: 3,
            include_postprocess: true,
        },
    )
    .unwrap();
    let record = TradeoffRecord {
        model: "only".into(),
        summary: Some(summary),
        bench: Some(bench),
    };
    let report = tradeoff_report(&[record.clone()]).unwrap();
    assert_eq!(report.frontier, vec!["only".to_string()]);
    let mut lines = report.table_csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,mAP,AP50,fps,p50_ms,peak_memory_bytes,gflops,storage_bytes"
    );
    assert!(lines.next().unwrap().starts_with("only,1,1,"));
    assert_eq!(report.plot_csv.lines().count(), 2);

    let back: TradeoffRecord = serde_json::from_str(&serde_json::to_string(&record).unwrap()).unwrap();
    assert_eq!(back, record);
}
