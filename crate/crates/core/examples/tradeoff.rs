//! Speed/accuracy trade-off report with a Pareto frontier.

use detbench::harness::{tradeoff_report, BenchResult, MemorySource, TradeoffRecord};
use detbench::metrics::EvalSummary;

fn record(model: &str, fps: f64, map: f64) -> TradeoffRecord {
    TradeoffRecord {
        model: model.to_string(),
        summary: Some(EvalSummary {
            map: Some(map),
            ap50: Some((map + 0.25).min(1.0)),
            ap75: None,
            ap_small: None,
            ap_medium: None,
            ap_large: None,
            iou_thresholds: Vec::new(),
            per_class: Vec::new(),
            per_area: Vec::new(),
        }),
        bench: Some(BenchResult {
            model: model.to_string(),
            fps,
            mean_latency_ms: 1e3 / fps,
            p50_ms: 1e3 / fps,
            p90_ms: 1e3 / fps,
            p99_ms: 1e3 / fps,
            peak_memory_bytes: None,
            memory_source: MemorySource::Unavailable,
            storage_bytes: None,
            gflops: None,
            include_postprocess: true,
            warmup_iters: 10,
            measured_iters: 100,
        }),
    }
}

fn main() -> detbench::Result<()> {
    let records = [
        record("tiny", 140.0, 0.31),
        record("small", 69.0, 0.47),
        record("medium", 41.0, 0.52),
        record("slow-and-worse", 30.0, 0.45),
        record("large", 25.0, 0.55),
    ];
    let report = tradeoff_report(&records)?;
    print!("{}", report.table_csv);
    println!("frontier: {}", report.frontier.join(", "));

    let dir = std::env::temp_dir().join("detbench-tradeoff");
    report.write_to_dir(&dir)?;
    println!("written to {}", dir.display());
    Ok(())
}
