//! Speed/accuracy measurement: detector adapters, batch-1 benchmarking,
//! evaluation and trade-off reports.

mod adapters;
mod memory;
mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::Image;
use crate::boxes::{BoxTransform, Detection, GroundTruth};
use crate::costmodel::{count_flops, Graph, Shape};
use crate::metrics::{coco_map_with_workers, EvalConfig, EvalSummary};
use crate::nnops::Tensor;
use crate::{Error, Result};

pub use adapters::{RefNetAdapter, ReplayAdapter, SleepAdapter};
pub use memory::{current_bytes, is_tracking, peak_bytes, reset_peak, TrackingAllocator};
pub use report::{pareto_frontier, tradeoff_report, TradeoffRecord, TradeoffReport};

/// Confidence threshold used when collecting detections for mAP.
pub const EVAL_CONF_THRESHOLD: f64 = 0.001;
/// Confidence threshold for display-oriented benchmark runs.
pub const DISPLAY_CONF_THRESHOLD: f64 = 0.25;
pub const DEFAULT_NMS_IOU: f64 = 0.45;

/// Model-ready input produced by [`DetectorAdapter::prepare`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub image_id: u64,
    pub tensor: Option<Tensor>,
    pub transform: BoxTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawOutput {
    Tensor(Tensor),
    Detections(Vec<Detection>),
}

/// A detector driven through the common prepare / infer / postprocess
/// pipeline. `infer` must be deterministic for a fixed adapter.
pub trait DetectorAdapter: Sync {
    fn name(&self) -> &str;

    fn prepare(&self, image_id: u64, image: &Image) -> Result<ModelInput>;

    fn infer(&self, input: &ModelInput) -> Result<RawOutput>;

    /// Returns detections in original-image coordinates.
    fn postprocess(&self, raw: RawOutput, transform: &BoxTransform) -> Result<Vec<Detection>>;

    fn storage_bytes(&self) -> Option<u64> {
        None
    }

    /// Cost graph and the input shape it should be evaluated at.
    fn cost_graph(&self) -> Option<(Graph, Shape)> {
        None
    }

    /// Self-reported peak memory, used when allocator tracking is off.
    fn reported_peak_memory(&self) -> Option<u64> {
        None
    }

    /// Runs the whole pipeline on one image.
    fn detect(&self, image_id: u64, image: &Image) -> Result<Vec<Detection>> {
        let input = self.prepare(image_id, image)?;
        let raw = self.infer(&input)?;
        self.postprocess(raw, &input.transform)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub warmup_iters: usize,
    pub measured_iters: usize,
    pub include_postprocess: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 10,
            measured_iters: 100,
            include_postprocess: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorySource {
    Allocator,
    AdapterReported,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub model: String,
    pub fps: f64,
    pub mean_latency_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub peak_memory_bytes: Option<u64>,
    pub memory_source: MemorySource,
    pub storage_bytes: Option<u64>,
    pub gflops: Option<f64>,
    pub include_postprocess: bool,
    pub warmup_iters: usize,
    pub measured_iters: usize,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Times the adapter one image at a time (batch size 1).
///
/// Warm-up iterations are run and discarded; every measured iteration covers
/// prepare + infer, plus postprocess when configured. The loop runs on its
/// own thread.
pub fn run_bench(adapter: &dyn DetectorAdapter, images: &[Image], config: &BenchConfig) -> Result<BenchResult> {
    if images.is_empty() {
        return Err(Error::input("benchmark needs at least one image"));
    }
    if config.measured_iters == 0 {
        return Err(Error::input("measured_iters must be at least 1"));
    }

    let timed = std::thread::scope(|scope| {
        scope
            .spawn(|| bench_loop(adapter, images, config))
            .join()
            .map_err(|_| Error::Internal("benchmark thread panicked".into()))?
    })?;
    let (latencies, total_secs, allocator_peak) = timed;

    let mut sorted = latencies.clone();
    sorted.sort_by(f64::total_cmp);
    let (peak_memory_bytes, memory_source) = match (allocator_peak, adapter.reported_peak_memory()) {
        (Some(p), _) => (Some(p), MemorySource::Allocator),
        (None, Some(p)) => (Some(p), MemorySource::AdapterReported),
        (None, None) => (None, MemorySource::Unavailable),
    };
    let gflops = match adapter.cost_graph() {
        Some((graph, shape)) => Some(count_flops(&graph, shape)?.gflops()),
        None => None,
    };
    Ok(BenchResult {
        model: adapter.name().to_string(),
        fps: config.measured_iters as f64 / total_secs,
        mean_latency_ms: 1e3 * latencies.iter().sum::<f64>() / latencies.len() as f64,
        p50_ms: 1e3 * percentile(&sorted, 50.0),
        p90_ms: 1e3 * percentile(&sorted, 90.0),
        p99_ms: 1e3 * percentile(&sorted, 99.0),
        peak_memory_bytes,
        memory_source,
        storage_bytes: adapter.storage_bytes(),
        gflops,
        include_postprocess: config.include_postprocess,
        warmup_iters: config.warmup_iters,
        measured_iters: config.measured_iters,
    })
}

/// Per-iteration latencies (s), total measured time (s) and allocator peak.
fn bench_loop(
    adapter: &dyn DetectorAdapter,
    images: &[Image],
    config: &BenchConfig,
) -> Result<(Vec<f64>, f64, Option<u64>)> {
    let step = |i: usize| -> Result<()> {
        let image = &images[i % images.len()];
        let input = adapter.prepare(i as u64, image)?;
        let raw = adapter.infer(&input)?;
        if config.include_postprocess {
            std::hint::black_box(adapter.postprocess(raw, &input.transform)?);
        } else {
            std::hint::black_box(raw);
        }
        Ok(())
    };
    let wrap = |iteration: usize| {
        move |e: Error| Error::Adapter {
            iteration,
            source: Box::new(e),
        }
    };

    for i in 0..config.warmup_iters {
        step(i).map_err(wrap(i))?;
    }

    let tracking = is_tracking();
    let baseline = current_bytes();
    reset_peak();
    let mut latencies = Vec::with_capacity(config.measured_iters);
    let start = Instant::now();
    for k in 0..config.measured_iters {
        let i = config.warmup_iters + k;
        let t0 = Instant::now();
        step(i).map_err(wrap(i))?;
        latencies.push(t0.elapsed().as_secs_f64());
    }
    let total = start.elapsed().as_secs_f64();
    let peak = tracking.then(|| peak_bytes().saturating_sub(baseline) as u64);
    Ok((latencies, total, peak))
}

/// Images plus ground truth keyed by image id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalDataset {
    pub images: Vec<(u64, Image)>,
    pub ground_truths: BTreeMap<u64, Vec<GroundTruth>>,
}

/// Runs the full pipeline on every image (sequentially, batch 1) and scores
/// the detections with `workers` evaluation threads.
pub fn run_eval(
    adapter: &dyn DetectorAdapter,
    dataset: &EvalDataset,
    config: &EvalConfig,
    workers: usize,
) -> Result<EvalSummary> {
    if dataset.images.is_empty() {
        return Err(Error::input("evaluation dataset has no images"));
    }
    let mut dets = BTreeMap::new();
    for (i, (id, image)) in dataset.images.iter().enumerate() {
        let found = adapter.detect(*id, image).map_err(|e| Error::Adapter {
            iteration: i,
            source: Box::new(e),
        })?;
        dets.insert(*id, found);
    }
    coco_map_with_workers(&dets, &dataset.ground_truths, config, workers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 50.0);
        assert_eq!(percentile(&v, 90.0), 90.0);
        assert_eq!(percentile(&v, 99.0), 99.0);
        assert_eq!(percentile(&[7.0], 99.0), 7.0);
    }
}
