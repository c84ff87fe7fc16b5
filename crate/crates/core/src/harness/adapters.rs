use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use super::{DetectorAdapter, ModelInput, RawOutput, DEFAULT_NMS_IOU, EVAL_CONF_THRESHOLD};
use crate::augment::{letterbox, Image, LabeledImage, FILL_VALUE};
use crate::boxes::{nms, unletterbox, BBox, BoxTransform, Detection, GroundTruth};
use crate::costmodel::{Graph, Shape};
use crate::nnops::{weights, yolo_decode, RefNet, RefNetSpec};
use crate::{Error, Result};

/// The in-repo reference detector: letterbox, RefNet forward, decode, NMS.
pub struct RefNetAdapter {
    name: String,
    net: RefNet,
    input_size: usize,
    pub conf_threshold: f64,
    pub nms_iou: f64,
    peak_live: AtomicU64,
}

impl RefNetAdapter {
    pub fn new(net: RefNet, input_size: usize) -> Result<Self> {
        if input_size == 0 || !input_size.is_multiple_of(RefNetSpec::STRIDE) {
            return Err(Error::input(format!(
                "input size {input_size} must be a positive multiple of {}",
                RefNetSpec::STRIDE
            )));
        }
        Ok(Self {
            name: format!("refnet-{input_size}"),
            net,
            input_size,
            conf_threshold: EVAL_CONF_THRESHOLD,
            nms_iou: DEFAULT_NMS_IOU,
            peak_live: AtomicU64::new(0),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn net(&self) -> &RefNet {
        &self.net
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }
}

impl DetectorAdapter for RefNetAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn prepare(&self, image_id: u64, image: &Image) -> Result<ModelInput> {
        let src = LabeledImage {
            image: image.clone(),
            labels: Vec::new(),
        };
        let (boxed, transform) = letterbox(&src, self.input_size, FILL_VALUE)?;
        Ok(ModelInput {
            image_id,
            tensor: Some(self.net.image_to_tensor(&boxed.image)?),
            transform,
        })
    }

    fn infer(&self, input: &ModelInput) -> Result<RawOutput> {
        let x = input
            .tensor
            .as_ref()
            .ok_or_else(|| Error::input("refnet input carries no tensor"))?;
        let trace = self.net.forward_traced(x)?;
        let live = (trace.peak_live_bytes + x.size_bytes()) as u64;
        self.peak_live.fetch_max(live, Ordering::Relaxed);
        Ok(RawOutput::Tensor(trace.head))
    }

    fn postprocess(&self, raw: RawOutput, transform: &BoxTransform) -> Result<Vec<Detection>> {
        let head = match raw {
            RawOutput::Tensor(t) => t,
            RawOutput::Detections(_) => return Err(Error::input("refnet expects a raw head tensor")),
        };
        let decoded = yolo_decode(
            &head,
            &self.net.spec.anchors,
            RefNetSpec::STRIDE as f64,
            self.conf_threshold,
        )?;
        Ok(nms(&decoded, self.nms_iou, true)
            .into_iter()
            .map(|d| Detection {
                bbox: unletterbox(&d.bbox, transform),
                ..d
            })
            .collect())
    }

    fn storage_bytes(&self) -> Option<u64> {
        weights::to_bytes(&self.net.to_entries()).ok().map(|b| b.len() as u64)
    }

    fn cost_graph(&self) -> Option<(Graph, Shape)> {
        Some((
            self.net.spec.to_graph(),
            Shape::Chw(self.net.spec.in_channels, self.input_size, self.input_size),
        ))
    }

    fn reported_peak_memory(&self) -> Option<u64> {
        match self.peak_live.load(Ordering::Relaxed) {
            0 => None,
            v => Some(v),
        }
    }
}

/// Replays precomputed detections keyed by image id.
pub struct ReplayAdapter {
    name: String,
    detections: BTreeMap<u64, Vec<Detection>>,
    pub conf_threshold: f64,
}

impl ReplayAdapter {
    pub fn new(name: impl Into<String>, detections: BTreeMap<u64, Vec<Detection>>) -> Self {
        Self {
            name: name.into(),
            detections,
            conf_threshold: EVAL_CONF_THRESHOLD,
        }
    }

    /// Every ground truth replayed as a score-1 detection.
    pub fn from_ground_truths(gts: &BTreeMap<u64, Vec<GroundTruth>>) -> Self {
        let dets = gts
            .iter()
            .map(|(&id, gs)| {
                let ds = gs
                    .iter()
                    .map(|g| Detection {
                        bbox: g.bbox,
                        class_id: g.class_id,
                        score: 1.0,
                    })
                    .collect();
                (id, ds)
            })
            .collect();
        Self::new("replay-gt", dets)
    }

    /// Loads `<image_id>.txt` files with lines
    /// `class score x_min y_min x_max y_max`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut detections = BTreeMap::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let id: u64 = stem
                .parse()
                .map_err(|_| Error::parse(path.display().to_string(), "file stem is not an image id"))?;
            let text = std::fs::read_to_string(&path)?;
            detections.insert(id, parse_detection_lines(&text, &path.display().to_string())?);
        }
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("replay")
            .to_string();
        Ok(Self::new(name, detections))
    }

    pub fn detections(&self) -> &BTreeMap<u64, Vec<Detection>> {
        &self.detections
    }
}

fn parse_detection_lines(text: &str, origin: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = || format!("{origin}:{}", i + 1);
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::parse(at(), "expected `class score x_min y_min x_max y_max`"));
        }
        let class_id = f[0].parse().map_err(|_| Error::parse(at(), "bad class id"))?;
        let nums = f[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::parse(at(), format!("bad number `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let bbox = BBox::new(nums[1], nums[2], nums[3], nums[4])?;
        out.push(Detection::new(bbox, class_id, nums[0])?);
    }
    Ok(out)
}

impl DetectorAdapter for ReplayAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn prepare(&self, image_id: u64, image: &Image) -> Result<ModelInput> {
        Ok(ModelInput {
            image_id,
            tensor: None,
            transform: BoxTransform::identity(image.width(), image.height()),
        })
    }

    fn infer(&self, input: &ModelInput) -> Result<RawOutput> {
        Ok(RawOutput::Detections(
            self.detections.get(&input.image_id).cloned().unwrap_or_default(),
        ))
    }

    fn postprocess(&self, raw: RawOutput, transform: &BoxTransform) -> Result<Vec<Detection>> {
        match raw {
            RawOutput::Detections(d) => Ok(d
                .into_iter()
                .filter(|d| d.score >= self.conf_threshold)
                .map(|d| Detection {
                    bbox: unletterbox(&d.bbox, transform),
                    ..d
                })
                .collect()),
            RawOutput::Tensor(_) => Err(Error::input("replay adapter expects detections")),
        }
    }
}

/// Synthetic adapter that sleeps for fixed durations; a timing reference.
pub struct SleepAdapter {
    pub infer_delay: Duration,
    pub postprocess_delay: Duration,
}

impl SleepAdapter {
    pub fn new(infer_delay: Duration) -> Self {
        Self {
            infer_delay,
            postprocess_delay: Duration::ZERO,
        }
    }
}

impl DetectorAdapter for SleepAdapter {
    fn name(&self) -> &str {
        "sleep"
    }

    fn prepare(&self, image_id: u64, image: &Image) -> Result<ModelInput> {
        Ok(ModelInput {
            image_id,
            tensor: None,
            transform: BoxTransform::identity(image.width(), image.height()),
        })
    }

    fn infer(&self, _input: &ModelInput) -> Result<RawOutput> {
        std::thread::sleep(self.infer_delay);
        Ok(RawOutput::Detections(Vec::new()))
    }

    fn postprocess(&self, raw: RawOutput, _transform: &BoxTransform) -> Result<Vec<Detection>> {
        if !self.postprocess_delay.is_zero() {
            std::thread::sleep(self.postprocess_delay);
        }
        match raw {
            RawOutput::Detections(d) => Ok(d),
            RawOutput::Tensor(_) => Ok(Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_lines_parse() {
        let d = parse_detection_lines("# c s x0 y0 x1 y1\n1 0.5 0 0 2 2\n", "t").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].class_id, 1);
        assert!(parse_detection_lines("1 0.5 0 0 2\n", "t").is_err());
        assert!(parse_detection_lines("1 1.5 0 0 2 2\n", "t").is_err());
    }

    #[test]
    fn refnet_adapter_rejects_bad_size() {
        let net = RefNet::random(RefNetSpec::default(), 0).unwrap();
        assert!(RefNetAdapter::new(net, 30).is_err());
    }
}
