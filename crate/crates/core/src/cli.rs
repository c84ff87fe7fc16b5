//! Command-line front end and file formats.
//!
//! Formats handled here:
//!
//! - COCO annotation documents (`images`, `annotations`, `categories`) and
//!   COCO result arrays (`image_id`, `category_id`, `bbox`, `score`).
//! - `DBT1` raw tensors: magic, `u32` rank, `u32` dims, little-endian `f32` data.
//! - Images as binary PPM and labels as `class x_min y_min x_max y_max` text
//!   (see [`crate::augment`]).
//! - Flat `key = value` config files (see [`crate::kv`]).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ffi::OsString;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::augment::{read_labels, read_ppm, write_labels, write_ppm, AugmentConfig, Augmenter, Image, LabeledImage};
use crate::boxes::{convert, nms, BBox, BoxFormat, Detection, GroundTruth};
use crate::costmodel::{count_flops, Graph, Shape};
use crate::harness::{
    run_bench, run_eval, tradeoff_report, BenchConfig, DetectorAdapter, EvalDataset, RefNetAdapter, ReplayAdapter,
    SleepAdapter, TradeoffRecord, DEFAULT_NMS_IOU,
};
use crate::kv::KvDoc;
use crate::metrics::{coco_map_with_workers, EvalConfig};
use crate::nnops::{weights, yolo_decode, Anchor, RefNet, RefNetSpec, Tensor};
use crate::schedule::{emit_recipe, schedule_csv, OneCycleConfig, TrainingRecipe, MASK_CLASSES};
use crate::{Error, Result};

/// Ordered, unique class names; position is the dense class id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConfig {
    names: Vec<String>,
}

impl Default for ClassConfig {
    fn default() -> Self {
        Self {
            names: MASK_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ClassConfig {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::input("class names must be non-empty"));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::input(format!("duplicate class name `{n}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_id: u64,
    /// Dense 0-based class id.
    pub class_id: usize,
    pub bbox: BBox,
    pub ignore: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Category {
    /// Id as written in the source document.
    pub coco_id: u64,
    pub name: String,
}

/// Parsed annotation set. `categories[k]` is dense class `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
}

fn field<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "missing required field"))
}

fn as_u64(v: &Value, path: &str) -> Result<u64> {
    v.as_u64()
        .or_else(|| v.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64))
        .ok_or_else(|| Error::parse(path, "expected a non-negative integer"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::parse(path, "expected a number"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::parse(path, "expected an array"))
}

fn xywh_box(v: &Value, path: &str) -> Result<BBox> {
    let arr = as_array(v, path)?;
    if arr.len() != 4 {
        return Err(Error::parse(path, "bbox must have 4 numbers"));
    }
    let mut c = [0f64; 4];
    for (k, x) in arr.iter().enumerate() {
        c[k] = as_f64(x, &format!("{path}[{k}]"))?;
    }
    BBox::from_array(convert(c, BoxFormat::Xywh, BoxFormat::Xyxy).map_err(|e| Error::parse(path, e.to_string()))?)
}

/// Parses a COCO annotation document.
///
/// Boxes are converted from `[x, y, w, h]` to corners and clipped to their
/// image; category ids are remapped to dense ids in ascending id order;
/// `iscrowd` or `ignore` set to 1 marks an ignored ground truth.
pub fn parse_coco(text: &str) -> Result<DatasetManifest> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::parse("$", e.to_string()))?;

    let mut images = Vec::new();
    for (i, im) in as_array(field(&doc, "images", "$")?, "$.images")?.iter().enumerate() {
        let p = format!("$.images[{i}]");
        let file_name = im
            .get("file_name")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        images.push(ImageEntry {
            id: as_u64(field(im, "id", &p)?, &format!("{p}.id"))?,
            file_name,
            width: as_u64(field(im, "width", &p)?, &format!("{p}.width"))? as usize,
            height: as_u64(field(im, "height", &p)?, &format!("{p}.height"))? as usize,
        });
    }

    let mut raw_categories = Vec::new();
    for (i, c) in as_array(field(&doc, "categories", "$")?, "$.categories")?.iter().enumerate() {
        let p = format!("$.categories[{i}]");
        let name = field(c, "name", &p)?
            .as_str()
            .ok_or_else(|| Error::parse(format!("{p}.name"), "expected a string"))?;
        raw_categories.push(Category {
            coco_id: as_u64(field(c, "id", &p)?, &format!("{p}.id"))?,
            name: name.to_string(),
        });
    }
    raw_categories.sort_by_key(|c| c.coco_id);

    let mut problems = Vec::new();
    let mut seen_images = HashSet::new();
    for im in &images {
        if !seen_images.insert(im.id) {
            problems.push(format!("duplicate image id {}", im.id));
        }
    }
    if raw_categories.windows(2).any(|w| w[0].coco_id == w[1].coco_id) {
        problems.push("duplicate category id".to_string());
    }
    let dense: HashMap<u64, usize> = raw_categories
        .iter()
        .enumerate()
        .map(|(k, c)| (c.coco_id, k))
        .collect();
    let sizes: HashMap<u64, (usize, usize)> = images.iter().map(|im| (im.id, (im.width, im.height))).collect();

    let mut annotations = Vec::new();
    for (i, a) in as_array(field(&doc, "annotations", "$")?, "$.annotations")?.iter().enumerate() {
        let p = format!("$.annotations[{i}]");
        let image_id = as_u64(field(a, "image_id", &p)?, &format!("{p}.image_id"))?;
        let category_id = as_u64(field(a, "category_id", &p)?, &format!("{p}.category_id"))?;
        let bbox = xywh_box(field(a, "bbox", &p)?, &format!("{p}.bbox"))?;
        let flag = |k: &str| a.get(k).and_then(Value::as_u64).unwrap_or(0) == 1;
        let ignore = flag("iscrowd") || flag("ignore");
        let Some(&(w, h)) = sizes.get(&image_id) else {
            problems.push(format!("{p} references missing image {image_id}"));
            continue;
        };
        let Some(&class_id) = dense.get(&category_id) else {
            problems.push(format!("{p} references missing category {category_id}"));
            continue;
        };
        annotations.push(Annotation {
            image_id,
            class_id,
            bbox: bbox.clip(w as f64, h as f64),
            ignore,
        });
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    Ok(DatasetManifest {
        images,
        annotations,
        categories: raw_categories,
    })
}

impl DatasetManifest {
    /// `(coco id, dense id, name)` for every category.
    pub fn category_mapping(&self) -> Vec<(u64, usize, &str)> {
        self.categories
            .iter()
            .enumerate()
            .map(|(k, c)| (c.coco_id, k, c.name.as_str()))
            .collect()
    }

    pub fn class_config(&self) -> Result<ClassConfig> {
        ClassConfig::new(self.categories.iter().map(|c| c.name.clone()))
    }

    /// Ground truths per image id; images without annotations map to empty lists.
    pub fn ground_truths(&self) -> BTreeMap<u64, Vec<GroundTruth>> {
        let mut out: BTreeMap<u64, Vec<GroundTruth>> = self.images.iter().map(|im| (im.id, Vec::new())).collect();
        for a in &self.annotations {
            out.entry(a.image_id).or_default().push(GroundTruth {
                bbox: a.bbox,
                class_id: a.class_id,
                ignore: a.ignore,
            });
        }
        out
    }

    pub fn to_coco_json(&self) -> String {
        let images: Vec<Value> = self
            .images
            .iter()
            .map(|im| json!({"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}))
            .collect();
        let annotations: Vec<Value> = self
            .annotations
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let b = a.bbox;
                json!({
                    "id": i + 1,
                    "image_id": a.image_id,
                    "category_id": self.categories[a.class_id].coco_id,
                    "bbox": [b.x_min(), b.y_min(), b.width(), b.height()],
                    "area": b.area(),
                    "iscrowd": u8::from(a.ignore),
                })
            })
            .collect();
        let categories: Vec<Value> = self
            .categories
            .iter()
            .map(|c| json!({"id": c.coco_id, "name": c.name}))
            .collect();
        serde_json::to_string_pretty(&json!({
            "images": images,
            "annotations": annotations,
            "categories": categories,
        }))
        .expect("manifest serializes")
    }

    /// Parses a COCO results array into per-image detections with dense class ids.
    pub fn parse_results(&self, text: &str) -> Result<BTreeMap<u64, Vec<Detection>>> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::parse("$", e.to_string()))?;
        let dense: HashMap<u64, usize> = self.categories.iter().enumerate().map(|(k, c)| (c.coco_id, k)).collect();
        let mut out: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
        let mut problems = Vec::new();
        for (i, r) in as_array(&doc, "$")?.iter().enumerate() {
            let p = format!("$[{i}]");
            let image_id = as_u64(field(r, "image_id", &p)?, &format!("{p}.image_id"))?;
            let category_id = as_u64(field(r, "category_id", &p)?, &format!("{p}.category_id"))?;
            let bbox = xywh_box(field(r, "bbox", &p)?, &format!("{p}.bbox"))?;
            let score = as_f64(field(r, "score", &p)?, &format!("{p}.score"))?;
            let Some(&class_id) = dense.get(&category_id) else {
                problems.push(format!("{p} references unknown category {category_id}"));
                continue;
            };
            let det = Detection::new(bbox, class_id, score).map_err(|e| Error::parse(&p, e.to_string()))?;
            out.entry(image_id).or_default().push(det);
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(out)
    }
}

pub const TENSOR_MAGIC: &[u8; 4] = b"DBT1";

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::input("tensor dimension exceeds u32"))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::parse("magic", "not a DBT1 tensor file"));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let rank = word(4) as usize;
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::parse("dims", "truncated tensor header"));
    }
    let shape: Vec<usize> = (0..rank).map(|k| word(8 + 4 * k) as usize).collect();
    let n: usize = shape.iter().product();
    if bytes.len() != header + 4 * n {
        return Err(Error::parse(
            "data",
            format!("expected {} data bytes, found {}", 4 * n, bytes.len() - header),
        ));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(shape, data)
}

/// Parses `w,h;w,h;...` anchor lists.
pub fn parse_anchors(s: &str) -> Result<Vec<Anchor>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (w, h) = pair
                .split_once(',')
                .ok_or_else(|| Error::input(format!("anchor `{pair}` is not `w,h`")))?;
            let w: f64 = w.trim().parse().map_err(|_| Error::input(format!("bad anchor width `{w}`")))?;
            let h: f64 = h.trim().parse().map_err(|_| Error::input(format!("bad anchor height `{h}`")))?;
            Anchor::new(w, h)
        })
        .collect()
}

#[derive(Parser, Debug)]
#[command(name = "detbench", version, about = "Detection evaluation and speed/accuracy benchmarking")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed for every randomized step; defaults to 0 or the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads where the command can parallelize.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score COCO results against COCO annotations.
    Eval {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_dets: usize,
        /// Print the summary as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Measure batch-1 latency/fps of an adapter over a directory of PPM images.
    Bench {
        /// `refnet`, `refnet:<weights.dbw>`, `replay:<results.json|dir>` or `sleep:<ms>`.
        #[arg(long)]
        adapter: String,
        #[arg(long)]
        images: PathBuf,
        /// Also evaluate accuracy against these COCO annotations.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 320)]
        input_size: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long)]
        no_postprocess: bool,
    },
    /// Count parameters, MACs and FLOPs of a graph file.
    Flops {
        /// Graph file, or `refnet` for the bundled reference network.
        #[arg(long)]
        graph: String,
        /// Input shape `CxHxW`.
        #[arg(long, default_value = "3x320x320")]
        input: String,
        /// Print CSV instead of the table.
        #[arg(long)]
        csv: bool,
    },
    /// Emit the one-cycle learning-rate schedule as `step,lr` CSV.
    Lr {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        total_steps: Option<usize>,
        #[arg(long)]
        max_lr: Option<f64>,
        #[arg(long)]
        initial_lr: Option<f64>,
        #[arg(long)]
        final_lr: Option<f64>,
        #[arg(long)]
        pct_start: Option<f64>,
    },
    /// Emit the default training recipe document.
    Recipe,
    /// Run the augmentation pipeline on PPM images with label files.
    Augment {
        #[arg(long, required = true)]
        image: Vec<PathBuf>,
        /// One label file per image, in the same order.
        #[arg(long)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Decode a raw `DBT1` head tensor into detections.
    Decode {
        #[arg(long)]
        tensor: PathBuf,
        /// `w,h;w,h;...`
        #[arg(long)]
        anchors: String,
        #[arg(long)]
        stride: f64,
        #[arg(long, default_value_t = 0.25)]
        conf: f64,
        #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
        nms: f64,
        #[arg(long)]
        no_nms: bool,
    },
    /// Build trade-off CSV/JSON reports from record files.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_ppm(path: &Path) -> Result<Image> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_ppm(BufReader::new(f))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn ppm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().and_then(|e| e.to_str()) == Some("ppm"));
    files.sort();
    if files.is_empty() {
        return Err(Error::input(format!("no .ppm images in {}", dir.display())));
    }
    Ok(files)
}

fn build_adapter(
    spec: &str,
    common: &Common,
    input_size: usize,
    manifest: Option<&DatasetManifest>,
) -> Result<Box<dyn DetectorAdapter>> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "refnet" => {
            let net = if arg.is_empty() {
                RefNet::random(RefNetSpec::default(), common.seed.unwrap_or(0))?
            } else {
                let f = std::fs::File::open(arg)?;
                RefNet::from_entries(RefNetSpec::default(), &weights::read_weights(BufReader::new(f))?)?
            };
            Ok(Box::new(RefNetAdapter::new(net, input_size)?))
        }
        "replay" => {
            let path = Path::new(arg);
            if path.is_dir() {
                Ok(Box::new(ReplayAdapter::from_dir(path)?))
            } else {
                let m = manifest.ok_or_else(|| Error::input("replaying COCO results requires --annotations"))?;
                Ok(Box::new(ReplayAdapter::new("replay", m.parse_results(&read_text(path)?)?)))
            }
        }
        "sleep" => {
            let ms: u64 = arg.parse().map_err(|_| Error::input(format!("bad sleep duration `{arg}`")))?;
            Ok(Box::new(SleepAdapter::new(Duration::from_millis(ms))))
        }
        other => Err(Error::input(format!("unknown adapter `{other}`"))),
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let common = &cli.common;
    let output = common.output.as_deref();
    match cli.command {
        Command::Eval {
            annotations,
            results,
            max_dets,
            json,
        } => {
            let manifest = parse_coco(&read_text(&annotations)?)?;
            let dets = manifest.parse_results(&read_text(&results)?)?;
            let config = EvalConfig {
                max_detections_per_image: max_dets,
                ..EvalConfig::default()
            };
            let summary = coco_map_with_workers(&dets, &manifest.ground_truths(), &config, common.threads)?;
            let as_json = serde_json::to_string_pretty(&summary)? + "\n";
            if json {
                out.write_all(as_json.as_bytes())?;
            } else {
                for (coco, dense, name) in manifest.category_mapping() {
                    writeln!(out, "category {coco} -> class {dense} ({name})")?;
                }
                out.write_all(summary.to_table().as_bytes())?;
            }
            if let Some(p) = output {
                std::fs::write(p, as_json)?;
            }
        }
        Command::Bench {
            adapter,
            images,
            annotations,
            input_size,
            warmup,
            iters,
            no_postprocess,
        } => {
            let manifest = match &annotations {
                Some(p) => Some(parse_coco(&read_text(p)?)?),
                None => None,
            };
            let frames: Vec<(u64, Image)> = match &manifest {
                Some(m) => m
                    .images
                    .iter()
                    .map(|e| load_ppm(&images.join(&e.file_name)).map(|im| (e.id, im)))
                    .collect::<Result<_>>()?,
                None => ppm_files(&images)?
                    .iter()
                    .enumerate()
                    .map(|(i, p)| load_ppm(p).map(|im| (i as u64, im)))
                    .collect::<Result<_>>()?,
            };
            let adapter = build_adapter(&adapter, common, input_size, manifest.as_ref())?;
            let summary = match &manifest {
                Some(m) => {
                    let dataset = EvalDataset {
                        images: frames.clone(),
                        ground_truths: m.ground_truths(),
                    };
                    Some(run_eval(adapter.as_ref(), &dataset, &EvalConfig::default(), common.threads)?)
                }
                None => None,
            };
            let config = BenchConfig {
                warmup_iters: warmup,
                measured_iters: iters,
                include_postprocess: !no_postprocess,
            };
            let imgs: Vec<Image> = frames.into_iter().map(|f| f.1).collect();
            let bench = run_bench(adapter.as_ref(), &imgs, &config)?;
            writeln!(
                out,
                "{}: {:.2} fps, p50 {:.3} ms, p90 {:.3} ms, p99 {:.3} ms (postprocess {})",
                bench.model,
                bench.fps,
                bench.p50_ms,
                bench.p90_ms,
                bench.p99_ms,
                if bench.include_postprocess { "included" } else { "excluded" }
            )?;
            if let Some(m) = bench.peak_memory_bytes {
                writeln!(out, "peak memory: {m} bytes ({:?})", bench.memory_source)?;
            }
            if let Some(s) = &summary {
                out.write_all(s.to_table().as_bytes())?;
            }
            let record = TradeoffRecord {
                model: bench.model.clone(),
                summary,
                bench: Some(bench),
            };
            if let Some(p) = output {
                std::fs::write(p, serde_json::to_string_pretty(&record)? + "\n")?;
            }
        }
        Command::Flops { graph, input, csv } => {
            let g = if graph == "refnet" {
                RefNetSpec::default().to_graph()
            } else {
                Graph::parse(&read_text(Path::new(&graph))?)?
            };
            let report = count_flops(&g, input.parse::<Shape>()?)?;
            if csv {
                out.write_all(report.to_csv().as_bytes())?;
            } else {
                out.write_all(report.to_table().as_bytes())?;
            }
            if let Some(p) = output {
                std::fs::write(p, report.to_csv())?;
            }
        }
        Command::Lr {
            config,
            total_steps,
            max_lr,
            initial_lr,
            final_lr,
            pct_start,
        } => {
            let mut c = match config {
                Some(p) => OneCycleConfig::from_kv(&KvDoc::parse(&read_text(&p)?)?, "")?,
                None => OneCycleConfig::default(),
            };
            if let Some(v) = total_steps {
                c.total_steps = v;
            }
            if let Some(v) = max_lr {
                c.max_lr = v;
            }
            if let Some(v) = initial_lr {
                c.initial_lr = v;
            }
            if let Some(v) = final_lr {
                c.final_lr = v;
            }
            if let Some(v) = pct_start {
                c.pct_start = v;
            }
            emit(out, output, &schedule_csv(&c)?)?;
        }
        Command::Recipe => emit(out, output, &emit_recipe(&TrainingRecipe::default())?)?,
        Command::Augment { image, labels, config } => {
            if !labels.is_empty() && labels.len() != image.len() {
                return Err(Error::input("give one --labels file per --image, or none"));
            }
            let mut cfg = match config {
                Some(p) => AugmentConfig::from_kv(&KvDoc::parse(&read_text(&p)?)?)?,
                None => AugmentConfig::default(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let mut pool = Vec::with_capacity(image.len());
            for (i, path) in image.iter().enumerate() {
                let img = load_ppm(path)?;
                let lbl = match labels.get(i) {
                    Some(l) => read_labels(BufReader::new(std::fs::File::open(l)?))?,
                    None => Vec::new(),
                };
                pool.push(LabeledImage::new(img, lbl)?);
            }
            let dir = output.ok_or_else(|| Error::input("augment requires --output <dir>"))?;
            std::fs::create_dir_all(dir)?;
            let augmenter = Augmenter::new(cfg)?;
            let samples = rayon::ThreadPoolBuilder::new()
                .num_threads(common.threads.max(1))
                .build()
                .map_err(|e| Error::Internal(e.to_string()))?
                .install(|| augmenter.apply_all(&pool))?;
            for (i, s) in samples.iter().enumerate() {
                write_ppm(std::fs::File::create(dir.join(format!("aug_{i:04}.ppm")))?, &s.image)?;
                write_labels(std::fs::File::create(dir.join(format!("aug_{i:04}.txt")))?, &s.labels)?;
                writeln!(out, "aug_{i:04}: {} labels", s.labels.len())?;
            }
        }
        Command::Decode {
            tensor,
            anchors,
            stride,
            conf,
            nms: iou,
            no_nms,
        } => {
            let raw = read_tensor(BufReader::new(std::fs::File::open(&tensor)?))?;
            let mut dets = yolo_decode(&raw, &parse_anchors(&anchors)?, stride, conf)?;
            if !no_nms {
                dets = nms(&dets, iou, true);
            }
            let mut text = String::from("class,score,x_min,y_min,x_max,y_max\n");
            for d in &dets {
                let b = d.bbox;
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    d.class_id,
                    d.score,
                    b.x_min(),
                    b.y_min(),
                    b.x_max(),
                    b.y_max()
                ));
            }
            emit(out, output, &text)?;
        }
        Command::Report { records } => {
            let recs = records
                .iter()
                .map(|p| {
                    serde_json::from_str::<TradeoffRecord>(&read_text(p)?)
                        .map_err(|e| Error::parse(p.display().to_string(), e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            let report = tradeoff_report(&recs)?;
            match output {
                Some(dir) => report.write_to_dir(dir)?,
                None => out.write_all(report.table_csv.as_bytes())?,
            }
            writeln!(out, "pareto frontier: {}", report.frontier.join(", "))?;
        }
    }
    Ok(())
}

/// One-line JSON diagnostic for the error stream.
pub fn error_line(kind: &str, message: &str) -> String {
    json!({"error": kind, "message": message.replace('\n', " ")}).to_string()
}

/// Runs the CLI with explicit streams and returns the exit status:
/// 0 success, 1 input/usage error, 2 internal error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("usage error");
            let _ = writeln!(
                err,
                "{}",
                error_line("usage", &format!("{first} (usage: detbench [OPTIONS] <COMMAND>; see --help)"))
            );
            return 1;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", error_line(e.kind(), &e.to_string()));
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}

/// Entry point used by the `detbench` binary.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(args, &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": 7, "file_name": "a.ppm", "width": 100, "height": 100}],
        "annotations": [{"id": 1, "image_id": 7, "category_id": 3, "bbox": [10, 20, 30, 40]}],
        "categories": [{"id": 3, "name": "with mask"}]
    }"#;

    #[test]
    fn minimal_document() {
        let m = parse_coco(MINIMAL).unwrap();
        assert_eq!(m.annotations.len(), 1);
        assert_eq!(m.annotations[0].bbox.to_array(), [10., 20., 40., 60.]);
        assert_eq!(m.annotations[0].class_id, 0);
        assert_eq!(m.category_mapping(), vec![(3, 0, "with mask")]);
    }

    #[test]
    fn dangling_image_reference() {
        let doc = MINIMAL.replace("\"image_id\": 7", "\"image_id\": 8");
        assert!(matches!(parse_coco(&doc), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_field_has_path() {
        let doc = MINIMAL.replace("\"width\": 100,", "");
        match parse_coco(&doc) {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "$.images[0].width"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sparse_categories_remapped() {
        let doc = r#"{"images": [], "annotations": [],
            "categories": [{"id": 90, "name": "b"}, {"id": 1, "name": "a"}]}"#;
        let m = parse_coco(doc).unwrap();
        assert_eq!(m.category_mapping(), vec![(1, 0, "a"), (90, 1, "b")]);
    }

    #[test]
    fn tensor_file_round_trip() {
        let t = Tensor::new(vec![2, 1, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(buf.len(), 8 + 12 + 24);
        assert_eq!(read_tensor(buf.as_slice()).unwrap(), t);
        assert!(read_tensor(&buf[..buf.len() - 2]).is_err());
    }

    #[test]
    fn anchors_parse() {
        let a = parse_anchors("10,13; 16,30").unwrap();
        assert_eq!(a, vec![Anchor { w: 10.0, h: 13.0 }, Anchor { w: 16.0, h: 30.0 }]);
        assert!(parse_anchors("10").is_err());
        assert!(parse_anchors("-1,2").is_err());
    }

    #[test]
    fn class_config_rules() {
        assert_eq!(ClassConfig::default().names(), MASK_CLASSES);
        assert!(ClassConfig::new(["a", "a"]).is_err());
        assert!(ClassConfig::new([""]).is_err());
    }

    #[test]
    fn unknown_subcommand_exits_one() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["detbench", "frobnicate"], &mut o, &mut e), 1);
        let line = String::from_utf8(e).unwrap();
        assert_eq!(line.lines().count(), 1);
        let v: Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["error"], "usage");
    }
}
