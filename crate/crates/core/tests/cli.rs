use std::path::Path;
use std::process::Command;

use detbench::augment::{write_labels, write_ppm, Image};
use detbench::boxes::{BBox, GroundTruth};
use detbench::cli::{run, write_tensor};
use detbench::nnops::Tensor;
use serde_json::Value;

fn call(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["detbench"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const ANNOTATIONS: &str = r#"{
  "info": {"description": "ignored"},
  "images": [
    {"id": 1, "file_name": "a.ppm", "width": 64, "height": 48},
    {"id": 2, "file_name": "b.ppm", "width": 64, "height": 48}
  ],
  "annotations": [
    {"id": 1, "image_id": 1, "category_id": 4, "bbox": [4, 4, 20, 30]},
    {"id": 2, "image_id": 1, "category_id": 7, "bbox": [30, 10, 20, 20]},
    {"id": 3, "image_id": 2, "category_id": 9, "bbox": [10, 5, 40, 40]},
    {"id": 4, "image_id": 2, "category_id": 4, "bbox": [0, 0, 5, 5], "iscrowd": 1}
  ],
  "categories": [
    {"id": 7, "name": "incorrect mask"},
    {"id": 4, "name": "with mask"},
    {"id": 9, "name": "without mask"}
  ]
}"#;

const PERFECT: &str = r#"[
  {"image_id": 1, "category_id": 4, "bbox": [4, 4, 20, 30], "score": 1.0},
  {"image_id": 1, "category_id": 7, "bbox": [30, 10, 20, 20], "score": 1.0},
  {"image_id": 2, "category_id": 9, "bbox": [10, 5, 40, 40], "score": 1.0}
]"#;

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ann.json"), ANNOTATIONS).unwrap();
    std::fs::write(dir.path().join("perfect.json"), PERFECT).unwrap();
    for (name, shade) in [("a", 0.2f32), ("b", 0.7)] {
        let data = (0..48 * 64 * 3).map(|k| (shade + (k % 17) as f32 / 40.0).min(1.0)).collect();
        let img = Image::new(48, 64, data).unwrap();
        write_ppm(std::fs::File::create(dir.path().join(format!("{name}.ppm"))).unwrap(), &img).unwrap();
        let labels = vec![GroundTruth::new(BBox::new(4.0, 4.0, 24.0, 34.0).unwrap(), 0)];
        write_labels(std::fs::File::create(dir.path().join(format!("{name}.txt"))).unwrap(), &labels).unwrap();
    }
    dir
}

#[test]
fn eval_of_ground_truth_prints_perfect_map() {
    let d = fixture();
    let ann = d.path().join("ann.json");
    let res = d.path().join("perfect.json");
    let (code, out, err) = call(&["eval", "--annotations", s(&ann), "--results", s(&res)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("category 4 -> class 0 (with mask)"));
    assert!(out.contains("category 9 -> class 2 (without mask)"));
    let map_line = out.lines().find(|l| l.starts_with("mAP")).unwrap();
    assert!(map_line.ends_with("1.000"), "{map_line}");

    let (code, out, _) = call(&["eval", "--annotations", s(&ann), "--results", s(&res), "--json", "--threads", "3"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["map"], 1.0);
}

#[test]
fn lr_schedule_csv() {
    let (code, out, _) = call(&["lr", "--total-steps", "100"]);
    assert_eq!(code, 0);
    let rows: Vec<f64> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(rows.len(), 101);
    assert_eq!(rows.iter().copied().fold(0.0, f64::max), 0.01);
    assert_eq!(rows[0], 0.001);
}

#[test]
fn lr_reads_config_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("lr.cfg");
    std::fs::write(&cfg, "# schedule\ntotal_steps = 10\nmax_lr = 0.02\n").unwrap();
    let (code, out, err) = call(&["lr", "--config", s(&cfg)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 12);
    assert!(out.lines().any(|l| l == "3,0.02"));
}

#[test]
fn flops_on_bundled_graph() {
    let graph = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/refnet.graph");
    let (code, out, _) = call(&["flops", "--graph", graph, "--csv"]);
    assert_eq!(code, 0);
    let total = out.lines().find(|l| l.starts_with("total,")).unwrap();
    // params, MACs, elementwise, FLOPs from the hand tabulation.
    assert_eq!(total, "total,,3x320x320,6873,21504032,857616,43865680");
    let (_, builtin, _) = call(&["flops", "--graph", "refnet", "--csv"]);
    assert_eq!(builtin, out);
}

#[test]
fn decode_tensor_file() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("head.dbt");
    write_tensor(std::fs::File::create(&path).unwrap(), &Tensor::zeros(vec![8, 2, 3])).unwrap();
    let (code, out, err) = call(&["decode", "--tensor", s(&path), "--anchors", "16,16", "--stride", "8", "--no-nms"]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "class,score,x_min,y_min,x_max,y_max");
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[1], "0,0.25,-4,-4,12,12");

    let (code, _, err) = call(&["decode", "--tensor", s(&path), "--anchors", "16,16;8,8", "--stride", "8"]);
    assert_eq!(code, 1);
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn augment_is_reproducible() {
    let d = fixture();
    let args = |out: &Path, seed: &str| {
        vec![
            "augment".to_string(),
            "--image".into(),
            s(&d.path().join("a.ppm")).into(),
            "--image".into(),
            s(&d.path().join("b.ppm")).into(),
            "--labels".into(),
            s(&d.path().join("a.txt")).into(),
            "--labels".into(),
            s(&d.path().join("b.txt")).into(),
            "--seed".into(),
            seed.into(),
            "--threads".into(),
            "2".into(),
            "--output".into(),
            s(out).into(),
        ]
    };
    let runs = ["r1", "r2", "r3"].map(|n| d.path().join(n));
    let seeds = ["5", "5", "6"];
    for (dir, seed) in runs.iter().zip(seeds) {
        let a = args(dir, seed);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        let (code, _, err) = call(&refs);
        assert_eq!(code, 0, "{err}");
    }
    let read = |dir: &Path, f: &str| std::fs::read(dir.join(f)).unwrap();
    for f in ["aug_0000.ppm", "aug_0000.txt", "aug_0001.ppm", "aug_0001.txt"] {
        assert_eq!(read(&runs[0], f), read(&runs[1], f), "{f}");
    }
    assert_ne!(read(&runs[0], "aug_0000.ppm"), read(&runs[2], "aug_0000.ppm"));
}

#[test]
fn bench_and_report() {
    let d = fixture();
    let ann = d.path().join("ann.json");
    let perfect = d.path().join("perfect.json");
    let replay_rec = d.path().join("replay.json");
    let refnet_rec = d.path().join("refnet.json");

    let (code, out, err) = call(&[
        "bench", "--adapter", &format!("replay:{}", s(&perfect)), "--images", s(d.path()),
        "--annotations", s(&ann), "--warmup", "1", "--iters", "5", "--output", s(&replay_rec),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("fps"));
    let (code, _, err) = call(&[
        "bench", "--adapter", "refnet", "--images", s(d.path()), "--annotations", s(&ann),
        "--input-size", "64", "--warmup", "1", "--iters", "3", "--seed", "3", "--output", s(&refnet_rec),
    ]);
    assert_eq!(code, 0, "{err}");
    let rec: Value = serde_json::from_str(&std::fs::read_to_string(&refnet_rec).unwrap()).unwrap();
    assert_eq!(rec["bench"]["model"], "refnet-64");
    assert!(rec["bench"]["gflops"].as_f64().unwrap() > 0.0);

    let outs = [d.path().join("rep1"), d.path().join("rep2")];
    for o in &outs {
        let (code, out, err) = call(&["report", "--records", s(&replay_rec), s(&refnet_rec), "--output", s(o)]);
        assert_eq!(code, 0, "{err}");
        assert!(out.starts_with("pareto frontier: "));
    }
    for f in ["tradeoff.csv", "tradeoff_plot.csv", "tradeoff.json"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap());
    }
    let table = std::fs::read_to_string(outs[0].join("tradeoff.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("replay,1,1,"));
}

#[test]
fn recipe_subcommand() {
    let (code, out, _) = call(&["recipe"]);
    assert_eq!(code, 0);
    assert!(out.contains("momentum = 0.937"));
    assert!(out.contains("classes = with mask,incorrect mask,without mask"));
}

#[test]
fn errors_are_single_json_lines() {
    let d = fixture();
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, "{\"images\": [}").unwrap();
    let dangling = d.path().join("dangling.json");
    std::fs::write(&dangling, ANNOTATIONS.replace("\"image_id\": 2, \"category_id\": 9", "\"image_id\": 5, \"category_id\": 9"))
        .unwrap();
    let perfect = d.path().join("perfect.json");

    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["eval", "--annotations", s(&bad), "--results", s(&perfect)], "parse"),
        (vec!["eval", "--annotations", s(&dangling), "--results", s(&perfect)], "validation"),
        (vec!["eval", "--annotations", "/no/such/file", "--results", s(&perfect)], "io"),
        (vec!["flops", "--graph", "refnet", "--input", "3x4"], "input"),
        (vec!["lr", "--pct-start", "2"], "input"),
        (vec!["frobnicate"], "usage"),
        (vec!["lr", "--bogus-flag"], "usage"),
    ];
    for (args, kind) in cases {
        let (code, out, err) = call(&args);
        assert_eq!(code, 1, "{args:?}");
        assert!(out.is_empty(), "{args:?}");
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        let v: Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"], kind, "{args:?}: {err}");
        assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_detbench");
    let ok = Command::new(bin).args(["lr", "--total-steps", "4"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(String::from_utf8(ok.stdout).unwrap().lines().count(), 6);
    let bad = Command::new(bin).arg("nope").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}
