use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evoxel::io::{read_events, read_frame_stack, write_events, EventFormat};
use evoxel::EventStream;

fn evoxel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evoxel"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("EVOXEL_THREADS")
        .output()
        .expect("runs the binary")
}

fn ok(args: &[&str]) -> Output {
    let out = evoxel(args);
    assert!(
        out.status.success(),
        "evoxel {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file below `root` with its contents, sorted by path.
fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SUBCOMMANDS: [&str; 8] = ["simulate", "convert", "represent", "train", "infer", "eval", "sweep", "export"];

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("EVOXEL_UPDATE_GOLDEN").is_some();
    for sub in std::iter::once("").chain(SUBCOMMANDS) {
        let args: Vec<&str> = [sub, "--help"].into_iter().filter(|a| !a.is_empty()).collect();
        let text = String::from_utf8(ok(&args).stdout).unwrap();
        let file = golden.join(format!("{}.txt", if sub.is_empty() { "evoxel" } else { sub }));
        if update {
            fs::write(&file, &text).unwrap();
            continue;
        }
        let expected = fs::read_to_string(&file).unwrap_or_else(|_| panic!("missing golden file {}", file.display()));
        assert_eq!(text, expected, "`evoxel {sub} --help` drifted; rerun with EVOXEL_UPDATE_GOLDEN=1");
    }
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(evoxel(&["teleport"]).status.code(), Some(2));
    assert_eq!(evoxel(&["simulate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(evoxel(&[]).status.code(), Some(2));
}

#[test]
fn pipeline_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = evoxel(&["train", "--data", p(&missing), "--seed", "1", "--out", p(&dir.path().join("ck"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let out = evoxel(&["simulate", "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1), "a seed is mandatory");
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        ok(&["simulate", "--seed", "7", "--resolution", "12", "--family", "ell", "--out-dir", p(dir.path())]);
    }
    let ta = tree(a.path());
    assert_eq!(ta.len(), 3, "evb, vox.json and vox.bin");
    assert_eq!(ta, tree(b.path()));

    let c = tempfile::tempdir().unwrap();
    ok(&["simulate", "--seed", "8", "--resolution", "12", "--family", "ell", "--out-dir", p(c.path())]);
    assert_ne!(tree(c.path())[0].1, ta[0].1);
}

#[test]
fn represent_empty_stream_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("empty.evb");
    write_events(&EventStream::empty(20, 16, 0.1).unwrap(), &events, EventFormat::Binary).unwrap();
    let frames = dir.path().join("frames.bin");
    ok(&["represent", "--in", p(&events), "--out", p(&frames), "--mode", "pos", "--sobel", "--window", "0.025"]);
    let stack = read_frame_stack(&frames).unwrap();
    assert_eq!((stack.planes(), stack.height(), stack.width()), (4, 16, 16));
    assert!(stack.data().iter().all(|v| *v == 0.0));
}

#[test]
fn convert_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--seed", "3", "--resolution", "8", "--out-dir", p(dir.path())]);
    let evb = dir.path().join("box_3.evb");
    let evt = dir.path().join("box_3.evt");
    let back = dir.path().join("back.evb");
    ok(&["convert", "--in", p(&evb), "--out", p(&evt)]);
    ok(&["convert", "--in", p(&evt), "--out", p(&back)]);
    assert_eq!(read_events(&evb).unwrap(), read_events(&evt).unwrap());
    assert_eq!(fs::read(&evb).unwrap(), fs::read(&back).unwrap());
}

const TINY: &str = r#"
seed = 5

[dataset]
resolution = 8
per_category = 2
split_ratios = [0.5, 0.0, 0.5]
categories = ["car", "chair", "lamp"]

[dataset.scan]
sensor_width = 24
sensor_height = 24
frame_rate = 100

[representation]
window_length = 0.125
target_size = 16

[network]
resolution = 8
stem_channels = 4
stage_widths = [8]
stage_blocks = [1]
seed_channels = 4
decoder_channels = [4, 4, 4]

[training]
epochs = 2
batch_size = 2
"#;

/// simulate → train → eval on a tiny configuration, returning the report
/// bytes and the checkpoint parameter bytes.
fn tiny_pipeline(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let config = dir.join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let data = dir.join("data");
    ok(&["simulate", "--config", p(&config), "--count", "2", "--out-dir", p(&data)]);
    let ck = dir.join("ck");
    ok(&["--threads", "1", "train", "--config", p(&config), "--data", p(&data), "--out", p(&ck)]);
    let report = dir.join("report.json");
    ok(&[
        "eval", "--checkpoint", p(&ck), "--data", p(&data), "--sweep", "0.15:0.50:0.01", "--objective", "miou", "--report",
        p(&report),
    ]);
    (fs::read(&report).unwrap(), fs::read(ck.join("params.bin")).unwrap())
}

#[test]
fn pipeline_is_reproducible_and_sweeps_36_thresholds() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (report, params) = tiny_pipeline(a.path());
    assert_eq!(tiny_pipeline(b.path()), (report.clone(), params));

    let json: serde_json::Value = serde_json::from_slice(&report).unwrap();
    let curve = json["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 36);
    let best = json["best_threshold"].as_f64().unwrap();
    assert!(curve.iter().any(|row| row["threshold"].as_f64() == Some(best)));
    assert_eq!(json["samples"].as_u64(), Some(3));

    // Stored predictions swept separately give the same report.
    let dir = a.path();
    let preds = dir.join("preds");
    ok(&["infer", "--checkpoint", p(&dir.join("ck")), "--data", p(&dir.join("data")), "--out", p(&preds)]);
    let swept = dir.join("swept.json");
    ok(&["sweep", "--predictions", p(&preds), "--data", p(&dir.join("data")), "--report", p(&swept)]);
    assert_eq!(fs::read(&swept).unwrap(), report);

    // Resuming a finished run for more epochs and exporting a prediction.
    let more = dir.join("ck4");
    ok(&["train", "--resume", p(&dir.join("ck")), "--data", p(&dir.join("data")), "--epochs", "3", "--out", p(&more)]);
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(more.join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(meta["epoch"].as_u64(), Some(3));

    let logits = preds.join("car_0001.logits");
    let label = dir.join("data/test/car/car_0001.vox.json");
    let png = dir.join("car.png");
    let ply = dir.join("car.ply");
    ok(&["export", "--logits", p(&logits), "--label", p(&label), "--png", p(&png), "--ply", p(&ply), "--png-size", "64"]);
    assert!(fs::read(&png).unwrap().starts_with(b"\x89PNG"));
    assert!(fs::read_to_string(&ply).unwrap().starts_with("ply"));
}

#[test]
fn infer_single_file_with_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _) = tiny_pipeline(dir.path());
    let events = dir.path().join("data/test/lamp/lamp_0001.evb");
    let out = dir.path().join("lamp.logits");
    ok(&["infer", "--checkpoint", p(&dir.path().join("ck")), "--in", p(&events), "--out", p(&out), "--threshold", "0.3"]);
    let (header, grid) = evoxel::io::read_logits(&out).unwrap();
    assert_eq!(header.object_id.as_deref(), Some("lamp_0001"));
    assert_eq!(grid.resolution(), 8);
    assert!(dir.path().join("lamp.vox.json").is_file());
}
