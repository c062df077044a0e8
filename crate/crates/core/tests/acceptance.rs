//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs as a plain binary (`harness = false`) so the
//! criteria execute in order and their report is never captured.
//!
//! `EVOXEL_ACCEPTANCE_ONLY=3,5` restricts the run to the listed criteria.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use evoxel::config::{Preset, RunConfig};
use evoxel::evaluation::{
    binarize, evaluate_predictions, evaluate_split, f_score, iou, Confusion, Prediction, ThresholdSweepConfig,
};
use evoxel::io::{
    decode_evb, decode_evt, decode_logits, encode_evb, encode_evt, encode_logits, pack_voxels, scan_dataset,
    unpack_voxels, Manifest,
};
use evoxel::neural::Checkpoint;
use evoxel::pipeline::{build_dataset, train};
use evoxel::representation::{make_frames, sobel_frames, sobel_magnitude, SobelNormalization};
use evoxel::{Category, FrameMode, FrameStack, LogitGrid, VoxelGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gradcheck, oracles};

/// Outcome of one criterion: pass flag and a one-line summary.
type Outcome = (bool, String);

const DESK_SEED: u64 = 2024;
/// Epochs per arm of the Sobel ablation (criterion 7).
const ABLATION_EPOCHS: usize = 60;
const ABLATION_SEEDS: [u64; 3] = [11, 12, 13];

struct Desk {
    _dir: tempfile::TempDir,
    manifest: Manifest,
}

fn desk_dataset() -> Desk {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::preset(Preset::Desk, DESK_SEED);
    let manifest = build_dataset(dir.path(), &config.dataset, DESK_SEED).unwrap();
    Desk { _dir: dir, manifest }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("EVOXEL_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let selected = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));

    let mut desk: Option<Desk> = None;
    let mut failures = 0;
    let criteria: [(usize, &str); 8] = [
        (1, "representation mode algebra"),
        (2, "Sobel Event Frame vs direct convolution"),
        (3, "finite-difference gradient checks"),
        (4, "metric oracles and threshold containment"),
        (5, "threshold selection"),
        (6, "end-to-end desk experiment"),
        (7, "Sobel vs plain Pos ablation"),
        (8, "determinism and serialization round trips"),
    ];
    println!("evoxel acceptance suite");
    for (n, name) in criteria {
        if !selected(n) {
            println!("[SKIP] {n}. {name}");
            continue;
        }
        let start = Instant::now();
        let (pass, summary) = match n {
            1 => mode_algebra(),
            2 => sobel_oracle(),
            3 => gradient_checks(),
            4 => metric_oracles(),
            5 => threshold_selection(desk.get_or_insert_with(desk_dataset)),
            6 => desk_experiment(desk.get_or_insert_with(desk_dataset)),
            7 => sobel_ablation(desk.get_or_insert_with(desk_dataset)),
            _ => determinism(),
        };
        let secs = start.elapsed().as_secs_f64();
        println!("[{}] {n}. {name}: {summary} ({secs:.1}s)", if pass { "PASS" } else { "FAIL" });
        failures += usize::from(!pass);
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}

fn mode_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0usize;
    let mut checked = 0usize;
    for _ in 0..1000 {
        let w = rng.random_range(1..=12u16);
        let h = rng.random_range(1..=12u16);
        let duration = rng.random_range(0.01..1.0);
        let stream = oracles::random_stream(&mut rng, w, h, duration, 200);
        let window = duration / f64::from(rng.random_range(1..=8u32));
        let f = |m| make_frames::<f64>(&stream, window, m).unwrap();
        let (pos, neg, last, any, sep) = (f(FrameMode::Pos), f(FrameMode::Neg), f(FrameMode::Last), f(FrameMode::Any), f(FrameMode::Sep));
        for k in 0..pos.planes() {
            for i in 0..pos.plane(k).len() {
                let (p, n, l, a) = (pos.plane(k)[i], neg.plane(k)[i], last.plane(k)[i], any.plane(k)[i]);
                let (fp, fneg) = (sep.plane(2 * k)[i], sep.plane(2 * k + 1)[i]);
                let ok = a == p.max(n)
                    && p * n == 0.0
                    && l == p - n
                    && a == fp.max(fneg)
                    && p <= fp
                    && n <= fneg;
                violations += usize::from(!ok);
                checked += 1;
            }
        }
    }
    (violations == 0, format!("1000 streams, {checked} pixel-windows, {violations} violations"))
}

fn sobel_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatched = 0;
    for i in 0..100 {
        // Half binary event frames, half signed `Last` frames.
        let signed = i % 2 == 1;
        let plane: Vec<f64> = (0..256)
            .map(|_| {
                let v: i32 = if signed { rng.random_range(-1..=1) } else { rng.random_range(0..=1) };
                f64::from(v)
            })
            .collect();
        let expected = oracles::sobel_direct(&plane, 16, 16);
        if sobel_magnitude(&plane, 16, 16) != expected {
            mismatched += 1;
            continue;
        }
        let mode = if signed { FrameMode::Last } else { FrameMode::Pos };
        let stack = FrameStack::new(mode, mode.native_range(), 1, 16, 16, plane).unwrap();
        let scaled = sobel_frames(&stack, SobelNormalization::PerPlane).unwrap();
        let max = expected.iter().copied().fold(0.0, f64::max);
        let normalized: Vec<f64> = expected.iter().map(|v| if max > 0.0 { (v * 255.0 / max).min(255.0) } else { 0.0 }).collect();
        if scaled.data() != normalized.as_slice() {
            mismatched += 1;
        }
    }

    let mut impulse = vec![0.0; 256];
    impulse[8 * 16 + 8] = 1.0;
    let m = sobel_magnitude(&impulse, 16, 16);
    let mut impulse_err: f64 = 0.0;
    for y in 0..16usize {
        for x in 0..16usize {
            let (dy, dx) = (y.abs_diff(8), x.abs_diff(8));
            let expected = match (dy, dx) {
                (0, 0) => 0.0,
                (0, 1) | (1, 0) => 2.0,
                (1, 1) => 2f64.sqrt(),
                _ => 0.0,
            };
            impulse_err = impulse_err.max((m[y * 16 + x] - expected).abs());
        }
    }
    (
        mismatched == 0 && impulse_err <= 1e-12,
        format!("100 planes, {mismatched} mismatches; impulse max error {impulse_err:.1e}"),
    )
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let checks: [(&str, fn(u64) -> gradcheck::GradCheck, f64); 6] = [
        ("conv3d", gradcheck::conv3d, 1e-4),
        ("batch norm", gradcheck::batch_norm, 1e-4),
        ("ECA", gradcheck::eca, 1e-4),
        ("transposed conv", gradcheck::conv_transpose3d, 1e-4),
        ("focal loss", gradcheck::focal, 1e-8),
        ("end-to-end", gradcheck::end_to_end, 1e-4),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut kinked = 0;
    for (name, check, tolerance) in checks {
        let results: Vec<_> = (0..5u64).map(|seed| check(100 + seed)).collect();
        let worst = results.iter().map(|c| c.rel_err).fold(0.0, f64::max);
        pass &= worst < tolerance;
        // At most a quarter of any check's coordinates may be dropped as kinks.
        pass &= results.iter().all(|c| c.coordinates > 0 && c.kinked * 4 <= c.coordinates + c.kinked);
        kinked += results.iter().map(|c| c.kinked).sum::<usize>();
        parts.push(format!("{name} {worst:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    (
        pass,
        format!("worst relative error over 5 shapes: {}; {kinked} end-to-end coordinates excluded as ReLU kinks", parts.join(", ")),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut metric_mismatches = 0;
    for _ in 0..500 {
        let pred = oracles::random_grid(&mut rng, 8);
        let gt = oracles::random_grid(&mut rng, 8);
        let (i, f) = oracles::set_metrics(&pred, &gt);
        if iou(&pred, &gt).unwrap() != i || f_score(&pred, &gt).unwrap() != f {
            metric_mismatches += 1;
        }
    }

    let thresholds = ThresholdSweepConfig::default().thresholds();
    let mut nesting_violations = 0;
    for _ in 0..100 {
        let scale = rng.random_range(0.5..6.0);
        let logits = LogitGrid::new(8, (0..512).map(|_| rng.random_range(-scale..scale)).collect::<Vec<f64>>()).unwrap();
        let gt = oracles::random_grid(&mut rng, 8);
        let sets: Vec<VoxelGrid> = thresholds.iter().map(|p| binarize(&logits, *p)).collect();
        for pair in sets.windows(2) {
            let (lo, hi) = (&pair[0], &pair[1]);
            let nested = hi.cells().iter().zip(lo.cells()).all(|(h, l)| !h || *l);
            let (a, b) = (Confusion::of(lo, &gt).unwrap(), Confusion::of(hi, &gt).unwrap());
            let union = |c: &Confusion| c.true_positive + c.false_positive + c.false_negative;
            if !nested || b.true_positive > a.true_positive || union(&b) > union(&a) {
                nesting_violations += 1;
            }
        }
    }
    (
        metric_mismatches == 0 && nesting_violations == 0,
        format!(
            "500 grid pairs, {metric_mismatches} metric mismatches; 100 logit grids x {} thresholds, {nesting_violations} containment violations",
            thresholds.len()
        ),
    )
}

/// Logits with probability 0.9 on the label and 0.3 on a disjoint false
/// set; everything else is far below the sweep range.
fn constructed_predictions() -> Vec<Prediction<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let high = (0.9f64 / 0.1).ln();
    let low = (0.3f64 / 0.7).ln();
    let mut out = Vec::new();
    for (c, category) in [Category::Car, Category::Chair, Category::Lamp].into_iter().enumerate() {
        for s in 0..2 {
            let label = VoxelGrid::from_fn(8, |_, _, _| rng.random_bool(0.3));
            let values = label
                .cells()
                .iter()
                .map(|&occupied| if occupied { high } else if rng.random_bool(0.3) { low } else { -12.0 })
                .collect();
            out.push(Prediction {
                category,
                object_id: format!("constructed_{c}_{s}"),
                logits: LogitGrid::new(8, values).unwrap(),
                label,
            });
        }
    }
    out
}

fn threshold_selection(desk: &Desk) -> Outcome {
    let sweep = ThresholdSweepConfig::default();
    let report = evaluate_predictions(&constructed_predictions(), &sweep).unwrap();
    let flat = report
        .curve
        .iter()
        .all(|row| (row.threshold >= 0.31 - 1e-12) == (row.miou == 1.0));
    let constructed_ok = report.best_threshold == 0.31 && flat && report.curve.len() == 36;

    let mut config = RunConfig::preset(Preset::Desk, 5);
    config.training.epochs = 20;
    let checkpoint = train(&desk.manifest, &config, 0).unwrap();
    let toy = evaluate_split(&checkpoint, &desk.manifest, &sweep).unwrap();
    let at_020 = toy.row_at(0.20).expect("0.20 lies on the sweep grid").miou;
    let toy_ok = toy.best.miou >= at_020;
    (
        constructed_ok && toy_ok,
        format!(
            "constructed p* = {}, mIoU 1.0 exactly on [0.31, 0.50]: {flat}; toy model p* = {} mIoU {:.4} vs {:.4} at 0.20",
            report.best_threshold, toy.best_threshold, toy.best.miou, at_020
        ),
    )
}

fn desk_experiment(desk: &Desk) -> Outcome {
    let config = RunConfig::preset(Preset::Desk, DESK_SEED);
    let start = Instant::now();
    let checkpoint = train(&desk.manifest, &config, 50).unwrap();
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let history = &checkpoint.meta.history;
    let first = history.first().unwrap().train_loss;
    let last = history.last().unwrap().train_loss;
    let reduction = first / last;
    let report = evaluate_split(&checkpoint, &desk.manifest, &config.evaluation).unwrap();
    let pass = reduction >= 100.0 && report.best.miou >= 0.60 && history.len() <= 300 && minutes < 30.0;
    (
        pass,
        format!(
            "{} epochs in {minutes:.1} min; train loss {first:.3e} -> {last:.3e} ({reduction:.1}x, need 100x); test mIoU {:.4} at p* = {} (need 0.60)",
            history.len(),
            report.best.miou,
            report.best_threshold
        ),
    )
}

fn sobel_ablation(desk: &Desk) -> Outcome {
    let mut means = [0.0; 2];
    let mut per_seed = Vec::new();
    for seed in ABLATION_SEEDS {
        let mut row = [0.0; 2];
        for (arm, sobel) in [true, false].into_iter().enumerate() {
            let mut config = RunConfig::preset(Preset::Desk, seed);
            config.training.epochs = ABLATION_EPOCHS;
            config.representation.sobel = sobel;
            let checkpoint = train(&desk.manifest, &config, 0).unwrap();
            row[arm] = evaluate_split(&checkpoint, &desk.manifest, &config.evaluation).unwrap().best.miou;
            means[arm] += row[arm] / ABLATION_SEEDS.len() as f64;
        }
        per_seed.push(format!("{:.3}/{:.3}", row[0], row[1]));
    }
    (
        means[0] >= means[1],
        format!(
            "{ABLATION_EPOCHS} epochs x 3 seeds, mean test mIoU Sobel {:.4} vs plain {:.4} (per seed {})",
            means[0],
            means[1],
            per_seed.join(", ")
        ),
    )
}

const TINY_CONFIG: &str = r#"{
    "seed": 77,
    "dataset": {
        "resolution": 8,
        "per_category": 3,
        "split_ratios": [0.34, 0.33, 0.33],
        "categories": ["airplane", "sofa", "telephone"],
        "scan": { "sensor_width": 24, "sensor_height": 24, "frame_rate": 100 }
    },
    "representation": { "window_length": 0.125, "target_size": 16, "augment": ["flip_h", "flip_v", "polarity_invert", "temporal_reverse"] },
    "network": {
        "resolution": 8, "stem_channels": 4, "stage_widths": [8], "stage_blocks": [1],
        "seed_channels": 4, "decoder_channels": [4, 4, 4]
    },
    "training": { "epochs": 3, "batch_size": 2 }
}"#;

/// Every file below `root`, relative path and bytes, sorted.
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

/// simulate → train → save/load → eval; returns every artifact's bytes.
fn tiny_pipeline() -> Vec<(PathBuf, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::from_json(TINY_CONFIG).unwrap();
    build_dataset(dir.path().join("data"), &config.dataset, config.seed).unwrap();
    let manifest = scan_dataset(dir.path().join("data")).unwrap();
    let ck_dir = dir.path().join("checkpoint");
    train(&manifest, &config, 0).unwrap().save(&ck_dir).unwrap();
    let checkpoint = Checkpoint::load(&ck_dir).unwrap();
    let report = evaluate_split(&checkpoint, &manifest, &config.evaluation).unwrap();
    fs::write(dir.path().join("report.json"), report.to_json().unwrap()).unwrap();
    tree(dir.path())
}

fn determinism() -> Outcome {
    let a = tiny_pipeline();
    let b = tiny_pipeline();
    let identical = a == b;
    let has = |name: &str| a.iter().any(|(p, _)| p.ends_with(name));
    let complete = has("params.bin") && has("checkpoint.json") && has("report.json");

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = 0;
    for _ in 0..1000 {
        let w = rng.random_range(1..=64u16);
        let h = rng.random_range(1..=64u16);
        let duration = rng.random_range(1e-3..2.0);
        let stream = oracles::random_stream(&mut rng, w, h, duration, 64);
        let evb = decode_evb(&encode_evb(&stream).unwrap()).unwrap();
        let evt = decode_evt(&encode_evt(&stream)).unwrap();
        if evb.events() != stream.events() || evt != stream || encode_evb(&evb).unwrap() != encode_evb(&stream).unwrap() {
            failures += 1;
        }

        let d = rng.random_range(1..=12);
        let grid = oracles::random_grid(&mut rng, d);
        if unpack_voxels(d, &pack_voxels(&grid)).unwrap() != grid {
            failures += 1;
        }
        let logits = LogitGrid::new(d, (0..d * d * d).map(|_| rng.random_range(-8.0f32..8.0)).collect()).unwrap();
        if decode_logits(&encode_logits(&logits, None, None).unwrap()).unwrap().1 != logits {
            failures += 1;
        }
    }
    (
        identical && complete && failures == 0,
        format!(
            "two seeded runs: {} files, byte-identical: {identical}; 1000 streams (evb, evt) and grids (voxels, logits): {failures} round-trip failures",
            a.len()
        ),
    )
}
