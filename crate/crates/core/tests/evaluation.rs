mod common;

use evoxel::evaluation::{binarize, evaluate_predictions, f_score, iou, Confusion, Objective, Prediction, ThresholdSweepConfig};
use evoxel::{Category, LogitGrid, VoxelGrid};
use proptest::prelude::*;

use common::oracles::set_metrics;

fn grid_strategy(d: usize) -> impl Strategy<Value = VoxelGrid> {
    prop::collection::vec(any::<bool>(), d * d * d).prop_map(move |cells| VoxelGrid::from_cells(d, cells).unwrap())
}

fn logits_strategy(d: usize) -> impl Strategy<Value = LogitGrid<f64>> {
    prop::collection::vec(-4.0f64..4.0, d * d * d).prop_map(move |v| LogitGrid::new(d, v).unwrap())
}

fn prediction(category: Category, id: &str, logits: LogitGrid<f64>, label: VoxelGrid) -> Prediction<f64> {
    Prediction {
        category,
        object_id: id.into(),
        logits,
        label,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_set_counting(pred in grid_strategy(6), gt in grid_strategy(6)) {
        let (i, f) = set_metrics(&pred, &gt);
        prop_assert_eq!(iou(&pred, &gt).unwrap(), i);
        prop_assert_eq!(f_score(&pred, &gt).unwrap(), f);
    }

    #[test]
    fn occupancy_is_nested_in_the_threshold(logits in logits_strategy(5), gt in grid_strategy(5)) {
        let sets: Vec<_> = ThresholdSweepConfig::default()
            .thresholds()
            .iter()
            .map(|p| binarize(&logits, *p))
            .collect();
        for pair in sets.windows(2) {
            prop_assert!(pair[1].cells().iter().zip(pair[0].cells()).all(|(hi, lo)| !hi || *lo));
            let (a, b) = (Confusion::of(&pair[0], &gt).unwrap(), Confusion::of(&pair[1], &gt).unwrap());
            prop_assert!(b.true_positive <= a.true_positive);
            prop_assert!(b.true_positive + b.false_positive + b.false_negative
                <= a.true_positive + a.false_positive + a.false_negative);
        }
    }

    #[test]
    fn best_row_is_a_local_maximum(
        logits in prop::collection::vec(logits_strategy(4), 3),
        labels in prop::collection::vec(grid_strategy(4), 3),
    ) {
        let cats = [Category::Car, Category::Car, Category::Sofa];
        let preds: Vec<_> = logits
            .into_iter()
            .zip(labels)
            .zip(cats)
            .map(|((l, g), c)| prediction(c, "x", l, g))
            .collect();
        let sweep = ThresholdSweepConfig::default();
        let report = evaluate_predictions(&preds, &sweep).unwrap();
        let best = report.curve.iter().position(|r| r.threshold == report.best_threshold).unwrap();
        for (i, row) in report.curve.iter().enumerate() {
            prop_assert!(row.miou <= report.best.miou);
            if i < best {
                prop_assert!(row.miou < report.best.miou, "ties go to the smallest p");
            }
        }
        for j in [best.saturating_sub(1), (best + 1).min(report.curve.len() - 1)] {
            prop_assert!(report.curve[j].miou <= report.best.miou);
        }
    }

    #[test]
    fn duplicating_a_sample_keeps_category_weights(
        a in grid_strategy(4), b in grid_strategy(4), la in logits_strategy(4), lb in logits_strategy(4),
    ) {
        let one = vec![prediction(Category::Car, "a", la.clone(), a.clone()), prediction(Category::Lamp, "b", lb.clone(), b.clone())];
        let mut two = one.clone();
        two.push(prediction(Category::Lamp, "b2", lb, b));
        let sweep = ThresholdSweepConfig::default();
        let (r1, r2) = (evaluate_predictions(&one, &sweep).unwrap(), evaluate_predictions(&two, &sweep).unwrap());
        for (x, y) in r1.curve.iter().zip(&r2.curve) {
            prop_assert!((x.miou - y.miou).abs() < 1e-12);
        }
    }
}

#[test]
fn constructed_logits_select_031_with_a_flat_maximum() {
    let label = VoxelGrid::from_fn(8, |x, y, z| x < 4 && y < 5 && z > 2);
    let false_set = VoxelGrid::from_fn(8, |x, y, _| x >= 5 && y >= 5);
    let values = (0..512)
        .map(|i| {
            if label.cells()[i] {
                (0.9f64 / 0.1).ln()
            } else if false_set.cells()[i] {
                (0.3f64 / 0.7).ln()
            } else {
                -10.0
            }
        })
        .collect();
    let preds = vec![prediction(Category::Table, "t", LogitGrid::new(8, values).unwrap(), label)];
    let report = evaluate_predictions(&preds, &ThresholdSweepConfig::default()).unwrap();
    assert_eq!(report.curve.len(), 36);
    assert_eq!(report.best_threshold, 0.31);
    for row in &report.curve {
        assert_eq!(row.miou == 1.0, row.threshold >= 0.31, "p = {}", row.threshold);
    }
    let json = report.to_json().unwrap();
    assert!(json.contains("\"best_threshold\": 0.31"));
}

#[test]
fn categories_are_weighted_equally() {
    let full = VoxelGrid::from_fn(4, |_, _, _| true);
    let sure = LogitGrid::filled(4, 5.0);
    let never = LogitGrid::filled(4, -5.0);
    let preds = vec![
        prediction(Category::Car, "a", sure.clone(), full.clone()),
        prediction(Category::Car, "b", sure, full.clone()),
        prediction(Category::Bench, "c", never, full),
    ];
    let report = evaluate_predictions(&preds, &ThresholdSweepConfig::default()).unwrap();
    assert!(report.curve.iter().all(|r| r.miou == 0.5));
    assert_eq!(report.best_threshold, 0.15);
}

#[test]
fn f_score_objective_and_micro_aggregation() {
    let gt = VoxelGrid::from_fn(4, |x, _, _| x < 2);
    let logits = LogitGrid::new(4, (0..64).map(|i| if i % 4 < 3 { 1.0 } else { -1.0 }).collect::<Vec<f64>>()).unwrap();
    let preds = vec![prediction(Category::Rifle, "r", logits, gt)];
    let sweep = ThresholdSweepConfig {
        objective: Objective::Fscore,
        ..Default::default()
    };
    let report = evaluate_predictions(&preds, &sweep).unwrap();
    let row = &report.best;
    assert!((row.f_score - 0.8).abs() < 1e-12, "TP 32, FP 16, FN 0");
    let micro = evaluate_predictions(&preds, &ThresholdSweepConfig { f_aggregation: "micro".parse().unwrap(), ..sweep }).unwrap();
    assert_eq!(micro.best.f_score, row.f_score, "one sample: macro equals micro");
}

#[test]
fn errors() {
    let sweep = ThresholdSweepConfig::default();
    assert!(evaluate_predictions::<f64>(&[], &sweep).is_err());
    let preds = vec![prediction(Category::Car, "a", LogitGrid::filled(4, 0.0), VoxelGrid::empty(8))];
    assert!(evaluate_predictions(&preds, &sweep).is_err());
    assert!(ThresholdSweepConfig::default().with_range("0.5:0.1:0.01").is_err());
    assert!(ThresholdSweepConfig::default().with_range("0.1:0.5").is_err());
}
