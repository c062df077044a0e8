//! Binarization, voxel IoU / F-Score and the binarization threshold sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Manifest, Split};
use crate::neural::Checkpoint;
use crate::pipeline::load_samples;
use crate::scalar::{sigmoid, Scalar};
use crate::voxel::{Category, LogitGrid, VoxelGrid};

pub const EVAL_REPORT_FORMAT: &str = "EVALREPORT1";

/// Occupied iff `σ(logit) > p`.
pub fn binarize<T: Scalar>(logits: &LogitGrid<T>, p: f64) -> VoxelGrid {
    let cells = logits.values().iter().map(|x| sigmoid(x.as_f64()) > p).collect();
    VoxelGrid::from_cells(logits.resolution(), cells).expect("logit grid has D³ values")
}

/// Voxel-level agreement counts between a prediction and its label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn of(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<Self> {
        if pred.resolution() != gt.resolution() {
            return Err(Error::ResolutionMismatch {
                prediction: pred.resolution(),
                label: gt.resolution(),
            });
        }
        let mut c = Confusion::default();
        for (p, g) in pred.cells().iter().zip(gt.cells()) {
            match (*p, *g) {
                (true, true) => c.true_positive += 1,
                (true, false) => c.false_positive += 1,
                (false, true) => c.false_negative += 1,
                (false, false) => {}
            }
        }
        Ok(c)
    }

    /// `|P∩G| / |P∪G|`; 1 when both sets are empty.
    pub fn iou(&self) -> f64 {
        let union = self.true_positive + self.false_positive + self.false_negative;
        if union == 0 {
            1.0
        } else {
            self.true_positive as f64 / union as f64
        }
    }

    /// `2TP / (2TP + FP + FN)`; 1 when both sets are empty.
    pub fn f_score(&self) -> f64 {
        let denom = 2 * self.true_positive + self.false_positive + self.false_negative;
        if denom == 0 {
            1.0
        } else {
            (2 * self.true_positive) as f64 / denom as f64
        }
    }

    fn add(&mut self, other: &Confusion) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.false_negative += other.false_negative;
    }
}

pub fn iou(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<f64> {
    Ok(Confusion::of(pred, gt)?.iou())
}

pub fn f_score(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<f64> {
    Ok(Confusion::of(pred, gt)?.f_score())
}

/// Mean over categories of the per-category sample mean, so every category
/// present weighs the same regardless of its sample count. NaN for no
/// scores.
pub fn mean_over_categories(scores: impl IntoIterator<Item = (Category, f64)>) -> f64 {
    let mut per: BTreeMap<Category, (f64, usize)> = BTreeMap::new();
    for (c, s) in scores {
        let e = per.entry(c).or_default();
        e.0 += s;
        e.1 += 1;
    }
    per.values().map(|(sum, n)| sum / *n as f64).sum::<f64>() / per.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Miou,
    Fscore,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Miou => "miou",
            Objective::Fscore => "fscore",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "miou" => Ok(Objective::Miou),
            "fscore" | "f" | "f1" => Ok(Objective::Fscore),
            _ => Err(Error::UnknownName {
                what: "objective",
                value: s.into(),
            }),
        }
    }
}

/// How per-sample F-Scores combine into the aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FAggregation {
    /// Mean over samples within a category, then over categories.
    #[default]
    Macro,
    /// Pooled voxel counts over every sample.
    Micro,
}

impl FromStr for FAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(FAggregation::Macro),
            "micro" => Ok(FAggregation::Micro),
            _ => Err(Error::UnknownName {
                what: "F-Score aggregation",
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSweepConfig {
    pub p_min: f64,
    pub p_max: f64,
    pub step: f64,
    pub objective: Objective,
    #[serde(default)]
    pub f_aggregation: FAggregation,
}

impl Default for ThresholdSweepConfig {
    fn default() -> Self {
        ThresholdSweepConfig {
            p_min: 0.15,
            p_max: 0.50,
            step: 0.01,
            objective: Objective::Miou,
            f_aggregation: FAggregation::Macro,
        }
    }
}

impl ThresholdSweepConfig {
    /// Parses a `min:max:step` range, keeping the other settings.
    pub fn with_range(mut self, range: &str) -> Result<Self> {
        let parts: Vec<&str> = range.split(':').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid("sweep", format!("`{range}` is not min:max:step")))
        };
        if parts.len() != 3 {
            return Err(Error::invalid("sweep", format!("`{range}` is not min:max:step")));
        }
        self.p_min = parse(parts[0])?;
        self.p_max = parse(parts[1])?;
        self.step = parse(parts[2])?;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.p_min && self.p_min < self.p_max && self.p_max < 1.0) || !(self.step > 0.0) {
            return Err(Error::invalid(
                "sweep",
                format!(
                    "need 0 < p_min < p_max < 1 and step > 0, got {}:{}:{}",
                    self.p_min, self.p_max, self.step
                ),
            ));
        }
        Ok(())
    }

    /// `p_min + i·step` up to `p_max`, each rounded to nine decimals so
    /// that grid points print as the decimals they denote.
    pub fn thresholds(&self) -> Vec<f64> {
        let n = ((self.p_max - self.p_min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| ((self.p_min + i as f64 * self.step) * 1e9).round() / 1e9).collect()
    }
}

/// Network output for one labelled sample.
#[derive(Debug, Clone)]
pub struct Prediction<T> {
    pub category: Category,
    pub object_id: String,
    pub logits: LogitGrid<T>,
    pub label: VoxelGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: Category,
    pub samples: usize,
    pub iou: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub miou: f64,
    pub f_score: f64,
    pub per_category: Vec<CategoryMetrics>,
}

impl ThresholdRow {
    pub fn objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Miou => self.miou,
            Objective::Fscore => self.f_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub sweep: ThresholdSweepConfig,
    pub samples: usize,
    /// Selected threshold p*.
    pub best_threshold: f64,
    /// Metrics at p*, including the per-category matrix.
    pub best: ThresholdRow,
    /// One row per swept threshold, ascending.
    pub curve: Vec<ThresholdRow>,
}

impl EvalReport {
    pub fn row_at(&self, p: f64) -> Option<&ThresholdRow> {
        self.curve.iter().find(|r| (r.threshold - p).abs() < 1e-9)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("evaluation report", e))
    }
}

/// Metrics of every sample at a single threshold.
pub fn threshold_row<T: Scalar>(predictions: &[Prediction<T>], p: f64, aggregation: FAggregation) -> Result<ThresholdRow> {
    let confusions = predictions
        .iter()
        .map(|pr| Confusion::of(&binarize(&pr.logits, p), &pr.label))
        .collect::<Result<Vec<_>>>()?;
    Ok(row_from_confusions(predictions, &confusions, p, aggregation))
}

fn row_from_confusions<T>(predictions: &[Prediction<T>], confusions: &[Confusion], p: f64, aggregation: FAggregation) -> ThresholdRow {
    let mut per: BTreeMap<Category, (usize, f64, f64)> = BTreeMap::new();
    let mut pooled = Confusion::default();
    for (pr, c) in predictions.iter().zip(confusions) {
        let e = per.entry(pr.category).or_default();
        e.0 += 1;
        e.1 += c.iou();
        e.2 += c.f_score();
        pooled.add(c);
    }
    let per_category: Vec<CategoryMetrics> = per
        .into_iter()
        .map(|(category, (n, i, f))| CategoryMetrics {
            category,
            samples: n,
            iou: i / n as f64,
            f_score: f / n as f64,
        })
        .collect();
    let k = per_category.len() as f64;
    let miou = per_category.iter().map(|c| c.iou).sum::<f64>() / k;
    let f_score = match aggregation {
        FAggregation::Macro => per_category.iter().map(|c| c.f_score).sum::<f64>() / k,
        FAggregation::Micro => pooled.f_score(),
    };
    ThresholdRow {
        threshold: p,
        miou,
        f_score,
        per_category,
    }
}

/// Sweeps every threshold of `sweep` and selects p* as the first (smallest)
/// threshold attaining the maximum objective.
pub fn evaluate_predictions<T: Scalar>(predictions: &[Prediction<T>], sweep: &ThresholdSweepConfig) -> Result<EvalReport> {
    sweep.validate()?;
    if predictions.is_empty() {
        return Err(Error::EmptySplit {
            split: "evaluation".into(),
        });
    }
    for pr in predictions {
        if pr.logits.resolution() != pr.label.resolution() {
            return Err(Error::ResolutionMismatch {
                prediction: pr.logits.resolution(),
                label: pr.label.resolution(),
            });
        }
    }
    let thresholds = sweep.thresholds();
    let probabilities: Vec<Vec<f64>> = predictions
        .par_iter()
        .map(|pr| pr.logits.values().iter().map(|x| sigmoid(x.as_f64())).collect())
        .collect();
    let curve: Vec<ThresholdRow> = thresholds
        .par_iter()
        .map(|&p| {
            let confusions: Vec<Confusion> = probabilities
                .iter()
                .zip(predictions)
                .map(|(probs, pr)| {
                    let mut c = Confusion::default();
                    for (q, g) in probs.iter().zip(pr.label.cells()) {
                        match (*q > p, *g) {
                            (true, true) => c.true_positive += 1,
                            (true, false) => c.false_positive += 1,
                            (false, true) => c.false_negative += 1,
                            (false, false) => {}
                        }
                    }
                    c
                })
                .collect();
            row_from_confusions(predictions, &confusions, p, sweep.f_aggregation)
        })
        .collect();
    let mut best = 0;
    for (i, row) in curve.iter().enumerate() {
        if row.objective(sweep.objective) > curve[best].objective(sweep.objective) {
            best = i;
        }
    }
    Ok(EvalReport {
        format: EVAL_REPORT_FORMAT.into(),
        sweep: sweep.clone(),
        samples: predictions.len(),
        best_threshold: curve[best].threshold,
        best: curve[best].clone(),
        curve,
    })
}

/// Runs the checkpoint's network over every sample of `split` and returns
/// its logits alongside the labels.
pub fn predict_split(checkpoint: &Checkpoint, manifest: &Manifest, split: Split) -> Result<Vec<Prediction<f32>>> {
    let network = checkpoint.network::<f32>()?;
    let samples = load_samples::<f32>(manifest, split, &checkpoint.meta.representation)?;
    if samples.is_empty() {
        return Err(Error::EmptySplit { split: split.to_string() });
    }
    samples
        .into_par_iter()
        .map_init(
            || network.clone(),
            |net, s| {
                Ok(Prediction {
                    logits: net.predict(s.input)?,
                    category: s.category,
                    object_id: s.object_id,
                    label: s.label,
                })
            },
        )
        .collect()
}

/// Inference over the test split followed by the threshold sweep.
pub fn evaluate_split(checkpoint: &Checkpoint, manifest: &Manifest, sweep: &ThresholdSweepConfig) -> Result<EvalReport> {
    evaluate_predictions(&predict_split(checkpoint, manifest, Split::Test)?, sweep)
}
