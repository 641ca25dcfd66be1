//! Per-aspect evaluation: accuracy, macro-F1, balanced accuracy and
//! one-vs-rest average precision, plus the majority baseline, Fleiss' kappa
//! and aggregation over seeds.
//!
//! Conventions:
//! - per-class precision, recall and F1 are 0 whenever their denominator is 0;
//! - balanced accuracy averages recall over classes present in the gold labels;
//! - average precision groups tied scores into one threshold, so a constant
//!   scorer gets AP equal to the class prevalence; classes absent from the gold
//!   labels are left out of the macro mean.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Aspect, NUM_ASPECTS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn check_aligned(pred: &[usize], gold: &[usize], num_classes: usize) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty label set".into()));
    }
    if let Some(c) = pred.iter().chain(gold).find(|&&c| c >= num_classes) {
        return Err(Error::InvalidInput(format!(
            "class index {c} out of range 0..{num_classes}"
        )));
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], gold: &[usize]) -> Result<f64> {
    check_aligned(pred, gold, usize::MAX)?;
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// `counts[gold][pred]`.
pub fn confusion_matrix(pred: &[usize], gold: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    check_aligned(pred, gold, num_classes)?;
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &g) in pred.iter().zip(gold) {
        m[g][p] += 1;
    }
    Ok(m)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Unweighted mean of per-class F1 over all `num_classes` classes.
pub fn f1_macro(pred: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    let cm = confusion_matrix(pred, gold, num_classes)?;
    let mut sum = 0.0;
    for c in 0..num_classes {
        let tp = cm[c][c];
        let predicted: usize = (0..num_classes).map(|g| cm[g][c]).sum();
        let actual: usize = cm[c].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(sum / num_classes as f64)
}

/// Mean recall over the classes that occur in `gold`.
pub fn balanced_accuracy(pred: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    let cm = confusion_matrix(pred, gold, num_classes)?;
    let mut sum = 0.0;
    let mut present = 0;
    for (c, row) in cm.iter().enumerate() {
        let actual: usize = row.iter().sum();
        if actual > 0 {
            sum += row[c] as f64 / actual as f64;
            present += 1;
        }
    }
    Ok(sum / present as f64)
}

/// Average precision `Σ (R_k − R_{k−1}) · P_k` over descending score
/// thresholds with ties grouped. `None` when there are no positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Result<Option<f64>> {
    if scores.len() != positive.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut seen, mut prev_recall, mut ap) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            tp += positive[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(Some(ap))
}

/// One-vs-rest AP per class (`None` for classes absent from `gold`).
pub fn average_precision_per_class(scores: &Matrix, gold: &[usize]) -> Result<Vec<Option<f64>>> {
    if scores.rows() != gold.len() {
        return Err(Error::Shape(format!(
            "{} score rows for {} gold labels",
            scores.rows(),
            gold.len()
        )));
    }
    (0..scores.cols())
        .map(|c| {
            let positive: Vec<bool> = gold.iter().map(|&g| g == c).collect();
            average_precision(&scores.column(c), &positive)
        })
        .collect()
}

/// Macro mean of one-vs-rest AP over classes present in `gold`.
pub fn auprc_macro(scores: &Matrix, gold: &[usize]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty label set".into()));
    }
    if scores.cols() != NUM_CLASSES {
        return Err(Error::Shape(format!(
            "expected {NUM_CLASSES} score columns, got {}",
            scores.cols()
        )));
    }
    let per_class = average_precision_per_class(scores, gold)?;
    let present: Vec<f64> = per_class.into_iter().flatten().collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectMetrics {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub bacc: f64,
    pub auprc: f64,
}

impl AspectMetrics {
    pub fn as_array(&self) -> [f64; 4] {
        [self.accuracy, self.f1_macro, self.bacc, self.auprc]
    }
}

/// All four metrics for one aspect; `scores` is n × 4.
pub fn evaluate_aspect(pred: &[usize], gold: &[usize], scores: &Matrix) -> Result<AspectMetrics> {
    Ok(AspectMetrics {
        accuracy: accuracy(pred, gold)?,
        f1_macro: f1_macro(pred, gold, NUM_CLASSES)?,
        bacc: balanced_accuracy(pred, gold, NUM_CLASSES)?,
        auprc: auprc_macro(scores, gold)?,
    })
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Most frequent class; ties go to the lowest index.
pub fn majority_class(labels: &[usize]) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("majority class of an empty label set".into()));
    }
    let mut counts = [0usize; NUM_CLASSES];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::InvalidInput(format!("class index {l} out of range")))? += 1;
    }
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Constant per-aspect predictor with uniform scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityBaseline {
    pub classes: [usize; NUM_ASPECTS],
}

impl MajorityBaseline {
    /// `columns[a]` holds the class indices of aspect `a`.
    pub fn fit(columns: &[Vec<usize>; NUM_ASPECTS]) -> Result<Self> {
        let mut classes = [0; NUM_ASPECTS];
        for (slot, col) in classes.iter_mut().zip(columns) {
            *slot = majority_class(col)?;
        }
        Ok(MajorityBaseline { classes })
    }

    pub fn predict(&self, aspect: Aspect, n: usize) -> (Vec<usize>, Matrix) {
        (
            vec![self.classes[aspect.index()]; n],
            Matrix::from_raw(n, NUM_CLASSES, vec![1.0 / NUM_CLASSES as f64; n * NUM_CLASSES]),
        )
    }

    pub fn evaluate(&self, gold: &[Vec<usize>; NUM_ASPECTS]) -> Result<[AspectMetrics; NUM_ASPECTS]> {
        let mut out = Vec::with_capacity(NUM_ASPECTS);
        for aspect in Aspect::ALL {
            let g = &gold[aspect.index()];
            let (pred, scores) = self.predict(aspect, g.len());
            out.push(evaluate_aspect(&pred, g, &scores)?);
        }
        Ok(out.try_into().expect("three aspects"))
    }
}

/// Fleiss' kappa from an items × categories table of rating counts. Every
/// item must carry the same number of ratings, at least two.
pub fn fleiss_kappa(counts: &[Vec<usize>]) -> Result<f64> {
    let first = counts
        .first()
        .ok_or_else(|| Error::InvalidInput("no items to compute agreement over".into()))?;
    let k = first.len();
    let raters: usize = first.iter().sum();
    if raters < 2 {
        return Err(Error::InvalidInput("each item needs at least two ratings".into()));
    }
    if let Some(i) = counts
        .iter()
        .position(|row| row.len() != k || row.iter().sum::<usize>() != raters)
    {
        return Err(Error::InvalidInput(format!(
            "item {i} does not have {raters} ratings over {k} categories"
        )));
    }
    let n = raters as f64;
    let items = counts.len() as f64;
    let p_bar = counts
        .iter()
        .map(|row| (row.iter().map(|&c| (c * c) as f64).sum::<f64>() - n) / (n * (n - 1.0)))
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..k)
        .map(|j| {
            let pj = counts.iter().map(|row| row[j] as f64).sum::<f64>() / (items * n);
            pj * pj
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(Error::Undefined(
            "Fleiss' kappa: every rating falls in one category, chance agreement is 1".into(),
        ));
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Categorical ratings of one aspect, keyed by item.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AgreementTable {
    pub ratings: BTreeMap<String, Vec<usize>>,
}

/// The equal-rater subset a kappa is computed over.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BalancedCounts {
    pub raters: usize,
    pub items: Vec<String>,
    /// Items × 4 category counts, aligned to `items`.
    pub counts: Vec<Vec<usize>>,
    pub skipped_too_few: usize,
    pub skipped_unbalanced: usize,
}

impl AgreementTable {
    pub fn from_annotations(annotations: &[crate::data::Annotation], aspect: Aspect) -> AgreementTable {
        let mut ratings: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for a in annotations.iter().filter(|a| a.aspect == aspect) {
            ratings.entry(a.item_id.clone()).or_default().push(a.label.index());
        }
        AgreementTable { ratings }
    }

    /// Per-item category counts over every item, rated once or more.
    pub fn category_counts(&self) -> Vec<(String, [usize; NUM_CLASSES])> {
        self.ratings
            .iter()
            .map(|(item, r)| {
                let mut c = [0; NUM_CLASSES];
                r.iter().for_each(|&l| c[l] += 1);
                (item.clone(), c)
            })
            .collect()
    }

    /// Drops items with fewer than two ratings, then keeps the items whose
    /// rating count equals the most common count (larger count on ties).
    pub fn balanced(&self) -> BalancedCounts {
        let eligible: Vec<(&String, &Vec<usize>)> = self.ratings.iter().filter(|(_, r)| r.len() >= 2).collect();
        let skipped_too_few = self.ratings.len() - eligible.len();
        let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
        for (_, r) in &eligible {
            *freq.entry(r.len()).or_default() += 1;
        }
        let raters = freq
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
            .map_or(0, |(&k, _)| k);
        let mut items = Vec::new();
        let mut counts = Vec::new();
        for (item, r) in eligible.iter().filter(|(_, r)| r.len() == raters) {
            let mut c = vec![0; NUM_CLASSES];
            r.iter().for_each(|&l| c[l] += 1);
            items.push((*item).clone());
            counts.push(c);
        }
        BalancedCounts {
            raters,
            skipped_unbalanced: eligible.len() - items.len(),
            items,
            counts,
            skipped_too_few,
        }
    }
}

/// Mean and sample (n − 1) standard deviation; one value gives std 0.
pub fn aggregate_seeds(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidInput("no seeds to aggregate".into()));
    }
    if values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
        return Ok((values[0], 0.0));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

impl MetricSummary {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let (mean, std) = aggregate_seeds(&values)?;
        Ok(MetricSummary {
            mean,
            std,
            per_seed: values,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectSummary {
    pub accuracy: MetricSummary,
    pub f1_macro: MetricSummary,
    pub bacc: MetricSummary,
    pub auprc: MetricSummary,
}

impl AspectSummary {
    pub fn from_seeds(per_seed: &[AspectMetrics]) -> Result<Self> {
        let col = |f: fn(&AspectMetrics) -> f64| MetricSummary::from_values(per_seed.iter().map(f).collect());
        Ok(AspectSummary {
            accuracy: col(|m| m.accuracy)?,
            f1_macro: col(|m| m.f1_macro)?,
            bacc: col(|m| m.bacc)?,
            auprc: col(|m| m.auprc)?,
        })
    }

    pub fn means(&self) -> AspectMetrics {
        AspectMetrics {
            accuracy: self.accuracy.mean,
            f1_macro: self.f1_macro.mean,
            bacc: self.bacc.mean,
            auprc: self.auprc.mean,
        }
    }
}

/// One model's summaries per aspect, plus the per-seed mean over aspects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    #[serde(rename = "E")]
    pub e: AspectSummary,
    #[serde(rename = "S")]
    pub s: AspectSummary,
    #[serde(rename = "G")]
    pub g: AspectSummary,
    pub mean_over_aspects: AspectSummary,
}

impl ModelSummary {
    /// `per_seed[i][a]` are the metrics of seed `i`, aspect `a`.
    pub fn from_seeds(per_seed: &[[AspectMetrics; NUM_ASPECTS]]) -> Result<Self> {
        let aspect = |a: usize| AspectSummary::from_seeds(&per_seed.iter().map(|s| s[a]).collect::<Vec<_>>());
        let overall: Vec<AspectMetrics> = per_seed
            .iter()
            .map(|s| {
                let avg = |f: fn(&AspectMetrics) -> f64| s.iter().map(f).sum::<f64>() / NUM_ASPECTS as f64;
                AspectMetrics {
                    accuracy: avg(|m| m.accuracy),
                    f1_macro: avg(|m| m.f1_macro),
                    bacc: avg(|m| m.bacc),
                    auprc: avg(|m| m.auprc),
                }
            })
            .collect();
        Ok(ModelSummary {
            e: aspect(0)?,
            s: aspect(1)?,
            g: aspect(2)?,
            mean_over_aspects: AspectSummary::from_seeds(&overall)?,
        })
    }

    pub fn aspect(&self, aspect: Aspect) -> &AspectSummary {
        match aspect {
            Aspect::E => &self.e,
            Aspect::S => &self.s,
            Aspect::G => &self.g,
        }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Evaluation results keyed by model id. Serializes with a fixed key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub models: BTreeMap<String, ModelSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<serde_json::Value>,
}

impl EvalReport {
    pub fn new(seeds: Vec<u64>) -> Self {
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            seeds,
            models: BTreeMap::new(),
            config_hash: None,
            audit: None,
        }
    }

    /// Adds a model given one metrics triple per seed, in `self.seeds` order.
    pub fn add_model(&mut self, model_id: &str, per_seed: &[[AspectMetrics; NUM_ASPECTS]]) -> Result<()> {
        if per_seed.len() != self.seeds.len() {
            return Err(Error::Shape(format!(
                "model {model_id} has {} seed results for {} seeds",
                per_seed.len(),
                self.seeds.len()
            )));
        }
        self.models
            .insert(model_id.to_string(), ModelSummary::from_seeds(per_seed)?);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One table per aspect with `mean ± std` cells.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for aspect in Aspect::ALL {
            let _ = writeln!(out, "### Aspect {aspect}\n");
            let _ = writeln!(out, "| Model | Accuracy | F1-macro | BAcc | AUPRC |");
            let _ = writeln!(out, "|---|---|---|---|---|");
            for (id, m) in &self.models {
                let a = m.aspect(aspect);
                let cell = |s: &MetricSummary| format!("{:.4} ± {:.4}", s.mean, s.std);
                let _ = writeln!(
                    out,
                    "| {id} | {} | {} | {} | {} |",
                    cell(&a.accuracy),
                    cell(&a.f1_macro),
                    cell(&a.bacc),
                    cell(&a.auprc)
                );
            }
            out.push('\n');
        }
        out
    }
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    crate::data::write_text(path.as_ref(), &report.to_json()?)
}
