use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    self, doc_ids, summarize_ids, Annotation, Aspect, LabelTriplet, PredictionSet, NUM_ASPECTS, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{fleiss_kappa, AgreementTable, EvalReport, MajorityBaseline};
use crate::stratify::{iterative_stratified_split, SplitSpec};

use super::run::evaluate_prediction_set;

/// Hard labels as probability rows (one-hot).
pub fn one_hot_predictions(model_id: &str, labels: &[LabelTriplet]) -> Result<PredictionSet> {
    let probs = Aspect::ALL.map(|a| {
        let mut m = Matrix::zeros(labels.len(), NUM_CLASSES);
        for (r, l) in labels.iter().enumerate() {
            m[(r, l.get(a).index())] = 1.0;
        }
        m
    });
    PredictionSet::new(model_id, doc_ids(labels), probs)
}

fn align_hard_labels(preds: &[LabelTriplet], gold: &[LabelTriplet], source: &Path) -> Result<Vec<LabelTriplet>> {
    let by_id: HashMap<&str, &LabelTriplet> = preds.iter().map(|l| (l.doc_id.as_str(), l)).collect();
    let gold_ids: std::collections::HashSet<&str> = gold.iter().map(|l| l.doc_id.as_str()).collect();
    let unknown: Vec<String> = preds
        .iter()
        .filter(|l| !gold_ids.contains(l.doc_id.as_str()))
        .map(|l| l.doc_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Data(format!(
            "{}: predictions for documents not in the gold file: {}",
            source.display(),
            summarize_ids(&unknown)
        )));
    }
    let missing: Vec<String> = gold
        .iter()
        .filter(|l| !by_id.contains_key(l.doc_id.as_str()))
        .map(|l| l.doc_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "{}: no prediction for {}",
            source.display(),
            summarize_ids(&missing)
        )));
    }
    Ok(gold.iter().map(|l| by_id[l.doc_id.as_str()].clone()).collect())
}

fn is_jsonl(path: &Path) -> Result<bool> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => Ok(true),
        Some("csv") => Ok(false),
        _ => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Ok(text.trim_start().starts_with('{'))
        }
    }
}

/// Scores a predictions file against gold labels. JSONL files carry
/// probability rows (one report entry per model); CSV files in the labels
/// format carry hard labels, scored as one-hot rows. The report holds a
/// single run, listed as seed 0.
pub fn evaluate_files(pred_path: &Path, gold_path: &Path) -> Result<EvalReport> {
    let gold = data::read_labels(gold_path)?;
    let sets = if is_jsonl(pred_path)? {
        data::read_predictions(pred_path, &doc_ids(&gold))?
    } else {
        let hard = align_hard_labels(&data::read_labels(pred_path)?, &gold, pred_path)?;
        let stem = pred_path.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions");
        vec![one_hot_predictions(stem, &hard)?]
    };
    if sets.is_empty() {
        return Err(Error::Data(format!("{}: no predictions", pred_path.display())));
    }
    let mut report = EvalReport::new(vec![0]);
    for set in &sets {
        report.add_model(&set.model_id, &[evaluate_prediction_set(set, &gold)?])?;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOn {
    Train,
    Test,
}

/// Majority predictor fit on the chosen label set and scored on `test`.
pub fn majority_report(
    train: &[LabelTriplet],
    test: &[LabelTriplet],
    fit_on: FitOn,
) -> Result<(MajorityBaseline, EvalReport)> {
    let fit = match fit_on {
        FitOn::Train => train,
        FitOn::Test => test,
    };
    let columns = |l: &[LabelTriplet]| Aspect::ALL.map(|a| data::aspect_column(l, a));
    let baseline = MajorityBaseline::fit(&columns(fit))?;
    let mut report = EvalReport::new(vec![0]);
    report.add_model(super::run::MAJORITY_ID, &[baseline.evaluate(&columns(test))?])?;
    Ok((baseline, report))
}

/// The majority predictions for `docs` as hard labels.
pub fn majority_labels(baseline: &MajorityBaseline, docs: &[LabelTriplet]) -> Vec<LabelTriplet> {
    let cls: [data::SentimentClass; NUM_ASPECTS] = baseline
        .classes
        .map(|c| data::SentimentClass::from_index(c).expect("class index"));
    docs.iter()
        .map(|d| LabelTriplet::new(d.doc_id.clone(), cls[0], cls[1], cls[2]))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitsFile {
    pub seed: u64,
    pub fractions: Vec<f64>,
    pub parts: Vec<Vec<String>>,
}

pub fn split_labels(labels: &[LabelTriplet], fractions: Vec<f64>, seed: u64) -> Result<SplitsFile> {
    let spec = SplitSpec::new(fractions, seed)?;
    let result = iterative_stratified_split(labels, &spec)?;
    Ok(SplitsFile {
        seed,
        fractions: spec.fractions,
        parts: result.parts,
    })
}

pub fn write_splits(path: &Path, splits: &SplitsFile) -> Result<()> {
    data::write_text(path, &(serde_json::to_string_pretty(splits)? + "\n"))
}

pub fn read_splits(path: &Path) -> Result<SplitsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AspectAgreement {
    pub aspect: Aspect,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub raters: usize,
    pub items_used: usize,
    pub skipped_too_few: usize,
    pub skipped_unbalanced: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgreementReport {
    pub aspects: Vec<AspectAgreement>,
    pub tables: Vec<(Aspect, AgreementTable)>,
}

/// Fleiss' kappa per aspect over the balanced subset of items.
pub fn agreement_report(annotations: &[Annotation]) -> AgreementReport {
    let mut aspects = Vec::new();
    let mut tables = Vec::new();
    for aspect in Aspect::ALL {
        let table = AgreementTable::from_annotations(annotations, aspect);
        let balanced = table.balanced();
        let skipped = balanced.skipped_too_few + balanced.skipped_unbalanced;
        if skipped > 0 {
            log::warn!(
                "aspect {aspect}: skipped {} items with fewer than 2 ratings and {} without {} ratings",
                balanced.skipped_too_few,
                balanced.skipped_unbalanced,
                balanced.raters
            );
        }
        let (kappa, note) = if balanced.items.is_empty() {
            (None, Some("no item has two or more ratings".to_string()))
        } else {
            match fleiss_kappa(&balanced.counts) {
                Ok(k) => (Some(k), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        aspects.push(AspectAgreement {
            aspect,
            kappa,
            note,
            raters: balanced.raters,
            items_used: balanced.items.len(),
            skipped_too_few: balanced.skipped_too_few,
            skipped_unbalanced: balanced.skipped_unbalanced,
        });
        tables.push((aspect, table));
    }
    AgreementReport { aspects, tables }
}

impl AgreementReport {
    /// `aspect,item_id,irrelevant,negative,neutral,positive` over every item.
    pub fn counts_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["aspect", "item_id", "irrelevant", "negative", "neutral", "positive"])?;
        for (aspect, table) in &self.tables {
            for (item, c) in table.category_counts() {
                let mut row = vec![aspect.to_string(), item];
                row.extend(c.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(format!("CSV buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }
}
