//! Base families and the two stacking towers.

mod base;
mod towers;

pub use base::{BaseClassifier, BaseKind, KnnClassifier, SoftmaxRegression, Standardizer};
pub use towers::{
    meta_split_ids, predict_tower, train_tower, train_tower_a, train_tower_b, MetaRun, TowerAModel, TowerBModel,
    TowerKind, TowerModel, TowerPrediction,
};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{doc_ids, summarize_ids, Aspect, EmbeddingSet, LabelTriplet, PredictionSet, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::linalg::{truncated_svd, Matrix};
use crate::metrics::{argmax, f1_macro};
use crate::neural::{targets_of, Targets};
use crate::stratify::split_indices_80_20;

pub const SVD_CANDIDATES: [usize; 4] = [32, 64, 128, 256];

/// Validation macro-F1 for each feasible SVD dimension and the winner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdSelection {
    pub candidates: Vec<usize>,
    pub scores: Vec<f64>,
    pub chosen: usize,
}

/// Mean over aspects of the macro-F1 of argmax predictions.
fn mean_macro_f1(probs: &[Matrix; 3], y: &[Targets]) -> Result<f64> {
    let mut total = 0.0;
    for aspect in Aspect::ALL {
        let a = aspect.index();
        let pred: Vec<usize> = (0..probs[a].rows()).map(|r| argmax(probs[a].row(r))).collect();
        let gold: Vec<usize> = y.iter().map(|t| t[a]).collect();
        total += f1_macro(&pred, &gold, NUM_CLASSES)?;
    }
    Ok(total / 3.0)
}

/// Picks the SVD dimension from `candidates` by an internal stratified 80/20
/// split of `labels`: factors are fit on the 80 side, both sides projected, the
/// base classifier fit and scored by mean per-aspect macro-F1. Ties go to the
/// smallest dimension. Candidates above `min(n − 1, d)` or the 80-side size are
/// dropped.
pub fn select_svd_dim(
    emb: &EmbeddingSet,
    labels: &[LabelTriplet],
    kind: BaseKind,
    seed: u64,
    candidates: &[usize],
) -> Result<SvdSelection> {
    let n = labels.len();
    if n < 10 {
        return Err(Error::InvalidInput(format!(
            "SVD selection needs at least 10 documents, got {n}"
        )));
    }
    let emb = emb.subset(&doc_ids(labels))?;
    let (tr, va) = split_indices_80_20(labels, seed)?;
    let limit = (n - 1).min(emb.dim()).min(tr.len());
    let mut feasible: Vec<usize> = candidates.iter().copied().filter(|&c| c >= 1 && c <= limit).collect();
    feasible.sort_unstable();
    feasible.dedup();
    let largest = *feasible.last().ok_or_else(|| {
        Error::InvalidInput(format!(
            "no SVD candidate in {candidates:?} fits {n} documents of dimension {}",
            emb.dim()
        ))
    })?;

    let y = targets_of(labels);
    let y_tr: Vec<Targets> = tr.iter().map(|&i| y[i]).collect();
    let y_va: Vec<Targets> = va.iter().map(|&i| y[i]).collect();
    let x_tr = emb.features.select_rows(&tr);
    let x_va = emb.features.select_rows(&va);
    let svd = truncated_svd(&x_tr, largest)?;
    let z_tr = svd.project(&x_tr)?;
    let z_va = svd.project(&x_va)?;

    let mut scores = Vec::with_capacity(feasible.len());
    for &k in &feasible {
        let mut clf = kind.build();
        clf.fit(&z_tr.select_cols(0..k), &y_tr)?;
        scores.push(mean_macro_f1(&clf.predict_proba(&z_va.select_cols(0..k))?, &y_va)?);
    }
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    log::debug!("{}: SVD scores {:?} over {:?}", emb.model_id, scores, feasible);
    Ok(SvdSelection {
        chosen: feasible[best],
        candidates: feasible,
        scores,
    })
}

/// Where a base family's probabilities come from.
#[derive(Clone, Copy, Debug)]
pub enum FamilySource<'a> {
    /// Precomputed predictions covering at least the D_20 and test documents.
    External(&'a PredictionSet),
    Embedding {
        embeddings: &'a EmbeddingSet,
        kind: BaseKind,
        use_svd: bool,
        candidates: &'a [usize],
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyFit {
    pub model_id: String,
    pub meta_train: PredictionSet,
    pub test: PredictionSet,
    /// Documents the classifier was fit on; empty for external families.
    pub fit_doc_ids: Vec<String>,
    pub svd: Option<SvdSelection>,
}

/// Refuses any overlap between the fit documents and the evaluation sides.
pub fn check_disjoint(fit_ids: &[String], others: &[&[String]]) -> Result<()> {
    let fit: HashSet<&str> = fit_ids.iter().map(String::as_str).collect();
    let overlap: Vec<String> = others
        .iter()
        .flat_map(|ids| ids.iter())
        .filter(|id| fit.contains(id.as_str()))
        .cloned()
        .collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage(format!(
            "base family fit set overlaps held-out documents: {}",
            summarize_ids(&overlap)
        )))
    }
}

/// Stage 2 for one family: fit on `labels_80` only, then predict the D_20
/// (`meta_ids`) and test documents. External families are aligned and passed
/// through.
pub fn fit_base_family(
    model_id: &str,
    source: FamilySource<'_>,
    labels_80: &[LabelTriplet],
    meta_ids: &[String],
    test_ids: &[String],
    seed: u64,
) -> Result<FamilyFit> {
    let fit_ids = doc_ids(labels_80);
    check_disjoint(&fit_ids, &[meta_ids, test_ids])?;
    match source {
        FamilySource::External(preds) => Ok(FamilyFit {
            model_id: model_id.to_string(),
            meta_train: rename(preds.subset(meta_ids)?, model_id),
            test: rename(preds.subset(test_ids)?, model_id),
            fit_doc_ids: Vec::new(),
            svd: None,
        }),
        FamilySource::Embedding {
            embeddings,
            kind,
            use_svd,
            candidates,
        } => {
            let x_fit = embeddings.subset(&fit_ids)?.features;
            let x_meta = embeddings.subset(meta_ids)?.features;
            let x_test = embeddings.subset(test_ids)?.features;
            let (svd, x_fit, x_meta, x_test) = if use_svd {
                let selection = select_svd_dim(embeddings, labels_80, kind, seed, candidates)?;
                let factors = truncated_svd(&x_fit, selection.chosen)?;
                let project = |m: &Matrix| factors.project(m);
                (Some(selection), project(&x_fit)?, project(&x_meta)?, project(&x_test)?)
            } else {
                (None, x_fit, x_meta, x_test)
            };
            let mut clf = kind.build();
            clf.fit(&x_fit, &targets_of(labels_80))?;
            Ok(FamilyFit {
                model_id: model_id.to_string(),
                meta_train: PredictionSet::new(model_id, meta_ids.to_vec(), clf.predict_proba(&x_meta)?)?,
                test: PredictionSet::new(model_id, test_ids.to_vec(), clf.predict_proba(&x_test)?)?,
                fit_doc_ids: fit_ids,
                svd,
            })
        }
    }
}

fn rename(mut set: PredictionSet, model_id: &str) -> PredictionSet {
    set.model_id = model_id.to_string();
    set
}
