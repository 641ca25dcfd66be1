//! Tower A (one meta-MLP over all families) and Tower B (per-family meta-MLPs
//! feeding a cross-family aggregator).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{LabelTriplet, PredictionSet, NUM_ASPECTS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metafeatures::{concat_families, FamilySet, FEATURES_PER_FAMILY};
use crate::metrics::argmax;
use crate::neural::{
    retrain_fixed_epochs, softmax, targets_of, train_early_stopped, HeadLogits, MlpModel, Targets, TrainConfig,
};
use crate::stratify::split_indices_80_20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TowerKind {
    A,
    B,
}

impl TowerKind {
    pub fn model_id(self) -> &'static str {
        match self {
            TowerKind::A => "tower_a",
            TowerKind::B => "tower_b",
        }
    }
}

/// Bookkeeping from one early-stopped search plus fixed-epoch retrain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaRun {
    pub t_star: usize,
    pub epochs_run: usize,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub retrain_steps: u64,
}

#[derive(Clone, Debug)]
pub struct TowerAModel {
    pub family_ids: Vec<String>,
    pub mlp: MlpModel,
    pub run: MetaRun,
}

#[derive(Clone, Debug)]
pub struct TowerBModel {
    pub family_ids: Vec<String>,
    pub level1: Vec<MlpModel>,
    pub level2: MlpModel,
    pub level1_runs: Vec<MetaRun>,
    pub level2_run: MetaRun,
}

#[derive(Clone, Debug)]
pub enum TowerModel {
    A(TowerAModel),
    B(TowerBModel),
}

impl TowerModel {
    pub fn kind(&self) -> TowerKind {
        match self {
            TowerModel::A(_) => TowerKind::A,
            TowerModel::B(_) => TowerKind::B,
        }
    }

    pub fn family_ids(&self) -> &[String] {
        match self {
            TowerModel::A(m) => &m.family_ids,
            TowerModel::B(m) => &m.family_ids,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TowerPrediction {
    pub doc_ids: Vec<String>,
    pub probs: [Matrix; NUM_ASPECTS],
    pub labels: [Vec<usize>; NUM_ASPECTS],
}

impl TowerPrediction {
    fn from_logits(doc_ids: Vec<String>, logits: &HeadLogits) -> TowerPrediction {
        let probs: [Matrix; NUM_ASPECTS] = std::array::from_fn(|a| softmax(&logits[a]));
        let labels = std::array::from_fn(|a| (0..probs[a].rows()).map(|r| argmax(probs[a].row(r))).collect());
        TowerPrediction { doc_ids, probs, labels }
    }

    pub fn to_prediction_set(&self, model_id: &str) -> Result<PredictionSet> {
        PredictionSet::new(model_id, self.doc_ids.clone(), self.probs.clone())
    }
}

/// Rows sorted by doc_id with labels aligned to them, so training does not
/// depend on the order documents arrive in.
fn canonical(fams: &FamilySet, labels: &[LabelTriplet]) -> Result<(FamilySet, Vec<LabelTriplet>)> {
    let by_id: HashMap<&str, &LabelTriplet> = labels.iter().map(|l| (l.doc_id.as_str(), l)).collect();
    if by_id.len() != labels.len() || labels.len() != fams.num_docs() {
        return Err(Error::Shape(format!(
            "{} labels for {} meta-feature rows",
            labels.len(),
            fams.num_docs()
        )));
    }
    let mut order: Vec<usize> = (0..fams.num_docs()).collect();
    order.sort_by(|&a, &b| fams.doc_ids()[a].cmp(&fams.doc_ids()[b]));
    let sorted = fams.select_rows(&order);
    let aligned = sorted
        .doc_ids()
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|l| (*l).clone())
                .ok_or_else(|| Error::Data(format!("no label for meta-feature row {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((sorted, aligned))
}

/// The (meta-train, meta-val) documents a tower trained on `labels` with
/// `seed` uses for early stopping.
pub fn meta_split_ids(labels: &[LabelTriplet], seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    let mut sorted = labels.to_vec();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let (tr, va) = split_indices_80_20(&sorted, seed)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| sorted[i].doc_id.clone()).collect();
    Ok((ids(&tr), ids(&va)))
}

/// Internal meta split: early stopping on (train, val), then retraining for
/// t* epochs on every row.
fn fit_stage3(
    x: &Matrix,
    y: &[Targets],
    split: &(Vec<usize>, Vec<usize>),
    cfg: &TrainConfig,
) -> Result<(MlpModel, MetaRun)> {
    let (tr, va) = split;
    let y_tr: Vec<Targets> = tr.iter().map(|&i| y[i]).collect();
    let y_va: Vec<Targets> = va.iter().map(|&i| y[i]).collect();
    let search = train_early_stopped(&x.select_rows(tr), &y_tr, &x.select_rows(va), &y_va, cfg)?;
    let fixed = retrain_fixed_epochs(x, y, search.t_star, cfg)?;
    let run = MetaRun {
        t_star: search.t_star,
        epochs_run: search.epochs_run,
        initial_val_loss: search.initial_val_loss,
        best_val_loss: search.best_val_loss(),
        retrain_steps: fixed.steps,
    };
    Ok((fixed.model, run))
}

fn head_features(logits: &HeadLogits) -> Result<Matrix> {
    let z = Matrix::hstack(&[&logits[0], &logits[1], &logits[2]])?;
    debug_assert_eq!(z.cols(), NUM_ASPECTS * NUM_CLASSES);
    Ok(z)
}

/// One meta-MLP on `[X_fam1 ‖ … ‖ X_famk]`. Uses `cfg.seed` for the meta split,
/// initialization, shuffling and dropout.
pub fn train_tower_a(fams: &FamilySet, labels: &[LabelTriplet], cfg: &TrainConfig) -> Result<TowerAModel> {
    let (fams, labels) = canonical(fams, labels)?;
    let x = concat_families(&fams)?;
    assert_eq!(x.cols(), FEATURES_PER_FAMILY * fams.len());
    let y = targets_of(&labels);
    let split = split_indices_80_20(&labels, cfg.seed)?;
    let (mlp, run) = fit_stage3(&x, &y, &split, cfg)?;
    Ok(TowerAModel {
        family_ids: fams.family_ids(),
        mlp,
        run,
    })
}

/// Level 1: one meta-MLP per family, whose concatenated head logits `Z_i`
/// (width 12) feed the level-2 meta-MLP. All levels share one meta split.
pub fn train_tower_b(fams: &FamilySet, labels: &[LabelTriplet], cfg: &TrainConfig) -> Result<TowerBModel> {
    let (fams, labels) = canonical(fams, labels)?;
    let y = targets_of(&labels);
    let split = split_indices_80_20(&labels, cfg.seed)?;

    let mut level1 = Vec::with_capacity(fams.len());
    let mut level1_runs = Vec::with_capacity(fams.len());
    let mut zs = Vec::with_capacity(fams.len());
    for fam in fams.families() {
        let (mlp, run) = fit_stage3(&fam.features, &y, &split, cfg)?;
        let z = head_features(&mlp.forward_eval(&fam.features)?)?;
        assert_eq!(z.cols(), FEATURES_PER_FAMILY);
        zs.push(z);
        level1.push(mlp);
        level1_runs.push(run);
    }
    let z_refs: Vec<&Matrix> = zs.iter().collect();
    let x2 = Matrix::hstack(&z_refs)?;
    let (level2, level2_run) = fit_stage3(&x2, &y, &split, cfg)?;
    Ok(TowerBModel {
        family_ids: fams.family_ids(),
        level1,
        level2,
        level1_runs,
        level2_run,
    })
}

pub fn train_tower(
    kind: TowerKind,
    fams: &FamilySet,
    labels: &[LabelTriplet],
    cfg: &TrainConfig,
) -> Result<TowerModel> {
    Ok(match kind {
        TowerKind::A => TowerModel::A(train_tower_a(fams, labels, cfg)?),
        TowerKind::B => TowerModel::B(train_tower_b(fams, labels, cfg)?),
    })
}

/// Eval-mode inference. Families must arrive in the training order.
pub fn predict_tower(model: &TowerModel, fams: &FamilySet) -> Result<TowerPrediction> {
    let ids = fams.family_ids();
    if ids != model.family_ids() {
        return Err(Error::InvalidInput(format!(
            "family order [{}] does not match training order [{}]",
            ids.join(", "),
            model.family_ids().join(", ")
        )));
    }
    let logits = match model {
        TowerModel::A(m) => m.mlp.forward_eval(&concat_families(fams)?)?,
        TowerModel::B(m) => {
            let zs = m
                .level1
                .iter()
                .zip(fams.families())
                .map(|(mlp, fam)| head_features(&mlp.forward_eval(&fam.features)?))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Matrix> = zs.iter().collect();
            m.level2.forward_eval(&Matrix::hstack(&refs)?)?
        }
    };
    Ok(TowerPrediction::from_logits(fams.doc_ids().to_vec(), &logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SentimentClass;
    use crate::linalg::Rng;
    use crate::metafeatures::MetaFeatureMatrix;

    fn labels(n: usize, seed: u64) -> Vec<LabelTriplet> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|i| {
                let c = |r: &mut Rng| SentimentClass::from_index(r.below(4)).unwrap();
                LabelTriplet::new(format!("d{i:03}"), c(&mut rng), c(&mut rng), c(&mut rng))
            })
            .collect()
    }

    fn family(id: &str, labels: &[LabelTriplet], noise: f64, seed: u64) -> MetaFeatureMatrix {
        let mut rng = Rng::new(seed);
        let mut data = Vec::new();
        for l in labels {
            for a in 0..3 {
                for c in 0..4 {
                    let base = if l.labels[a].index() == c { 0.0 } else { -4.0 };
                    data.push(base + noise * rng.normal());
                }
            }
        }
        MetaFeatureMatrix {
            model_id: id.into(),
            doc_ids: labels.iter().map(|l| l.doc_id.clone()).collect(),
            features: Matrix::from_vec(labels.len(), 12, data).unwrap(),
        }
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            max_epochs: 30,
            patience: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn tower_shapes_and_guards() {
        let y = labels(60, 1);
        let fams = FamilySet::new(vec![family("f", &y, 0.5, 2), family("g", &y, 0.5, 3)]).unwrap();
        let a = train_tower(TowerKind::A, &fams, &y, &quick()).unwrap();
        let b = train_tower(TowerKind::B, &fams, &y, &quick()).unwrap();
        if let TowerModel::A(m) = &a {
            assert_eq!(m.mlp.input_dim(), 24);
        }
        if let TowerModel::B(m) = &b {
            assert_eq!(m.level1.len(), 2);
            assert!(m.level1.iter().all(|l| l.input_dim() == 12));
            assert_eq!(m.level2.input_dim(), 24);
        }
        for model in [&a, &b] {
            let p = predict_tower(model, &fams).unwrap();
            for a in 0..3 {
                assert_eq!(p.probs[a].shape(), (60, 4));
            }
        }
        let swapped = FamilySet::new(vec![fams.families()[1].clone(), fams.families()[0].clone()]).unwrap();
        assert!(predict_tower(&a, &swapped).is_err());
    }

    #[test]
    fn symmetric_logits_pick_class_zero() {
        let p = TowerPrediction::from_logits(vec!["x".into()], &std::array::from_fn(|_| Matrix::zeros(1, 4)));
        assert_eq!(p.labels, [vec![0], vec![0], vec![0]]);
    }

    #[test]
    fn row_order_does_not_change_the_model() {
        let y = labels(50, 4);
        let fam = family("f", &y, 0.8, 5);
        let fams = FamilySet::new(vec![fam.clone()]).unwrap();
        let a = train_tower_a(&fams, &y, &quick()).unwrap();
        let perm: Vec<usize> = Rng::new(9).shuffle(50);
        let y_perm: Vec<LabelTriplet> = perm.iter().map(|&i| y[i].clone()).collect();
        let fams_perm = FamilySet::new(vec![fam.select_rows(&perm)]).unwrap();
        let b = train_tower_a(&fams_perm, &y_perm, &quick()).unwrap();
        assert_eq!(a.mlp.params, b.mlp.params);
        assert_eq!(a.run, b.run);
    }

    #[test]
    fn label_count_mismatch_is_rejected() {
        let y = labels(20, 6);
        let fams = FamilySet::new(vec![family("f", &y, 0.1, 1)]).unwrap();
        assert!(train_tower_a(&fams, &y[..19], &quick()).is_err());
    }
}
