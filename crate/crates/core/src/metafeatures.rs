//! Clipped log-probability meta-features.

use crate::data::{Aspect, PredictionSet, NUM_ASPECTS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Probability floor before taking the log.
pub const CLIP_EPS: f64 = 1e-6;
/// How far outside [0, 1] an input may drift from upstream rounding.
pub const RANGE_SLACK: f64 = 1e-9;

pub const FEATURES_PER_FAMILY: usize = NUM_ASPECTS * NUM_CLASSES;

/// Elementwise `ln(clip(p, 1e-6, 1))`.
pub fn logit_transform(p: &Matrix) -> Result<Matrix> {
    let mut out = Vec::with_capacity(p.as_slice().len());
    for (i, &v) in p.as_slice().iter().enumerate() {
        if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&v) {
            return Err(Error::InvalidInput(format!(
                "probability {v} at ({}, {}) is outside [0, 1]",
                i / p.cols().max(1),
                i % p.cols().max(1)
            )));
        }
        out.push(v.clamp(CLIP_EPS, 1.0).ln());
    }
    Ok(Matrix::from_raw(p.rows(), p.cols(), out))
}

/// `[L_E ‖ L_S ‖ L_G]`.
pub fn concat_aspects(le: &Matrix, ls: &Matrix, lg: &Matrix) -> Result<Matrix> {
    for (aspect, m) in Aspect::ALL.iter().zip([le, ls, lg]) {
        if m.cols() != NUM_CLASSES {
            return Err(Error::Shape(format!(
                "aspect {aspect} block has {} columns, expected {NUM_CLASSES}",
                m.cols()
            )));
        }
    }
    Matrix::hstack(&[le, ls, lg])
}

/// One base family's n × 12 meta-features, columns `[E0..E3, S0..S3, G0..G3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaFeatureMatrix {
    pub model_id: String,
    pub doc_ids: Vec<String>,
    pub features: Matrix,
}

impl MetaFeatureMatrix {
    pub fn from_predictions(preds: &PredictionSet) -> Result<Self> {
        let [le, ls, lg] = [Aspect::E, Aspect::S, Aspect::G].map(|a| logit_transform(preds.aspect(a)));
        Ok(MetaFeatureMatrix {
            model_id: preds.model_id.clone(),
            doc_ids: preds.doc_ids.clone(),
            features: concat_aspects(&le?, &ls?, &lg?)?,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn select_rows(&self, rows: &[usize]) -> MetaFeatureMatrix {
        MetaFeatureMatrix {
            model_id: self.model_id.clone(),
            doc_ids: rows.iter().map(|&r| self.doc_ids[r].clone()).collect(),
            features: self.features.select_rows(rows),
        }
    }
}

/// Families sharing one document ordering, in configured order.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySet {
    families: Vec<MetaFeatureMatrix>,
}

impl FamilySet {
    pub fn new(families: Vec<MetaFeatureMatrix>) -> Result<Self> {
        let first = families
            .first()
            .ok_or_else(|| Error::InvalidInput("at least one base family is required".into()))?;
        for fam in &families {
            if fam.features.cols() != FEATURES_PER_FAMILY {
                return Err(Error::Shape(format!(
                    "family {} has {} meta-features, expected {FEATURES_PER_FAMILY}",
                    fam.model_id,
                    fam.features.cols()
                )));
            }
            if fam.doc_ids != first.doc_ids || fam.features.rows() != fam.doc_ids.len() {
                return Err(Error::Shape(format!(
                    "family {} is not aligned with family {}",
                    fam.model_id, first.model_id
                )));
            }
        }
        let mut ids: Vec<&str> = families.iter().map(|f| f.model_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("family ids must be distinct".into()));
        }
        Ok(FamilySet { families })
    }

    pub fn families(&self) -> &[MetaFeatureMatrix] {
        &self.families
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    pub fn family_ids(&self) -> Vec<String> {
        self.families.iter().map(|f| f.model_id.clone()).collect()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.families[0].doc_ids
    }

    pub fn num_docs(&self) -> usize {
        self.families[0].len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FamilySet {
        FamilySet {
            families: self.families.iter().map(|f| f.select_rows(rows)).collect(),
        }
    }
}

/// `[X_fam1 ‖ … ‖ X_famk]`, width 12k.
pub fn concat_families(fams: &FamilySet) -> Result<Matrix> {
    let parts: Vec<&Matrix> = fams.families.iter().map(|f| &f.features).collect();
    Matrix::hstack(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn log_of_clipped_probabilities() {
        let out = logit_transform(&m(&[vec![1.0, 0.0, 0.5, 1e-9]])).unwrap();
        assert_eq!(out[(0, 0)], 0.0);
        assert_abs_diff_eq!(out[(0, 1)], -13.815_510_557_964_274, epsilon = 1e-12);
        assert_abs_diff_eq!(out[(0, 2)], -std::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(out[(0, 3)], out[(0, 1)]);
    }

    #[test]
    fn tiny_overshoot_clipped_large_rejected() {
        let out = logit_transform(&m(&[vec![1.0 + 5e-10]])).unwrap();
        assert_eq!(out[(0, 0)], 0.0);
        assert!(logit_transform(&m(&[vec![1.01]])).is_err());
        assert!(logit_transform(&m(&[vec![-0.1]])).is_err());
    }

    #[test]
    fn aspect_layout() {
        let le = m(&[vec![0.0; 4]]);
        let ls = m(&[vec![-1.0, -1.5, -1.0, -1.0]]);
        let lg = m(&[vec![-2.0; 4]]);
        let x = concat_aspects(&le, &ls, &lg).unwrap();
        assert_eq!(x.shape(), (1, 12));
        assert_eq!(x.row(0)[..4], [0.0; 4]);
        assert_eq!(x.row(0)[8..], [-2.0; 4]);
        assert_eq!(x[(0, 5)], ls[(0, 1)]);
        let short = m(&[vec![0.0; 4], vec![0.0; 4]]);
        assert!(concat_aspects(&le, &short, &lg).is_err());
    }

    fn family(id: &str, value: f64) -> MetaFeatureMatrix {
        MetaFeatureMatrix {
            model_id: id.into(),
            doc_ids: vec!["a".into(), "b".into()],
            features: Matrix::from_vec(2, 12, vec![value; 24]).unwrap(),
        }
    }

    #[test]
    fn family_concatenation_follows_configured_order() {
        let one = FamilySet::new(vec![family("x", -1.0)]).unwrap();
        assert_eq!(concat_families(&one).unwrap(), one.families()[0].features);
        let three = FamilySet::new(vec![family("x", -1.0), family("y", -2.0), family("z", -3.0)]).unwrap();
        let wide = concat_families(&three).unwrap();
        assert_eq!(wide.cols(), 36);
        let swapped = FamilySet::new(vec![family("y", -2.0), family("x", -1.0), family("z", -3.0)]).unwrap();
        let wide2 = concat_families(&swapped).unwrap();
        assert_eq!(wide.select_cols(0..12), wide2.select_cols(12..24));
        assert!(FamilySet::new(vec![]).is_err());
        assert!(FamilySet::new(vec![family("x", 0.0), family("x", 0.0)]).is_err());
    }
}
