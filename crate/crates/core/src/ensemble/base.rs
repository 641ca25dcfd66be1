//! In-repo base classifiers. Both produce per-aspect 4-class distributions
//! from a dense feature matrix, the same interface external models satisfy
//! through prediction files.

use serde::{Deserialize, Serialize};

use crate::data::{NUM_ASPECTS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::neural::{softmax, AdamWConfig, OptimizerState, Parameters, Targets};

pub const SOFTMAX_EPOCHS: usize = 200;
pub const SOFTMAX_LR: f64 = 1e-2;
pub const KNN_NEIGHBORS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    SoftmaxRegression,
    Knn,
}

impl BaseKind {
    pub fn build(self) -> Box<dyn BaseClassifier + Send + Sync> {
        match self {
            BaseKind::SoftmaxRegression => Box::new(SoftmaxRegression::default()),
            BaseKind::Knn => Box::new(KnnClassifier::default()),
        }
    }
}

pub trait BaseClassifier {
    fn fit(&mut self, x: &Matrix, y: &[Targets]) -> Result<()>;

    /// One n × 4 matrix per aspect, rows on the probability simplex.
    fn predict_proba(&self, x: &Matrix) -> Result<[Matrix; NUM_ASPECTS]>;
}

fn check_fit_inputs(x: &Matrix, y: &[Targets]) -> Result<()> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::InvalidInput(
            "base classifier needs a non-empty feature matrix".into(),
        ));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} labels",
            x.rows(),
            y.len()
        )));
    }
    x.ensure_finite("base classifier features")
}

/// Per-column z-scoring with statistics from the fit set; constant columns
/// keep unit scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Standardizer {
        let n = x.rows() as f64;
        let mut mean = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "features have {} columns, classifier was fit on {}",
                x.cols(),
                self.mean.len()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LinearHeads {
    /// Per aspect, 4 × d row-major.
    weights: [Vec<f64>; NUM_ASPECTS],
    biases: [Vec<f64>; NUM_ASPECTS],
}

impl Parameters for LinearHeads {
    fn slices(&self) -> Vec<&[f64]> {
        self.weights.iter().chain(&self.biases).map(Vec::as_slice).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .map(Vec::as_mut_slice)
            .collect()
    }
}

impl LinearHeads {
    fn zeros(d: usize) -> LinearHeads {
        LinearHeads {
            weights: std::array::from_fn(|_| vec![0.0; NUM_CLASSES * d]),
            biases: std::array::from_fn(|_| vec![0.0; NUM_CLASSES]),
        }
    }

    fn logits(&self, x: &Matrix, aspect: usize) -> Matrix {
        let d = x.cols();
        let w = Matrix::from_raw(NUM_CLASSES, d, self.weights[aspect].clone());
        let mut out = x.matmul_t(&w).expect("weight width matches features");
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&self.biases[aspect]) {
                *v += b;
            }
        }
        out
    }
}

/// Multinomial logistic regression per aspect, no hidden layer, trained
/// full-batch with AdamW from zero weights on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxRegression {
    pub epochs: usize,
    pub optimizer: AdamWConfig,
    fitted: Option<(Standardizer, LinearHeads)>,
}

impl Default for SoftmaxRegression {
    fn default() -> Self {
        SoftmaxRegression {
            epochs: SOFTMAX_EPOCHS,
            optimizer: AdamWConfig {
                lr: SOFTMAX_LR,
                ..AdamWConfig::default()
            },
            fitted: None,
        }
    }
}

impl BaseClassifier for SoftmaxRegression {
    fn fit(&mut self, x: &Matrix, y: &[Targets]) -> Result<()> {
        check_fit_inputs(x, y)?;
        let scaler = Standardizer::fit(x);
        let xs = scaler.apply(x)?;
        let n = xs.rows() as f64;
        let mut params = LinearHeads::zeros(xs.cols());
        let mut opt = OptimizerState::new(self.optimizer, &params);
        for _ in 0..self.epochs {
            let mut grads = LinearHeads::zeros(xs.cols());
            for a in 0..NUM_ASPECTS {
                let mut delta = softmax(&params.logits(&xs, a));
                for (r, t) in y.iter().enumerate() {
                    delta[(r, t[a])] -= 1.0;
                }
                delta.as_mut_slice().iter_mut().for_each(|v| *v /= n);
                grads.weights[a] = delta.t_matmul(&xs)?.into_vec();
                for c in 0..NUM_CLASSES {
                    grads.biases[a][c] = (0..delta.rows()).map(|r| delta[(r, c)]).sum();
                }
            }
            opt.step(&mut params, &grads)?;
        }
        self.fitted = Some((scaler, params));
        Ok(())
    }

    fn predict_proba(&self, x: &Matrix) -> Result<[Matrix; NUM_ASPECTS]> {
        let (scaler, params) = self
            .fitted
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("softmax regression used before fit".into()))?;
        let xs = scaler.apply(x)?;
        Ok(std::array::from_fn(|a| softmax(&params.logits(&xs, a))))
    }
}

/// Class frequencies among the `k` nearest training rows (Euclidean distance
/// on standardized features, ties by training order).
#[derive(Clone, Debug, PartialEq)]
pub struct KnnClassifier {
    pub k: usize,
    fitted: Option<(Standardizer, Matrix, Vec<Targets>)>,
}

impl Default for KnnClassifier {
    fn default() -> Self {
        KnnClassifier {
            k: KNN_NEIGHBORS,
            fitted: None,
        }
    }
}

impl BaseClassifier for KnnClassifier {
    fn fit(&mut self, x: &Matrix, y: &[Targets]) -> Result<()> {
        check_fit_inputs(x, y)?;
        if self.k == 0 {
            return Err(Error::InvalidInput("k-nearest-neighbor needs k >= 1".into()));
        }
        let scaler = Standardizer::fit(x);
        let xs = scaler.apply(x)?;
        self.fitted = Some((scaler, xs, y.to_vec()));
        Ok(())
    }

    fn predict_proba(&self, x: &Matrix) -> Result<[Matrix; NUM_ASPECTS]> {
        let (scaler, train, y) = self
            .fitted
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("k-nearest-neighbor used before fit".into()))?;
        let q = scaler.apply(x)?;
        let k = self.k.min(train.rows());
        let mut out: [Matrix; NUM_ASPECTS] = std::array::from_fn(|_| Matrix::zeros(q.rows(), NUM_CLASSES));
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.rows());
        for r in 0..q.rows() {
            dist.clear();
            dist.extend((0..train.rows()).map(|t| {
                let d2 = q
                    .row(r)
                    .iter()
                    .zip(train.row(t))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d2, t)
            }));
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, t) in &dist[..k] {
                for (a, m) in out.iter_mut().enumerate() {
                    m[(r, y[t][a])] += 1.0 / k as f64;
                }
            }
        }
        Ok(out)
    }
}
