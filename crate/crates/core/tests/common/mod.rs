//! Independent reference implementations shared by the integration and
//! acceptance tests.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use esg_stack::data::{LabelTriplet, SentimentClass};
use esg_stack::linalg::{Matrix, Rng};
use esg_stack::neural::{joint_loss, DropoutMask, MlpModel, Parameters, Targets};
use esg_stack::stratify::{one_hot_expand, stratified_indices, SplitSpec, NUM_INDICATORS};

pub fn f1_macro_oracle(pred: &[usize], gold: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (&p, &g) in pred.iter().zip(gold) {
            match (p == c, g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let den = 2 * tp + fp + fn_;
        if den > 0 {
            total += 2.0 * tp as f64 / den as f64;
        }
    }
    total / k as f64
}

pub fn balanced_accuracy_oracle(pred: &[usize], gold: &[usize], k: usize) -> f64 {
    let recalls: Vec<f64> = (0..k)
        .filter_map(|c| {
            let support = gold.iter().filter(|&&g| g == c).count();
            (support > 0).then(|| {
                let hit = pred.iter().zip(gold).filter(|(&p, &g)| g == c && p == c).count();
                hit as f64 / support as f64
            })
        })
        .collect();
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// Recounts the predicted-positive set from scratch at every distinct
/// threshold.
pub fn average_precision_oracle(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let selected: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = selected.iter().filter(|&&i| positive[i]).count();
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / selected.len() as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// Singular values by one-sided (Hestenes) Jacobi rotations on the columns,
/// sorted descending.
pub fn singular_values_oracle(x: &Matrix) -> Vec<f64> {
    let (n, d) = x.shape();
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
    for _ in 0..200 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(a, b)| a * b).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let a = cols[p][i];
                    let b = cols[q][i];
                    cols[p][i] = c * a - s * b;
                    cols[q][i] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.truncate(n.min(d));
    sv
}

/// `‖x − Q Qᵀ x‖_F` where Q spans the columns of `a`: the best rank-k
/// approximation whose column space is `span(a)`.
pub fn projection_error(x: &Matrix, a: &Matrix) -> f64 {
    let n = a.rows();
    let mut q: Vec<Vec<f64>> = Vec::new();
    for j in 0..a.cols() {
        let mut v = a.column(j);
        for _ in 0..2 {
            for b in &q {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut err = 0.0;
    for c in 0..x.cols() {
        let mut col = x.column(c);
        for b in &q {
            let dot: f64 = col.iter().zip(b).map(|(x, y)| x * y).sum();
            col.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        err += col.iter().map(|v| v * v).sum::<f64>();
    }
    debug_assert_eq!(n, x.rows());
    err.sqrt()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

pub fn random_label_set(n: usize, rng: &mut Rng) -> Vec<LabelTriplet> {
    // Skewed class weights so rare indicators occur.
    let weights: Vec<[f64; 4]> = (0..3).map(|_| std::array::from_fn(|_| 0.05 + rng.next_f64())).collect();
    (0..n)
        .map(|i| {
            let mut draw = |a: usize| {
                let w = weights[a];
                let mut u = rng.next_f64() * w.iter().sum::<f64>();
                for (c, &wc) in w.iter().enumerate() {
                    if u < wc {
                        return SentimentClass::from_index(c).unwrap();
                    }
                    u -= wc;
                }
                SentimentClass::Positive
            };
            let (e, s, g) = (draw(0), draw(1), draw(2));
            LabelTriplet::new(format!("d{i:04}"), e, s, g)
        })
        .collect()
}

/// Largest `|count − fraction · total|` over parts and one-hot indicators.
pub fn worst_indicator_deviation(labels: &[LabelTriplet], spec: &SplitSpec) -> f64 {
    let parts = stratified_indices(labels, spec).unwrap();
    let onehot = one_hot_expand(labels);
    let mut worst: f64 = 0.0;
    for l in 0..NUM_INDICATORS {
        let total: usize = onehot.iter().map(|r| r[l] as usize).sum();
        for (j, part) in parts.iter().enumerate() {
            let count: usize = part.iter().map(|&i| onehot[i][l] as usize).sum();
            worst = worst.max((count as f64 - spec.fractions[j] * total as f64).abs());
        }
    }
    worst
}

pub struct GradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst_relative: f64,
    /// (tensor, index, analytic, numeric) of the worst partial.
    pub worst_at: (usize, usize, f64, f64),
}

/// Denominator floor of the relative error; central differences cannot
/// resolve gradients much smaller than this.
pub const GRAD_FLOOR: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-4;

fn loss_and_pattern(model: &MlpModel, x: &Matrix, mask: &DropoutMask, y: &[Targets]) -> (f64, Vec<bool>) {
    let (logits, cache) = model.forward_train(x, mask).unwrap();
    (joint_loss(&logits, y).unwrap(), cache.relu_pattern())
}

/// Compares the analytic gradient with central differences on every
/// batch-norm parameter, every bias, and `samples` random weights.
/// Perturbations that flip a ReLU input sign are skipped.
pub fn gradient_check(seed: u64, samples: usize) -> GradCheck {
    let mut rng = Rng::stream(seed, 77);
    let input_dim = 12 * (1 + rng.below(3));
    let batch = 2 + rng.below(15);
    let mut model = MlpModel::new(input_dim, &mut rng).unwrap();
    // Move away from the default initialization so every path matters.
    for v in model.params.bn_gamma.iter_mut() {
        *v = 0.5 + rng.next_f64();
    }
    for v in model.params.bn_beta.iter_mut() {
        *v = 0.2 * rng.normal();
    }
    for s in model.params.slices_mut() {
        if s.len() <= 64 {
            for v in s.iter_mut() {
                *v += 0.05 * rng.normal();
            }
        }
    }
    let x = Matrix::from_vec(
        batch,
        input_dim,
        (0..batch * input_dim).map(|_| -14.0 * rng.next_f64()).collect(),
    )
    .unwrap();
    let y: Vec<Targets> = (0..batch).map(|_| [rng.below(4), rng.below(4), rng.below(4)]).collect();
    let mask = if seed.is_multiple_of(2) {
        DropoutMask::sample(batch, model.dropout, &mut rng)
    } else {
        DropoutMask::keep_all(batch)
    };

    let (logits, cache) = model.forward_train(&x, &mask).unwrap();
    let base_pattern = cache.relu_pattern();
    let (_, grad) = model.backward(&logits, &cache, &y).unwrap();
    let analytic: Vec<f64> = grad.slices().concat();
    let sizes: Vec<usize> = model.params.slices().iter().map(|s| s.len()).collect();

    let mut targets: Vec<(usize, usize)> = Vec::new();
    for (t, &len) in sizes.iter().enumerate() {
        if len <= 64 {
            targets.extend((0..len).map(|i| (t, i)));
        }
    }
    let weight_tensors: Vec<usize> = (0..sizes.len()).filter(|&t| sizes[t] > 64).collect();
    for _ in 0..samples {
        let t = weight_tensors[rng.below(weight_tensors.len())];
        targets.push((t, rng.below(sizes[t])));
    }

    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let mut out = GradCheck {
        checked: 0,
        skipped_kinks: 0,
        worst_relative: 0.0,
        worst_at: (0, 0, 0.0, 0.0),
    };
    for (t, i) in targets {
        let original = model.params.slices()[t][i];
        let mut at = |offset: f64| {
            model.params.slices_mut()[t][i] = original + offset;
            loss_and_pattern(&model, &x, &mask, &y)
        };
        let evals = [at(2.0 * FD_STEP), at(FD_STEP), at(-FD_STEP), at(-2.0 * FD_STEP)];
        model.params.slices_mut()[t][i] = original;
        if evals.iter().any(|(_, p)| *p != base_pattern) {
            out.skipped_kinks += 1;
            continue;
        }
        let f = evals.map(|(l, _)| l);
        // Five-point stencil, fourth-order accurate.
        let numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * FD_STEP);
        let a = analytic[offsets[t] + i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        if rel > out.worst_relative {
            out.worst_relative = rel;
            out.worst_at = (t, i, a, numeric);
        }
        out.checked += 1;
    }
    out
}

/// Eigenvalues of a symmetric matrix by classical Jacobi (largest
/// off-diagonal pivot first), sorted descending.
pub fn symmetric_eigenvalues_oracle(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|r| a.row(r).to_vec()).collect();
    for _ in 0..10_000 {
        let mut p = 0;
        let mut q = 1;
        let mut largest = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if m[i][j].abs() > largest {
                    largest = m[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        let scale: f64 = (0..n).map(|i| m[i][i].abs()).fold(0.0, f64::max).max(1e-300);
        if largest <= 1e-15 * scale {
            break;
        }
        let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let t = if theta == 0.0 { 1.0 } else { t };
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        for k in 0..n {
            let mkp = m[k][p];
            let mkq = m[k][q];
            m[k][p] = c * mkp - s * mkq;
            m[k][q] = s * mkp + c * mkq;
        }
        for k in 0..n {
            let mpk = m[p][k];
            let mqk = m[q][k];
            m[p][k] = c * mpk - s * mqk;
            m[q][k] = s * mpk + c * mqk;
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}
