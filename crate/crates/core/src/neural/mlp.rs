//! The multi-task meta-MLP.
//!
//! ```text
//! h1 = ReLU(BN(W1 x + b1))            64 units
//! h1d = Dropout(h1, p = 0.4)          inverted: kept units scaled by 1/(1-p)
//! z  = ReLU(W2 h1d + b2)              64 units
//! o_a = Wa3 ReLU(Wa2 z + ba2) + ba3   per aspect, 32 hidden, 4 logits
//! ```
//!
//! Dense weights are stored (out × in). Batch-norm keeps running mean and
//! unbiased running variance with momentum 0.1 and variance epsilon 1e-5.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{NUM_ASPECTS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

pub const HIDDEN: usize = 64;
pub const HEAD_HIDDEN: usize = 32;
pub const DROPOUT_RATE: f64 = 0.4;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Class indices for E, S and G of one sample.
pub type Targets = [usize; NUM_ASPECTS];

/// Per-aspect logits, each batch × 4.
pub type HeadLogits = [Matrix; NUM_ASPECTS];

/// Flat views over every trainable tensor, in a fixed order. The optimizer
/// keeps its moment buffers aligned to this order.
pub trait Parameters {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// out × in
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Kaiming-uniform weights, bound `sqrt(6 / fan_in)`; zero bias.
    fn kaiming(out: usize, input: usize, rng: &mut Rng) -> Dense {
        let bound = (6.0 / input as f64).sqrt();
        let data = (0..out * input).map(|_| (2.0 * rng.next_f64() - 1.0) * bound).collect();
        Dense {
            weight: Matrix::from_raw(out, input, data),
            bias: vec![0.0; out],
        }
    }

    fn zeros(out: usize, input: usize) -> Dense {
        Dense {
            weight: Matrix::zeros(out, input),
            bias: vec![0.0; out],
        }
    }

    fn zeros_like(&self) -> Dense {
        Dense::zeros(self.weight.rows(), self.weight.cols())
    }

    /// `x · Wᵀ + b`.
    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.matmul_t(&self.weight).expect("layer width checked by caller");
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        out
    }

    /// Accumulates weight/bias gradients for upstream gradient `d_out` and
    /// layer input `input`, returning the gradient w.r.t. the input.
    fn backward(&self, input: &Matrix, d_out: &Matrix, grad: &mut Dense) -> Matrix {
        let dw = d_out.t_matmul(input).expect("shapes follow forward");
        for (g, d) in grad.weight.as_mut_slice().iter_mut().zip(dw.as_slice()) {
            *g += d;
        }
        for r in 0..d_out.rows() {
            for (g, d) in grad.bias.iter_mut().zip(d_out.row(r)) {
                *g += d;
            }
        }
        d_out.matmul(&self.weight).expect("shapes follow forward")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub hidden: Dense,
    pub output: Dense,
}

/// Trainable parameters; also the shape of a gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub input: Dense,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub shared: Dense,
    pub heads: [Head; NUM_ASPECTS],
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.input.weight.cols()
    }

    pub fn zeros_like(&self) -> MlpParams {
        MlpParams {
            input: self.input.zeros_like(),
            bn_gamma: vec![0.0; self.bn_gamma.len()],
            bn_beta: vec![0.0; self.bn_beta.len()],
            shared: self.shared.zeros_like(),
            heads: std::array::from_fn(|a| Head {
                hidden: self.heads[a].hidden.zeros_like(),
                output: self.heads[a].output.zeros_like(),
            }),
        }
    }
}

impl Parameters for MlpParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.input.weight.as_slice(),
            self.input.bias.as_slice(),
            self.bn_gamma.as_slice(),
            self.bn_beta.as_slice(),
            self.shared.weight.as_slice(),
            self.shared.bias.as_slice(),
        ];
        for h in &self.heads {
            out.extend([
                h.hidden.weight.as_slice(),
                h.hidden.bias.as_slice(),
                h.output.weight.as_slice(),
                h.output.bias.as_slice(),
            ]);
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.input.weight.as_mut_slice(),
            self.input.bias.as_mut_slice(),
            self.bn_gamma.as_mut_slice(),
            self.bn_beta.as_mut_slice(),
            self.shared.weight.as_mut_slice(),
            self.shared.bias.as_mut_slice(),
        ];
        for h in &mut self.heads {
            out.extend([
                h.hidden.weight.as_mut_slice(),
                h.hidden.bias.as_mut_slice(),
                h.output.weight.as_mut_slice(),
                h.output.bias.as_mut_slice(),
            ]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    /// Unbiased estimate.
    pub running_var: Vec<f64>,
}

/// Inverted-dropout multipliers for one batch (batch × 64): each entry is
/// either 0 or `1 / (1 - p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask(Matrix);

impl DropoutMask {
    pub fn sample(rows: usize, rate: f64, rng: &mut Rng) -> DropoutMask {
        let keep = 1.0 / (1.0 - rate);
        let data = (0..rows * HIDDEN)
            .map(|_| if rng.next_f64() < rate { 0.0 } else { keep })
            .collect();
        DropoutMask(Matrix::from_raw(rows, HIDDEN, data))
    }

    /// No units dropped.
    pub fn keep_all(rows: usize) -> DropoutMask {
        DropoutMask(Matrix::from_raw(rows, HIDDEN, vec![1.0; rows * HIDDEN]))
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Activations kept by a training-mode forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    x: Matrix,
    xhat: Matrix,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    bn_out: Matrix,
    h1_dropped: Matrix,
    mask: Matrix,
    shared_pre: Matrix,
    z: Matrix,
    head_pre: [Matrix; NUM_ASPECTS],
    head_act: [Matrix; NUM_ASPECTS],
}

impl ForwardCache {
    /// Signs of every ReLU input; finite-difference checks use this to detect
    /// perturbations that cross a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out: Vec<bool> = self.bn_out.as_slice().iter().map(|&v| v > 0.0).collect();
        out.extend(self.shared_pre.as_slice().iter().map(|&v| v > 0.0));
        for h in &self.head_pre {
            out.extend(h.as_slice().iter().map(|&v| v > 0.0));
        }
        out
    }
}

/// Meta-MLP parameters plus batch-norm running state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub params: MlpParams,
    pub bn: BatchNormState,
    pub dropout: f64,
}

const CHECKPOINT_FORMAT: &str = "esg-stack-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    model: MlpModel,
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn relu_mask_in_place(grad: &mut Matrix, pre: &Matrix) {
    for (g, &p) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

impl MlpModel {
    /// Fresh network for `input_dim` features, initialized from `rng`.
    pub fn new(input_dim: usize, rng: &mut Rng) -> Result<MlpModel> {
        if input_dim == 0 {
            return Err(Error::InvalidInput("meta-MLP needs at least one input feature".into()));
        }
        let input = Dense::kaiming(HIDDEN, input_dim, rng);
        let shared = Dense::kaiming(HIDDEN, HIDDEN, rng);
        let heads = std::array::from_fn(|_| Head {
            hidden: Dense::kaiming(HEAD_HIDDEN, HIDDEN, rng),
            output: Dense::kaiming(NUM_CLASSES, HEAD_HIDDEN, rng),
        });
        Ok(MlpModel {
            params: MlpParams {
                input,
                bn_gamma: vec![1.0; HIDDEN],
                bn_beta: vec![0.0; HIDDEN],
                shared,
                heads,
            },
            bn: BatchNormState {
                running_mean: vec![0.0; HIDDEN],
                running_var: vec![1.0; HIDDEN],
            },
            dropout: DROPOUT_RATE,
        })
    }

    /// All weights and biases zero, γ = 1, β = 0.
    pub fn zeros(input_dim: usize) -> MlpModel {
        MlpModel {
            params: MlpParams {
                input: Dense::zeros(HIDDEN, input_dim),
                bn_gamma: vec![1.0; HIDDEN],
                bn_beta: vec![0.0; HIDDEN],
                shared: Dense::zeros(HIDDEN, HIDDEN),
                heads: std::array::from_fn(|_| Head {
                    hidden: Dense::zeros(HEAD_HIDDEN, HIDDEN),
                    output: Dense::zeros(NUM_CLASSES, HEAD_HIDDEN),
                }),
            },
            bn: BatchNormState {
                running_mean: vec![0.0; HIDDEN],
                running_var: vec![1.0; HIDDEN],
            },
            dropout: DROPOUT_RATE,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} input features, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    fn heads_forward(&self, z: &Matrix) -> ([Matrix; NUM_ASPECTS], [Matrix; NUM_ASPECTS], HeadLogits) {
        let mut pre = Vec::with_capacity(NUM_ASPECTS);
        let mut act = Vec::with_capacity(NUM_ASPECTS);
        let mut logits = Vec::with_capacity(NUM_ASPECTS);
        for head in &self.params.heads {
            let p = head.hidden.apply(z);
            let mut a = p.clone();
            relu_in_place(&mut a);
            logits.push(head.output.apply(&a));
            pre.push(p);
            act.push(a);
        }
        let arr = |v: Vec<Matrix>| -> [Matrix; NUM_ASPECTS] { v.try_into().expect("three heads") };
        (arr(pre), arr(act), arr(logits))
    }

    /// Inference: running batch-norm statistics, no dropout. Pure in
    /// `(self, x)`.
    pub fn forward_eval(&self, x: &Matrix) -> Result<HeadLogits> {
        self.check_input(x)?;
        let mut h = self.params.input.apply(x);
        for r in 0..h.rows() {
            for (j, v) in h.row_mut(r).iter_mut().enumerate() {
                let xhat = (*v - self.bn.running_mean[j]) / (self.bn.running_var[j] + BN_EPS).sqrt();
                *v = self.params.bn_gamma[j] * xhat + self.params.bn_beta[j];
            }
        }
        relu_in_place(&mut h);
        let mut z = self.params.shared.apply(&h);
        relu_in_place(&mut z);
        Ok(self.heads_forward(&z).2)
    }

    /// Training-mode pass with batch statistics and the given dropout mask.
    /// Does not touch the running statistics; see [`update_running_stats`].
    ///
    /// [`update_running_stats`]: MlpModel::update_running_stats
    pub fn forward_train(&self, x: &Matrix, mask: &DropoutMask) -> Result<(HeadLogits, ForwardCache)> {
        self.check_input(x)?;
        let b = x.rows();
        if b < 2 {
            return Err(Error::InvalidInput(format!(
                "training-mode batch needs at least 2 samples for batch statistics, got {b}"
            )));
        }
        if mask.0.shape() != (b, HIDDEN) {
            return Err(Error::Shape(format!(
                "dropout mask is {:?}, expected ({b}, {HIDDEN})",
                mask.0.shape()
            )));
        }
        let pre_bn = self.params.input.apply(x);
        let bf = b as f64;
        let mut mean = vec![0.0; HIDDEN];
        for r in 0..b {
            for (m, v) in mean.iter_mut().zip(pre_bn.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= bf);
        let mut var = vec![0.0; HIDDEN];
        for r in 0..b {
            for ((s, v), m) in var.iter_mut().zip(pre_bn.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= bf);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

        let mut xhat = pre_bn;
        let mut bn_out = Matrix::zeros(b, HIDDEN);
        for r in 0..b {
            for j in 0..HIDDEN {
                let xh = (xhat[(r, j)] - mean[j]) * inv_std[j];
                xhat[(r, j)] = xh;
                bn_out[(r, j)] = self.params.bn_gamma[j] * xh + self.params.bn_beta[j];
            }
        }
        let mut h1_dropped = bn_out.clone();
        relu_in_place(&mut h1_dropped);
        for (h, m) in h1_dropped.as_mut_slice().iter_mut().zip(mask.0.as_slice()) {
            *h *= m;
        }
        let shared_pre = self.params.shared.apply(&h1_dropped);
        let mut z = shared_pre.clone();
        relu_in_place(&mut z);
        let (head_pre, head_act, logits) = self.heads_forward(&z);

        Ok((
            logits,
            ForwardCache {
                x: x.clone(),
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                bn_out,
                h1_dropped,
                mask: mask.0.clone(),
                shared_pre,
                z,
                head_pre,
                head_act,
            },
        ))
    }

    /// Folds a training batch's statistics into the running estimates.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let b = cache.x.rows() as f64;
        let unbiased = b / (b - 1.0);
        for j in 0..HIDDEN {
            self.bn.running_mean[j] = (1.0 - BN_MOMENTUM) * self.bn.running_mean[j] + BN_MOMENTUM * cache.batch_mean[j];
            self.bn.running_var[j] =
                (1.0 - BN_MOMENTUM) * self.bn.running_var[j] + BN_MOMENTUM * cache.batch_var[j] * unbiased;
        }
    }

    /// Exact gradient of the joint loss for the batch behind `cache`.
    /// Returns `(loss, gradient)`.
    pub fn backward(&self, logits: &HeadLogits, cache: &ForwardCache, targets: &[Targets]) -> Result<(f64, MlpParams)> {
        let b = cache.x.rows();
        if targets.len() != b {
            return Err(Error::Shape(format!("{} targets for a batch of {b}", targets.len())));
        }
        let mut grad = self.params.zeros_like();
        let mut total = 0.0;
        let mut dz = Matrix::zeros(b, HIDDEN);
        for (a, head) in self.params.heads.iter().enumerate() {
            let ys: Vec<usize> = targets.iter().map(|t| t[a]).collect();
            let (loss, d_logits) = cross_entropy_with_grad(&logits[a], &ys)?;
            total += loss;
            let mut d_act = head
                .output
                .backward(&cache.head_act[a], &d_logits, &mut grad.heads[a].output);
            relu_mask_in_place(&mut d_act, &cache.head_pre[a]);
            let d_z_head = head.hidden.backward(&cache.z, &d_act, &mut grad.heads[a].hidden);
            for (acc, d) in dz.as_mut_slice().iter_mut().zip(d_z_head.as_slice()) {
                *acc += d;
            }
        }
        relu_mask_in_place(&mut dz, &cache.shared_pre);
        let mut d_h1 = self.params.shared.backward(&cache.h1_dropped, &dz, &mut grad.shared);
        for (d, m) in d_h1.as_mut_slice().iter_mut().zip(cache.mask.as_slice()) {
            *d *= m;
        }
        relu_mask_in_place(&mut d_h1, &cache.bn_out);

        let bf = b as f64;
        let mut d_pre_bn = Matrix::zeros(b, HIDDEN);
        for j in 0..HIDDEN {
            let gamma = self.params.bn_gamma[j];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for r in 0..b {
                let dy = d_h1[(r, j)];
                grad.bn_gamma[j] += dy * cache.xhat[(r, j)];
                grad.bn_beta[j] += dy;
                let dxhat = dy * gamma;
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * cache.xhat[(r, j)];
            }
            for r in 0..b {
                let dxhat = d_h1[(r, j)] * gamma;
                d_pre_bn[(r, j)] =
                    cache.inv_std[j] / bf * (bf * dxhat - sum_dxhat - cache.xhat[(r, j)] * sum_dxhat_xhat);
            }
        }
        self.params.input.backward(&cache.x, &d_pre_bn, &mut grad.input);
        Ok((total, grad))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        crate::data::write_text(path.as_ref(), &serde_json::to_string(&ckpt)?)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<MlpModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        ckpt.model.validate()?;
        Ok(ckpt.model)
    }

    fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        let p = &self.params;
        let shapes_ok = p.input.weight.shape() == (HIDDEN, d)
            && p.input.bias.len() == HIDDEN
            && p.bn_gamma.len() == HIDDEN
            && p.bn_beta.len() == HIDDEN
            && p.shared.weight.shape() == (HIDDEN, HIDDEN)
            && p.shared.bias.len() == HIDDEN
            && p.heads.iter().all(|h| {
                h.hidden.weight.shape() == (HEAD_HIDDEN, HIDDEN)
                    && h.hidden.bias.len() == HEAD_HIDDEN
                    && h.output.weight.shape() == (NUM_CLASSES, HEAD_HIDDEN)
                    && h.output.bias.len() == NUM_CLASSES
            })
            && self.bn.running_mean.len() == HIDDEN
            && self.bn.running_var.len() == HIDDEN;
        if !shapes_ok {
            return Err(Error::Shape("checkpoint tensors have unexpected shapes".into()));
        }
        let finite = p.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
            && self.bn.running_mean.iter().all(|v| v.is_finite())
            && self.bn.running_var.iter().all(|v| v.is_finite() && *v >= 0.0);
        if !finite {
            return Err(Error::NonFinite("checkpoint holds non-finite parameters".into()));
        }
        Ok(())
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean cross-entropy of one aspect head.
pub fn cross_entropy(logits: &Matrix, targets: &[usize]) -> Result<f64> {
    cross_entropy_with_grad(logits, targets).map(|(l, _)| l)
}

fn cross_entropy_with_grad(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != targets.len() || logits.cols() != NUM_CLASSES {
        return Err(Error::Shape(format!(
            "logits {:?} do not match {} targets over {NUM_CLASSES} classes",
            logits.shape(),
            targets.len()
        )));
    }
    if let Some(t) = targets.iter().find(|&&t| t >= NUM_CLASSES) {
        return Err(Error::InvalidInput(format!("class index {t} out of range")));
    }
    let n = targets.len() as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (r, &y) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        grad[(r, y)] -= 1.0;
    }
    grad.as_mut_slice().iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// `CE(o_E, y_E) + CE(o_S, y_S) + CE(o_G, y_G)`, each mean-reduced.
pub fn joint_loss(logits: &HeadLogits, targets: &[Targets]) -> Result<f64> {
    let parts = aspect_losses(logits, targets)?;
    Ok(parts.iter().sum())
}

pub fn aspect_losses(logits: &HeadLogits, targets: &[Targets]) -> Result<[f64; NUM_ASPECTS]> {
    let mut out = [0.0; NUM_ASPECTS];
    for (a, slot) in out.iter_mut().enumerate() {
        let ys: Vec<usize> = targets.iter().map(|t| t[a]).collect();
        *slot = cross_entropy(&logits[a], &ys)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_input(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn zero_network_gives_uniform_softmax() {
        let model = MlpModel::zeros(12);
        let x = random_input(&mut Rng::new(1), 3, 12);
        let logits = model.forward_eval(&x).unwrap();
        for l in &logits {
            assert!(l.as_slice().iter().all(|&v| v == 0.0));
            let p = softmax(l);
            assert!(p.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn eval_is_row_wise_and_repeatable() {
        let model = MlpModel::new(5, &mut Rng::new(2)).unwrap();
        let row = vec![0.3, -1.0, 2.0, 0.0, 0.7];
        let x = Matrix::from_rows(&[row.clone(), row]).unwrap();
        let a = model.forward_eval(&x).unwrap();
        let b = model.forward_eval(&x).unwrap();
        assert_eq!(a, b);
        for l in &a {
            assert_eq!(l.row(0), l.row(1));
        }
    }

    #[test]
    fn train_mode_rejects_single_sample_and_bad_width() {
        let model = MlpModel::new(4, &mut Rng::new(0)).unwrap();
        let one = Matrix::zeros(1, 4);
        assert!(model.forward_train(&one, &DropoutMask::keep_all(1)).is_err());
        assert!(model.forward_eval(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn train_mode_is_reproducible_for_a_fixed_mask_seed() {
        let model = MlpModel::new(6, &mut Rng::new(4)).unwrap();
        let x = random_input(&mut Rng::new(5), 8, 6);
        let run = || {
            let mask = DropoutMask::sample(8, DROPOUT_RATE, &mut Rng::new(9));
            model.forward_train(&x, &mask).unwrap().0
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_reference_values() {
        let zeros: HeadLogits = std::array::from_fn(|_| Matrix::zeros(2, 4));
        let t = [[0, 1, 2], [3, 3, 3]];
        assert_abs_diff_eq!(joint_loss(&zeros, &t).unwrap(), 3.0 * 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(joint_loss(&zeros, &t).unwrap(), 4.158_883_083_359_672, epsilon = 1e-12);

        let margin: HeadLogits = std::array::from_fn(|a| {
            let mut m = Matrix::zeros(2, 4);
            for (r, tr) in t.iter().enumerate() {
                m[(r, tr[a])] = 50.0;
            }
            m
        });
        assert!(joint_loss(&margin, &t).unwrap() < 1e-8);
        let parts = aspect_losses(&margin, &t).unwrap();
        assert_eq!(parts.iter().sum::<f64>(), joint_loss(&margin, &t).unwrap());
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let mut rng = Rng::new(8);
        let l = random_input(&mut rng, 5, 4);
        let p = softmax(&l);
        for r in 0..5 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let mut shifted = l.clone();
        shifted.row_mut(2).iter_mut().for_each(|v| *v += 123.0);
        let q = softmax(&shifted);
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn running_stats_converge_to_batch_mean() {
        let mut model = MlpModel::new(3, &mut Rng::new(1)).unwrap();
        let x = random_input(&mut Rng::new(2), 16, 3);
        let mask = DropoutMask::keep_all(16);
        let mut mean = Vec::new();
        for _ in 0..300 {
            let (_, cache) = model.forward_train(&x, &mask).unwrap();
            mean = cache.batch_mean.clone();
            model.update_running_stats(&cache);
        }
        for (r, m) in model.bn.running_mean.iter().zip(&mean) {
            assert!((r - m).abs() < 1e-3);
        }
    }

    #[test]
    fn duplicated_rows_match_single_rows_gradient() {
        // with dropout disabled and BN statistics unchanged by duplication,
        // mean reduction makes the gradients identical
        let model = MlpModel::new(4, &mut Rng::new(3)).unwrap();
        let x = random_input(&mut Rng::new(4), 3, 4);
        let t = vec![[0, 1, 2], [1, 2, 3], [3, 0, 1]];
        let mut doubled_rows = Vec::new();
        for r in 0..3 {
            doubled_rows.push(x.row(r).to_vec());
        }
        for r in 0..3 {
            doubled_rows.push(x.row(r).to_vec());
        }
        let xx = Matrix::from_rows(&doubled_rows).unwrap();
        let tt: Vec<Targets> = t.iter().chain(t.iter()).copied().collect();
        let (l1, c1) = model.forward_train(&x, &DropoutMask::keep_all(3)).unwrap();
        let (l2, c2) = model.forward_train(&xx, &DropoutMask::keep_all(6)).unwrap();
        let (loss1, g1) = model.backward(&l1, &c1, &t).unwrap();
        let (loss2, g2) = model.backward(&l2, &c2, &tt).unwrap();
        assert_abs_diff_eq!(loss1, loss2, epsilon = 1e-12);
        for (a, b) in g1.slices().iter().zip(g2.slices()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = MlpModel::new(7, &mut Rng::new(11)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save_json(&path).unwrap();
        assert_eq!(MlpModel::load_json(&path).unwrap(), model);
    }
}
