//! Minibatch training with early stopping on validation loss, and the
//! fixed-budget retraining that reuses the selected epoch count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::neural::adamw::{AdamWConfig, OptimizerState};
use crate::neural::mlp::{joint_loss, DropoutMask, MlpModel, Targets};

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 200,
            patience: 15,
            seed: 0,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidInput(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.patience < 1 {
            return Err(Error::InvalidInput("patience must be at least 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::InvalidInput("max_epochs must be at least 1".into()));
        }
        let o = &self.optimizer;
        let sane = o.lr > 0.0
            && o.weight_decay >= 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2)
            && o.eps > 0.0;
        if !sane {
            return Err(Error::InvalidInput(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

/// Shuffled minibatches for one epoch. A trailing batch of a single sample is
/// merged into the previous one, since batch-norm needs two rows.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let order = rng.shuffle(n);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    batches
}

/// Optimizer steps per epoch for `n` samples.
pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    let full = n.div_ceil(batch_size);
    if full > 1 && n % batch_size == 1 {
        full - 1
    } else {
        full
    }
}

/// Tracks the best validation loss; strict improvement only, so the earliest
/// epoch wins ties.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Waiting,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Records the loss after 1-based `epoch`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> Progress {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            Progress::Improved
        } else if epoch - self.best_epoch >= self.patience {
            Progress::Stop
        } else {
            Progress::Waiting
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// One model/optimizer pair with its shuffle and dropout streams.
struct Session {
    model: MlpModel,
    opt: OptimizerState,
    shuffle: Rng,
    dropout: Rng,
    batch_size: usize,
}

impl Session {
    fn new(input_dim: usize, cfg: &TrainConfig) -> Result<Session> {
        let model = MlpModel::new(input_dim, &mut Rng::stream(cfg.seed, STREAM_INIT))?;
        let opt = OptimizerState::new(cfg.optimizer, &model.params);
        Ok(Session {
            model,
            opt,
            shuffle: Rng::stream(cfg.seed, STREAM_SHUFFLE),
            dropout: Rng::stream(cfg.seed, STREAM_DROPOUT),
            batch_size: cfg.batch_size,
        })
    }

    /// Returns the mean training loss over the epoch's batches.
    fn run_epoch(&mut self, x: &Matrix, y: &[Targets]) -> Result<f64> {
        let batches = epoch_batches(x.rows(), self.batch_size, &mut self.shuffle);
        let mut total = 0.0;
        for rows in &batches {
            let xb = x.select_rows(rows);
            let yb: Vec<Targets> = rows.iter().map(|&r| y[r]).collect();
            let mask = DropoutMask::sample(rows.len(), self.model.dropout, &mut self.dropout);
            let (logits, cache) = self.model.forward_train(&xb, &mask)?;
            let (loss, grads) = self.model.backward(&logits, &cache, &yb)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss became {loss}")));
            }
            self.opt.step(&mut self.model.params, &grads)?;
            self.model.update_running_stats(&cache);
            total += loss;
        }
        Ok(total / batches.len() as f64)
    }
}

fn check_training_set(x: &Matrix, y: &[Targets]) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} targets", x.rows(), y.len())));
    }
    if x.rows() < 2 {
        return Err(Error::InvalidInput(
            "training needs at least 2 samples for batch statistics".into(),
        ));
    }
    x.ensure_finite("training features")
}

#[derive(Clone, Debug)]
pub struct EarlyStopOutcome {
    /// Snapshot taken right after epoch `t_star`.
    pub model: MlpModel,
    /// 1-based epoch of the minimum validation loss.
    pub t_star: usize,
    pub epochs_run: usize,
    /// Validation loss of the untrained network.
    pub initial_val_loss: f64,
    /// Validation loss after each epoch, index 0 = epoch 1.
    pub val_history: Vec<f64>,
    pub steps: u64,
}

impl EarlyStopOutcome {
    pub fn best_val_loss(&self) -> f64 {
        self.val_history[self.t_star - 1]
    }
}

/// Early-stopped training where `monitor` supplies the validation loss after
/// every epoch.
pub fn train_with_monitor<F>(
    x_train: &Matrix,
    y_train: &[Targets],
    cfg: &TrainConfig,
    mut monitor: F,
) -> Result<EarlyStopOutcome>
where
    F: FnMut(&MlpModel) -> Result<f64>,
{
    cfg.validate()?;
    check_training_set(x_train, y_train)?;
    let mut session = Session::new(x_train.cols(), cfg)?;
    let initial_val_loss = monitor(&session.model)?;
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = session.model.clone();
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        session.run_epoch(x_train, y_train)?;
        let loss = monitor(&session.model)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch} is {loss}")));
        }
        history.push(loss);
        match stopper.observe(epoch, loss) {
            Progress::Improved => best = session.model.clone(),
            Progress::Waiting => {}
            Progress::Stop => break,
        }
    }
    log::debug!(
        "early stopping: t*={} of {} epochs, best val loss {:.5}",
        stopper.best_epoch(),
        history.len(),
        stopper.best_loss()
    );
    Ok(EarlyStopOutcome {
        model: best,
        t_star: stopper.best_epoch(),
        epochs_run: history.len(),
        initial_val_loss,
        val_history: history,
        steps: session.opt.step,
    })
}

/// Trains up to `max_epochs`, scoring the joint loss on the validation set in
/// eval mode after each epoch, and stops `patience` epochs after the best.
pub fn train_early_stopped(
    x_train: &Matrix,
    y_train: &[Targets],
    x_val: &Matrix,
    y_val: &[Targets],
    cfg: &TrainConfig,
) -> Result<EarlyStopOutcome> {
    if x_val.rows() == 0 {
        return Err(Error::InvalidInput("empty validation set".into()));
    }
    if x_val.rows() != y_val.len() || x_val.cols() != x_train.cols() {
        return Err(Error::Shape(format!(
            "validation set {:?} with {} targets does not match training width {}",
            x_val.shape(),
            y_val.len(),
            x_train.cols()
        )));
    }
    train_with_monitor(x_train, y_train, cfg, |model| {
        joint_loss(&model.forward_eval(x_val)?, y_val)
    })
}

#[derive(Clone, Debug)]
pub struct FixedRun {
    pub model: MlpModel,
    pub epochs: usize,
    pub steps: u64,
}

/// Fresh initialization from `cfg.seed`, then exactly `epochs` epochs over the
/// full set without validation.
pub fn retrain_fixed_epochs(x: &Matrix, y: &[Targets], epochs: usize, cfg: &TrainConfig) -> Result<FixedRun> {
    cfg.validate()?;
    if epochs == 0 {
        return Err(Error::InvalidInput("retraining needs at least one epoch".into()));
    }
    check_training_set(x, y)?;
    let mut session = Session::new(x.cols(), cfg)?;
    for _ in 0..epochs {
        session.run_epoch(x, y)?;
    }
    Ok(FixedRun {
        model: session.model,
        epochs,
        steps: session.opt.step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_fold_a_trailing_singleton() {
        let mut rng = Rng::new(0);
        let b = epoch_batches(129, 64, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![64, 65]);
        assert_eq!(batches_per_epoch(129, 64), 2);
        let b = epoch_batches(130, 64, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![64, 64, 2]);
        assert_eq!(batches_per_epoch(130, 64), 3);
        let b = epoch_batches(10, 64, &mut rng);
        assert_eq!(b.len(), 1);
        let mut all: Vec<usize> = epoch_batches(100, 7, &mut rng).concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn early_stopping_counts_patience_from_the_best_epoch() {
        let mut s = EarlyStopping::new(3);
        let losses = [5.0, 4.0, 4.0, 4.5, 3.9, 4.0, 4.0, 4.0];
        let mut out = Vec::new();
        for (i, l) in losses.iter().enumerate() {
            out.push(s.observe(i + 1, *l));
        }
        use Progress::*;
        assert_eq!(
            out,
            vec![Improved, Improved, Waiting, Waiting, Improved, Waiting, Waiting, Stop]
        );
        assert_eq!(s.best_epoch(), 5);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_or_zero_epoch_requests_fail() {
        let cfg = TrainConfig::default();
        let x = Matrix::zeros(0, 3);
        assert!(retrain_fixed_epochs(&x, &[], 1, &cfg).is_err());
        let x = Matrix::zeros(4, 3);
        let y = vec![[0, 0, 0]; 4];
        assert!(retrain_fixed_epochs(&x, &y, 0, &cfg).is_err());
        assert!(train_early_stopped(&x, &y, &Matrix::zeros(0, 3), &[], &cfg).is_err());
    }
}
